#pragma once

// Declarative loading programs: per Voigt channel, either a prescribed strain
// rate or a held stress, piecewise in pseudo-time.

#include <array>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pinnplast/tensor.hpp"

namespace pinnplast {

/// Strain rate c + a*cos(w*t) on t in global pseudo-time.
struct StrainRate {
  double constant = 0.0;
  double cos_amplitude = 0.0;
  double cos_frequency = 0.0;

  double at(double t) const;
};

struct ChannelControl {
  enum class Mode { StrainRate, HoldStress };
  Mode mode = Mode::StrainRate;
  StrainRate rate;     // used when mode == StrainRate
  double target = 0.0;  // used when mode == HoldStress

  static ChannelControl strain_rate(double constant) {
    return {Mode::StrainRate, StrainRate{constant}, 0.0};
  }
  static ChannelControl cosine_rate(double amplitude, double frequency) {
    return {Mode::StrainRate, StrainRate{0.0, amplitude, frequency}, 0.0};
  }
  static ChannelControl hold_stress(double target) {
    return {Mode::HoldStress, StrainRate{}, target};
  }
  bool holds_stress() const { return mode == Mode::HoldStress; }
};

struct Segment {
  double duration = 0.0;
  std::array<ChannelControl, 6> controls;
};

enum class UniaxialMode { TensionOnly, TensionCompression };
enum class BiaxialKind { BC, UBC, UBCS };

/// Parameters a program was built from; serialized into dataset metadata.
struct ProgramDescriptor {
  std::string kind = "uniaxial";  ///< "uniaxial" | "BC" | "UBC" | "UBCS"
  double rate = 0.01;             ///< axial strain rate magnitude (1/time)
  std::vector<double> amplitudes{0.01, 0.02, 0.03};
  UniaxialMode mode = UniaxialMode::TensionOnly;
  double p0 = 0.0;  ///< confining stress, tensile positive
  int cycles = 3;
  double half_cycle = 1.0;  ///< biaxial half-cycle duration
};

void to_json(nlohmann::json& j, const ProgramDescriptor& d);
void from_json(const nlohmann::json& j, ProgramDescriptor& d);

struct LoadingProgram {
  std::vector<Segment> segments;
  Sym initial_stress{};
  std::string description;
  ProgramDescriptor descriptor;

  double total_duration() const;
  /// Start time of each segment plus the final end time (size segments+1).
  std::vector<double> boundaries() const;
  /// Throws EmptyProgram / ConfigError when the invariants do not hold.
  void validate() const;
};

/// Controls active at time t, with time-varying rates evaluated.
struct ControlSample {
  std::array<ChannelControl::Mode, 6> mode{};
  std::array<double, 6> value{};  ///< strain rate or held stress target
  std::size_t segment = 0;

  bool holds_stress(std::size_t ch) const { return mode[ch] == ChannelControl::Mode::HoldStress; }
};

/// Uniaxial stress cycles: axial strain ramps at +-rate to each amplitude and
/// back to zero; lateral normal stresses held at 0; shear strain rates 0.
LoadingProgram build_uniaxial_cycles(double rate, const std::vector<double>& amplitudes,
                                     UniaxialMode mode = UniaxialMode::TensionOnly);

/// Biaxial programs after isotropic confinement p0 (tensile positive):
/// BC holds lateral stress, UBC/UBCS impose lateral strain rate -axial/2.
/// Axial compression comes first in every cycle.
LoadingProgram build_biaxial(BiaxialKind kind, double p0, double axial_rate, int cycles,
                             double half_cycle = 1.0);

/// Rebuilds a program from its descriptor.
LoadingProgram build_program(const ProgramDescriptor& d);

/// Half-open segment lookup [start, end); the end of the program maps to the
/// last segment. Throws OutOfRange outside [0, total].
ControlSample control_at(const LoadingProgram& p, double t);

/// Controls of one segment at time t (no range lookup).
ControlSample control_of(const LoadingProgram& p, std::size_t segment, double t);

}  // namespace pinnplast
