#include "pinnplast/loading.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

namespace pinnplast {

double StrainRate::at(double t) const {
  if (cos_amplitude == 0.0) return constant;
  return constant + cos_amplitude * std::cos(cos_frequency * t);
}

double LoadingProgram::total_duration() const {
  double total = 0.0;
  for (const auto& s : segments) total += s.duration;
  return total;
}

std::vector<double> LoadingProgram::boundaries() const {
  std::vector<double> b{0.0};
  for (const auto& s : segments) b.push_back(b.back() + s.duration);
  return b;
}

void LoadingProgram::validate() const {
  if (segments.empty()) throw EmptyProgram("loading program has no segments");
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    if (!(s.duration > 0.0)) {
      throw ConfigError(fmt::format("segment {} has non-positive duration {}", i, s.duration));
    }
    bool any_strain = false;
    for (const auto& c : s.controls) any_strain = any_strain || !c.holds_stress();
    if (!any_strain) {
      throw ConfigError(fmt::format("segment {} is fully stress-controlled", i));
    }
  }
}

namespace {

Segment uniaxial_segment(double duration, double axial_rate) {
  Segment s;
  s.duration = duration;
  s.controls[0] = ChannelControl::strain_rate(axial_rate);
  s.controls[1] = ChannelControl::hold_stress(0.0);
  s.controls[2] = ChannelControl::hold_stress(0.0);
  for (std::size_t i = 3; i < 6; ++i) s.controls[i] = ChannelControl::strain_rate(0.0);
  return s;
}

}  // namespace

LoadingProgram build_uniaxial_cycles(double rate, const std::vector<double>& amplitudes,
                                     UniaxialMode mode) {
  if (amplitudes.empty()) throw EmptyProgram("uniaxial program needs at least one amplitude");
  if (!(rate > 0.0)) throw ConfigError(fmt::format("strain rate {} must be positive", rate));
  for (std::size_t i = 0; i < amplitudes.size(); ++i) {
    if (amplitudes[i] < 0.0 || (i > 0 && amplitudes[i] < amplitudes[i - 1])) {
      throw ConfigError("uniaxial amplitudes must be non-negative and increasing");
    }
  }

  LoadingProgram p;
  p.descriptor.kind = "uniaxial";
  p.descriptor.rate = rate;
  p.descriptor.amplitudes = amplitudes;
  p.descriptor.mode = mode;
  p.descriptor.cycles = static_cast<int>(amplitudes.size());
  p.description = fmt::format("uniaxial {} cycles, rate {}",
                              mode == UniaxialMode::TensionOnly ? "tension" : "tension-compression",
                              rate);
  for (double a : amplitudes) {
    if (a == 0.0) continue;
    const double d = a / rate;
    if (mode == UniaxialMode::TensionOnly) {
      p.segments.push_back(uniaxial_segment(d, rate));
      p.segments.push_back(uniaxial_segment(d, -rate));
    } else {
      p.segments.push_back(uniaxial_segment(d, rate));
      p.segments.push_back(uniaxial_segment(2.0 * d, -rate));
      p.segments.push_back(uniaxial_segment(d, rate));
    }
  }
  if (p.segments.empty()) {
    // All-zero amplitudes: a single hold at zero strain keeps the program valid.
    p.segments.push_back(uniaxial_segment(1.0, 0.0));
  }
  return p;
}

LoadingProgram build_biaxial(BiaxialKind kind, double p0, double axial_rate, int cycles,
                             double half_cycle) {
  if (!(axial_rate > 0.0)) throw ConfigError("axial rate must be positive");
  if (cycles < 1) throw EmptyProgram("biaxial program needs at least one cycle");
  if (!(half_cycle > 0.0)) throw ConfigError("half-cycle duration must be positive");

  LoadingProgram p;
  p.initial_stress = p0 * identity_tensor();
  p.descriptor.rate = axial_rate;
  p.descriptor.p0 = p0;
  p.descriptor.cycles = cycles;
  p.descriptor.half_cycle = half_cycle;
  p.descriptor.amplitudes.clear();

  auto segment = [&](double duration, ChannelControl axial, ChannelControl lateral) {
    Segment s;
    s.duration = duration;
    s.controls[0] = axial;
    s.controls[1] = lateral;
    s.controls[2] = lateral;
    for (std::size_t i = 3; i < 6; ++i) s.controls[i] = ChannelControl::strain_rate(0.0);
    return s;
  };

  switch (kind) {
    case BiaxialKind::BC:
      p.descriptor.kind = "BC";
      for (int c = 0; c < cycles; ++c) {
        p.segments.push_back(segment(half_cycle, ChannelControl::strain_rate(-axial_rate),
                                     ChannelControl::hold_stress(p0)));
        p.segments.push_back(segment(half_cycle, ChannelControl::strain_rate(axial_rate),
                                     ChannelControl::hold_stress(p0)));
      }
      break;
    case BiaxialKind::UBC:
      p.descriptor.kind = "UBC";
      for (int c = 0; c < cycles; ++c) {
        p.segments.push_back(segment(half_cycle, ChannelControl::strain_rate(-axial_rate),
                                     ChannelControl::strain_rate(0.5 * axial_rate)));
        p.segments.push_back(segment(half_cycle, ChannelControl::strain_rate(axial_rate),
                                     ChannelControl::strain_rate(-0.5 * axial_rate)));
      }
      break;
    case BiaxialKind::UBCS: {
      p.descriptor.kind = "UBCS";
      const double w = std::numbers::pi / half_cycle;
      p.segments.push_back(segment(2.0 * half_cycle * cycles,
                                   ChannelControl::cosine_rate(-axial_rate, w),
                                   ChannelControl::cosine_rate(0.5 * axial_rate, w)));
      break;
    }
  }
  p.description = fmt::format("{} p0={} axial rate {} x{} cycles", p.descriptor.kind, p0,
                              axial_rate, cycles);
  return p;
}

LoadingProgram build_program(const ProgramDescriptor& d) {
  if (d.kind == "uniaxial") return build_uniaxial_cycles(d.rate, d.amplitudes, d.mode);
  if (d.kind == "BC") return build_biaxial(BiaxialKind::BC, d.p0, d.rate, d.cycles, d.half_cycle);
  if (d.kind == "UBC") return build_biaxial(BiaxialKind::UBC, d.p0, d.rate, d.cycles, d.half_cycle);
  if (d.kind == "UBCS") {
    return build_biaxial(BiaxialKind::UBCS, d.p0, d.rate, d.cycles, d.half_cycle);
  }
  throw ConfigError(fmt::format("unknown loading kind '{}'", d.kind));
}

ControlSample control_of(const LoadingProgram& p, std::size_t segment, double t) {
  ControlSample out;
  out.segment = segment;
  const auto& seg = p.segments.at(segment);
  for (std::size_t ch = 0; ch < 6; ++ch) {
    out.mode[ch] = seg.controls[ch].mode;
    out.value[ch] =
        seg.controls[ch].holds_stress() ? seg.controls[ch].target : seg.controls[ch].rate.at(t);
  }
  return out;
}

ControlSample control_at(const LoadingProgram& p, double t) {
  p.validate();
  const double total = p.total_duration();
  if (!(t >= 0.0) || t > total) {
    throw OutOfRange(fmt::format("t={} outside program span [0, {}]", t, total));
  }
  double start = 0.0;
  for (std::size_t i = 0; i < p.segments.size(); ++i) {
    const double end = start + p.segments[i].duration;
    if (t < end) return control_of(p, i, t);
    start = end;
  }
  return control_of(p, p.segments.size() - 1, t);
}

void to_json(nlohmann::json& j, const ProgramDescriptor& d) {
  j = {{"kind", d.kind},
       {"rate", d.rate},
       {"amplitudes", d.amplitudes},
       {"mode", d.mode == UniaxialMode::TensionOnly ? "tension_only" : "tension_compression"},
       {"p0", d.p0},
       {"cycles", d.cycles},
       {"half_cycle", d.half_cycle}};
}

void from_json(const nlohmann::json& j, ProgramDescriptor& d) {
  d = ProgramDescriptor{};
  for (const auto& [key, val] : j.items()) {
    if (key == "kind") {
      d.kind = val.get<std::string>();
    } else if (key == "rate") {
      d.rate = val.get<double>();
    } else if (key == "amplitudes") {
      d.amplitudes = val.get<std::vector<double>>();
    } else if (key == "mode") {
      const auto m = val.get<std::string>();
      if (m == "tension_only") {
        d.mode = UniaxialMode::TensionOnly;
      } else if (m == "tension_compression") {
        d.mode = UniaxialMode::TensionCompression;
      } else {
        throw ConfigError(fmt::format("unknown uniaxial mode '{}'", m));
      }
    } else if (key == "p0") {
      d.p0 = val.get<double>();
    } else if (key == "cycles") {
      d.cycles = val.get<int>();
    } else if (key == "half_cycle") {
      d.half_cycle = val.get<double>();
    } else {
      throw ConfigError(fmt::format("unknown loading key '{}'", key));
    }
  }
}

}  // namespace pinnplast
