#pragma once

// Fully connected tanh networks of scaled time, with the exact time
// derivative propagated alongside the values (forward-mode tangent).
//
// Two evaluators share one parameter layout: a templated scalar version that
// runs on tape expressions, and a batched Eigen version with a hand-written
// vector-Jacobian product used by the training loop.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "pinnplast/autodiff.hpp"
#include "pinnplast/constitutive.hpp"
#include "pinnplast/dataset.hpp"

namespace pinnplast {

struct MLPSpec {
  std::size_t input_dim = 1;
  std::size_t hidden_layers = 8;
  std::size_t width = 20;
  std::size_t output_dim = 1;
  std::string hidden_activation = "tanh";
  std::string output_activation = "linear";

  void validate() const;
  std::size_t param_count() const;
  bool operator==(const MLPSpec&) const = default;
};

void to_json(nlohmann::json& j, const MLPSpec& s);
void from_json(const nlohmann::json& j, MLPSpec& s);

/// Offsets of one dense layer inside the flat vector. W is row-major out x in.
struct LayerLayout {
  std::size_t in, out, w_offset, b_offset;
};

std::vector<LayerLayout> layer_layout(const MLPSpec& spec);

struct ParamVector {
  MLPSpec spec;
  std::vector<double> theta;

  std::size_t size() const { return theta.size(); }
};

/// Glorot-uniform weights, zero biases; deterministic per seed.
ParamVector init_mlp(const MLPSpec& spec, std::uint64_t seed);

/// Upper bound on the Lipschitz constant of t -> y (product of layer
/// Frobenius norms; tanh is 1-Lipschitz).
double lipschitz_bound(const ParamVector& p);

template <class T>
struct NetOutput {
  std::vector<T> y;
  std::vector<T> dy_dt;
};

/// y(t) and dy/dt for a scalar input. T is double or ad::Expr; theta holds
/// the flat parameters in layer_layout order.
template <class T>
NetOutput<T> forward_with_tderiv(const T& t, std::span<const T> theta, const MLPSpec& spec) {
  using std::tanh;
  const auto layers = layer_layout(spec);
  std::vector<T> a{t};
  std::vector<T> da{T(0.0 * t + 1.0)};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    const bool last = l + 1 == layers.size();
    std::vector<T> z(L.out), dz(L.out);
    for (std::size_t o = 0; o < L.out; ++o) {
      T acc = theta[L.b_offset + o];
      T dacc = 0.0 * theta[L.b_offset + o];
      for (std::size_t i = 0; i < L.in; ++i) {
        const T& w = theta[L.w_offset + o * L.in + i];
        acc = acc + w * a[i];
        dacc = dacc + w * da[i];
      }
      z[o] = acc;
      dz[o] = dacc;
    }
    if (!last) {
      for (std::size_t o = 0; o < L.out; ++o) {
        z[o] = tanh(z[o]);
        dz[o] = (1.0 - z[o] * z[o]) * dz[o];
      }
    }
    a = std::move(z);
    da = std::move(dz);
  }
  return {std::move(a), std::move(da)};
}

/// Batched evaluation over many time points with a reverse pass that maps
/// adjoints of (y, dy/dt) to the parameter gradient.
class BatchMLP {
 public:
  using Matrix = Eigen::MatrixXd;

  /// Evaluates at the times `t` (caches activations for backward()).
  void forward(const ParamVector& p, std::span<const double> t);

  /// output_dim x N.
  const Matrix& y() const { return y_; }
  const Matrix& dy() const { return dy_; }

  /// Adds d(loss)/d(theta) to `grad` given gy = dL/dy and gdy = dL/d(dy/dt).
  void backward(const Matrix& gy, const Matrix& gdy, std::span<double> grad) const;

 private:
  const ParamVector* params_ = nullptr;
  std::vector<Matrix> a_, da_;  // per layer input activations and tangents
  std::vector<Matrix> dz_;      // hidden pre-activation tangents
  Matrix y_, dy_;
};

inline constexpr const char* kCheckpointSchema = "ckpt-v1";

/// Trained networks plus material parameters and the scaling of the dataset
/// they were trained on.
struct Checkpoint {
  ModelKind kind = ModelKind::VMIH;
  ParamVector gamma;
  std::optional<ParamVector> beta;
  MaterialParams params;  ///< physical units
  ScalingFactors scaling;
  std::string config_digest;
};

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
/// Throws CorruptCheckpoint for unreadable content and SchemaVersionMismatch
/// for another schema.
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Throws SpecMismatch when the stored networks do not have these shapes.
void require_spec(const Checkpoint& c, const MLPSpec& gamma_spec,
                  const std::optional<MLPSpec>& beta_spec);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace pinnplast
