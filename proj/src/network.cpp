#include "pinnplast/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <fmt/format.h>

namespace pinnplast {

void MLPSpec::validate() const {
  if (input_dim != 1) throw ConfigError("network input must be scalar time");
  if ((hidden_layers > 0 && width < 1) || output_dim < 1) {
    throw ConfigError(fmt::format("invalid network shape {}x{} -> {}", hidden_layers, width,
                                  output_dim));
  }
  if (hidden_activation != "tanh" || output_activation != "linear") {
    throw ConfigError("only tanh hidden and linear output activations are supported");
  }
}

std::size_t MLPSpec::param_count() const {
  std::size_t n = 0;
  for (const auto& L : layer_layout(*this)) n += L.in * L.out + L.out;
  return n;
}

void to_json(nlohmann::json& j, const MLPSpec& s) {
  j = {{"input_dim", s.input_dim},
       {"hidden_layers", s.hidden_layers},
       {"width", s.width},
       {"output_dim", s.output_dim},
       {"hidden_activation", s.hidden_activation},
       {"output_activation", s.output_activation}};
}

void from_json(const nlohmann::json& j, MLPSpec& s) {
  s = MLPSpec{};
  for (const auto& [key, val] : j.items()) {
    if (key == "input_dim") {
      s.input_dim = val.get<std::size_t>();
    } else if (key == "hidden_layers") {
      s.hidden_layers = val.get<std::size_t>();
    } else if (key == "width") {
      s.width = val.get<std::size_t>();
    } else if (key == "output_dim") {
      s.output_dim = val.get<std::size_t>();
    } else if (key == "hidden_activation") {
      s.hidden_activation = val.get<std::string>();
    } else if (key == "output_activation") {
      s.output_activation = val.get<std::string>();
    } else {
      throw ConfigError(fmt::format("unknown network key '{}'", key));
    }
  }
  s.validate();
}

std::vector<LayerLayout> layer_layout(const MLPSpec& spec) {
  std::vector<LayerLayout> out;
  std::size_t off = 0;
  std::size_t in = spec.input_dim;
  for (std::size_t l = 0; l <= spec.hidden_layers; ++l) {
    const std::size_t o = l == spec.hidden_layers ? spec.output_dim : spec.width;
    out.push_back({in, o, off, off + in * o});
    off += in * o + o;
    in = o;
  }
  return out;
}

ParamVector init_mlp(const MLPSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamVector p{spec, std::vector<double>(spec.param_count(), 0.0)};
  std::mt19937_64 rng(seed);
  for (const auto& L : layer_layout(spec)) {
    const double bound = std::sqrt(6.0 / static_cast<double>(L.in + L.out));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t k = 0; k < L.in * L.out; ++k) p.theta[L.w_offset + k] = u(rng);
  }
  return p;
}

double lipschitz_bound(const ParamVector& p) {
  double L = 1.0;
  for (const auto& layer : layer_layout(p.spec)) {
    double fro = 0.0;
    for (std::size_t k = 0; k < layer.in * layer.out; ++k) {
      fro += p.theta[layer.w_offset + k] * p.theta[layer.w_offset + k];
    }
    L *= std::sqrt(fro);
  }
  return L;
}

// ---- batched evaluation ---------------------------------------------------

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> weights(const ParamVector& p, const LayerLayout& L) {
  return {p.theta.data() + L.w_offset, static_cast<Eigen::Index>(L.out),
          static_cast<Eigen::Index>(L.in)};
}

Eigen::Map<const Eigen::VectorXd> biases(const ParamVector& p, const LayerLayout& L) {
  return {p.theta.data() + L.b_offset, static_cast<Eigen::Index>(L.out)};
}

}  // namespace

void BatchMLP::forward(const ParamVector& p, std::span<const double> t) {
  params_ = &p;
  const auto layers = layer_layout(p.spec);
  const auto n = static_cast<Eigen::Index>(t.size());
  a_.assign(layers.size(), Matrix());
  da_.assign(layers.size(), Matrix());
  dz_.assign(layers.size(), Matrix());
  Matrix a(1, n), da = Matrix::Ones(1, n);
  for (Eigen::Index i = 0; i < n; ++i) a(0, i) = t[static_cast<std::size_t>(i)];
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto W = weights(p, layers[l]);
    a_[l] = a;
    da_[l] = da;
    Matrix z = W * a;
    z.colwise() += biases(p, layers[l]);
    Matrix dz = W * da;
    if (l + 1 < layers.size()) {
      a = z.array().tanh().matrix();
      da = ((1.0 - a.array().square()) * dz.array()).matrix();
      dz_[l] = std::move(dz);
    } else {
      a = std::move(z);
      da = std::move(dz);
    }
  }
  y_ = std::move(a);
  dy_ = std::move(da);
}

void BatchMLP::backward(const Matrix& gy, const Matrix& gdy, std::span<double> grad) const {
  if (!params_) throw ConfigError("BatchMLP::backward before forward");
  const ParamVector& p = *params_;
  const auto layers = layer_layout(p.spec);
  // Adjoints of the current layer's pre-activation output (z, dz).
  Matrix gz = gy, gdz = gdy;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& L = layers[l];
    const auto W = weights(p, L);
    Eigen::Map<RowMajor> gW(grad.data() + L.w_offset, static_cast<Eigen::Index>(L.out),
                            static_cast<Eigen::Index>(L.in));
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + L.b_offset, static_cast<Eigen::Index>(L.out));
    gW.noalias() += gz * a_[l].transpose() + gdz * da_[l].transpose();
    gb += gz.rowwise().sum();
    if (l == 0) break;
    const Matrix ga = W.transpose() * gz;
    const Matrix gda = W.transpose() * gdz;
    // a = tanh(z), da = s * dz with s = 1 - a^2 and ds/dz = -2 a s.
    const auto& A = a_[l].array();
    const Eigen::ArrayXXd s = 1.0 - A.square();
    gdz = (s * gda.array()).matrix();
    gz = (ga.array() * s + gda.array() * dz_[l - 1].array() * (-2.0 * A * s)).matrix();
  }
}

// ---- checkpoints ----------------------------------------------------------

namespace {

constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::uint8_t> to_bytes(const std::vector<double>& v) {
  std::vector<std::uint8_t> out(v.size() * sizeof(double));
  std::memcpy(out.data(), v.data(), out.size());
  return out;
}

std::vector<double> from_bytes(const std::vector<std::uint8_t>& b) {
  if (b.size() % sizeof(double) != 0) throw CorruptCheckpoint("payload length is not a multiple of 8");
  std::vector<double> v(b.size() / sizeof(double));
  std::memcpy(v.data(), b.data(), b.size());
  return v;
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += kB64[v & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kB64[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw CorruptCheckpoint("base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int q[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        q[k] = 0;
        ++pad;
        continue;
      }
      q[k] = val(c);
      if (q[k] < 0 || pad > 0) throw CorruptCheckpoint("invalid base64 character");
    }
    const std::uint32_t v = (q[0] << 18) | (q[1] << 12) | (q[2] << 6) | q[3];
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  }
  return out;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  std::vector<double> flat = c.gamma.theta;
  if (c.beta) flat.insert(flat.end(), c.beta->theta.begin(), c.beta->theta.end());
  const auto bytes = to_bytes(flat);
  nlohmann::json j{{"schema", kCheckpointSchema},
                   {"kind", to_string(c.kind)},
                   {"gamma_spec", c.gamma.spec},
                   {"params", c.params},
                   {"scaling", c.scaling},
                   {"config_digest", c.config_digest},
                   {"payload_doubles", flat.size()},
                   {"payload_fnv1a", fmt::format("{:016x}", fnv1a(bytes))},
                   {"payload", base64_encode(bytes)}};
  if (c.beta) j["beta_spec"] = c.beta->spec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw ConfigError(fmt::format("cannot write {}", path.string()));
  os << j.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(fmt::format("cannot open checkpoint {}", path.string()));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(fmt::format("{}: {}", path.string(), e.what()));
  }
  if (j.value("schema", "") != kCheckpointSchema) {
    throw SchemaVersionMismatch(
        fmt::format("checkpoint schema '{}' (expected '{}')", j.value("schema", ""), kCheckpointSchema));
  }
  Checkpoint c;
  try {
    c.kind = model_kind_from_string(j.at("kind").get<std::string>());
    c.gamma.spec = j.at("gamma_spec").get<MLPSpec>();
    if (j.contains("beta_spec")) c.beta = ParamVector{j.at("beta_spec").get<MLPSpec>(), {}};
    c.params = j.at("params").get<MaterialParams>();
    c.scaling = j.at("scaling").get<ScalingFactors>();
    c.config_digest = j.value("config_digest", "");
    const auto bytes = base64_decode(j.at("payload").get<std::string>());
    if (fmt::format("{:016x}", fnv1a(bytes)) != j.at("payload_fnv1a").get<std::string>()) {
      throw CorruptCheckpoint("payload checksum mismatch");
    }
    const auto flat = from_bytes(bytes);
    const std::size_t ng = c.gamma.spec.param_count();
    const std::size_t nb = c.beta ? c.beta->spec.param_count() : 0;
    if (flat.size() != ng + nb || flat.size() != j.at("payload_doubles").get<std::size_t>()) {
      throw CorruptCheckpoint(fmt::format("payload holds {} values, layout needs {}", flat.size(), ng + nb));
    }
    c.gamma.theta.assign(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(ng));
    if (c.beta) c.beta->theta.assign(flat.begin() + static_cast<std::ptrdiff_t>(ng), flat.end());
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(fmt::format("{}: {}", path.string(), e.what()));
  }
  return c;
}

void require_spec(const Checkpoint& c, const MLPSpec& gamma_spec,
                  const std::optional<MLPSpec>& beta_spec) {
  auto shape = [](const MLPSpec& s) {
    return fmt::format("{}x{}->{}", s.hidden_layers, s.width, s.output_dim);
  };
  if (!(c.gamma.spec == gamma_spec)) {
    throw SpecMismatch(fmt::format("gamma network is {}, expected {}", shape(c.gamma.spec),
                                   shape(gamma_spec)));
  }
  if (beta_spec.has_value() != c.beta.has_value()) {
    throw SpecMismatch("checkpoint and run disagree on the presence of a beta network");
  }
  if (beta_spec && !(c.beta->spec == *beta_spec)) {
    throw SpecMismatch(fmt::format("beta network is {}, expected {}", shape(c.beta->spec),
                                   shape(*beta_spec)));
  }
}

}  // namespace pinnplast
