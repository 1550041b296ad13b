#include "pinnplast/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "pinnplast/errors.hpp"
#include "pinnplast/forward.hpp"

namespace pinnplast {

namespace {

using nlohmann::json;

const std::set<std::string> kTermNames{
    "data_sigma", "data_eps", "F_nonpos", "gdot_nonneg", "kkt", "elastic_unload", "elastic_load",
    "ep_stress", "ep_multiplier", "kin_hardening", "omega_nonneg", "omega_le_one", "gamma0"};

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(fmt::format("{} must be a JSON object", where));
  for (const auto& [key, val] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(fmt::format("unknown key '{}' in {}", key, where));
  }
}

// Typed read with the key path in the error message.
template <class T>
T read(const json& j, const std::string& key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}.{}: {}", where, key, e.what()));
  }
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::string_view to_string(LoadingIndicator i) {
  return i == LoadingIndicator::TrialRate ? "trial_rate" : "data_rate";
}
std::string_view to_string(GateArgument g) {
  return g == GateArgument::Yield ? "yield" : "complementarity";
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t run_seed, SeedPurpose purpose, std::uint64_t member) {
  return splitmix64(splitmix64(run_seed ^ (static_cast<std::uint64_t>(purpose) << 56)) + member);
}

MaterialParams preset_params(ModelKind kind) {
  switch (kind) {
    case ModelKind::VMIH:
      return vmih_reference();
    case ModelKind::VMKH:
      return vmkh_reference();
    case ModelKind::VM_DAMAGE:
      return vmd_reference();
    case ModelKind::DRUCKER_PRAGER:
      return drucker_prager_soil();
    default:
      throw ConfigError(fmt::format("no preset parameters for model '{}'", to_string(kind)));
  }
}

ProgramDescriptor preset_program(ModelKind kind) {
  ProgramDescriptor d;
  switch (kind) {
    case ModelKind::VMIH:
    case ModelKind::VMKH:
    case ModelKind::VM_MIXED:
    case ModelKind::DISCOVERY_GENERAL:
      return d;
    case ModelKind::VM_DAMAGE:
      d.amplitudes = {0.02, 0.04, 0.06};
      return d;
    case ModelKind::DRUCKER_PRAGER:
      d.kind = "BC";
      d.p0 = -100e3;
      d.rate = 0.005;
      d.cycles = 2;
      d.amplitudes.clear();
      return d;
  }
  throw ConfigError("unknown model kind");
}

MaterialParams draw_exploration_params(ModelKind kind, std::mt19937_64& rng) {
  MaterialParams p;
  double E = 0, nu = 0;
  switch (kind) {
    case ModelKind::VMIH:
      E = uniform(rng, 100e9, 400e9);
      nu = uniform(rng, 0.1, 0.4);
      p[Param::sigma_y0] = uniform(rng, 100e6, 400e6);
      p[Param::kbar] = uniform(rng, 1e9, 100e9);
      break;
    case ModelKind::VMKH:
      E = uniform(rng, 100e9, 400e9);
      nu = uniform(rng, 0.1, 0.4);
      p[Param::sigma_y0] = uniform(rng, 100e6, 400e6);
      p[Param::hbar] = uniform(rng, 1e9, 100e9);
      break;
    case ModelKind::VM_DAMAGE:
      E = uniform(rng, 40e9, 100e9);
      nu = uniform(rng, 0.2, 0.4);
      p[Param::sigma_y0] = uniform(rng, 400e6, 800e6);
      p[Param::alpha_s] = uniform(rng, 0.2, 0.4);
      break;
    default:
      throw ConfigError(fmt::format("no exploration ranges for model '{}'", to_string(kind)));
  }
  const BulkShear km = moduli_from_young(E, nu);
  p[Param::kappa] = km.kappa;
  p[Param::mu] = km.mu;
  p.trainable = default_trainable(kind);
  return p;
}

MaterialParams DatasetConfig::resolved_params() const {
  MaterialParams p = params ? *params : preset_params(kind);
  p.trainable = default_trainable(kind);
  return p;
}

ProgramDescriptor DatasetConfig::resolved_loading() const {
  return loading ? *loading : preset_program(kind);
}

std::filesystem::path RunConfig::output_dir() const {
  if (!output.empty()) return output;
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') return root;
  return "runs";
}

void apply_train_json(const json& j, TrainConfig& cfg) {
  const std::string where = "train";
  reject_unknown(j,
                 {"max_epochs", "lr_initial", "lr_final", "early_stop_patience",
                  "early_stop_min_delta", "delta", "detach_gates", "trainable", "lambda",
                  "strict_text_gates", "indicator", "gate_argument", "pin_gamma0", "tol_eta",
                  "param_lr_scale", "scratch_init", "log_every", "gamma_network", "beta_network"},
                 where);
  if (j.contains("max_epochs")) cfg.max_epochs = read<std::size_t>(j, "max_epochs", where);
  if (j.contains("lr_initial")) cfg.lr_initial = read<double>(j, "lr_initial", where);
  if (j.contains("lr_final")) cfg.lr_final = read<double>(j, "lr_final", where);
  if (j.contains("early_stop_patience")) {
    cfg.early_stop_patience = read<std::size_t>(j, "early_stop_patience", where);
  }
  if (j.contains("early_stop_min_delta")) {
    cfg.early_stop_min_delta = read<double>(j, "early_stop_min_delta", where);
  }
  if (j.contains("delta")) cfg.loss.gate.delta = read<double>(j, "delta", where);
  if (j.contains("detach_gates")) cfg.loss.gate.detach_gates = read<bool>(j, "detach_gates", where);
  if (j.contains("strict_text_gates")) {
    cfg.loss.strict_text_gates = read<bool>(j, "strict_text_gates", where);
  }
  if (j.contains("pin_gamma0")) cfg.loss.pin_gamma0 = read<bool>(j, "pin_gamma0", where);
  if (j.contains("tol_eta")) cfg.loss.tol_eta = read<double>(j, "tol_eta", where);
  if (j.contains("indicator")) {
    const auto s = read<std::string>(j, "indicator", where);
    if (s == "trial_rate") {
      cfg.loss.indicator = LoadingIndicator::TrialRate;
    } else if (s == "data_rate") {
      cfg.loss.indicator = LoadingIndicator::DataRate;
    } else {
      throw ConfigError(fmt::format("train.indicator: unknown value '{}'", s));
    }
  }
  if (j.contains("gate_argument")) {
    const auto s = read<std::string>(j, "gate_argument", where);
    if (s == "yield") {
      cfg.loss.gate_argument = GateArgument::Yield;
    } else if (s == "complementarity") {
      cfg.loss.gate_argument = GateArgument::Complementarity;
    } else {
      throw ConfigError(fmt::format("train.gate_argument: unknown value '{}'", s));
    }
  }
  if (j.contains("lambda")) {
    const auto& l = j.at("lambda");
    if (!l.is_object()) throw ConfigError("train.lambda must be an object of term weights");
    for (const auto& [name, w] : l.items()) {
      if (!kTermNames.count(name)) throw ConfigError(fmt::format("train.lambda: unknown term '{}'", name));
      if (!w.is_number() || !(w.get<double>() > 0.0)) {
        throw ConfigError(fmt::format("train.lambda.{} must be a positive number", name));
      }
      cfg.loss.lambda[name] = w.get<double>();
    }
  }
  if (j.contains("trainable")) {
    std::array<bool, kNumParams> t{};
    for (const auto& name : read<std::vector<std::string>>(j, "trainable", where)) {
      const auto p = param_from_name(name);
      if (!p) throw ConfigError(fmt::format("train.trainable: unknown parameter '{}'", name));
      t[static_cast<std::size_t>(*p)] = true;
    }
    cfg.trainable = t;
  }
  if (j.contains("param_lr_scale")) cfg.param_lr_scale = read<double>(j, "param_lr_scale", where);
  if (j.contains("scratch_init")) cfg.scratch_init = read<double>(j, "scratch_init", where);
  if (j.contains("log_every")) cfg.log_every = read<std::size_t>(j, "log_every", where);
  try {
    if (j.contains("gamma_network")) cfg.gamma_spec = j.at("gamma_network").get<MLPSpec>();
    if (j.contains("beta_network")) cfg.beta_spec = j.at("beta_network").get<MLPSpec>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("train network spec: {}", e.what()));
  }
  cfg.validate();
}

json train_config_json(const TrainConfig& cfg) {
  json j{{"mode", std::string(to_string(cfg.mode))},
         {"max_epochs", cfg.max_epochs},
         {"lr_initial", cfg.lr_initial},
         {"lr_final", cfg.lr_final},
         {"early_stop_patience", cfg.early_stop_patience},
         {"early_stop_min_delta", cfg.early_stop_min_delta},
         {"delta", cfg.loss.gate.delta},
         {"detach_gates", cfg.loss.gate.detach_gates},
         {"strict_text_gates", cfg.loss.strict_text_gates},
         {"indicator", std::string(to_string(cfg.loss.indicator))},
         {"gate_argument", std::string(to_string(cfg.loss.gate_argument))},
         {"pin_gamma0", cfg.loss.pin_gamma0},
         {"tol_eta", cfg.loss.tol_eta},
         {"lambda", cfg.loss.lambda},
         {"param_lr_scale", cfg.param_lr_scale},
         {"scratch_init", cfg.scratch_init},
         {"log_every", cfg.log_every},
         {"seed", cfg.seed},
         {"gamma_network", cfg.gamma_spec},
         {"beta_network", cfg.beta_spec}};
  if (cfg.trainable) {
    json t = json::array();
    for (std::size_t i = 0; i < kNumParams; ++i) {
      if ((*cfg.trainable)[i]) t.push_back(std::string(kParamNames[i]));
    }
    j["trainable"] = t;
  }
  return j;
}

RunConfig parse_run_config(const json& j, TrainMode mode) {
  reject_unknown(j, {"seed", "dataset", "train", "output", "basis"}, "config");
  RunConfig rc;
  if (j.contains("seed")) rc.seed = read<std::uint64_t>(j, "seed", "config");

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    const std::string where = "dataset";
    reject_unknown(d, {"model", "params", "loading", "points_per_cycle", "noise", "sweep"}, where);
    DatasetConfig& dc = rc.dataset;
    if (d.contains("model")) dc.kind = model_kind_from_string(read<std::string>(d, "model", where));
    try {
      if (d.contains("params")) {
        // Partial sets override the preset of the model.
        MaterialParams p = d.at("params").is_object() && dc.kind != ModelKind::VM_MIXED &&
                                   dc.kind != ModelKind::DISCOVERY_GENERAL
                               ? preset_params(dc.kind)
                               : MaterialParams{};
        for (const auto& [key, val] : d.at("params").items()) {
          const auto par = param_from_name(key);
          if (!par) throw ConfigError(fmt::format("dataset.params: unknown parameter '{}'", key));
          p[*par] = val.get<double>();
        }
        dc.params = p;
      }
      if (d.contains("loading")) dc.loading = d.at("loading").get<ProgramDescriptor>();
    } catch (const json::exception& e) {
      throw ConfigError(fmt::format("dataset: {}", e.what()));
    }
    if (d.contains("points_per_cycle")) {
      dc.points_per_cycle = read<std::size_t>(d, "points_per_cycle", where);
    }
    if (d.contains("noise")) dc.noise = read<double>(d, "noise", where);
    if (d.contains("sweep")) dc.sweep = read<std::size_t>(d, "sweep", where);
    if (dc.points_per_cycle < 2) throw ConfigError("dataset.points_per_cycle must be at least 2");
    if (!(dc.noise >= 0.0)) throw ConfigError("dataset.noise must be non-negative");
    validate(dc.resolved_params(), dc.kind);
    build_program(dc.resolved_loading()).validate();
  }

  rc.train = default_train_config(mode, rc.dataset.kind);
  if (j.contains("train")) apply_train_json(j.at("train"), rc.train);
  rc.train.mode = mode;
  rc.train.seed = derive_seed(rc.seed, SeedPurpose::Init);
  rc.train.validate();

  if (j.contains("output")) rc.output = read<std::string>(j, "output", "config");
  if (j.contains("basis")) rc.basis = read<std::string>(j, "basis", "config");
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path, TrainMode mode) {
  std::ifstream is(path);
  if (!is) throw ConfigError(fmt::format("cannot read config {}", path.string()));
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return parse_run_config(j, mode);
}

Dataset generate_dataset(const DatasetConfig& dc, const MaterialParams& params,
                         std::uint64_t noise_seed) {
  const RawPath path = integrate(build_program(dc.resolved_loading()), params, dc.kind);
  return make_training_dataset(path, dc.points_per_cycle, dc.noise, noise_seed);
}

std::vector<MaterialParams> dataset_members(const RunConfig& rc) {
  if (rc.dataset.sweep == 0) return {rc.dataset.resolved_params()};
  std::mt19937_64 rng(derive_seed(rc.seed, SeedPurpose::Sampling));
  std::vector<MaterialParams> out;
  for (std::size_t i = 0; i < rc.dataset.sweep; ++i) {
    out.push_back(draw_exploration_params(rc.dataset.kind, rng));
  }
  return out;
}

std::string json_digest(const json& j) {
  // FNV-1a over the canonical dump.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

}  // namespace pinnplast
