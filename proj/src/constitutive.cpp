#include "pinnplast/constitutive.hpp"

#include <fmt/format.h>

namespace pinnplast {

std::optional<Param> param_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumParams; ++i) {
    if (kParamNames[i] == name) return static_cast<Param>(i);
  }
  return std::nullopt;
}

ModelFlags flags_of(ModelKind kind) {
  switch (kind) {
    case ModelKind::VMIH:
      return {};
    case ModelKind::VMKH:
    case ModelKind::VM_MIXED:
      return {.kinematic_on = true};
    case ModelKind::DRUCKER_PRAGER:
      return {.pressure_on = true};
    case ModelKind::VM_DAMAGE:
      return {.damage_on = true};
    case ModelKind::DISCOVERY_GENERAL:
      return {.pressure_on = true, .quadratic_hardening_on = true};
  }
  return {};
}

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::VMIH:
      return "VMIH";
    case ModelKind::VMKH:
      return "VMKH";
    case ModelKind::VM_MIXED:
      return "VM_MIXED";
    case ModelKind::DRUCKER_PRAGER:
      return "DRUCKER_PRAGER";
    case ModelKind::VM_DAMAGE:
      return "VM_DAMAGE";
    case ModelKind::DISCOVERY_GENERAL:
      return "DISCOVERY_GENERAL";
  }
  return "?";
}

ModelKind model_kind_from_string(std::string_view name) {
  for (ModelKind k : {ModelKind::VMIH, ModelKind::VMKH, ModelKind::VM_MIXED,
                      ModelKind::DRUCKER_PRAGER, ModelKind::VM_DAMAGE,
                      ModelKind::DISCOVERY_GENERAL}) {
    if (to_string(k) == name) return k;
  }
  if (name == "VMD") return ModelKind::VM_DAMAGE;
  if (name == "DP") return ModelKind::DRUCKER_PRAGER;
  throw ConfigError(fmt::format("unknown model kind '{}'", name));
}

std::array<bool, kNumParams> default_trainable(ModelKind kind) {
  std::array<bool, kNumParams> t{};
  auto on = [&](Param p) { t[static_cast<std::size_t>(p)] = true; };
  on(Param::kappa);
  on(Param::mu);
  on(Param::sigma_y0);
  switch (kind) {
    case ModelKind::VMIH:
      on(Param::kbar);
      break;
    case ModelKind::VMKH:
      on(Param::hbar);
      break;
    case ModelKind::VM_MIXED:
      on(Param::kbar);
      on(Param::hbar);
      break;
    case ModelKind::DRUCKER_PRAGER:
      on(Param::m);
      break;
    case ModelKind::VM_DAMAGE:
      on(Param::alpha_s);
      break;
    case ModelKind::DISCOVERY_GENERAL:
      on(Param::kbar);
      on(Param::kbar2);
      on(Param::m);
      break;
  }
  return t;
}

void validate(const MaterialParams& p, ModelKind kind) {
  if (!(p[Param::kappa] > 0.0) || !(p[Param::mu] > 0.0)) {
    throw NonPositiveModulus(
        fmt::format("kappa={} mu={} must be positive", p[Param::kappa], p[Param::mu]));
  }
  if (!(p[Param::sigma_y0] > 0.0)) {
    throw ConfigError(fmt::format("sigma_y0={} must be positive", p[Param::sigma_y0]));
  }
  if (flags_of(kind).damage_on && !(p[Param::alpha_s] > 0.0)) {
    throw ConfigError(fmt::format("alpha_s={} must be positive with damage", p[Param::alpha_s]));
  }
  if (p[Param::m] < 0.0) throw ConfigError(fmt::format("m={} must be >= 0", p[Param::m]));
  if (p.r != 1.0) throw ConfigError(fmt::format("shape factor r={} unsupported (only 1)", p.r));
}

void to_json(nlohmann::json& j, const MaterialParams& p) {
  j = nlohmann::json::object();
  nlohmann::json trainable = nlohmann::json::array();
  for (std::size_t i = 0; i < kNumParams; ++i) {
    j[std::string(kParamNames[i])] = p.values.values[i];
    if (p.trainable[i]) trainable.push_back(std::string(kParamNames[i]));
  }
  j["r"] = p.r;
  j["trainable"] = trainable;
}

void from_json(const nlohmann::json& j, MaterialParams& p) {
  p = MaterialParams{};
  if (!j.is_object()) throw ConfigError("material params must be a JSON object");
  for (const auto& [key, val] : j.items()) {
    if (key == "r") {
      p.r = val.get<double>();
    } else if (key == "trainable") {
      for (const auto& name : val) {
        const auto par = param_from_name(name.get<std::string>());
        if (!par) throw ConfigError(fmt::format("unknown trainable parameter '{}'", name.dump()));
        p.set_trainable(*par, true);
      }
    } else if (const auto par = param_from_name(key)) {
      p[*par] = val.get<double>();
    } else {
      throw ConfigError(fmt::format("unknown material parameter '{}'", key));
    }
  }
}

MaterialParams vmih_reference() {
  MaterialParams p;
  p[Param::kappa] = 111.11e9;
  p[Param::mu] = 83.33e9;
  p[Param::sigma_y0] = 200e6;
  p[Param::kbar] = 10e9;
  p.trainable = default_trainable(ModelKind::VMIH);
  return p;
}

MaterialParams vmkh_reference() {
  MaterialParams p;
  p[Param::kappa] = 111.11e9;
  p[Param::mu] = 83.33e9;
  p[Param::sigma_y0] = 200e6;
  p[Param::hbar] = 10e9;
  p.trainable = default_trainable(ModelKind::VMKH);
  return p;
}

MaterialParams vmd_reference() {
  MaterialParams p;
  p[Param::kappa] = 50.2e9;
  p[Param::mu] = 23.17e9;
  p[Param::sigma_y0] = 663e6;
  p[Param::kbar] = 0.0;
  p[Param::alpha_s] = 0.276;
  p.trainable = default_trainable(ModelKind::VM_DAMAGE);
  return p;
}

MaterialParams drucker_prager_soil() {
  const BulkShear km{100e6, 3.0 * 100e6 * (1.0 - 2.0 * 0.25) / (2.0 * (1.0 + 0.25))};
  MaterialParams p;
  p[Param::kappa] = km.kappa;
  p[Param::mu] = km.mu;
  p[Param::sigma_y0] = 100e3;
  p[Param::kbar] = 0.0;
  p[Param::m] = 0.466;
  p.trainable = default_trainable(ModelKind::DRUCKER_PRAGER);
  return p;
}

}  // namespace pinnplast
