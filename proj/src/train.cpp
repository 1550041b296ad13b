#include "pinnplast/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "pinnplast/errors.hpp"

namespace pinnplast {

namespace {

constexpr std::uint64_t kBetaSeedSalt = 0x9E3779B97F4A7C15ULL;

// m and kbar2 may be zero or (for kbar2) negative; everything else is trained
// in log coordinates.
bool linear_coordinate(Param p) { return p == Param::m || p == Param::kbar2; }


Param param_at(std::size_t i) { return static_cast<Param>(i); }

// Flat optimizer vector: gamma net, beta net, trainable parameter coordinates.
struct Layout {
  std::size_t n_gamma = 0, n_beta = 0;
  std::vector<std::size_t> params;  // indices into ParamSet

  std::size_t size() const { return n_gamma + n_beta + params.size(); }
};

struct State {
  ParamVector gamma;
  std::optional<ParamVector> beta;
  ParamSet<double> dim;  // dimensionless material parameters
};

std::vector<double> pack(const State& s, const Layout& L) {
  std::vector<double> x;
  x.reserve(L.size());
  x.insert(x.end(), s.gamma.theta.begin(), s.gamma.theta.end());
  if (s.beta) x.insert(x.end(), s.beta->theta.begin(), s.beta->theta.end());
  for (std::size_t i : L.params) {
    const double v = s.dim.values[i];
    x.push_back(linear_coordinate(param_at(i)) ? v : std::log(v));
  }
  return x;
}

void unpack(const std::vector<double>& x, const Layout& L, State& s) {
  std::copy(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(L.n_gamma), s.gamma.theta.begin());
  if (s.beta) {
    std::copy(x.begin() + static_cast<std::ptrdiff_t>(L.n_gamma),
              x.begin() + static_cast<std::ptrdiff_t>(L.n_gamma + L.n_beta), s.beta->theta.begin());
  }
  for (std::size_t k = 0; k < L.params.size(); ++k) {
    const std::size_t i = L.params[k];
    const double z = x[L.n_gamma + L.n_beta + k];
    s.dim.values[i] = linear_coordinate(param_at(i)) ? z : std::exp(z);
  }
}

struct Evaluation {
  double total = 0.0;
  std::vector<std::pair<std::string, double>> terms;
};

class Trainer {
 public:
  Trainer(const Dataset& data, ModelKind kind, const TrainConfig& cfg)
      : data_(data), kind_(kind), cfg_(cfg), kinematic_(flags_of(kind).kinematic_on) {}

  // Loss value; with `grad` the gradient with respect to the flat vector, or
  // to the plain parameter values when log_coords is off.
  Evaluation evaluate(const State& s, const Layout& L, std::vector<double>* grad, bool log_coords = true) {
    gamma_net_.forward(s.gamma, data_.t);
    if (kinematic_) beta_net_.forward(*s.beta, data_.t);
    const std::size_t n = data_.size();
    NetworkValues nv;
    nv.gamma.resize(n);
    nv.gamma_dot.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      nv.gamma[j] = gamma_net_.y()(0, j);
      nv.gamma_dot[j] = gamma_net_.dy()(0, j);
    }
    if (kinematic_) {
      nv.beta.resize(n);
      nv.beta_dot.resize(n);
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < 6; ++k) {
          nv.beta[j][k] = beta_net_.y()(static_cast<Eigen::Index>(k), j);
          nv.beta_dot[j][k] = beta_net_.dy()(static_cast<Eigen::Index>(k), j);
        }
      }
    }
    tape_.clear();
    const ResidualContext ctx = bind_context(tape_, data_, kind_, s.dim, nv);
    const auto terms = assemble_losses(ctx, cfg_.loss);
    const ad::Expr total = composite_loss(terms);
    Evaluation ev;
    ev.total = total.value();
    for (const auto& t : terms) ev.terms.emplace_back(t.name, t.value.value());
    if (grad == nullptr) return ev;

    tape_.backward_all(total, adj_);
    grad->assign(L.size(), 0.0);
    BatchMLP::Matrix gy(1, static_cast<Eigen::Index>(n)), gdy(1, static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) {
      gy(0, j) = adj_[ctx.gamma[j].index()];
      gdy(0, j) = adj_[ctx.gamma_dot[j].index()];
    }
    gamma_net_.backward(gy, gdy, std::span<double>(grad->data(), L.n_gamma));
    if (kinematic_) {
      BatchMLP::Matrix by(6, static_cast<Eigen::Index>(n)), bdy(6, static_cast<Eigen::Index>(n));
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < 6; ++k) {
          by(static_cast<Eigen::Index>(k), j) = adj_[ctx.beta[j][k].index()];
          bdy(static_cast<Eigen::Index>(k), j) = adj_[ctx.beta_dot[j][k].index()];
        }
      }
      beta_net_.backward(by, bdy, std::span<double>(grad->data() + L.n_gamma, L.n_beta));
    }
    for (std::size_t k = 0; k < L.params.size(); ++k) {
      const std::size_t i = L.params[k];
      const double g = adj_[ctx.params.values[i].index()];
      (*grad)[L.n_gamma + L.n_beta + k] = linear_coordinate(param_at(i)) || !log_coords ? g : g * s.dim.values[i];
    }
    return ev;
  }

 private:
  const Dataset& data_;
  ModelKind kind_;
  const TrainConfig& cfg_;
  bool kinematic_;
  ad::Tape tape_;
  std::vector<double> adj_;
  BatchMLP gamma_net_, beta_net_;
};

void require_trainable_data(const Dataset& d) {
  if (!d.scaled) throw IncompleteContext("training needs a nondimensionalized dataset");
  if (!d.has_rates()) throw IncompleteContext("training needs strain and stress rates");
  if (d.size() < 3) throw TooFewPoints("training needs at least 3 samples");
}

std::string diagnose(const Evaluation& ev) {
  std::string s;
  for (const auto& [name, v] : ev.terms) s += fmt::format(" {}={:.6g}", name, v);
  return s;
}

void scale_output_layer(ParamVector& p, double factor) {
  const auto layers = layer_layout(p.spec);
  const auto& L = layers.back();
  for (std::size_t k = 0; k < L.in * L.out; ++k) p.theta[L.w_offset + k] *= factor;
  for (std::size_t k = 0; k < L.out; ++k) p.theta[L.b_offset + k] *= factor;
}

}  // namespace

std::string_view to_string(TrainMode m) {
  switch (m) {
    case TrainMode::Scratch:
      return "scratch";
    case TrainMode::Transfer:
      return "transfer";
    case TrainMode::Discovery:
      return "discovery";
  }
  return "?";
}

TrainMode train_mode_from_string(std::string_view s) {
  for (auto m : {TrainMode::Scratch, TrainMode::Transfer, TrainMode::Discovery}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError(fmt::format("unknown training mode '{}'", s));
}

void TrainConfig::validate() const {
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (!(lr_final > 0.0) || !(lr_initial >= lr_final)) {
    throw ConfigError(fmt::format("need lr_initial >= lr_final > 0, got {} and {}", lr_initial, lr_final));
  }
  if (!(param_lr_scale > 0.0)) throw ConfigError("param_lr_scale must be positive");
  if (!(scratch_init > 0.0)) throw ConfigError("scratch_init must be positive");
  if (log_every < 1) throw ConfigError("log_every must be at least 1");
  if (early_stop_min_delta < 0.0) throw ConfigError("early_stop_min_delta must be >= 0");
  loss.gate.validate();
  gamma_spec.validate();
  beta_spec.validate();
  if (gamma_spec.output_dim != 1) throw ConfigError("the gamma network has one output");
  if (beta_spec.output_dim != 6) throw ConfigError("the beta network has six outputs");
}

TrainConfig default_train_config(TrainMode mode, ModelKind kind) {
  TrainConfig c;
  c.mode = mode;
  if (mode == TrainMode::Transfer) c.max_epochs = 1000;
  if (mode == TrainMode::Discovery) c.max_epochs = 5000;
  if (mode == TrainMode::Scratch && kind == ModelKind::VMKH) {
    c.max_epochs = 100000;
    c.lr_initial = 5e-4;
  }
  return c;
}

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  if (epoch >= cfg.max_epochs) return cfg.lr_final;
  const double frac = static_cast<double>(epoch) / static_cast<double>(cfg.max_epochs);
  return cfg.lr_initial * std::pow(cfg.lr_final / cfg.lr_initial, frac);
}

void adam_step(std::vector<double>& x, const std::vector<double>& grad, AdamState& st,
               const std::vector<double>& lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  if (grad.size() != x.size() || lr.size() != x.size()) {
    throw LengthMismatch(fmt::format("adam: {} coordinates, {} gradients, {} rates", x.size(),
                                     grad.size(), lr.size()));
  }
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NonFiniteGradient(fmt::format("gradient coordinate {} is {}", i, grad[i]));
    }
  }
  if (st.m.size() != x.size()) {
    st.m.assign(x.size(), 0.0);
    st.v.assign(x.size(), 0.0);
    st.t = 0;
  }
  ++st.t;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < x.size(); ++i) {
    st.m[i] = b1 * st.m[i] + (1.0 - b1) * grad[i];
    st.v[i] = b2 * st.v[i] + (1.0 - b2) * grad[i] * grad[i];
    const double mh = st.m[i] / c1;
    const double vh = st.v[i] / c2;
    x[i] -= lr[i] * mh / (std::sqrt(vh) + eps);
  }
}

FitResult fit(const Dataset& data, ModelKind kind, const TrainConfig& cfg,
              const MaterialParams& fixed, const std::optional<Checkpoint>& init) {
  cfg.validate();
  require_trainable_data(data);
  const auto started = std::chrono::steady_clock::now();
  const bool kinematic = flags_of(kind).kinematic_on;
  const auto trainable = cfg.trainable.value_or(default_trainable(kind));

  State s;
  if (init) {
    require_spec(*init, cfg.gamma_spec, kinematic ? std::optional<MLPSpec>(cfg.beta_spec) : std::nullopt);
    s.gamma = init->gamma;
    if (kinematic) s.beta = init->beta;
  } else {
    s.gamma = init_mlp(cfg.gamma_spec, cfg.seed);
    if (kinematic) s.beta = init_mlp(cfg.beta_spec, cfg.seed ^ kBetaSeedSalt);
  }
  s.dim = to_dimensionless(fixed.values, data.scaling);
  const ParamSet<double> init_dim =
      init ? to_dimensionless(init->params.values, data.scaling) : ParamSet<double>{};
  const bool unlock_from_zero = cfg.mode == TrainMode::Discovery || kind == ModelKind::DISCOVERY_GENERAL;
  Layout L;
  L.n_gamma = s.gamma.size();
  L.n_beta = s.beta ? s.beta->size() : 0;
  for (std::size_t i = 0; i < kNumParams; ++i) {
    if (!trainable[i]) continue;
    const Param p = param_at(i);
    L.params.push_back(i);
    double v;
    if (init && (init->params.is_trainable(p) || init_dim.values[i] != 0.0)) {
      v = init_dim.values[i];
    } else if (linear_coordinate(p)) {
      v = unlock_from_zero ? 0.0 : cfg.scratch_init;
    } else {
      v = cfg.scratch_init;
    }
    if (!linear_coordinate(p) && !(v > 0.0)) v = cfg.scratch_init;
    s.dim.values[i] = v;
  }

  Trainer trainer(data, kind, cfg);
  std::vector<double> x = pack(s, L), grad, lr(L.size());
  AdamState adam;

  std::ofstream log;
  if (cfg.log_path) {
    log.open(*cfg.log_path);
    if (!log) throw ConfigError(fmt::format("cannot write training log {}", cfg.log_path->string()));
  }

  TrainReport rep;
  rep.kind = kind;
  rep.mode = cfg.mode;
  rep.trainable = trainable;
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::size_t epoch = 0;
  rep.stop_reason = "max_epochs";

  auto record = [&](std::size_t e, const Evaluation& ev, double rate) {
    TrajectoryPoint tp;
    tp.epoch = e;
    tp.loss = ev.total;
    tp.lr = rate;
    tp.params = to_physical(s.dim, data.scaling);
    rep.trajectory.push_back(tp);
    if (!log) return;
    if (rep.trajectory.size() == 1) {
      log << "epoch,total";
      for (const auto& [name, v] : ev.terms) log << ',' << name;
      log << ",lr";
      for (std::size_t i : L.params) log << ',' << kParamNames[i];
      log << '\n';
    }
    log << e << ',' << fmt::format("{:.17g}", ev.total);
    for (const auto& [name, v] : ev.terms) log << ',' << fmt::format("{:.17g}", v);
    log << ',' << fmt::format("{:.17g}", rate);
    for (std::size_t i : L.params) log << ',' << fmt::format("{:.17g}", tp.params.values[i]);
    log << '\n';
  };

  for (epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const Evaluation ev = trainer.evaluate(s, L, &grad);
    if (epoch == 0) rep.initial_total = ev.total;
    if (!std::isfinite(ev.total)) {
      throw NonFiniteGradient(fmt::format("epoch {}: loss is {};{}", epoch, ev.total, diagnose(ev)));
    }
    if (ev.total > 1e6 * rep.initial_total && rep.initial_total > 0.0) {
      throw Diverged(fmt::format("epoch {}: loss {} exceeds 1e6 x initial {}", epoch, ev.total,
                                 rep.initial_total));
    }
    for (double g : grad) {
      if (!std::isfinite(g)) {
        throw NonFiniteGradient(fmt::format("epoch {}: non-finite gradient;{}", epoch, diagnose(ev)));
      }
    }
    const double rate = lr_at(epoch, cfg);
    if (epoch % cfg.log_every == 0) record(epoch, ev, rate);

    if (ev.total < best - cfg.early_stop_min_delta) {
      best = ev.total;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      rep.stop_reason = "early_stop";
      break;
    }

    std::fill(lr.begin(), lr.begin() + static_cast<std::ptrdiff_t>(L.n_gamma + L.n_beta), rate);
    std::fill(lr.begin() + static_cast<std::ptrdiff_t>(L.n_gamma + L.n_beta), lr.end(),
              rate * cfg.param_lr_scale);
    adam_step(x, grad, adam, lr);
    unpack(x, L, s);
    if (trainable[static_cast<std::size_t>(Param::m)] && s.dim[Param::m] < 0.0) {
      s.dim[Param::m] = 0.0;
      x = pack(s, L);
    }
  }
  rep.epochs_run = epoch;

  const Evaluation final_ev = trainer.evaluate(s, L, nullptr);
  rep.final_total = final_ev.total;
  for (const auto& [name, v] : final_ev.terms) rep.final_losses[name] = v;
  if (rep.trajectory.empty() || rep.trajectory.back().epoch != epoch) {
    record(epoch, final_ev, lr_at(epoch, cfg));
  }

  rep.recovered = fixed;
  rep.recovered.values = to_physical(s.dim, data.scaling);
  rep.recovered.trainable = trainable;
  if (data.meta.truth) rep.relative_errors = relative_errors(rep.recovered, *data.meta.truth);
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  FitResult out;
  out.checkpoint.kind = kind;
  out.checkpoint.gamma = s.gamma;
  out.checkpoint.beta = s.beta;
  out.checkpoint.params = rep.recovered;
  out.checkpoint.scaling = data.scaling;
  out.report = std::move(rep);
  return out;
}

FitResult transfer_calibrate(const Checkpoint& basis, const Dataset& data, const TrainConfig& cfg) {
  require_trainable_data(data);
  const bool discovery = cfg.mode == TrainMode::Discovery;
  const ModelKind kind = discovery ? ModelKind::DISCOVERY_GENERAL : basis.kind;
  if (flags_of(kind).kinematic_on != basis.beta.has_value()) {
    throw SpecMismatch("checkpoint networks do not match the model kind");
  }
  require_spec(basis, cfg.gamma_spec,
               basis.beta ? std::optional<MLPSpec>(cfg.beta_spec) : std::nullopt);

  // Keep the networks' physical outputs when the new data scales differently.
  Checkpoint start = basis;
  scale_output_layer(start.gamma, basis.scaling.eps_star / data.scaling.eps_star);
  if (start.beta) scale_output_layer(*start.beta, basis.scaling.sigma_star / data.scaling.sigma_star);

  TrainConfig c = cfg;
  if (!c.trainable) {
    auto t = default_trainable(basis.kind);
    if (discovery) {
      t[static_cast<std::size_t>(Param::m)] = true;
      t[static_cast<std::size_t>(Param::kbar2)] = true;
    }
    c.trainable = t;
  }
  if (discovery) {
    start.params[Param::m] = 0.0;
    start.params[Param::kbar2] = 0.0;
    start.params.set_trainable(Param::m, false);
    start.params.set_trainable(Param::kbar2, false);
  }
  return fit(data, kind, c, start.params, start);
}

std::map<std::string, double> relative_errors(const MaterialParams& estimated,
                                              const MaterialParams& truth,
                                              const std::map<std::string, double>& null_scales) {
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < kNumParams; ++i) {
    if (!estimated.trainable[i]) continue;
    const std::string name(kParamNames[i]);
    const double est = estimated.values.values[i];
    const double tru = truth.values.values[i];
    if (tru != 0.0) {
      out[name] = std::abs(est - tru) / std::abs(tru);
    } else {
      const auto it = null_scales.find(name);
      out[name] = std::abs(est) / (it == null_scales.end() ? 1.0 : it->second);
    }
  }
  return out;
}

NetworkValues evaluate_networks(const Checkpoint& c, const Dataset& data) {
  BatchMLP g;
  g.forward(c.gamma, data.t);
  NetworkValues nv;
  for (std::size_t j = 0; j < data.size(); ++j) {
    nv.gamma.push_back(g.y()(0, j));
    nv.gamma_dot.push_back(g.dy()(0, j));
  }
  if (c.beta) {
    BatchMLP b;
    b.forward(*c.beta, data.t);
    for (std::size_t j = 0; j < data.size(); ++j) {
      Sym v, dv;
      for (std::size_t k = 0; k < 6; ++k) {
        v[k] = b.y()(static_cast<Eigen::Index>(k), j);
        dv[k] = b.dy()(static_cast<Eigen::Index>(k), j);
      }
      nv.beta.push_back(v);
      nv.beta_dot.push_back(dv);
    }
  }
  return nv;
}

LossGradient composite_gradient(const Checkpoint& c, const Dataset& data, const TrainConfig& cfg,
                                std::vector<Param> params) {
  require_trainable_data(data);
  if (params.empty()) {
    for (std::size_t i = 0; i < kNumParams; ++i) params.push_back(param_at(i));
  }
  State s;
  s.gamma = c.gamma;
  s.beta = c.beta;
  s.dim = to_dimensionless(c.params.values, data.scaling);
  Layout L;
  L.n_gamma = s.gamma.size();
  L.n_beta = s.beta ? s.beta->size() : 0;
  for (Param p : params) L.params.push_back(static_cast<std::size_t>(p));
  Trainer trainer(data, c.kind, cfg);
  LossGradient out;
  out.total = trainer.evaluate(s, L, &out.grad, false).total;
  out.n_gamma = L.n_gamma;
  out.n_beta = L.n_beta;
  out.params = std::move(params);
  return out;
}

KktHealth kkt_health(const Checkpoint& c, const Dataset& data, const TrainConfig& cfg) {
  require_trainable_data(data);
  const NetworkValues nv = evaluate_networks(c, data);
  const auto p = to_dimensionless(c.params.values, data.scaling);
  const ModelFlags f = flags_of(c.kind);
  ModelFlags fy = f;
  fy.damage_on = false;
  KktHealth h;
  const double n = static_cast<double>(data.size());
  double running_max = -std::numeric_limits<double>::infinity();
  double worst_drop = 0.0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    Sym sig = data.sig[j];
    if (f.damage_on) {
      const double omega = damage_omega(nv.gamma[j] * data.scaling.eps_star, p, DamageClamp::UpperOnly).omega;
      sig = sig / (1.0 - omega);
    }
    HardeningState<double> st{nv.gamma[j], {}};
    if (f.kinematic_on) st.beta = dev(nv.beta[j]);
    const double F = yield_F_with_omega(sig, st, p, fy, 0.0, cfg.loss.tol_eta);
    const double gd = nv.gamma_dot[j];
    h.mean_abs_F_gdot += std::abs(F * gd) / n;
    h.F_violation += std::pow(sigmoid_gate(F, cfg.loss.gate) * F, 2) / n;
    h.gdot_violation += std::pow(sigmoid_gate(-gd, cfg.loss.gate) * gd, 2) / n;
    running_max = std::max(running_max, nv.gamma[j]);
    worst_drop = std::max(worst_drop, running_max - nv.gamma[j]);
  }
  const double final_gamma = std::abs(nv.gamma.back());
  h.max_gamma_drop = final_gamma > 0.0 ? worst_drop / final_gamma : worst_drop;
  return h;
}

void to_json(nlohmann::json& j, const TrainReport& r) {
  j = nlohmann::json::object();
  j["schema"] = "rep-v1";
  j["kind"] = std::string(to_string(r.kind));
  j["mode"] = std::string(to_string(r.mode));
  j["final_losses"] = r.final_losses;
  j["final_total"] = r.final_total;
  j["initial_total"] = r.initial_total;
  j["recovered"] = r.recovered;
  if (r.relative_errors) j["relative_errors"] = *r.relative_errors;
  j["wall_seconds"] = r.wall_seconds;
  j["epochs_run"] = r.epochs_run;
  j["stop_reason"] = r.stop_reason;
  nlohmann::json traj = nlohmann::json::array();
  for (const auto& tp : r.trajectory) {
    nlohmann::json e{{"epoch", tp.epoch}, {"loss", tp.loss}, {"lr", tp.lr}};
    for (std::size_t i = 0; i < kNumParams; ++i) {
      if (r.trainable[i]) e[std::string(kParamNames[i])] = tp.params.values[i];
    }
    traj.push_back(std::move(e));
  }
  j["trajectory"] = std::move(traj);
}

}  // namespace pinnplast
