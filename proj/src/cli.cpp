#include "pinnplast/cli.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "pinnplast/errors.hpp"
#include "pinnplast/network.hpp"

namespace pinnplast {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw ConfigError(fmt::format("cannot write {}", path.string()));
  os << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingRun(fmt::format("cannot read {}", path.string()));
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

fs::path member_dir(const fs::path& root, std::size_t i) {
  return root / fmt::format("member_{:03d}", i);
}

// Values of parameters that are not trained: the configured set when one is
// given explicitly, zero otherwise.
MaterialParams fixed_params(const RunConfig& rc, ModelKind kind) {
  MaterialParams p = rc.dataset.params ? *rc.dataset.params : MaterialParams{};
  p.trainable = default_trainable(kind);
  return p;
}

// Scaled dataset with rates, whatever form the file holds.
Dataset prepare(Dataset d) {
  if (!d.scaled) d = nondimensionalize(d);
  if (!d.has_rates()) d = finite_diff_rates(d);
  return d;
}

struct Options {
  std::string config, out, data, basis;
  std::optional<std::string> model;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, sweep, ppc;
  std::optional<double> delta, noise;
  std::size_t jobs = 1;
};

// Loads the configuration and applies command-line overrides to it.
RunConfig resolve(const Options& o, TrainMode mode) {
  json j = json::object();
  if (!o.config.empty()) {
    std::ifstream is(o.config);
    if (!is) throw ConfigError(fmt::format("cannot read config {}", o.config));
    try {
      j = json::parse(is);
    } catch (const json::exception& e) {
      throw ConfigError(fmt::format("{}: {}", o.config, e.what()));
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
  }
  auto section = [&](const char* name) -> json& {
    if (!j.contains(name)) j[name] = json::object();
    return j[name];
  };
  if (o.model) section("dataset")["model"] = *o.model;
  if (o.noise) section("dataset")["noise"] = *o.noise;
  if (o.sweep) section("dataset")["sweep"] = *o.sweep;
  if (o.ppc) section("dataset")["points_per_cycle"] = *o.ppc;
  if (o.epochs) section("train")["max_epochs"] = *o.epochs;
  if (o.delta) section("train")["delta"] = *o.delta;
  if (o.seed) j["seed"] = *o.seed;
  if (!o.out.empty()) j["output"] = o.out;
  if (!o.basis.empty()) j["basis"] = o.basis;
  return parse_run_config(j, mode);
}

bool model_given(const Options& o) {
  if (o.model) return true;
  if (o.config.empty()) return false;
  std::ifstream is(o.config);
  const json j = json::parse(is, nullptr, false);
  return j.is_object() && j.contains("dataset") && j["dataset"].contains("model");
}

int fit_command(const Options& o, TrainMode mode) {
  RunConfig rc = resolve(o, mode);
  std::optional<Checkpoint> basis;
  if (mode != TrainMode::Scratch) {
    if (!rc.basis) throw ConfigError(fmt::format("{} needs a basis checkpoint (--basis)", to_string(mode)));
    basis = load_checkpoint(*rc.basis);
  }
  Dataset data;
  if (!o.data.empty()) {
    data = prepare(import_dataset(o.data));
    if (!model_given(o)) {
      // Model and training defaults follow the dataset unless configured.
      Options with_kind = o;
      with_kind.model = std::string(to_string(data.meta.kind));
      rc = resolve(with_kind, mode);
    }
  } else {
    if (rc.dataset.sweep > 0) throw ConfigError("use the sweep command for a configured sweep");
    data = generate_dataset(rc.dataset, rc.dataset.resolved_params(),
                            derive_seed(rc.seed, SeedPurpose::Noise));
  }
  const TrainReport rep = cmd_fit(rc, data, rc.output_dir(), basis);
  fmt::print("{} {}: loss {:.6g} after {} epochs ({}), {:.1f} s\n", to_string(rep.mode),
             to_string(rep.kind), rep.final_total, rep.epochs_run, rep.stop_reason, rep.wall_seconds);
  for (std::size_t i = 0; i < kNumParams; ++i) {
    if (!rep.trainable[i]) continue;
    fmt::print("  {:<9} {:.6g}", kParamNames[i], rep.recovered.values.values[i]);
    if (rep.relative_errors) {
      const auto it = rep.relative_errors->find(std::string(kParamNames[i]));
      if (it != rep.relative_errors->end()) fmt::print("  (rel. error {:.3g})", it->second);
    }
    fmt::print("\n");
  }
  return 0;
}

void print_summary(const std::map<std::string, ErrorSummary>& s) {
  fmt::print("{:<10} {:>4} {:>10} {:>10} {:>10} {:>10} {:>10}\n", "parameter", "n", "min", "q1",
             "median", "q3", "max");
  for (const auto& [name, e] : s) {
    fmt::print("{:<10} {:>4} {:>10.4g} {:>10.4g} {:>10.4g} {:>10.4g} {:>10.4g}\n", name, e.n, e.min,
               e.q1, e.median, e.q3, e.max);
  }
}

}  // namespace

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw ConfigError("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::vector<fs::path> cmd_generate(const RunConfig& rc, const fs::path& dir) {
  const auto members = dataset_members(rc);
  std::vector<fs::path> out;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const fs::path csv =
        (rc.dataset.sweep > 0 ? member_dir(dir, i) : dir) / "dataset.csv";
    const Dataset d =
        generate_dataset(rc.dataset, members[i], derive_seed(rc.seed, SeedPurpose::Noise, i));
    export_dataset(d, csv);
    out.push_back(csv);
  }
  return out;
}

TrainReport cmd_fit(const RunConfig& rc, const Dataset& data, const fs::path& dir,
                    const std::optional<Checkpoint>& basis) {
  fs::create_directories(dir);
  TrainConfig cfg = rc.train;
  cfg.log_path = dir / "log.csv";
  FitResult r;
  if (cfg.mode == TrainMode::Scratch) {
    r = fit(data, rc.dataset.kind, cfg, fixed_params(rc, rc.dataset.kind));
  } else {
    if (!basis) throw ConfigError("calibration needs a basis checkpoint");
    r = transfer_calibrate(*basis, data, cfg);
  }
  json cj = train_config_json(cfg);
  r.checkpoint.config_digest = json_digest(cj);
  save_checkpoint(r.checkpoint, dir / "checkpoint.json");
  json rep;
  to_json(rep, r.report);
  rep["config"] = std::move(cj);
  rep["config_digest"] = r.checkpoint.config_digest;
  if (data.meta.truth) rep["truth"] = *data.meta.truth;
  write_json(rep, dir / "report.json");
  return r.report;
}

std::vector<TrainReport> cmd_sweep(const RunConfig& rc, const fs::path& dir,
                                   const std::optional<Checkpoint>& basis, std::size_t jobs) {
  if (rc.dataset.sweep == 0) throw ConfigError("sweep needs dataset.sweep > 0 (or --sweep)");
  const auto members = dataset_members(rc);
  std::vector<TrainReport> reports(members.size());
  std::vector<std::exception_ptr> errors(members.size());
  std::atomic<std::size_t> next{0};
  std::mutex print;
  auto worker = [&] {
    for (std::size_t i = next++; i < members.size(); i = next++) {
      try {
        const fs::path md = member_dir(dir, i);
        const Dataset d = generate_dataset(rc.dataset, members[i],
                                           derive_seed(rc.seed, SeedPurpose::Noise, i));
        export_dataset(d, md / "dataset.csv");
        RunConfig mrc = rc;
        mrc.train.seed = derive_seed(rc.seed, SeedPurpose::Init, i);
        reports[i] = cmd_fit(mrc, d, md, basis);
        std::lock_guard lock(print);
        fmt::print("member {:3d}: loss {:.4g}, {} epochs, {:.1f} s\n", i, reports[i].final_total,
                   reports[i].epochs_run, reports[i].wall_seconds);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(jobs, 1, members.size());
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < n_threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return reports;
}

std::map<std::string, ErrorSummary> cmd_report(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw MissingRun(fmt::format("{} is not a directory", dir.string()));
  std::vector<fs::path> found;
  if (fs::exists(dir / "report.json")) found.push_back(dir / "report.json");
  std::vector<fs::path> subdirs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / "report.json")) subdirs.push_back(e.path());
  }
  std::sort(subdirs.begin(), subdirs.end());
  for (const auto& s : subdirs) found.push_back(s / "report.json");
  if (found.empty()) throw MissingRun(fmt::format("no report.json under {}", dir.string()));

  std::map<std::string, std::vector<double>> errs;
  std::vector<std::string> names;
  std::ofstream err_csv(dir / "errors.csv"), par_csv(dir / "parameters_vs_epoch.csv"),
      loss_csv(dir / "loss_vs_epoch.csv");
  loss_csv << "run,epoch,loss,lr\n";
  bool header = false;
  for (const auto& path : found) {
    const json rep = read_json(path);
    const std::string run =
        path.parent_path() == dir ? std::string(".") : path.parent_path().filename().string();
    std::vector<std::string> params;
    for (std::size_t i = 0; i < kNumParams; ++i) {
      const std::string n(kParamNames[i]);
      if (!rep.at("trajectory").empty() && rep["trajectory"][0].contains(n)) params.push_back(n);
    }
    if (!header) {
      names = params;
      err_csv << "run";
      par_csv << "run,epoch";
      for (const auto& n : names) {
        err_csv << ',' << n;
        par_csv << ',' << n;
      }
      err_csv << '\n';
      par_csv << '\n';
      header = true;
    }
    for (const auto& tp : rep.at("trajectory")) {
      loss_csv << run << ',' << tp.at("epoch").get<std::size_t>() << ','
               << fmt::format("{:.17g},{:.17g}", tp.at("loss").get<double>(), tp.at("lr").get<double>())
               << '\n';
      par_csv << run << ',' << tp.at("epoch").get<std::size_t>();
      for (const auto& n : names) {
        par_csv << ',' << (tp.contains(n) ? fmt::format("{:.17g}", tp[n].get<double>()) : "");
      }
      par_csv << '\n';
    }
    if (rep.contains("relative_errors")) {
      err_csv << run;
      for (const auto& n : names) {
        const auto& re = rep["relative_errors"];
        if (re.contains(n)) {
          const double v = re[n].get<double>();
          errs[n].push_back(v);
          err_csv << ',' << fmt::format("{:.17g}", v);
        } else {
          err_csv << ',';
        }
      }
      err_csv << '\n';
    }
  }

  std::map<std::string, ErrorSummary> summary;
  std::ofstream sum_csv(dir / "summary.csv");
  sum_csv << "parameter,n,min,q1,median,q3,max\n";
  for (const auto& [name, v] : errs) {
    ErrorSummary s{v.size(), quantile(v, 0.0), quantile(v, 0.25), quantile(v, 0.5),
                   quantile(v, 0.75), quantile(v, 1.0)};
    summary[name] = s;
    sum_csv << fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", name, s.n, s.min, s.q1,
                           s.median, s.q3, s.max);
  }
  return summary;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Physics-informed identification of elastoplastic material parameters"};
  app.require_subcommand(1);
  Options o;
  std::string run_dir;

  auto common = [&](CLI::App* c) {
    c->add_option("-c,--config", o.config, "JSON run configuration");
    c->add_option("-o,--out", o.out, "output directory (default $PINNPLAST_OUTPUT or ./runs)");
    c->add_option("--seed", o.seed, "run seed");
    c->add_option("--model", o.model, "model kind, e.g. VMIH");
  };
  auto dataset_flags = [&](CLI::App* c) {
    c->add_option("--noise", o.noise, "relative Gaussian noise level");
    c->add_option("--ppc", o.ppc, "samples per loading cycle");
  };
  auto train_flags = [&](CLI::App* c) {
    c->add_option("--epochs", o.epochs, "maximum epochs");
    c->add_option("--delta", o.delta, "gate sharpness");
  };

  auto* gen = app.add_subcommand("generate", "write synthetic datasets");
  common(gen);
  dataset_flags(gen);
  gen->add_option("--sweep", o.sweep, "draw this many random parameter sets");

  auto* train = app.add_subcommand("train", "calibrate from scratch");
  auto* cal = app.add_subcommand("calibrate", "recalibrate a trained checkpoint on new data");
  auto* disc = app.add_subcommand("discover", "recalibrate with pressure and quadratic terms unlocked");
  for (auto* c : {train, cal, disc}) {
    common(c);
    dataset_flags(c);
    train_flags(c);
    c->add_option("--data", o.data, "dataset CSV (default: generate from the config)");
  }
  for (auto* c : {cal, disc}) c->add_option("--basis", o.basis, "basis checkpoint");

  auto* sweep = app.add_subcommand("sweep", "generate and calibrate a random parameter sweep");
  common(sweep);
  dataset_flags(sweep);
  train_flags(sweep);
  sweep->add_option("--sweep", o.sweep, "number of members");
  sweep->add_option("--basis", o.basis, "basis checkpoint (default: train each member from scratch)");
  sweep->add_option("--jobs", o.jobs, "members run concurrently")->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "summarize finished runs");
  report->add_option("run", run_dir, "run or sweep directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      const RunConfig rc = resolve(o, TrainMode::Scratch);
      for (const auto& p : cmd_generate(rc, rc.output_dir())) fmt::print("{}\n", p.string());
    } else if (train->parsed()) {
      return fit_command(o, TrainMode::Scratch);
    } else if (cal->parsed()) {
      return fit_command(o, TrainMode::Transfer);
    } else if (disc->parsed()) {
      return fit_command(o, TrainMode::Discovery);
    } else if (sweep->parsed()) {
      RunConfig rc = resolve(o, TrainMode::Scratch);
      if (rc.basis) rc = resolve(o, TrainMode::Transfer);
      std::optional<Checkpoint> basis;
      if (rc.basis) basis = load_checkpoint(*rc.basis);
      cmd_sweep(rc, rc.output_dir(), basis, o.jobs);
      print_summary(cmd_report(rc.output_dir()));
    } else if (report->parsed()) {
      print_summary(cmd_report(run_dir));
    }
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}: {}\n", e.name(), e.what());
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    fmt::print(stderr, "error: ConfigError: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 4;
  }
  return 0;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"pinnplast"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace pinnplast
