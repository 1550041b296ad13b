#include "pinnplast/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

namespace pinnplast {

namespace {

double max_abs(const std::vector<Sym>& xs) {
  double m = 0.0;
  for (const auto& x : xs)
    for (double v : x.v) m = std::max(m, std::abs(v));
  return m;
}

std::vector<Sym> scaled(const std::vector<Sym>& xs, double f) {
  std::vector<Sym> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f * xs[i];
  return out;
}

// Three-point derivative on a non-uniform grid at node i using nodes a, b, c.
double lagrange_deriv(double x, double xa, double xb, double xc, double fa, double fb, double fc) {
  const double da = ((x - xb) + (x - xc)) / ((xa - xb) * (xa - xc));
  const double db = ((x - xa) + (x - xc)) / ((xb - xa) * (xb - xc));
  const double dc = ((x - xa) + (x - xb)) / ((xc - xa) * (xc - xb));
  return da * fa + db * fb + dc * fc;
}

std::vector<Sym> derivative(const std::vector<double>& t, const std::vector<Sym>& f) {
  const std::size_t n = t.size();
  std::vector<Sym> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = i == 0 ? 0 : (i == n - 1 ? n - 3 : i - 1);
    for (std::size_t c = 0; c < 6; ++c) {
      out[i][c] = lagrange_deriv(t[i], t[a], t[a + 1], t[a + 2], f[a][c], f[a + 1][c], f[a + 2][c]);
    }
  }
  return out;
}

void add_channel_noise(std::vector<Sym>& xs, double level, std::mt19937_64& rng) {
  for (std::size_t c = 0; c < 6; ++c) {
    double m = 0.0;
    for (const auto& x : xs) m = std::max(m, std::abs(x[c]));
    std::normal_distribution<double> dist(0.0, level * m);
    for (auto& x : xs) {
      const double e = dist(rng);
      if (m > 0.0) x[c] += e;
    }
  }
}

const std::array<std::string, 4> kGroups{"eps", "sig", "deps", "dsig"};

std::vector<std::string> csv_columns() {
  std::vector<std::string> cols{"t"};
  for (const auto& g : kGroups)
    for (const auto& n : kVoigtNames) cols.push_back(fmt::format("{}_{}", g, n));
  return cols;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    out.push_back(cell);
  }
  return out;
}

}  // namespace

void to_json(nlohmann::json& j, const ScalingFactors& s) {
  j = {{"sigma_star", s.sigma_star},
       {"eps_star", s.eps_star},
       {"E_star", s.E_star()},
       {"t_star", s.t_star},
       {"t0", s.t0}};
}

void from_json(const nlohmann::json& j, ScalingFactors& s) {
  s.sigma_star = j.at("sigma_star").get<double>();
  s.eps_star = j.at("eps_star").get<double>();
  s.t_star = j.at("t_star").get<double>();
  s.t0 = j.value("t0", 0.0);
  if (!(s.sigma_star > 0.0 && s.eps_star > 0.0 && s.t_star > 0.0)) {
    throw ConfigError("scaling factors must be positive");
  }
}

std::size_t cycles_of(const ProgramDescriptor& d) {
  if (d.kind == "uniaxial") {
    std::size_t n = 0;
    for (double a : d.amplitudes) n += a > 0.0 ? 1 : 0;
    return std::max<std::size_t>(n, 1);
  }
  return static_cast<std::size_t>(std::max(d.cycles, 1));
}

Dataset sample_dataset(const RawPath& path, std::size_t points_per_cycle) {
  if (points_per_cycle < 2) throw TooFewPoints("points_per_cycle must be at least 2");
  const std::size_t n = cycles_of(path.program.descriptor) * points_per_cycle + 1;
  Dataset d;
  d.meta.program = path.program.descriptor;
  d.meta.kind = path.kind;
  d.meta.truth = path.params;
  TruthHistory truth;
  const double t_end = path.t_end();
  for (std::size_t i = 0; i < n; ++i) {
    const double t = i + 1 == n ? t_end : t_end * static_cast<double>(i) / static_cast<double>(n - 1);
    const PathPoint pt = path.at(t);
    d.t.push_back(t);
    d.eps.push_back(pt.eps);
    d.sig.push_back(pt.sigma);
    truth.gamma.push_back(pt.gamma);
    truth.gamma_dot.push_back(pt.gamma_dot);
    truth.beta.push_back(pt.beta);
    truth.F.push_back(pt.F);
  }
  d.scaling = ScalingFactors{1.0, 1.0, t_end, 0.0};
  d.truth = std::move(truth);
  return d;
}

Dataset with_path_rates(const Dataset& d, const RawPath& path) {
  if (d.scaled) throw ConfigError("path rates attach to unscaled datasets only");
  Dataset out = d;
  out.eps_dot.resize(d.size());
  out.sig_dot.resize(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::tie(out.eps_dot[i], out.sig_dot[i]) = path.rates_at(d.t[i]);
  }
  return out;
}

Dataset nondimensionalize(const Dataset& d) {
  if (d.scaled) return d;
  if (d.size() < 2) throw TooFewPoints("dataset needs at least two points");
  const double ss = max_abs(d.sig);
  const double es = max_abs(d.eps);
  if (!(ss > 0.0)) throw DegenerateData("all-zero stress data cannot be scaled");
  if (!(es > 0.0)) throw DegenerateData("all-zero strain data cannot be scaled");
  Dataset out = d;
  out.scaling.sigma_star = ss;
  out.scaling.eps_star = es;
  out.scaling.t0 = d.t.front();
  out.scaling.t_star = d.t.back() - d.t.front();
  if (!(out.scaling.t_star > 0.0)) throw DegenerateData("dataset spans zero time");
  for (auto& t : out.t) t = (t - out.scaling.t0) / out.scaling.t_star;
  out.eps = scaled(d.eps, 1.0 / es);
  out.sig = scaled(d.sig, 1.0 / ss);
  if (d.has_rates()) {
    out.eps_dot = scaled(d.eps_dot, out.scaling.t_star / es);
    out.sig_dot = scaled(d.sig_dot, out.scaling.t_star / ss);
  }
  out.scaled = true;
  return out;
}

Dataset dimensionalize(const Dataset& d) {
  if (!d.scaled) return d;
  const auto& s = d.scaling;
  Dataset out = d;
  for (auto& t : out.t) t = s.t0 + t * s.t_star;
  out.eps = scaled(d.eps, s.eps_star);
  out.sig = scaled(d.sig, s.sigma_star);
  if (d.has_rates()) {
    out.eps_dot = scaled(d.eps_dot, s.eps_star / s.t_star);
    out.sig_dot = scaled(d.sig_dot, s.sigma_star / s.t_star);
  }
  out.scaled = false;
  return out;
}

Dataset finite_diff_rates(const Dataset& d) {
  if (d.size() < 3) throw TooFewPoints(fmt::format("finite differences need 3 points, got {}", d.size()));
  for (std::size_t i = 1; i < d.size(); ++i) {
    if (!(d.t[i] > d.t[i - 1])) throw ConfigError("dataset time must be strictly increasing");
  }
  Dataset out = d;
  out.eps_dot = derivative(d.t, d.eps);
  out.sig_dot = derivative(d.t, d.sig);
  return out;
}

Dataset add_noise(const Dataset& d, double level, std::uint64_t seed) {
  if (level < 0.0) throw ConfigError("noise level must be non-negative");
  if (level == 0.0) return d;
  Dataset out = d;
  std::mt19937_64 rng(seed);
  add_channel_noise(out.eps, level, rng);
  add_channel_noise(out.sig, level, rng);
  out.meta.noise_level = level;
  out.meta.seed = seed;
  if (d.has_rates()) out = finite_diff_rates(out);
  return out;
}

Dataset make_training_dataset(const RawPath& path, std::size_t points_per_cycle,
                              double noise_level, std::uint64_t seed) {
  Dataset d = sample_dataset(path, points_per_cycle);
  d = add_noise(d, noise_level, seed);
  d.meta.noise_level = noise_level;
  d.meta.seed = seed;
  return finite_diff_rates(nondimensionalize(d));
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".json");
  return p;
}

void export_dataset(const Dataset& d, const std::filesystem::path& csv_path) {
  if (!d.has_rates()) throw ConfigError("export needs a dataset with rates");
  if (csv_path.has_parent_path()) std::filesystem::create_directories(csv_path.parent_path());
  std::ofstream os(csv_path);
  if (!os) throw ConfigError(fmt::format("cannot write {}", csv_path.string()));
  const auto cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (std::size_t n = 0; n < d.size(); ++n) {
    os << fmt::format("{:.17g}", d.t[n]);
    for (const auto* group : {&d.eps, &d.sig, &d.eps_dot, &d.sig_dot})
      for (double v : (*group)[n].v) os << fmt::format(",{:.17g}", v);
    os << '\n';
  }

  nlohmann::json meta{{"kind", to_string(d.meta.kind)},
                      {"program", d.meta.program},
                      {"noise_level", d.meta.noise_level},
                      {"seed", d.meta.seed},
                      {"lateral", d.meta.lateral}};
  if (d.meta.truth) meta["truth"] = *d.meta.truth;
  const nlohmann::json side{{"schema", kDatasetSchema},
                            {"scaled", d.scaled},
                            {"scaling", d.scaling},
                            {"n", d.size()},
                            {"meta", meta}};
  std::ofstream js(sidecar_path(csv_path));
  js << side.dump(2) << '\n';
}

Dataset import_dataset(const std::filesystem::path& csv_path) {
  std::ifstream js(sidecar_path(csv_path));
  if (!js) throw ParseError(fmt::format("missing sidecar {}", sidecar_path(csv_path).string()));
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("sidecar JSON: {}", e.what()));
  }
  const std::string schema = side.value("schema", "");
  if (schema != kDatasetSchema) {
    throw SchemaVersionMismatch(
        fmt::format("dataset schema '{}' (expected '{}')", schema, kDatasetSchema));
  }

  Dataset d;
  try {
    d.scaled = side.at("scaled").get<bool>();
    d.scaling = side.at("scaling").get<ScalingFactors>();
    const auto& meta = side.at("meta");
    d.meta.kind = model_kind_from_string(meta.at("kind").get<std::string>());
    d.meta.program = meta.at("program").get<ProgramDescriptor>();
    d.meta.noise_level = meta.value("noise_level", 0.0);
    d.meta.seed = meta.value("seed", std::uint64_t{0});
    d.meta.lateral = meta.value("lateral", std::string("uniaxial_stress"));
    if (meta.contains("truth")) d.meta.truth = meta.at("truth").get<MaterialParams>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("sidecar JSON: {}", e.what()));
  }

  std::ifstream is(csv_path);
  if (!is) throw ParseError(fmt::format("cannot open {}", csv_path.string()));
  std::string line;
  if (!std::getline(is, line)) throw ParseError("empty dataset CSV");
  const auto header = split(line);
  const auto cols = csv_columns();
  std::vector<std::size_t> pos(cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const auto it = std::find(header.begin(), header.end(), cols[c]);
    if (it == header.end()) throw ParseError(fmt::format("missing column '{}'", cols[c]));
    pos[c] = static_cast<std::size_t>(it - header.begin());
  }
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw ParseError(fmt::format("row {} has {} cells, expected {}", row, cells.size(), header.size()));
    }
    std::vector<double> v(cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const std::string& s = cells[pos[c]];
      char* end = nullptr;
      v[c] = std::strtod(s.c_str(), &end);
      if (s.empty() || end != s.c_str() + s.size()) {
        throw ParseError(fmt::format("row {} column '{}': bad number '{}'", row, cols[c], s));
      }
    }
    d.t.push_back(v[0]);
    Sym e, s, de, ds;
    for (std::size_t k = 0; k < 6; ++k) {
      e[k] = v[1 + k];
      s[k] = v[7 + k];
      de[k] = v[13 + k];
      ds[k] = v[19 + k];
    }
    d.eps.push_back(e);
    d.sig.push_back(s);
    d.eps_dot.push_back(de);
    d.sig_dot.push_back(ds);
  }
  if (d.size() < 2) throw TooFewPoints("dataset file has fewer than two rows");
  return d;
}

}  // namespace pinnplast
