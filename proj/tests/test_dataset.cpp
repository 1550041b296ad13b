#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <fmt/format.h>
#include <unistd.h>

#include "pinnplast/dataset.hpp"
#include "pinnplast/errors.hpp"

using namespace pinnplast;
namespace fs = std::filesystem;

namespace {

const RawPath& vmih_path() {
  static const RawPath path =
      integrate(build_uniaxial_cycles(0.01, {0.01, 0.02, 0.03}), vmih_reference(), ModelKind::VMIH);
  return path;
}

Dataset synthetic(std::size_t n, double (*f)(double)) {
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
    d.t.push_back(t);
    d.eps.push_back(diag(f(t), 0, 0));
    d.sig.push_back(diag(2.0 * f(t), 0, 0));
  }
  return d;
}

fs::path temp_dir(const char* name) {
  auto p = fs::temp_directory_path() / fmt::format("pinnplast_test_{}_{}", name, ::getpid());
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Dataset, SampleCount) {
  EXPECT_EQ(sample_dataset(vmih_path(), 100).size(), 301u);
  EXPECT_EQ(sample_dataset(vmih_path(), 20).size(), 61u);
  EXPECT_THROW(sample_dataset(vmih_path(), 1), TooFewPoints);
}

TEST(Dataset, ScalingDefinition) {
  const auto d = nondimensionalize(sample_dataset(vmih_path(), 100));
  double ms = 0.0, me = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (double v : d.sig[i].v) ms = std::max(ms, std::abs(v));
    for (double v : d.eps[i].v) me = std::max(me, std::abs(v));
  }
  EXPECT_DOUBLE_EQ(ms, 1.0);
  EXPECT_DOUBLE_EQ(me, 1.0);
  EXPECT_DOUBLE_EQ(d.t.front(), 0.0);
  EXPECT_DOUBLE_EQ(d.t.back(), 1.0);
  EXPECT_NEAR(d.scaling.eps_star, 0.03, 1e-12);
  ScalingFactors s{300e6, 0.03, 1.0};
  EXPECT_NEAR(s.E_star(), 10e9, 1e-3);
}

TEST(Dataset, ScalingRoundTrip) {
  const auto raw = finite_diff_rates(sample_dataset(vmih_path(), 50));
  const auto back = dimensionalize(nondimensionalize(raw));
  for (std::size_t i = 0; i < raw.size(); ++i) {
    EXPECT_NEAR(back.t[i], raw.t[i], 1e-12 * 12.0);
    for (std::size_t k = 0; k < 6; ++k) {
      EXPECT_NEAR(back.sig[i][k], raw.sig[i][k], 1e-12 * 300e6);
      EXPECT_NEAR(back.sig_dot[i][k], raw.sig_dot[i][k], 1e-12 * 1e9);
    }
  }
}

TEST(Dataset, DegenerateData) {
  auto d = synthetic(5, [](double) { return 0.0; });
  EXPECT_THROW(nondimensionalize(d), DegenerateData);
}

TEST(Dataset, FiniteDifferenceExactForQuadratics) {
  auto d = synthetic(7, [](double t) { return 1.0 + 3.0 * t - 0.5 * t * t; });
  // Non-uniform spacing.
  for (std::size_t i = 0; i < d.size(); ++i) {
    d.t[i] = d.t[i] * d.t[i];
    d.eps[i] = diag(1.0 + 3.0 * d.t[i] - 0.5 * d.t[i] * d.t[i], 0, 0);
  }
  const auto r = finite_diff_rates(d);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(r.eps_dot[i][0], 3.0 - d.t[i], 1e-12);
  EXPECT_THROW(finite_diff_rates(synthetic(2, [](double t) { return t; })), TooFewPoints);
}

TEST(Dataset, FiniteDifferenceSecondOrder) {
  auto err = [](std::size_t n) {
    const auto r = finite_diff_rates(synthetic(n, [](double t) { return std::sin(t); }));
    double e = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) e = std::max(e, std::abs(r.eps_dot[i][0] - std::cos(r.t[i])));
    return e;
  };
  const double slope = std::log2(err(41) / err(81));
  EXPECT_GT(slope, 1.8);
  EXPECT_LT(slope, 2.2);
}

TEST(Dataset, NoiseStatisticsAndDeterminism) {
  auto d = synthetic(1000, [](double t) { return t; });
  EXPECT_EQ(add_noise(d, 0.0, 3).eps[10][0], d.eps[10][0]);
  const auto a = add_noise(d, 0.01, 42);
  const auto b = add_noise(d, 0.01, 42);
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(a.eps[i][0], b.eps[i][0]);
    const double e = a.eps[i][0] - d.eps[i][0];
    sum += e;
    sq += e * e;
    EXPECT_EQ(a.eps[i][1], 0.0);  // all-zero channel stays clean
  }
  const double n = static_cast<double>(d.size());
  const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
  EXPECT_NEAR(sd, 0.01 * 2.0, 0.1 * 0.01 * 2.0);
  EXPECT_EQ(a.meta.noise_level, 0.01);
}

TEST(Dataset, NoisyRatesRecomputed) {
  const auto clean = make_training_dataset(vmih_path(), 100);
  const auto noisy = make_training_dataset(vmih_path(), 100, 0.01, 7);
  const auto manual = finite_diff_rates(noisy);
  for (std::size_t i = 0; i < noisy.size(); ++i) EXPECT_EQ(noisy.sig_dot[i][0], manual.sig_dot[i][0]);
  EXPECT_NE(noisy.sig_dot[5][0], clean.sig_dot[5][0]);
}

TEST(Dataset, ExportImportRoundTrip) {
  const auto dir = temp_dir("rt");
  const auto d = make_training_dataset(vmih_path(), 20, 0.001, 5);
  export_dataset(d, dir / "vmih.csv");
  const auto back = import_dataset(dir / "vmih.csv");
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(back.t[i], d.t[i]);
    for (std::size_t k = 0; k < 6; ++k) {
      EXPECT_EQ(back.eps[i][k], d.eps[i][k]);
      EXPECT_EQ(back.sig_dot[i][k], d.sig_dot[i][k]);
    }
  }
  EXPECT_EQ(back.scaling.sigma_star, d.scaling.sigma_star);
  ASSERT_TRUE(back.meta.truth.has_value());
  EXPECT_EQ((*back.meta.truth)[Param::kbar], 10e9);
  EXPECT_EQ(back.meta.noise_level, 0.001);
  EXPECT_TRUE(back.scaled);
  fs::remove_all(dir);
}

TEST(Dataset, ImportErrors) {
  const auto dir = temp_dir("err");
  const auto d = make_training_dataset(vmih_path(), 20);
  export_dataset(d, dir / "a.csv");
  {
    std::ifstream is(dir / "a.csv");
    std::string all((std::istreambuf_iterator<char>(is)), {});
    all.replace(all.find("sig_22"), 6, "sig_XX");
    std::ofstream(dir / "a.csv") << all;
  }
  try {
    import_dataset(dir / "a.csv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("sig_22"), std::string::npos);
  }
  export_dataset(d, dir / "b.csv");
  {
    std::ifstream is(dir / "b.json");
    auto j = nlohmann::json::parse(is);
    j["schema"] = "ds-v0";
    std::ofstream(dir / "b.json") << j.dump();
  }
  EXPECT_THROW(import_dataset(dir / "b.csv"), SchemaVersionMismatch);
  fs::remove_all(dir);
}
