#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include <fmt/format.h>
#include <unistd.h>

#include "pinnplast/errors.hpp"
#include "pinnplast/network.hpp"

using namespace pinnplast;

namespace {

std::filesystem::path tmp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / fmt::format("pinnplast_net_{}", ::getpid());
  std::filesystem::create_directories(dir);
  return dir / name;
}

MLPSpec small_spec(std::size_t out = 1) {
  MLPSpec s;
  s.hidden_layers = 3;
  s.width = 7;
  s.output_dim = out;
  return s;
}

}  // namespace

TEST(Network, ParamCountOfDefaultArchitecture) {
  MLPSpec s;
  // 1->20, 7 x (20->20), 20->1
  EXPECT_EQ(s.param_count(), 40u + 7u * 420u + 21u);
  EXPECT_EQ(init_mlp(s, 1).size(), s.param_count());
}

TEST(Network, GlorotBoundAndZeroBiases) {
  const MLPSpec s;
  const auto p = init_mlp(s, 42);
  for (const auto& L : layer_layout(s)) {
    const double bound = std::sqrt(6.0 / static_cast<double>(L.in + L.out));
    double wmax = 0.0;
    for (std::size_t k = 0; k < L.in * L.out; ++k) wmax = std::max(wmax, std::abs(p.theta[L.w_offset + k]));
    EXPECT_LE(wmax, bound);
    EXPECT_GT(wmax, 0.5 * bound);
    for (std::size_t k = 0; k < L.out; ++k) EXPECT_EQ(p.theta[L.b_offset + k], 0.0);
  }
}

TEST(Network, InitDeterministicPerSeed) {
  const MLPSpec s;
  EXPECT_EQ(init_mlp(s, 7).theta, init_mlp(s, 7).theta);
  EXPECT_NE(init_mlp(s, 7).theta, init_mlp(s, 8).theta);
}

TEST(Network, SingleLinearLayer) {
  MLPSpec s;
  s.hidden_layers = 0;
  ParamVector p{s, {2.5, -0.75}};  // w, b
  const auto out = forward_with_tderiv<double>(0.4, p.theta, s);
  EXPECT_DOUBLE_EQ(out.y[0], 2.5 * 0.4 - 0.75);
  EXPECT_DOUBLE_EQ(out.dy_dt[0], 2.5);
}

TEST(Network, TimeDerivativeMatchesFiniteDifference) {
  const MLPSpec s;
  const auto p = init_mlp(s, 3);
  for (double t : {0.0, 0.1, 0.5, 0.93, 1.0}) {
    const double h = 1e-6;
    const double yp = forward_with_tderiv<double>(t + h, p.theta, s).y[0];
    const double ym = forward_with_tderiv<double>(t - h, p.theta, s).y[0];
    const double fd = (yp - ym) / (2 * h);
    const double d = forward_with_tderiv<double>(t, p.theta, s).dy_dt[0];
    EXPECT_NEAR(d, fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Network, BatchAgreesWithScalar) {
  const auto s = small_spec(3);
  const auto p = init_mlp(s, 11);
  std::vector<double> ts{0.0, 0.2, 0.45, 0.8, 1.0};
  BatchMLP net;
  net.forward(p, ts);
  for (std::size_t j = 0; j < ts.size(); ++j) {
    const auto o = forward_with_tderiv<double>(ts[j], p.theta, s);
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_NEAR(net.y()(k, j), o.y[k], 1e-14);
      EXPECT_NEAR(net.dy()(k, j), o.dy_dt[k], 1e-14);
    }
  }
}

TEST(Network, BatchBackwardMatchesTape) {
  const auto s = small_spec(2);
  auto p = init_mlp(s, 5);
  // Non-zero biases exercise every path of the reverse pass.
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (const auto& L : layer_layout(s))
    for (std::size_t k = 0; k < L.out; ++k) p.theta[L.b_offset + k] = u(rng);

  std::vector<double> ts{0.05, 0.3, 0.7, 0.95};
  // Loss = sum_j sum_k (c1_k y_kj^2 + c2_k y_kj * dy_kj)
  const double c1[2] = {0.7, -1.3};
  const double c2[2] = {0.4, 2.1};

  ad::Tape tape;
  std::vector<ad::Expr> theta;
  for (double v : p.theta) theta.push_back(tape.variable(v));
  ad::Expr loss = tape.variable(0.0);
  for (double t : ts) {
    const auto o = forward_with_tderiv<ad::Expr>(tape.variable(t), theta, s);
    for (std::size_t k = 0; k < 2; ++k) loss = loss + c1[k] * o.y[k] * o.y[k] + c2[k] * o.y[k] * o.dy_dt[k];
  }
  const auto g_tape = tape.backward(loss, theta);

  BatchMLP net;
  net.forward(p, ts);
  BatchMLP::Matrix gy(2, ts.size()), gdy(2, ts.size());
  for (std::size_t j = 0; j < ts.size(); ++j) {
    for (std::size_t k = 0; k < 2; ++k) {
      gy(k, j) = 2 * c1[k] * net.y()(k, j) + c2[k] * net.dy()(k, j);
      gdy(k, j) = c2[k] * net.y()(k, j);
    }
  }
  std::vector<double> g_batch(p.size(), 0.0);
  net.backward(gy, gdy, g_batch);
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_NEAR(g_batch[i], g_tape[i], 1e-12 * std::max(1.0, std::abs(g_tape[i]))) << "param " << i;
  }
}

TEST(Network, LipschitzBoundHolds) {
  const MLPSpec s;
  const auto p = init_mlp(s, 21);
  const double L = lipschitz_bound(p);
  double worst = 0.0;
  for (int i = 0; i <= 200; ++i) {
    const double t = i / 200.0;
    worst = std::max(worst, std::abs(forward_with_tderiv<double>(t, p.theta, s).dy_dt[0]));
  }
  EXPECT_LE(worst, L);
}

TEST(Network, SpecJsonRejectsUnknownKeys) {
  nlohmann::json j = MLPSpec{};
  EXPECT_EQ(j.get<MLPSpec>(), MLPSpec{});
  j["dropout"] = 0.1;
  EXPECT_THROW(j.get<MLPSpec>(), ConfigError);
  nlohmann::json bad = MLPSpec{};
  bad["hidden_activation"] = "relu";
  EXPECT_THROW(bad.get<MLPSpec>(), ConfigError);
}

TEST(Network, CheckpointRoundTripIsBitExact) {
  Checkpoint c;
  c.kind = ModelKind::VMKH;
  c.gamma = init_mlp(MLPSpec{}, 1);
  c.beta = init_mlp(small_spec(6), 2);
  c.params = vmkh_reference();
  c.scaling = ScalingFactors{3.2e8, 0.03, 4.0, 0.0};
  c.config_digest = "abc123";
  const auto path = tmp_file("ck.json");
  save_checkpoint(c, path);
  const auto r = load_checkpoint(path);
  EXPECT_EQ(r.kind, c.kind);
  EXPECT_EQ(r.gamma.theta, c.gamma.theta);
  EXPECT_EQ(r.gamma.spec, c.gamma.spec);
  ASSERT_TRUE(r.beta.has_value());
  EXPECT_EQ(r.beta->theta, c.beta->theta);
  EXPECT_EQ(r.beta->spec, c.beta->spec);
  for (std::size_t i = 0; i < kNumParams; ++i) EXPECT_EQ(r.params.values.values[i], c.params.values.values[i]);
  EXPECT_EQ(r.scaling.sigma_star, c.scaling.sigma_star);
  EXPECT_EQ(r.config_digest, "abc123");
  EXPECT_NO_THROW(require_spec(r, MLPSpec{}, small_spec(6)));
  EXPECT_THROW(require_spec(r, small_spec(), small_spec(6)), SpecMismatch);
  EXPECT_THROW(require_spec(r, MLPSpec{}, std::nullopt), SpecMismatch);
}

TEST(Network, CorruptAndForeignCheckpoints) {
  Checkpoint c;
  c.gamma = init_mlp(small_spec(), 1);
  c.params = vmih_reference();
  const auto path = tmp_file("ck2.json");
  save_checkpoint(c, path);
  auto j = nlohmann::json::parse(std::ifstream(path));

  auto write = [&](const nlohmann::json& x) { std::ofstream(path) << x.dump(); };
  auto flipped = j;
  std::string payload = flipped["payload"];
  payload[10] = payload[10] == 'A' ? 'B' : 'A';
  flipped["payload"] = payload;
  write(flipped);
  EXPECT_THROW(load_checkpoint(path), CorruptCheckpoint);

  auto foreign = j;
  foreign["schema"] = "ckpt-v0";
  write(foreign);
  EXPECT_THROW(load_checkpoint(path), SchemaVersionMismatch);

  std::ofstream(path) << "{ not json";
  EXPECT_THROW(load_checkpoint(path), CorruptCheckpoint);
}

TEST(Network, Base64RoundTrip) {
  for (std::size_t n : {0u, 1u, 2u, 3u, 4u, 17u}) {
    std::vector<std::uint8_t> b(n);
    for (std::size_t i = 0; i < n; ++i) b[i] = static_cast<std::uint8_t>(i * 37 + 5);
    EXPECT_EQ(base64_decode(base64_encode(b)), b);
  }
  const std::string s = "Man";
  EXPECT_EQ(base64_encode(std::vector<std::uint8_t>(s.begin(), s.end())), "TWFu");
}
