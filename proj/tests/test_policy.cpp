#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "helpers.hpp"

using namespace fockfb;
using namespace fockfb::testing;

TEST(Reward, Values) {
  EXPECT_DOUBLE_EQ(reward(1.0), 5.0);
  EXPECT_DOUBLE_EQ(reward(0.0), 0.0);
  EXPECT_NEAR(reward(0.5), 0.0625 + 4.0 * std::pow(0.5, 25), 1e-17);
  EXPECT_NEAR(reward(0.9), std::pow(0.9, 4) + 4.0 * std::pow(0.9, 25), 1e-15);
}

TEST(Reward, MonotoneAndSteepNearOne) {
  double prev = reward(0.0);
  for (int k = 1; k <= 1000; ++k) {
    const double r = reward(k / 1000.0);
    EXPECT_GT(r, prev);
    prev = r;
  }
  auto slope = [](double f) { return (reward(f + 1e-6) - reward(f - 1e-6)) / 2e-6; };
  EXPECT_GT(slope(0.99), slope(0.5));
}

TEST(Observation, RealEncoding) {
  const DensityMatrix rho(CMatrix(0.5 * CMatrix::Identity(2, 2)));
  const auto obs = encode_observation(rho, false);
  EXPECT_EQ(obs.values, (std::vector<double>{0.5, 0.0, 0.0, 0.5}));
}

TEST(Observation, ComplexRoundTripAndTracePositions) {
  std::mt19937_64 rng(41);
  const int d = 30;
  const DensityMatrix rho = random_density(d, rng);
  const auto obs = encode_observation(rho, true);
  ASSERT_EQ(obs.size(), 2u * d * d);
  EXPECT_EQ(max_abs_diff(decode_observation(obs).matrix(), rho.matrix()), 0.0);
  double tr = 0.0;
  for (int i = 0; i < d; ++i) tr += obs.values[static_cast<std::size_t>(i * d + i)];
  EXPECT_NEAR(tr, 1.0, 1e-12);
  EXPECT_EQ(encode_observation(rho, false).size(), static_cast<std::size_t>(d * d));
  EXPECT_THROW(decode_observation(encode_observation(rho, false)), std::invalid_argument);
}

TEST(ComplexMode, Detection) {
  EXPECT_FALSE(needs_complex_mode(benchmark_target()));
  EXPECT_FALSE(needs_complex_mode(Ket::superposition(30, {{1, cplx(0, 1)}, {4, cplx(0, 1)}})));
  EXPECT_TRUE(needs_complex_mode(Ket::superposition(30, {{1, 1.0}, {4, cplx(0, 1)}})));
}

TEST(Actor, ZeroWeightsGiveZeroAction) {
  const auto net = PolicyNet::zeros({4, 8, 8, 2});
  EXPECT_EQ(act(net, Observation{{0.1, 0.2, 0.3, 0.4}, false}), cplx(0.0));
}

TEST(Actor, HandComputedForwardPass) {
  PolicyNet net = PolicyNet::zeros({2, 2, 1});
  net.layers[0].weight << 1.0, -2.0, 0.5, 0.25;
  net.layers[0].bias << 0.1, -0.3;
  net.layers[1].weight << 0.7, -1.1;
  net.layers[1].bias << 0.05;
  const double x0 = 0.2, x1 = -0.4;
  const double h0 = std::tanh(1.0 * x0 - 2.0 * x1 + 0.1);
  const double h1 = std::tanh(0.5 * x0 + 0.25 * x1 - 0.3);
  const double y = std::tanh(0.7 * h0 - 1.1 * h1 + 0.05);
  EXPECT_NEAR(act(net, Observation{{x0, x1}, false}).real(), y, 1e-15);
}

TEST(Actor, OutputBounded) {
  PolicyNet net = PolicyNet::zeros({1, 2});
  net.layers[0].bias << 1e6, -1e6;
  const cplx a = act(net, Observation{{0.0}, false});
  EXPECT_LE(std::abs(a.real()), 1.0);
  EXPECT_LE(std::abs(a.imag()), 1.0);
  EXPECT_NEAR(a.real(), 1.0, 1e-15);
}

TEST(Actor, ShapeMismatch) {
  const auto net = PolicyNet::zeros({4, 3, 1});
  EXPECT_THROW(act(net, Observation{{0.0, 0.0}, false}), ShapeMismatch);
  PolicyNet bad = PolicyNet::zeros({2, 3});
  bad.action_dim = 2;
  EXPECT_THROW(act(bad, Observation{{0.0, 0.0}, false}), ShapeMismatch);
}

namespace {

PolicyNet random_net(std::vector<int> widths, std::uint64_t seed) {
  PolicyNet net = PolicyNet::zeros(widths);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  for (auto& l : net.layers) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = g(rng);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = g(rng);
  }
  return net;
}

struct TempFile {
  std::filesystem::path path;
  explicit TempFile(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {}
  ~TempFile() { std::filesystem::remove(path); }
};

}  // namespace

TEST(PolicyFile, RoundTripBitExact) {
  const PolicyNet net = random_net({9, 16, 16, 2}, 42);
  TempFile f("fockfb_policy_roundtrip.bin");
  save_policy(net, f.path.string());
  const PolicyNet back = load_policy(f.path.string());
  ASSERT_EQ(back.widths(), net.widths());
  EXPECT_EQ(back.action_dim, 2);
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    EXPECT_EQ(std::memcmp(back.layers[k].weight.data(), net.layers[k].weight.data(),
                          sizeof(double) * net.layers[k].weight.size()),
              0);
    EXPECT_EQ(back.layers[k].bias, net.layers[k].bias);
  }
  const Observation obs{std::vector<double>(9, 0.3), false};
  EXPECT_EQ(act(back, obs), act(net, obs));
}

TEST(PolicyFile, CorruptionDetected) {
  const auto bytes = encode_policy(random_net({3, 4, 1}, 7));
  auto truncated = bytes;
  truncated.resize(bytes.size() - 5);
  EXPECT_THROW(decode_policy(truncated), FormatError);
  auto flipped = bytes;
  flipped[bytes.size() - 12] ^= 0x40;
  EXPECT_THROW(decode_policy(flipped), ChecksumError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_policy(magic), FormatError);
  EXPECT_THROW(decode_policy({}), FormatError);
  EXPECT_THROW(load_policy("/nonexistent/policy.bin"), FormatError);
}

TEST(PolicyFile, ActionDimMismatch) {
  PolicyNet net = random_net({3, 2}, 8);
  net.action_dim = 1;
  EXPECT_THROW(decode_policy(encode_policy(net)), ShapeMismatch);
}

TEST(TrainingManifest, DefaultsAndJson) {
  const auto tqc = TrainingManifest::tqc();
  EXPECT_EQ(tqc.actor_width, 256);
  EXPECT_EQ(tqc.critic_width, 512);
  EXPECT_EQ(tqc.n_critics, 5);
  EXPECT_DOUBLE_EQ(tqc.gamma, 0.95);
  EXPECT_EQ(tqc.batch_size, 1024);
  const auto ppo = TrainingManifest::ppo();
  nlohmann::json j = ppo;
  const auto back = j.get<TrainingManifest>();
  EXPECT_EQ(back.algorithm, "ppo");
  EXPECT_EQ(back.n_steps, ppo.n_steps);
  EXPECT_EQ(nlohmann::json(back), j);
}
