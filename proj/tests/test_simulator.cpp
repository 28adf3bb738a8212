#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace fockfb;
using namespace fockfb::testing;

namespace {

EpisodeConfig benchmark_config(std::uint64_t seed = 0) {
  EpisodeConfig cfg;
  cfg.target = benchmark_target();
  cfg.setup = build_setup(3, 1);
  cfg.seed = seed;
  return cfg;
}

void expect_same(const EpisodeRecord& a, const EpisodeRecord& b) {
  ASSERT_EQ(a.rows.size(), b.rows.size());
  EXPECT_EQ(a.status, b.status);
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    EXPECT_EQ(a.rows[k].alpha, b.rows[k].alpha) << "row " << k;
    EXPECT_EQ(a.rows[k].outcome, b.rows[k].outcome);
    EXPECT_EQ(a.rows[k].reported, b.rows[k].reported);
    EXPECT_EQ(a.rows[k].true_fidelity, b.rows[k].true_fidelity);
    EXPECT_EQ(a.rows[k].filter_fidelity, b.rows[k].filter_fidelity);
    EXPECT_EQ(a.rows[k].jumped, b.rows[k].jumped);
  }
}

}  // namespace

TEST(ClampAction, Quadratures) {
  EXPECT_EQ(clamp_action(cplx(2.0, -3.0)), cplx(1.0, -1.0));
  EXPECT_EQ(clamp_action(cplx(0.2, -0.5)), cplx(0.2, -0.5));
  EXPECT_EQ(clamp_action(cplx(std::nan(""), 0.5)), cplx(0.0, 0.5));
}

TEST(Episode, ZenoAtTarget) {
  EpisodeConfig cfg = benchmark_config(3);
  cfg.initial_state = cfg.target;
  const auto rec = run_episode(cfg, ZeroController{});
  EXPECT_EQ(rec.status, TerminalStatus::completed);
  EXPECT_EQ(rec.rows.size(), static_cast<std::size_t>(cfg.max_cycles + 1));
  for (const auto& r : rec.rows) {
    EXPECT_NEAR(r.true_fidelity, 1.0, 1e-12);
    EXPECT_NEAR(r.filter_fidelity, 1.0, 1e-12);
  }
}

TEST(Episode, RowLayout) {
  EpisodeConfig cfg = benchmark_config(4);
  const auto rec = run_episode(cfg, ZeroController{});
  ASSERT_FALSE(rec.rows.empty());
  EXPECT_EQ(rec.rows[0].step, 0);
  EXPECT_FALSE(rec.rows[0].outcome.has_value());
  for (std::size_t k = 1; k < rec.rows.size(); ++k) {
    EXPECT_EQ(rec.rows[k].step, static_cast<int>(k));
    EXPECT_TRUE(rec.rows[k].outcome.has_value());
  }
  cfg.pre_adjust = false;
  const auto rec2 = run_episode(cfg, ZeroController{});
  EXPECT_EQ(rec2.rows.front().step, 1);
  EXPECT_EQ(rec2.rows.size(), static_cast<std::size_t>(cfg.max_cycles));
}

TEST(Episode, SameSeedSameTrajectory) {
  const EpisodeConfig cfg = benchmark_config(11);
  const LyapunovController ctrl(cfg.target, cfg.space, 0.3, build_ops(cfg.setup, cfg.space));
  expect_same(run_episode(cfg, ctrl, 5), run_episode(cfg, ctrl, 5));
  const auto a = run_episode(cfg, ctrl, 5), b = run_episode(cfg, ctrl, 6);
  bool differ = a.rows.size() != b.rows.size();
  for (std::size_t k = 0; !differ && k < a.rows.size(); ++k) differ = a.rows[k].outcome != b.rows[k].outcome;
  EXPECT_TRUE(differ);
}

TEST(Episode, NoiselessFilterTracksTruth) {
  const EpisodeConfig cfg = benchmark_config(12);
  const LyapunovController ctrl(cfg.target, cfg.space, 0.3, build_ops(cfg.setup, cfg.space));
  for (std::uint64_t t = 0; t < 20; ++t) {
    const auto rec = run_episode(cfg, ctrl, t);
    for (const auto& r : rec.rows) {
      EXPECT_NEAR(r.true_fidelity, r.filter_fidelity, 1e-9);
      EXPECT_EQ(r.outcome, r.reported);
    }
  }
}

TEST(Episode, GuardStopsRunawayDisplacement) {
  EpisodeConfig cfg;
  cfg.space = FockSpace(10);
  cfg.target = Ket::superposition(10, {{1, 1.0}, {4, 1.0}});
  cfg.setup = build_setup(3, 1);
  const auto rec = run_episode(cfg, ScriptedController(std::vector<cplx>(60, cplx(1.0, 1.0))));
  EXPECT_EQ(rec.status, TerminalStatus::guard_stop);
  EXPECT_GT(rec.rows.back().guard_population, 0.02);
  EXPECT_LE(rec.rows.size(), static_cast<std::size_t>(cfg.max_cycles + 1));
}

TEST(Episode, StepAfterDoneThrows) {
  EpisodeConfig cfg = benchmark_config();
  cfg.max_cycles = 1;
  Episode ep(cfg);
  ep.step(0.0);
  ep.step(0.0);
  EXPECT_TRUE(ep.done());
  EXPECT_THROW(ep.step(0.0), std::logic_error);
}

TEST(Episode, OutcomeFrequencyMatchesBornRule) {
  EpisodeConfig cfg;
  cfg.space = FockSpace(12);
  cfg.target = Ket::superposition(12, {{1, 1.0}, {4, 1.0}});
  cfg.setup = build_setup(3, 1);
  cfg.initial_state = Ket::superposition(12, {{0, 1.0}, {1, 0.6}, {5, cplx(0.2, 0.4)}});
  cfg.max_cycles = 1;
  cfg.pre_adjust = false;
  const double p_g = outcome_probs(build_ops(cfg.setup, cfg.space), *cfg.initial_state).g;
  const std::size_t n = 100000;
  std::size_t count = 0;
  for (std::size_t t = 0; t < n; ++t) {
    Episode ep(cfg, t);
    if (ep.step(0.0).outcome == Outcome::g) ++count;
  }
  const double sigma = std::sqrt(p_g * (1 - p_g) / n);
  EXPECT_LT(std::abs(static_cast<double>(count) / n - p_g), 3 * sigma);
}

TEST(Batch, SingleTrajectoryMatchesRunEpisode) {
  const EpisodeConfig cfg = benchmark_config(21);
  const LyapunovController ctrl(cfg.target, cfg.space, 0.3, build_ops(cfg.setup, cfg.space));
  const auto res = run_batch(cfg, ctrl, 1);
  ASSERT_EQ(res.records.size(), 1u);
  expect_same(res.records[0], run_episode(cfg, ctrl, 0));
}

TEST(Batch, WorkerCountDoesNotChangeResults) {
  EpisodeConfig cfg = benchmark_config(22);
  NoiseParams noise;
  noise.t_cav = 1e-3;
  noise.eta_e_given_g = 0.01;
  noise.eta_g_given_e = 0.02;
  cfg.noise = noise;
  const LyapunovController ctrl(cfg.target, cfg.space, 0.3, build_ops(cfg.setup, cfg.space));
  const auto a = run_batch(cfg, ctrl, 24, 1);
  const auto b = run_batch(cfg, ctrl, 24, 4);
  for (std::size_t i = 0; i < a.records.size(); ++i) expect_same(a.records[i], b.records[i]);
  EXPECT_EQ(a.summary.final_true_fidelity.mean, b.summary.final_true_fidelity.mean);
}

TEST(Batch, SummaryCountsAndCarryForward) {
  EpisodeConfig cfg;
  cfg.space = FockSpace(10);
  cfg.target = Ket::superposition(10, {{1, 1.0}, {4, 1.0}});
  cfg.setup = build_setup(3, 1);
  const auto res = run_batch(cfg, ScriptedController(std::vector<cplx>(60, cplx(1.0, 1.0))), 8);
  EXPECT_EQ(res.summary.guard_stops + res.summary.completed + res.summary.failures, 8u);
  std::size_t longest = 0;
  for (const auto& r : res.records) longest = std::max(longest, r.rows.size());
  EXPECT_EQ(res.summary.true_fidelity.size(), longest);
  // Shorter trajectories carry their last value forward, so every cycle has all 8.
  for (const auto& s : res.summary.true_fidelity) EXPECT_EQ(s.n, 8u);
}

TEST(FreeEvolution, Reductions) {
  NoiseParams none;
  for (double f : free_evolution_reference(benchmark_target(), none, 50)) EXPECT_NEAR(f, 1.0, 1e-15);
  NoiseParams decay;
  decay.t_cav = 1e-3;
  for (double f : free_evolution_reference(Ket::fock(30, 0), decay, 50)) EXPECT_NEAR(f, 1.0, 1e-15);
  const auto one = free_evolution_reference(Ket::fock(30, 1), decay, 50);
  ASSERT_EQ(one.size(), 51u);
  for (std::size_t k = 0; k < one.size(); ++k) EXPECT_NEAR(one[k], std::exp(-1e-3 * k), 1e-4);
}
