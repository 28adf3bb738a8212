#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "fockfb/channels.hpp"
#include "fockfb/filter.hpp"
#include "fockfb/fock.hpp"
#include "fockfb/lyapunov.hpp"
#include "fockfb/measurement.hpp"
#include "fockfb/policy.hpp"
#include "fockfb/rng.hpp"
#include "fockfb/stats.hpp"

namespace fockfb {

/// Clamps each quadrature of the action to [-1, 1].
inline cplx clamp_action(cplx alpha) {
  auto c = [](double x) { return std::isfinite(x) ? std::clamp(x, -1.0, 1.0) : 0.0; };
  return {c(alpha.real()), c(alpha.imag())};
}

/// Feedback law from the filter estimate to a displacement.
///
/// act() must be pure: the batch runner calls it concurrently from several
/// trajectories.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual cplx act(const FilterState& st) const = 0;
  virtual std::string name() const = 0;
};

class ZeroController final : public Controller {
 public:
  cplx act(const FilterState&) const override { return 0.0; }
  std::string name() const override { return "zero"; }
};

/// Replays a fixed displacement sequence indexed by the filter step counter;
/// zero once the script runs out.
class ScriptedController final : public Controller {
 public:
  explicit ScriptedController(std::vector<cplx> script) : script_(std::move(script)) {}
  cplx act(const FilterState& st) const override {
    const auto k = static_cast<std::size_t>(st.step);
    return k < script_.size() ? script_[k] : cplx(0.0);
  }
  std::string name() const override { return "scripted"; }

 private:
  std::vector<cplx> script_;
};

/// Newton step on the fidelity Lyapunov function. Under phase tracking the
/// target is expressed in the filter's current laboratory frame.
class LyapunovController final : public Controller {
 public:
  LyapunovController(const Ket& target, const FockSpace& space, double alpha_max, const MeasurementOps& ops)
      : plain_(build_context(target, space, alpha_max)),
        flipped_(build_context(frame_target(target, ops.frame_sign), space, alpha_max)) {}

  cplx act(const FilterState& st) const override { return lyapunov_policy(context_for(st), st); }
  std::string name() const override { return "lyapunov"; }

  const LyapunovContext& context_for(const FilterState& st) const {
    return (st.frame.size() == 0 || (st.frame.array() == 1.0).all()) ? plain_ : flipped_;
  }
  double alpha_max() const { return plain_.alpha_max; }

 private:
  LyapunovContext plain_;
  LyapunovContext flipped_;
};

/// Deterministic actor inference on the tracked-frame filter state.
class PolicyController final : public Controller {
 public:
  PolicyController(PolicyNet net, bool complex_mode) : net_(std::move(net)), complex_mode_(complex_mode) {}
  cplx act(const FilterState& st) const override {
    return fockfb::act(net_, encode_observation(st.tracked(), complex_mode_));
  }
  std::string name() const override { return "policy"; }
  const PolicyNet& net() const { return net_; }

 private:
  PolicyNet net_;
  bool complex_mode_;
};

struct EpisodeConfig {
  FockSpace space = FockSpace(30);
  Ket target;
  MeasurementSetup setup;
  std::optional<NoiseParams> noise;
  int max_cycles = 50;
  /// Empty means the top kEdgeBand levels of the space.
  std::vector<int> guard_levels;
  double guard_threshold = 0.02;
  std::uint64_t seed = 0;
  /// Starting cavity state; the coherent guess from init_episode when unset.
  std::optional<Ket> initial_state;
  /// Grants the controller a displacement before the first measurement.
  bool pre_adjust = true;

  std::vector<int> effective_guard_levels() const {
    if (!guard_levels.empty()) return guard_levels;
    std::vector<int> out;
    for (int n = std::max(0, space.dim() - kEdgeBand); n < space.dim(); ++n) out.push_back(n);
    return out;
  }

  void validate() const {
    if (target.dim() != space.dim()) throw ShapeMismatch("EpisodeConfig: target dimension differs from space");
    if (std::abs(target.norm() - 1.0) > 1e-10) throw std::invalid_argument("EpisodeConfig: target not normalized");
    if (initial_state && initial_state->dim() != space.dim())
      throw ShapeMismatch("EpisodeConfig: initial state dimension differs from space");
    if (max_cycles < 1) throw std::invalid_argument("EpisodeConfig: max_cycles must be >= 1");
    if (!(guard_threshold > 0.0 && guard_threshold < 1.0))
      throw std::invalid_argument("EpisodeConfig: guard_threshold must lie in (0, 1)");
    for (int n : guard_levels)
      if (n < 0 || n >= space.dim()) throw std::invalid_argument("EpisodeConfig: guard level outside space");
    if (setup.delta_n < 1) throw std::invalid_argument("EpisodeConfig: delta_n must be >= 1");
    if (noise) noise->validate();
  }
};

enum class TerminalStatus { running, completed, guard_stop, numerical_failure };

inline const char* to_string(TerminalStatus s) {
  switch (s) {
    case TerminalStatus::running: return "running";
    case TerminalStatus::completed: return "completed";
    case TerminalStatus::guard_stop: return "guard_stop";
    case TerminalStatus::numerical_failure: return "numerical_failure";
  }
  return "?";
}

/// One logged feedback cycle. Step 0 is the pre-measurement adjustment and
/// carries no outcome.
struct CycleRow {
  int step = 0;
  cplx alpha;
  std::optional<Outcome> outcome;
  std::optional<Outcome> reported;
  double filter_fidelity = 0.0;
  double true_fidelity = 0.0;
  bool jumped = false;
  RVector subspace_pops;
  double guard_population = 0.0;
  bool truncation_warning = false;
};

struct EpisodeRecord {
  std::vector<CycleRow> rows;
  TerminalStatus status = TerminalStatus::running;
  std::string failure;
  std::uint64_t trajectory = 0;

  double final_true_fidelity() const { return rows.empty() ? 0.0 : rows.back().true_fidelity; }
  double final_filter_fidelity() const { return rows.empty() ? 0.0 : rows.back().filter_fidelity; }
};

/// Stepwise episode engine shared by the batch runner and the bridge.
///
/// Each step: displacement on truth and filter, then (noisy mode) a sampled
/// decay jump, a probe outcome drawn from the true state, readout error, and
/// the matching filter update.
class Episode {
 public:
  Episode(EpisodeConfig cfg, std::uint64_t trajectory = 0)
      : cfg_(std::move(cfg)),
        ops_(build_ops(cfg_.setup, cfg_.space)),
        rng_(make_rng(cfg_.seed, trajectory)),
        guard_(cfg_.effective_guard_levels()) {
    cfg_.validate();
    record_.trajectory = trajectory;
    if (cfg_.initial_state) {
      truth_ = *cfg_.initial_state;
      truth_.normalize();
      filter_.rho = DensityMatrix::pure(truth_);
      filter_.frame = RVector::Ones(cfg_.space.dim());
      filter_.step = 0;
    } else {
      filter_ = init_episode(cfg_.target, cfg_.space);
      truth_ = coherent_state(cfg_.space, alpha_guess(cfg_.target));
    }
    cycle_ = cfg_.pre_adjust ? 0 : 1;
  }

  const EpisodeConfig& config() const { return cfg_; }
  const MeasurementOps& ops() const { return ops_; }
  const FilterState& filter() const { return filter_; }
  const Ket& truth() const { return truth_; }
  int next_cycle() const { return cycle_; }
  bool done() const { return record_.status != TerminalStatus::running; }
  TerminalStatus status() const { return record_.status; }
  const EpisodeRecord& record() const { return record_; }
  EpisodeRecord take_record() { return std::move(record_); }

  double filter_fidelity() const { return fidelity_pure(filter_.tracked(), cfg_.target); }
  double true_fidelity() const { return fidelity_pure(truth_, frame_target(cfg_.target, filter_.frame)); }

  const CycleRow& step(cplx alpha_in) {
    if (done()) throw std::logic_error("Episode::step: episode already finished");
    CycleRow row;
    row.step = cycle_;
    row.alpha = clamp_action(alpha_in);
    try {
      advance(row);
    } catch (const Error& err) {
      record_.status = TerminalStatus::numerical_failure;
      record_.failure = err.what();
      row.filter_fidelity = std::numeric_limits<double>::quiet_NaN();
      row.true_fidelity = std::numeric_limits<double>::quiet_NaN();
      record_.rows.push_back(std::move(row));
      return record_.rows.back();
    }
    row.filter_fidelity = filter_fidelity();
    row.true_fidelity = true_fidelity();
    row.subspace_pops = subspace_populations(truth_, cfg_.setup.delta_n);
    for (int n : guard_) row.guard_population += std::norm(truth_[n]);
    record_.rows.push_back(std::move(row));
    const CycleRow& last = record_.rows.back();
    if (last.guard_population > cfg_.guard_threshold) {
      record_.status = TerminalStatus::guard_stop;
    } else if (++cycle_ > cfg_.max_cycles) {
      record_.status = TerminalStatus::completed;
    }
    return last;
  }

 private:
  void advance(CycleRow& row) {
    const cplx alpha = row.alpha;
    truth_ = displace(cfg_.space, truth_, alpha);
    if (cycle_ == 0) {
      row.truncation_warning = apply_displacement(cfg_.space, filter_.rho, alpha).truncation_warning;
      filter_ = adjust_step(cfg_.space, filter_, alpha);
      return;
    }
    const bool noisy = cfg_.noise && !cfg_.noise->is_noiseless();
    if (noisy && cfg_.noise->has_decay()) {
      auto jump = true_decay_step(truth_, *cfg_.noise, rng_);
      truth_ = std::move(jump.state);
      row.jumped = jump.jumped;
    }
    const OutcomeProbs p = outcome_probs(ops_, truth_);
    const Outcome outcome = uniform01(rng_) < p.g ? Outcome::g : Outcome::e;
    truth_ = back_action(ops_, truth_, outcome);
    row.outcome = outcome;
    if (noisy) {
      const Outcome reported = sample_readout(outcome, *cfg_.noise, rng_);
      row.reported = reported;
      filter_ = noisy_step(cfg_.space, filter_, alpha, reported, ops_, *cfg_.noise);
    } else {
      row.reported = outcome;
      filter_ = ideal_step(cfg_.space, filter_, alpha, outcome, ops_);
    }
    row.truncation_warning = edge_population(filter_.rho) > kTruncationTolerance;
  }

  EpisodeConfig cfg_;
  MeasurementOps ops_;
  Rng rng_;
  std::vector<int> guard_;
  FilterState filter_;
  Ket truth_;
  int cycle_ = 0;
  EpisodeRecord record_;
};

/// Runs trajectory `trajectory` of the stream seeded by cfg.seed.
inline EpisodeRecord run_episode(const EpisodeConfig& cfg, const Controller& controller, std::uint64_t trajectory = 0) {
  Episode ep(cfg, trajectory);
  while (!ep.done()) ep.step(controller.act(ep.filter()));
  return ep.take_record();
}

/// Per-cycle distribution of a row metric across records. Records that ended
/// early keep their last value for the remaining cycles.
template <class Metric>
std::vector<SampleStats> per_cycle_stats(const std::vector<EpisodeRecord>& records, Metric metric) {
  std::size_t n_rows = 0;
  for (const auto& r : records) n_rows = std::max(n_rows, r.rows.size());
  std::vector<SampleStats> out;
  out.reserve(n_rows);
  std::vector<double> col;
  for (std::size_t k = 0; k < n_rows; ++k) {
    col.clear();
    for (const auto& r : records) {
      if (r.rows.empty()) continue;
      const CycleRow& row = r.rows[std::min(k, r.rows.size() - 1)];
      const double v = metric(row);
      if (std::isfinite(v)) col.push_back(v);
    }
    if (col.empty()) col.push_back(0.0);
    out.push_back(sample_stats(col));
  }
  return out;
}

struct BatchSummary {
  /// Index k covers row k of every record (row 0 is the adjustment cycle).
  std::vector<SampleStats> true_fidelity;
  std::vector<SampleStats> filter_fidelity;
  SampleStats final_true_fidelity;
  std::size_t completed = 0;
  std::size_t guard_stops = 0;
  std::size_t failures = 0;
};

inline BatchSummary summarize(const std::vector<EpisodeRecord>& records) {
  BatchSummary s;
  s.true_fidelity = per_cycle_stats(records, [](const CycleRow& r) { return r.true_fidelity; });
  s.filter_fidelity = per_cycle_stats(records, [](const CycleRow& r) { return r.filter_fidelity; });
  std::vector<double> finals;
  for (const auto& r : records) {
    const double f = r.final_true_fidelity();
    finals.push_back(std::isfinite(f) ? f : 0.0);
    switch (r.status) {
      case TerminalStatus::completed: ++s.completed; break;
      case TerminalStatus::guard_stop: ++s.guard_stops; break;
      case TerminalStatus::numerical_failure: ++s.failures; break;
      default: break;
    }
  }
  if (!finals.empty()) s.final_true_fidelity = sample_stats(finals);
  return s;
}

struct BatchResult {
  std::vector<EpisodeRecord> records;
  BatchSummary summary;
};

/// Runs `fn(i)` for i in [0, n) on `workers` threads.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const auto n_threads = static_cast<std::size_t>(std::max(1, workers));
  if (n_threads == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(n_threads, n); ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

/// n_traj independent trajectories; trajectory i always draws from
/// make_rng(cfg.seed, i), so results do not depend on the worker count.
inline BatchResult run_batch(const EpisodeConfig& cfg, const Controller& controller, std::size_t n_traj,
                             int workers = 1) {
  if (n_traj < 1) throw std::invalid_argument("run_batch: n_traj must be >= 1");
  cfg.validate();
  BatchResult res;
  res.records.resize(n_traj);
  parallel_for(n_traj, workers, [&](std::size_t i) { res.records[i] = run_episode(cfg, controller, i); });
  res.summary = summarize(res.records);
  return res;
}

/// Fidelity to the target of the freely decaying target state, one value per
/// cycle (index 0 is t = 0), integrated with ten first-order steps per cycle.
inline std::vector<double> free_evolution_reference(const Ket& target, const NoiseParams& noise, int cycles) {
  if (cycles < 0) throw std::invalid_argument("free_evolution_reference: cycles must be >= 0");
  DensityMatrix rho = DensityMatrix::pure(target);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(cycles) + 1);
  out.push_back(fidelity_pure(rho, target));
  const double kappa = noise.kappa();
  const double h = noise.t_cycle / 10.0;
  for (int c = 0; c < cycles; ++c) {
    if (kappa > 0.0) {
      for (int sub = 0; sub < 10; ++sub) {
        DensityMatrix next(rho.matrix() + h * lindblad_rhs(rho, kappa));
        next.normalize();
        rho = std::move(next);
      }
    }
    out.push_back(fidelity_pure(rho, target));
  }
  return out;
}

}  // namespace fockfb
