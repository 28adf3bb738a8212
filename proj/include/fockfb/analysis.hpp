#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "fockfb/simulator.hpp"
#include "fockfb/stats.hpp"

namespace fockfb {

inline constexpr int kMaxTreeDepth = 20;
inline constexpr int kMaterializeDepth = 10;
inline constexpr double kPruneProbability = 1e-12;

/// Node of the noiseless outcome tree. Children of node i sit at 2i+1 (g)
/// and 2i+2 (e); the root holds the state after the adjustment displacement.
struct TreeNode {
  bool present = false;
  bool pruned = false;
  int depth = 0;
  double fidelity = 0.0;
  /// Probability of the outcome leading here, given the parent.
  double branch_probability = 1.0;
  double cumulative_probability = 1.0;
  /// Displacement applied before this node's children are measured.
  cplx alpha;
  std::optional<DensityMatrix> state;
};

struct TrajectoryTree {
  int depth = 0;
  Ket target;
  std::vector<TreeNode> nodes;
  double pruned_mass = 0.0;
  std::size_t pruned_count = 0;

  static std::size_t first_index(int d) { return (std::size_t{1} << d) - 1; }
  static std::size_t parent(std::size_t i) { return (i - 1) / 2; }
  /// Outcome string of node i, root first.
  static std::string path(std::size_t i) {
    std::string s;
    while (i > 0) {
      s.insert(s.begin(), (i % 2 == 1) ? 'g' : 'e');
      i = parent(i);
    }
    return s;
  }

  double leaf_probability_sum() const {
    double sum = 0.0;
    for (std::size_t i = first_index(depth); i < nodes.size(); ++i)
      if (nodes[i].present) sum += nodes[i].cumulative_probability;
    return sum;
  }

  /// Probability-weighted mean fidelity over the nodes at depth d. Pruned
  /// subtrees carry their parent's fidelity forward.
  double weighted_fidelity(int d) const { return weighted_moment(d, 1); }
  double weighted_fidelity_variance(int d) const {
    const double m = weighted_moment(d, 1);
    return std::max(0.0, weighted_moment(d, 2) - m * m);
  }

 private:
  double weighted_moment(int d, int power) const {
    double acc = 0.0, mass = 0.0;
    for (const TreeNode& n : nodes) {
      if (!n.present || !(n.depth == d || (n.pruned && n.depth < d))) continue;
      acc += n.cumulative_probability * std::pow(n.fidelity, power);
      mass += n.cumulative_probability;
    }
    return mass > 0.0 ? acc / mass : 0.0;
  }
};

/// Expands every outcome sequence of length `depth` from `initial`.
///
/// The controller acts once on the initial state (the adjustment), then before
/// each measurement, exactly as in run_episode without noise. States are kept
/// on nodes down to depth kMaterializeDepth.
inline TrajectoryTree enumerate_tree(const FockSpace& space, const DensityMatrix& initial, const Ket& target,
                                     const Controller& controller, const MeasurementSetup& setup, int depth,
                                     bool pre_adjust = true) {
  if (depth < 0) throw std::invalid_argument("enumerate_tree: depth must be >= 0");
  if (depth > kMaxTreeDepth)
    throw DepthLimit("enumerate_tree: depth " + std::to_string(depth) + " exceeds " + std::to_string(kMaxTreeDepth));
  if (initial.dim() != space.dim() || target.dim() != space.dim())
    throw ShapeMismatch("enumerate_tree: dimension mismatch");
  const MeasurementOps ops = build_ops(setup, space);

  TrajectoryTree tree;
  tree.depth = depth;
  tree.target = target;
  tree.nodes.resize(TrajectoryTree::first_index(depth + 1));

  FilterState root;
  root.rho = initial;
  root.rho.normalize();
  root.frame = RVector::Ones(space.dim());
  if (pre_adjust) root = adjust_step(space, root, clamp_action(controller.act(root)));

  auto fill = [&](std::size_t i, const FilterState& st, int d, double branch, double cum) {
    TreeNode& n = tree.nodes[i];
    n.present = true;
    n.depth = d;
    n.branch_probability = branch;
    n.cumulative_probability = cum;
    n.fidelity = fidelity_pure(st.tracked(), target);
    if (d <= kMaterializeDepth) n.state = st.rho;
  };

  // Explicit stack keeps recursion depth independent of the tree depth.
  struct Frame {
    std::size_t index;
    FilterState st;
  };
  std::vector<Frame> stack;
  fill(0, root, 0, 1.0, 1.0);
  stack.push_back({0, std::move(root)});
  while (!stack.empty()) {
    Frame f = std::move(stack.back());
    stack.pop_back();
    TreeNode& node = tree.nodes[f.index];
    if (node.depth == depth) continue;
    const cplx alpha = clamp_action(controller.act(f.st));
    node.alpha = alpha;
    const DensityMatrix displaced = apply_displacement(space, f.st.rho, alpha).rho;
    const OutcomeProbs p = outcome_probs(ops, displaced);
    // Push e first so g subtrees are expanded first.
    for (Outcome s : {Outcome::e, Outcome::g}) {
      const std::size_t child = 2 * f.index + 1 + static_cast<std::size_t>(s);
      const double cum = node.cumulative_probability * p[s];
      if (p[s] < kPruneProbability) {
        TreeNode& c = tree.nodes[child];
        c.present = true;
        c.pruned = true;
        c.depth = node.depth + 1;
        c.branch_probability = p[s];
        c.cumulative_probability = cum;
        c.fidelity = node.fidelity;
        tree.pruned_mass += cum;
        ++tree.pruned_count;
        continue;
      }
      FilterState next;
      next.rho = back_action(ops, displaced, s);
      next.frame = f.st.frame;
      detail::advance_frame(next, ops);
      next.step = f.st.step + 1;
      fill(child, next, node.depth + 1, p[s], cum);
      stack.push_back({child, std::move(next)});
    }
  }
  return tree;
}

/// One terminal trajectory of the tree: a full-depth leaf or a pruned node.
struct TreeRow {
  std::string outcomes;
  std::vector<double> fidelities;
  std::vector<double> step_probabilities;
  double probability = 0.0;
  double log10_probability = 0.0;
  bool pruned = false;
};

/// Rows ordered lexicographically by outcome string, g before e.
inline std::vector<TreeRow> tree_report(const TrajectoryTree& tree) {
  std::vector<TreeRow> rows;
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const TreeNode& n = tree.nodes[i];
    if (!n.present || !(n.depth == tree.depth || n.pruned)) continue;
    TreeRow row;
    row.outcomes = TrajectoryTree::path(i);
    row.pruned = n.pruned;
    row.probability = n.cumulative_probability;
    row.log10_probability = n.cumulative_probability > 0.0 ? std::log10(n.cumulative_probability)
                                                           : -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> chain;
    for (std::size_t j = i;; j = TrajectoryTree::parent(j)) {
      chain.push_back(j);
      if (j == 0) break;
    }
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      row.fidelities.push_back(tree.nodes[*it].fidelity);
      if (*it != 0) row.step_probabilities.push_back(tree.nodes[*it].branch_probability);
    }
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const TreeRow& a, const TreeRow& b) {
    auto key = [](const std::string& s) {
      std::string k = s;
      for (char& c : k) c = (c == 'g') ? '0' : '1';
      return k;
    };
    return key(a.outcomes) < key(b.outcomes);
  });
  return rows;
}

struct SweepSpec {
  /// t_cycle / t_cav; 0 disables decay.
  std::vector<double> ratios;
  std::vector<double> eps_probes;
  double t_cycle = 1e-6;
  double eta_e_given_g = 0.0;
  double eta_g_given_e = 0.0;
  std::size_t n_traj = 100;
};

struct SweepCell {
  double ratio = 0.0;
  double eps_probe = 0.0;
  double max_median_fidelity = 0.0;
  double max_mean_fidelity = 0.0;
  double final_mean_fidelity = 0.0;
};

struct SweepGrid {
  std::vector<double> ratios;
  std::vector<double> eps_probes;
  /// Row-major: cells[i * eps_probes.size() + j] is (ratios[i], eps_probes[j]).
  std::vector<SweepCell> cells;

  const SweepCell& at(std::size_t i, std::size_t j) const { return cells.at(i * eps_probes.size() + j); }
};

inline NoiseParams sweep_noise(const SweepSpec& spec, double ratio, double eps) {
  NoiseParams n;
  n.t_cycle = spec.t_cycle;
  n.t_cav = ratio > 0.0 ? spec.t_cycle / ratio : std::numeric_limits<double>::infinity();
  n.eta_e_given_g = spec.eta_e_given_g;
  n.eta_g_given_e = spec.eta_g_given_e;
  n.eps_probe = eps;
  return n;
}

/// Every cell reuses base.seed, so cells are compared on paired random streams.
inline SweepGrid run_sweep(const SweepSpec& spec, const EpisodeConfig& base, const Controller& controller,
                           int workers = 1) {
  if (spec.ratios.empty() || spec.eps_probes.empty()) throw std::invalid_argument("run_sweep: empty axis");
  SweepGrid grid;
  grid.ratios = spec.ratios;
  grid.eps_probes = spec.eps_probes;
  for (double ratio : spec.ratios) {
    for (double eps : spec.eps_probes) {
      EpisodeConfig cfg = base;
      cfg.noise = sweep_noise(spec, ratio, eps);
      const BatchResult res = run_batch(cfg, controller, spec.n_traj, workers);
      SweepCell cell;
      cell.ratio = ratio;
      cell.eps_probe = eps;
      for (const auto& s : res.summary.true_fidelity) {
        cell.max_median_fidelity = std::max(cell.max_median_fidelity, s.median);
        cell.max_mean_fidelity = std::max(cell.max_mean_fidelity, s.mean);
      }
      cell.final_mean_fidelity = res.summary.final_true_fidelity.mean;
      grid.cells.push_back(cell);
    }
  }
  return grid;
}

/// Keeps trajectories whose filter fidelity at `cycle` reaches `cut`.
struct Heralding {
  int cycle = 0;
  double cut = 0.0;
};

struct DistributionStats {
  std::vector<SampleStats> per_cycle;
  SampleStats final_fidelity;
  /// Counts of final true fidelity over equal bins of [0, 1].
  std::vector<std::size_t> histogram;
  std::size_t kept = 0;
  std::size_t discarded = 0;
};

inline bool heralded(const EpisodeRecord& r, const Heralding& h) {
  if (r.rows.empty()) return false;
  const auto k = std::min(static_cast<std::size_t>(std::max(h.cycle, 0)), r.rows.size() - 1);
  return r.rows[k].filter_fidelity >= h.cut;
}

inline DistributionStats distribution_stats(const std::vector<EpisodeRecord>& records,
                                            std::optional<Heralding> herald = std::nullopt, int bins = 20) {
  if (records.empty()) throw std::invalid_argument("distribution_stats: no records");
  if (bins < 1) throw std::invalid_argument("distribution_stats: bins must be >= 1");
  std::vector<EpisodeRecord> kept;
  DistributionStats out;
  for (const auto& r : records) {
    if (herald && !heralded(r, *herald)) {
      ++out.discarded;
      continue;
    }
    kept.push_back(r);
  }
  out.kept = kept.size();
  out.histogram.assign(static_cast<std::size_t>(bins), 0);
  if (kept.empty()) return out;
  out.per_cycle = per_cycle_stats(kept, [](const CycleRow& row) { return row.true_fidelity; });
  std::vector<double> finals;
  for (const auto& r : kept) {
    double f = r.final_true_fidelity();
    if (!std::isfinite(f)) f = 0.0;
    finals.push_back(f);
    const int b = std::clamp(static_cast<int>(f * bins), 0, bins - 1);
    ++out.histogram[static_cast<std::size_t>(b)];
  }
  out.final_fidelity = sample_stats(finals);
  return out;
}

}  // namespace fockfb
