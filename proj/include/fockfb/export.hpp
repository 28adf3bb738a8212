#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fockfb/analysis.hpp"
#include "fockfb/simulator.hpp"

#ifndef FOCKFB_VERSION
#define FOCKFB_VERSION "0.0.0"
#endif

namespace fockfb {

inline constexpr const char* kVersion = FOCKFB_VERSION;

/// Text that reads back to the same double.
inline std::string fmt_num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Every CSV starts with "# config_hash=<hash>" followed by the header row.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& config_hash) : out_(path) {
    if (!out_) throw Error("cannot write " + path.string());
    out_ << "# config_hash=" << config_hash << '\n';
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

inline std::string outcome_cell(const std::optional<Outcome>& o) { return o ? std::string(1, to_char(*o)) : ""; }

inline void write_episode_csv(const std::filesystem::path& path, const EpisodeRecord& rec, int delta_n,
                              const std::string& hash) {
  CsvWriter w(path, hash);
  std::vector<std::string> header = {"step",           "alpha_re",          "alpha_im",         "outcome",
                                     "reported",       "filter_fidelity",   "true_fidelity",    "jumped",
                                     "guard_population", "truncation_warning"};
  for (int m = 0; m < delta_n; ++m) header.push_back("pop_w" + std::to_string(m));
  w.row(header);
  for (const auto& r : rec.rows) {
    std::vector<std::string> cells = {std::to_string(r.step),
                                      fmt_num(r.alpha.real()),
                                      fmt_num(r.alpha.imag()),
                                      outcome_cell(r.outcome),
                                      outcome_cell(r.reported),
                                      fmt_num(r.filter_fidelity),
                                      fmt_num(r.true_fidelity),
                                      r.jumped ? "1" : "0",
                                      fmt_num(r.guard_population),
                                      r.truncation_warning ? "1" : "0"};
    for (int m = 0; m < delta_n; ++m)
      cells.push_back(m < r.subspace_pops.size() ? fmt_num(r.subspace_pops(m)) : "");
    w.row(cells);
  }
}

inline void write_summary_csv(const std::filesystem::path& path, const BatchSummary& s, const std::string& hash) {
  CsvWriter w(path, hash);
  w.row({"cycle", "true_mean", "true_median", "true_p25", "true_p75", "true_std", "filter_mean", "filter_median",
         "filter_p25", "filter_p75", "n"});
  for (std::size_t k = 0; k < s.true_fidelity.size(); ++k) {
    const auto& t = s.true_fidelity[k];
    const auto& f = s.filter_fidelity[k];
    w.row({std::to_string(k), fmt_num(t.mean), fmt_num(t.median), fmt_num(t.p25), fmt_num(t.p75), fmt_num(t.stddev),
           fmt_num(f.mean), fmt_num(f.median), fmt_num(f.p25), fmt_num(f.p75), std::to_string(t.n)});
  }
}

inline void write_finals_csv(const std::filesystem::path& path, const std::vector<EpisodeRecord>& records,
                             const std::string& hash) {
  CsvWriter w(path, hash);
  w.row({"trajectory", "status", "cycles", "final_true_fidelity", "final_filter_fidelity"});
  for (const auto& r : records)
    w.row({std::to_string(r.trajectory), to_string(r.status), std::to_string(r.rows.size()),
           fmt_num(r.final_true_fidelity()), fmt_num(r.final_filter_fidelity())});
}

inline void write_histogram_csv(const std::filesystem::path& path, const DistributionStats& d,
                                const std::string& hash) {
  CsvWriter w(path, hash);
  w.row({"bin_lo", "bin_hi", "count"});
  const auto bins = d.histogram.size();
  for (std::size_t b = 0; b < bins; ++b)
    w.row({fmt_num(static_cast<double>(b) / bins), fmt_num(static_cast<double>(b + 1) / bins),
           std::to_string(d.histogram[b])});
}

inline void write_tree_csv(const std::filesystem::path& path, const TrajectoryTree& tree, const std::string& hash) {
  CsvWriter w(path, hash);
  std::vector<std::string> header = {"outcomes", "probability", "log10_probability", "pruned"};
  for (int k = 0; k <= tree.depth; ++k) header.push_back("fidelity_" + std::to_string(k));
  w.row(header);
  for (const auto& r : tree_report(tree)) {
    std::vector<std::string> cells = {r.outcomes, fmt_num(r.probability), fmt_num(r.log10_probability),
                                      r.pruned ? "1" : "0"};
    for (int k = 0; k <= tree.depth; ++k)
      cells.push_back(k < static_cast<int>(r.fidelities.size()) ? fmt_num(r.fidelities[k]) : "");
    w.row(cells);
  }
}

inline void write_tree_depth_csv(const std::filesystem::path& path, const TrajectoryTree& tree,
                                 const std::string& hash) {
  CsvWriter w(path, hash);
  w.row({"depth", "weighted_mean_fidelity", "weighted_variance"});
  for (int d = 0; d <= tree.depth; ++d)
    w.row({std::to_string(d), fmt_num(tree.weighted_fidelity(d)), fmt_num(tree.weighted_fidelity_variance(d))});
}

inline void write_sweep_csv(const std::filesystem::path& path, const SweepGrid& g, const std::string& hash) {
  CsvWriter w(path, hash);
  w.row({"ratio", "eps_probe", "max_median_fidelity", "max_mean_fidelity", "final_mean_fidelity"});
  for (const auto& c : g.cells)
    w.row({fmt_num(c.ratio), fmt_num(c.eps_probe), fmt_num(c.max_median_fidelity), fmt_num(c.max_mean_fidelity),
           fmt_num(c.final_mean_fidelity)});
}

inline nlohmann::json stats_json(const SampleStats& s) {
  return {{"mean", s.mean}, {"median", s.median}, {"p25", s.p25}, {"p75", s.p75}, {"std", s.stddev}, {"n", s.n}};
}

inline nlohmann::json summary_json(const BatchSummary& s, const std::string& hash) {
  nlohmann::json per_cycle = nlohmann::json::array();
  for (std::size_t k = 0; k < s.true_fidelity.size(); ++k)
    per_cycle.push_back({{"cycle", k}, {"true", stats_json(s.true_fidelity[k])},
                         {"filter", stats_json(s.filter_fidelity[k])}});
  return {{"config_hash", hash},
          {"final_true_fidelity", stats_json(s.final_true_fidelity)},
          {"completed", s.completed},
          {"guard_stops", s.guard_stops},
          {"failures", s.failures},
          {"per_cycle", per_cycle}};
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace fockfb
