// Command-line front end: batches, trees, sweeps, calibration, serving.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "fockfb/fockfb.hpp"

namespace fs = std::filesystem;
using namespace fockfb;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  std::string out;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config_path, "JSON config file");
  sub->add_option("--set", c.overrides, "Override a config field, e.g. --set episode.max_cycles=20")
      ->take_all();
  sub->add_option("--seed", c.seed, "Master seed (overrides batch.seed)");
  sub->add_option("-j,--workers", c.workers, "Worker threads")->check(CLI::Range(1, 1024));
  sub->add_option("-o,--out", c.out, "Output directory (overrides output.dir)");
}

ExperimentConfig load(const Common& c, const std::vector<std::string>& extra = {}) {
  std::vector<std::string> ov = extra;
  ov.insert(ov.end(), c.overrides.begin(), c.overrides.end());
  ExperimentConfig cfg = load_config(c.config_path, ov);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  return cfg;
}

fs::path prepare_out(const ExperimentConfig& cfg) {
  fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  return dir;
}

void write_manifest(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg,
                    const std::vector<std::string>& files, const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json m = {{"command", command},
                      {"version", kVersion},
                      {"config_hash", config_hash(cfg)},
                      {"seed", cfg.seed},
                      {"config", cfg},
                      {"files", files}};
  for (const auto& [k, v] : extra.items()) m[k] = v;
  write_json(dir / "manifest.json", m);
}

void print_batch(const BatchSummary& s) {
  const auto& f = s.final_true_fidelity;
  std::cout << "final fidelity: mean " << f.mean << "  median " << f.median << "  p25 " << f.p25 << "  p75 " << f.p75
            << "\ncompleted " << s.completed << "  guard_stop " << s.guard_stops << "  numerical_failure "
            << s.failures << "\n";
}

void export_batch(const fs::path& dir, const std::string& stem, const BatchResult& res, const EpisodeConfig& e,
                  const std::string& hash, int n_episode_logs, std::vector<std::string>& files) {
  write_summary_csv(dir / (stem + "_summary.csv"), res.summary, hash);
  write_finals_csv(dir / (stem + "_finals.csv"), res.records, hash);
  write_json(dir / (stem + "_summary.json"), summary_json(res.summary, hash));
  const DistributionStats dist = distribution_stats(res.records);
  write_histogram_csv(dir / (stem + "_histogram.csv"), dist, hash);
  files.insert(files.end(), {stem + "_summary.csv", stem + "_finals.csv", stem + "_summary.json",
                             stem + "_histogram.csv"});
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(std::max(0, n_episode_logs)), res.records.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::string name = stem + "_episode_" + std::to_string(i) + ".csv";
    write_episode_csv(dir / name, res.records[i], e.setup.delta_n, hash);
    files.push_back(name);
  }
}

int cmd_run(const Common& c, bool noise_preset, bool full, int episode_logs) {
  std::vector<std::string> preset;
  if (noise_preset) {
    preset = {"noise.enabled=true", "noise.t_cav=0.001",         "noise.t_cycle=1e-06",
              "noise.eta_e_given_g=0.01", "noise.eta_g_given_e=0.02",
              std::string("episode.max_cycles=") + (full ? "2000" : "500"),
              std::string("batch.n_traj=") + (full ? "3000" : "300")};
  }
  const ExperimentConfig cfg = load(c, preset);
  const EpisodeConfig e = build_episode(cfg);
  const auto ctrl = build_controller(cfg, e);
  const std::string hash = config_hash(cfg);
  const fs::path dir = prepare_out(cfg);
  std::cout << "run: " << cfg.n_traj << " trajectories x " << cfg.max_cycles << " cycles, controller "
            << ctrl->name() << ", delta_n " << e.setup.delta_n << " (m=" << e.setup.target_m << ", "
            << to_string(e.setup.parity) << "), config " << hash << "\n";
  const BatchResult res = run_batch(e, *ctrl, cfg.n_traj, c.workers);
  std::vector<std::string> files;
  export_batch(dir, "batch", res, e, hash, episode_logs, files);
  nlohmann::json extra;
  if (e.noise) {
    const auto ref = free_evolution_reference(e.target, *e.noise, cfg.max_cycles);
    CsvWriter w(dir / "free_evolution.csv", hash);
    w.row({"cycle", "time_s", "fidelity"});
    for (std::size_t k = 0; k < ref.size(); ++k)
      w.row({std::to_string(k), fmt_num(static_cast<double>(k) * e.noise->t_cycle), fmt_num(ref[k])});
    files.push_back("free_evolution.csv");
  }
  write_manifest(dir, "run", cfg, files);
  print_batch(res.summary);
  std::cout << "wrote " << files.size() << " files to " << dir.string() << "\n";
  return 0;
}

int cmd_eval_policy(const Common& c, const std::string& weights, int episode_logs) {
  ExperimentConfig cfg = load(c, {"controller.kind=policy"});
  if (!weights.empty()) cfg.controller.weights = weights;
  cfg.controller.kind = "policy";
  const EpisodeConfig e = build_episode(cfg);
  const auto ctrl = build_controller(cfg, e);
  const std::string hash = config_hash(cfg);
  const fs::path dir = prepare_out(cfg);
  const BatchResult res = run_batch(e, *ctrl, cfg.n_traj, c.workers);
  std::vector<std::string> files;
  export_batch(dir, "policy", res, e, hash, episode_logs, files);
  write_manifest(dir, "eval-policy", cfg, files);
  print_batch(res.summary);
  return 0;
}

int cmd_tree(const Common& c, std::optional<int> depth, const std::string& initial) {
  ExperimentConfig cfg = load(c);
  if (depth) cfg.tree_depth = *depth;
  if (!initial.empty()) cfg.initial = initial;
  const EpisodeConfig e = build_episode(cfg);
  const auto ctrl = build_controller(cfg, e);
  const std::string hash = config_hash(cfg);
  const DensityMatrix rho0 =
      DensityMatrix::pure(e.initial_state ? *e.initial_state : coherent_state(e.space, alpha_guess(e.target)));
  const TrajectoryTree tree = enumerate_tree(e.space, rho0, e.target, *ctrl, e.setup, cfg.tree_depth, e.pre_adjust);
  const fs::path dir = prepare_out(cfg);
  write_tree_csv(dir / "tree.csv", tree, hash);
  write_tree_depth_csv(dir / "tree_depth.csv", tree, hash);
  write_manifest(dir, "tree", cfg, {"tree.csv", "tree_depth.csv"},
                 {{"initial", cfg.initial.empty() ? "coherent-guess" : cfg.initial},
                  {"leaf_probability_sum", tree.leaf_probability_sum()},
                  {"pruned_mass", tree.pruned_mass}});
  std::cout << "tree depth " << tree.depth << ": leaf probability sum " << tree.leaf_probability_sum()
            << ", pruned mass " << tree.pruned_mass << ", weighted final fidelity "
            << tree.weighted_fidelity(tree.depth) << "\n";
  return 0;
}

int cmd_sweep(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const EpisodeConfig e = build_episode(cfg);
  const auto ctrl = build_controller(cfg, e);
  SweepSpec spec;
  spec.ratios = cfg.sweep_ratios;
  spec.eps_probes = cfg.sweep_eps;
  spec.t_cycle = cfg.t_cycle;
  spec.eta_e_given_g = cfg.eta_e_given_g;
  spec.eta_g_given_e = cfg.eta_g_given_e;
  spec.n_traj = cfg.sweep_n_traj;
  const SweepGrid grid = run_sweep(spec, e, *ctrl, c.workers);
  const fs::path dir = prepare_out(cfg);
  const std::string hash = config_hash(cfg);
  write_sweep_csv(dir / "sweep.csv", grid, hash);
  write_manifest(dir, "sweep", cfg, {"sweep.csv"});
  for (const auto& cell : grid.cells)
    std::cout << "ratio " << cell.ratio << "  eps " << cell.eps_probe << "  max median " << cell.max_median_fidelity
              << "  max mean " << cell.max_mean_fidelity << "\n";
  return 0;
}

int cmd_calibrate(const Common& c, std::vector<double> alphas) {
  ExperimentConfig cfg = load(c, {"controller.kind=lyapunov"});
  cfg.controller.kind = "lyapunov";
  if (alphas.empty()) alphas = {0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0};
  const EpisodeConfig e = build_episode(cfg);
  const fs::path dir = prepare_out(cfg);
  const std::string hash = config_hash(cfg);
  CsvWriter w(dir / "calibration.csv", hash);
  w.row({"alpha_max", "final_mean", "final_median", "final_p25", "final_p75", "guard_stops"});
  for (double a : alphas) {
    const LyapunovController ctrl(e.target, e.space, a, build_ops(e.setup, e.space));
    const BatchResult res = run_batch(e, ctrl, cfg.n_traj, c.workers);
    const auto& f = res.summary.final_true_fidelity;
    w.row({fmt_num(a), fmt_num(f.mean), fmt_num(f.median), fmt_num(f.p25), fmt_num(f.p75),
           std::to_string(res.summary.guard_stops)});
    std::cout << "alpha_max " << a << ": median " << f.median << "  mean " << f.mean << "\n";
  }
  write_manifest(dir, "calibrate-lyapunov", cfg, {"calibration.csv"}, {{"alpha_max_grid", alphas}});
  return 0;
}

int cmd_serve(const Common& c, const std::string& transport, const std::string& host, int port) {
  const ExperimentConfig cfg = load(c);
  if (transport == "stdio") {
    BridgeSession session(cfg);
    serve_stdio(session, std::cin, std::cout);
    return 0;
  }
  TcpServer server(cfg, host, static_cast<std::uint16_t>(port));
  std::cerr << "listening on " << host << ":" << server.port() << "\n";
  server.run();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Measurement-based feedback preparation of cavity states"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Common run_c, tree_c, sweep_c, cal_c, serve_c, eval_c;

  auto* run = app.add_subcommand("run", "Batch of feedback episodes");
  add_common(run, run_c);
  bool noise_preset = false, full = false;
  int run_logs = 0;
  run->add_flag("--noise", noise_preset, "Decoherence preset (1 ms cavity lifetime, 1 us cycles, readout errors)");
  run->add_flag("--full", full, "With --noise: 3000 trajectories x 2000 cycles instead of 300 x 500");
  run->add_option("--episode-logs", run_logs, "Write per-cycle CSV for the first N trajectories");

  auto* tree = app.add_subcommand("tree", "Exhaustive outcome tree");
  add_common(tree, tree_c);
  std::optional<int> depth;
  std::string initial;
  tree->add_option("--depth", depth, "Number of measurements (<= 20)");
  tree->add_option("--initial", initial, "Initial state preset (default: coherent guess)");

  auto* sweep = app.add_subcommand("sweep", "Noise grid over t_cycle/t_cav and probe error");
  add_common(sweep, sweep_c);

  auto* cal = app.add_subcommand("calibrate-lyapunov", "Scan the Lyapunov step bound");
  add_common(cal, cal_c);
  std::vector<double> alphas;
  cal->add_option("--alpha-max", alphas, "alpha_max values to scan");

  auto* serve = app.add_subcommand("serve", "Environment server for external trainers");
  add_common(serve, serve_c);
  std::string transport = "stdio", host = "127.0.0.1";
  int port = 5555;
  serve->add_option("--transport", transport, "stdio or tcp")->check(CLI::IsMember({"stdio", "tcp"}));
  serve->add_option("--host", host, "TCP bind address");
  serve->add_option("--port", port, "TCP port (0 picks a free one)")->check(CLI::Range(0, 65535));

  auto* eval = app.add_subcommand("eval-policy", "Batch evaluation of an exported actor");
  add_common(eval, eval_c);
  std::string weights;
  int eval_logs = 0;
  eval->add_option("--weights", weights, "Actor weight file");
  eval->add_option("--episode-logs", eval_logs, "Write per-cycle CSV for the first N trajectories");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_c, noise_preset, full, run_logs);
    if (*tree) return cmd_tree(tree_c, depth, initial);
    if (*sweep) return cmd_sweep(sweep_c);
    if (*cal) return cmd_calibrate(cal_c, alphas);
    if (*serve) return cmd_serve(serve_c, transport, host, port);
    if (*eval) return cmd_eval_policy(eval_c, weights, eval_logs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
