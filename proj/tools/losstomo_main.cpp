// losstomo: simulate multicast probing over multi-source topologies and infer
// per-link loss rates from end-to-end observations.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "losstomo/estimator_decompose.hpp"
#include "losstomo/estimator_path.hpp"
#include "losstomo/experiment.hpp"
#include "losstomo/fixtures.hpp"
#include "losstomo/likelihood_oracle.hpp"
#include "losstomo/probe_sim.hpp"
#include "losstomo/statistics.hpp"
#include "losstomo/topology_io.hpp"

namespace fs = std::filesystem;
using namespace losstomo;

namespace {

LossModel resolve_loss(const std::string& loss_path, double default_theta) {
  if (!loss_path.empty()) return load_loss_file(loss_path);
  LossModel loss;
  loss.default_theta = default_theta;
  return loss;
}

std::map<SourceId, std::int64_t> probe_counts_for(const Topology& t, std::int64_t n) {
  std::map<SourceId, std::int64_t> counts;
  for (const Source& s : t.sources()) counts[s.id] = n;
  return counts;
}

StatTable stats_from_inputs(const Topology& t, const std::string& trace_path,
                            const std::string& stats_path) {
  if (!stats_path.empty()) return load_stats_csv(t, stats_path);
  if (trace_path.empty()) throw InputError("need --trace or --stats");
  ObservationSet obs = fs::path(trace_path).extension() == ".csv" ? load_trace_csv(trace_path)
                                                                  : load_trace(trace_path);
  if (!obs.topology_hash.empty() && obs.topology_hash != t.hash())
    std::cerr << "warning: trace topology hash " << obs.topology_hash
              << " does not match topology " << t.hash() << "\n";
  return StatTable::build(t, obs);
}

void ensure_dir(const std::string& out) {
  if (!out.empty()) fs::create_directories(out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multicast loss tomography for multi-source general topologies"};
  app.require_subcommand(1);

  std::string topo_ref = "builtin:F1";
  std::uint64_t seed = 1;
  std::string out = "out";
  std::string loss_path;
  double default_theta = 0.01;
  std::int64_t probes = 1000;
  std::string trace_path, stats_path;
  std::string estimator = "path";
  std::string config_path;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--topology,-t", topo_ref, "topology file or builtin:F1/F2/F3");
    cmd->add_option("--seed", seed, "RNG seed");
    cmd->add_option("--out,-o", out, "output directory");
  };

  auto* sim = app.add_subcommand("simulate", "send probes and write trace + ground-truth tally");
  add_common(sim);
  sim->add_option("--loss", loss_path, "loss model JSON file");
  sim->add_option("--theta", default_theta, "uniform loss rate when no --loss given");
  sim->add_option("--probes,-n", probes, "probes per source");
  sim->add_flag("--csv", "also write the CSV trace form");

  auto* stats_cmd = app.add_subcommand("stats", "reduce a trace to sufficient statistics");
  add_common(stats_cmd);
  stats_cmd->add_option("--trace", trace_path, "trace file (binary or .csv)");

  auto* est = app.add_subcommand("estimate", "estimate per-link loss rates");
  add_common(est);
  est->add_option("--trace", trace_path, "trace file (binary or .csv)");
  est->add_option("--stats", stats_path, "pre-reduced statistics CSV");
  est->add_option("--estimator", estimator, "path | decompose");
  est->add_option("--loss", loss_path, "loss model JSON (adds theta_true column)");

  auto* orc = app.add_subcommand("oracle", "maximize the log-likelihood directly");
  add_common(orc);
  orc->add_option("--trace", trace_path, "trace file (binary or .csv)");
  orc->add_option("--stats", stats_path, "pre-reduced statistics CSV");

  auto* exp = app.add_subcommand("experiment", "group-size sweep with relative-error report");
  add_common(exp);
  exp->add_option("--config", config_path, "experiment config JSON (defaults to builtin F3)");

  auto* val = app.add_subcommand("validate", "check topology invariants");
  add_common(val);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      Topology t = resolve_topology(topo_ref);
      LossModel loss = resolve_loss(loss_path, default_theta);
      auto counts = probe_counts_for(t, probes);
      ObservationSet obs = simulate(t, loss, counts, seed);
      ensure_dir(out);
      save_trace(obs, (fs::path(out) / "trace.bin").string());
      if (sim->count("--csv")) save_trace_csv(obs, (fs::path(out) / "trace.csv").string());
      save_tally_csv(ground_truth_tally(t, loss, counts, seed),
                     (fs::path(out) / "tally.csv").string());
      std::cout << "wrote " << out << "/trace.bin and tally.csv (topology " << t.hash() << ")\n";
    } else if (stats_cmd->parsed()) {
      Topology t = resolve_topology(topo_ref);
      StatTable stats = stats_from_inputs(t, trace_path, "");
      ensure_dir(out);
      save_stats_csv(stats, t, (fs::path(out) / "stats.csv").string());
      std::cout << "wrote " << out << "/stats.csv\n";
    } else if (est->parsed()) {
      Topology t = resolve_topology(topo_ref);
      StatTable stats = stats_from_inputs(t, trace_path, stats_path);
      LossModel truth;
      bool have_truth = !loss_path.empty();
      if (have_truth) truth = load_loss_file(loss_path);
      ensure_dir(out);
      if (estimator == "path") {
        PathEstimate pe = estimate_all_paths(t, stats);
        std::ofstream le(fs::path(out) / "estimates.csv");
        write_link_estimates_csv(le, t, pe.links, pe.report, have_truth ? &truth : nullptr);
        std::ofstream pr(fs::path(out) / "path_rates.csv");
        write_path_rates_csv(pr, pe.paths);
      } else if (estimator == "decompose") {
        DecomposedEstimate de = run_pipeline(t, stats);
        std::map<LinkId, int> tree_of;
        for (const TreeEstimate& te : de.trees)
          for (const auto& [lid, e] : te.links) tree_of[lid] = te.tree_id;
        std::ofstream le(fs::path(out) / "estimates.csv");
        write_link_estimates_csv(le, t, de.merged, de.report, have_truth ? &truth : nullptr,
                                 &tree_of);
        std::ofstream pr(fs::path(out) / "path_rates.csv");
        write_path_rates_csv(pr, de.joint_rates);
      } else {
        throw InputError("estimate supports --estimator path|decompose");
      }
      std::cout << "wrote " << out << "/estimates.csv and path_rates.csv\n";
    } else if (orc->parsed()) {
      Topology t = resolve_topology(topo_ref);
      StatTable stats = stats_from_inputs(t, trace_path, stats_path);
      OracleResult res = maximize(stats, t);
      ensure_dir(out);
      std::ofstream os(fs::path(out) / "oracle.csv");
      os << "link,theta_star,composite\n";
      for (const auto& [lid, th] : res.theta) {
        os << lid << ',';
        if (th) os << format_double(*th);
        os << ',';
        for (const CompositeGroup& g : res.composites)
          if (std::find(g.links.begin(), g.links.end(), lid) != g.links.end()) os << 'g' << g.id;
        os << '\n';
      }
      for (const CompositeGroup& g : res.composites)
        os << "# composite g" << g.id << " theta "
           << (g.theta ? format_double(*g.theta) : "null") << '\n';
      std::cout << "loglik " << format_double(res.loglik) << (res.converged ? "" : " (NOT converged)")
                << ", wrote " << out << "/oracle.csv\n";
      if (!res.converged) return 3;
    } else if (exp->parsed()) {
      ExperimentConfig config =
          config_path.empty() ? default_f3_config() : load_experiment_config(config_path);
      if (exp->count("--out")) config.out_dir = out;
      if (config.out_dir.empty()) config.out_dir = out;
      if (exp->count("--seed")) config.seed_base = seed;
      if (exp->count("--topology")) config.topology_ref = topo_ref;
      Topology t = resolve_topology(config.topology_ref);
      RelativeErrorReport rep = run_experiment(config, t);
      write_experiment_outputs(config, t, rep);
      std::cout << "wrote relative-error report under " << config.out_dir << "\n";
    } else if (val->parsed()) {
      Topology t = resolve_topology(topo_ref);
      auto violations = validate(t);
      if (violations.empty()) {
        std::cout << "topology valid (" << t.nodes().size() << " nodes, " << t.links().size()
                  << " links, " << t.sources().size() << " sources, hash " << t.hash() << ")\n";
      } else {
        for (const Violation& v : violations) std::cout << v.rule << ": " << v.detail << '\n';
        return 2;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
