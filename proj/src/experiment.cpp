#include "losstomo/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "losstomo/fixtures.hpp"
#include "losstomo/topology_io.hpp"

namespace losstomo {

std::vector<std::uint64_t> ExperimentConfig::seed_list() const {
  if (!seeds.empty()) return seeds;
  std::vector<std::uint64_t> out;
  for (int r = 0; r < replications; ++r) out.push_back(seed_base + static_cast<std::uint64_t>(r));
  return out;
}

std::int64_t ExperimentConfig::probes_per_source() const {
  std::int64_t n = 0;
  for (std::int64_t g : group_sizes) n += g;
  return n;
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["topology"] = c.topology_ref;
  j["loss"]["default_theta"] = c.loss.default_theta;
  nlohmann::json ov = nlohmann::json::object();
  for (const auto& [k, v] : c.loss.overrides) ov[std::to_string(k)] = v;
  j["loss"]["overrides"] = ov;
  j["group_sizes"] = c.group_sizes;
  j["replications"] = c.replications;
  j["seed_base"] = c.seed_base;
  if (!c.seeds.empty()) j["seeds"] = c.seeds;
  j["estimator"] = c.estimator;
  j["out_dir"] = c.out_dir;
  j["threads"] = c.threads;
  j["write_estimates"] = c.write_estimates;
  return j.dump(2);
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad experiment config: ") + e.what());
  }
  ExperimentConfig c;
  c.topology_ref = j.value("topology", c.topology_ref);
  if (j.contains("loss")) {
    c.loss.default_theta = j["loss"].value("default_theta", 0.0);
    if (j["loss"].contains("overrides"))
      for (const auto& [k, v] : j["loss"]["overrides"].items())
        c.loss.overrides[std::stoi(k)] = v.get<double>();
  }
  if (j.contains("group_sizes")) c.group_sizes = j["group_sizes"].get<std::vector<std::int64_t>>();
  c.replications = j.value("replications", c.replications);
  c.seed_base = j.value("seed_base", c.seed_base);
  if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  c.estimator = j.value("estimator", c.estimator);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.threads = j.value("threads", c.threads);
  c.write_estimates = j.value("write_estimates", c.write_estimates);

  if (c.replications < 1) throw InputError("replications must be >= 1");
  if (c.group_sizes.empty()) throw InputError("group_sizes must not be empty");
  for (std::int64_t g : c.group_sizes)
    if (g <= 0) throw InputError("group sizes must be positive");
  if (c.estimator != "path" && c.estimator != "decompose" && c.estimator != "oracle")
    throw InputError("unknown estimator " + c.estimator);
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return experiment_config_from_json(ss.str());
}

Topology resolve_topology(const std::string& topology_ref) {
  if (topology_ref.rfind("builtin:", 0) == 0) {
    auto t = builtin_fixture(topology_ref.substr(8));
    if (!t) throw InputError("unknown builtin fixture in " + topology_ref);
    return *t;
  }
  return load_topology_file(topology_ref);
}

ExperimentConfig default_f3_config() {
  ExperimentConfig c;
  c.topology_ref = "builtin:F3";
  c.loss = f3_loss();
  return c;
}

std::map<LinkId, std::optional<double>> estimate_link_losses(const std::string& estimator,
                                                             const Topology& t,
                                                             const StatTable& stats,
                                                             ConsistencyReport* report) {
  std::map<LinkId, std::optional<double>> out;
  for (const Link& l : t.links()) out[l.id] = std::nullopt;
  if (estimator == "path") {
    PathEstimate pe = estimate_all_paths(t, stats);
    for (const auto& [lid, le] : pe.links.links) out[lid] = le.theta;
    if (report) *report = pe.report;
  } else if (estimator == "decompose") {
    DecomposedEstimate de = run_pipeline(t, stats);
    for (const auto& [lid, le] : de.merged.links) out[lid] = le.theta;
    if (report) *report = de.report;
  } else if (estimator == "oracle") {
    OracleResult orc = maximize(stats, t);
    for (const auto& [lid, th] : orc.theta) out[lid] = th;
  } else {
    throw InputError("unknown estimator " + estimator);
  }
  return out;
}

RelativeErrorReport run_experiment(const ExperimentConfig& config, const Topology& t) {
  RelativeErrorReport rep;
  rep.seeds = config.seed_list();

  std::map<SourceId, std::int64_t> counts;
  for (const Source& s : t.sources()) counts[s.id] = config.probes_per_source();

  struct PerSeed {
    std::vector<RelErrCell> cells;
    std::map<Flag, int> flags;
    bool failed = false;
    std::string error;
  };
  std::vector<PerSeed> results(rep.seeds.size());

  auto run_one = [&](std::size_t idx) {
    PerSeed& out = results[idx];
    const std::uint64_t seed = rep.seeds[idx];
    try {
      ObservationSet obs = simulate(t, config.loss, counts, seed);
      // the actual side comes from the whole replication's per-link loss and
      // pass tally, the estimates from each disjoint group window
      auto tally = ground_truth_tally(t, config.loss, counts, seed);
      std::int64_t offset = 0;
      for (std::int64_t g : config.group_sizes) {
        StatTable stats = StatTable::build(t, obs, offset, offset + g);
        ConsistencyReport crep;
        auto estimates = estimate_link_losses(config.estimator, t, stats, &crep);
        for (const Link& l : t.links()) {
          RelErrCell cell;
          cell.link = l.id;
          cell.group_size = g;
          cell.seed = seed;
          const LinkTally& lt = tally.at(l.id);
          if (lt.attempts > 0)
            cell.actual = static_cast<double>(lt.losses) / static_cast<double>(lt.attempts);
          cell.estimated = estimates.at(l.id);
          if (cell.actual && *cell.actual > 0.0 && cell.estimated)
            cell.rel_err = std::abs(*cell.actual - *cell.estimated) / *cell.actual;
          out.cells.push_back(cell);
        }
        for (const auto& [f, n] : crep.summary()) out.flags[f] += n;
        offset += g;
      }
    } catch (const std::exception& e) {
      // an estimator failure on one replication is recorded, the run continues
      out.failed = true;
      out.error = e.what();
    }
  };

  unsigned hw = std::thread::hardware_concurrency();
  unsigned nthreads = config.threads > 0 ? static_cast<unsigned>(config.threads)
                                         : std::max(1u, hw ? hw : 1u);
  nthreads = std::min<unsigned>(nthreads, static_cast<unsigned>(rep.seeds.size()));
  if (nthreads <= 1) {
    for (std::size_t i = 0; i < rep.seeds.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < nthreads; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < rep.seeds.size(); i = next.fetch_add(1))
          run_one(i);
      });
    for (auto& th : pool) th.join();
  }

  // aggregation keyed by seed order, independent of scheduling
  std::map<LinkId, std::map<std::int64_t, std::vector<double>>> samples;
  for (const PerSeed& ps : results) {
    for (const RelErrCell& c : ps.cells) {
      rep.cells.push_back(c);
      if (c.rel_err) samples[c.link][c.group_size].push_back(*c.rel_err);
    }
    for (const auto& [f, n] : ps.flags) rep.flag_summary[f] += n;
  }
  for (auto& [lid, per_group] : samples)
    for (auto& [g, v] : per_group) {
      std::sort(v.begin(), v.end());
      double med = v.empty() ? 0.0
                             : (v.size() % 2 ? v[v.size() / 2]
                                             : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]));
      if (!v.empty()) {
        rep.medians[lid][g] = med;
        rep.valid_counts[lid][g] = static_cast<int>(v.size());
      }
    }
  return rep;
}

SiblingProbeReport sibling_information_probe(const ExperimentConfig& config, const Topology& t,
                                             std::pair<LinkId, LinkId> pair) {
  RelativeErrorReport rep = run_experiment(config, t);
  SiblingProbeReport out;
  out.high_loss_link = pair.first;
  out.sibling_link = pair.second;
  if (rep.medians.count(pair.first)) out.median_high = rep.medians.at(pair.first);
  if (rep.medians.count(pair.second)) out.median_low = rep.medians.at(pair.second);
  if (!out.median_high.empty() && !out.median_low.empty()) {
    std::int64_t largest = config.group_sizes.back();
    if (out.median_high.count(largest) && out.median_low.count(largest))
      out.high_converges_faster = out.median_high.at(largest) < out.median_low.at(largest);
  }
  return out;
}

// ---- report writers ---------------------------------------------------------

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void write_link_estimates_csv(std::ostream& os, const Topology& t, const LinkEstimateTable& links,
                              const ConsistencyReport& report, const LossModel* truth,
                              const std::map<LinkId, int>* tree_of_link) {
  os << "link,parent,child,tree,composite,theta_true,theta_hat,flags\n";
  for (const Link& l : t.links()) {
    os << l.id << ',' << l.parent << ',' << l.child << ',';
    if (tree_of_link && tree_of_link->count(l.id)) os << tree_of_link->at(l.id);
    os << ',';
    auto it = links.links.find(l.id);
    std::string flags = report.flags_csv(l.id);
    if (it != links.links.end() && it->second.composite)
      os << "g" << *it->second.composite;
    os << ',';
    if (truth) os << format_double(truth->theta(l.id));
    os << ',';
    if (it != links.links.end() && it->second.theta) os << format_double(*it->second.theta);
    os << ',' << flags << '\n';
  }
  for (const CompositeGroup& g : links.composites) {
    os << "# composite g" << g.id << ": nodes " << g.top << "->" << g.bottom << " links";
    for (LinkId l : g.links) os << ' ' << l;
    os << " theta_hat " << (g.theta ? format_double(*g.theta) : "null") << '\n';
  }
}

void write_path_rates_csv(std::ostream& os, const PathRateTable& rates) {
  os << "node,source,gamma_hat,path_rate,beta_hat,n_star,clamped\n";
  for (const auto& [node, ne] : rates.nodes) {
    if (!ne.solved()) continue;
    for (const auto& [s, entry] : ne.per_source)
      os << node << ',' << s << ',' << format_double(entry.gamma) << ','
         << format_double(entry.a) << ',' << format_double(ne.beta) << ','
         << format_double(ne.n_star) << ',' << (entry.clamped ? 1 : 0) << '\n';
  }
}

void write_relerr_cells_csv(std::ostream& os, const RelativeErrorReport& rep) {
  os << "link,group_size,seed,actual,estimated,rel_err\n";
  for (const RelErrCell& c : rep.cells) {
    os << c.link << ',' << c.group_size << ',' << c.seed << ',';
    if (c.actual) os << format_double(*c.actual);
    os << ',';
    if (c.estimated) os << format_double(*c.estimated);
    os << ',';
    if (c.rel_err) os << format_double(*c.rel_err);
    os << '\n';
  }
}

void write_relerr_medians_csv(std::ostream& os, const RelativeErrorReport& rep,
                              const Topology& t) {
  os << "link,group_size,is_intersection,n_valid,median_rel_err\n";
  for (const auto& [lid, per_group] : rep.medians) {
    bool intersection = t.link_sources(lid).size() > 1;
    for (const auto& [g, med] : per_group)
      os << lid << ',' << g << ',' << (intersection ? 1 : 0) << ','
         << rep.valid_counts.at(lid).at(g) << ',' << format_double(med) << '\n';
  }
}

void write_relerr_curves_dat(std::ostream& os, const RelativeErrorReport& rep) {
  std::set<std::int64_t> groups;
  for (const auto& [lid, per_group] : rep.medians)
    for (const auto& [g, med] : per_group) groups.insert(g);
  os << "# group_size";
  for (const auto& [lid, pg] : rep.medians) os << " link" << lid;
  os << '\n';
  for (std::int64_t g : groups) {
    os << g;
    for (const auto& [lid, pg] : rep.medians) {
      os << ' ';
      auto it = pg.find(g);
      os << (it == pg.end() ? "nan" : format_double(it->second));
    }
    os << '\n';
  }
}

void write_experiment_outputs(const ExperimentConfig& config, const Topology& t,
                              const RelativeErrorReport& rep) {
  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);
  {
    std::ofstream os(fs::path(config.out_dir) / "relerr_cells.csv");
    write_relerr_cells_csv(os, rep);
  }
  {
    std::ofstream os(fs::path(config.out_dir) / "relerr_medians.csv");
    write_relerr_medians_csv(os, rep, t);
  }
  {
    std::ofstream os(fs::path(config.out_dir) / "relerr_curves.dat");
    write_relerr_curves_dat(os, rep);
  }
  {
    std::ofstream os(fs::path(config.out_dir) / "run.log");
    os << kVersion << '\n';
    os << "topology " << config.topology_ref << " hash " << t.hash() << '\n';
    os << "estimator " << config.estimator << '\n';
    os << "groups are disjoint probe windows, in config order\n";
    os << "seeds";
    for (std::uint64_t s : rep.seeds) os << ' ' << s;
    os << '\n';
    os << "consistency flags:";
    if (rep.flag_summary.empty()) os << " none";
    for (const auto& [f, n] : rep.flag_summary) os << ' ' << flag_name(f) << '=' << n;
    os << '\n';
  }
}

}  // namespace losstomo
