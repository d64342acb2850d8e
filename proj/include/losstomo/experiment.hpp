#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "losstomo/estimator_decompose.hpp"
#include "losstomo/estimator_path.hpp"
#include "losstomo/likelihood_oracle.hpp"
#include "losstomo/probe_sim.hpp"
#include "losstomo/statistics.hpp"
#include "losstomo/topology.hpp"

namespace losstomo {

inline constexpr const char* kVersion = "losstomo 0.1.0";

struct ExperimentConfig {
  std::string topology_ref = "builtin:F3";  // "builtin:<name>" or a file path
  LossModel loss;
  std::vector<std::int64_t> group_sizes = {200, 400, 600, 800, 1000};
  int replications = 30;
  std::uint64_t seed_base = 1;
  std::vector<std::uint64_t> seeds;  // explicit list wins over seed_base
  std::string estimator = "path";    // path | decompose | oracle
  std::string out_dir;
  int threads = 0;  // 0 = hardware concurrency
  bool write_estimates = true;

  std::vector<std::uint64_t> seed_list() const;
  std::int64_t probes_per_source() const;  // sum of group sizes
};

ExperimentConfig load_experiment_config(const std::string& path);
std::string experiment_config_to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const std::string& text);
Topology resolve_topology(const std::string& topology_ref);
ExperimentConfig default_f3_config();

// one estimator interface for the harness: per-link loss estimates (serial
// composites and unestimable links are null)
std::map<LinkId, std::optional<double>> estimate_link_losses(const std::string& estimator,
                                                             const Topology& t,
                                                             const StatTable& stats,
                                                             ConsistencyReport* report = nullptr);

struct RelErrCell {
  LinkId link = -1;
  std::int64_t group_size = 0;
  std::uint64_t seed = 0;
  std::optional<double> actual;     // losses/attempts from the tally
  std::optional<double> estimated;  // null when unestimable/composite
  std::optional<double> rel_err;    // null when actual==0 or no estimate
};

struct RelativeErrorReport {
  std::vector<RelErrCell> cells;  // ordered by (seed, group, link)
  // per link, per group size: median over seeds with a valid cell
  std::map<LinkId, std::map<std::int64_t, double>> medians;
  std::map<LinkId, std::map<std::int64_t, int>> valid_counts;
  std::map<Flag, int> flag_summary;
  std::vector<std::uint64_t> seeds;
};

// simulate -> reduce per disjoint window -> estimate -> relative error,
// replications in parallel keyed by seed; deterministic given the seed list
RelativeErrorReport run_experiment(const ExperimentConfig& config, const Topology& t);

struct SiblingProbeReport {
  LinkId high_loss_link = -1;               // the noisy link
  LinkId sibling_link = -1;                 // its quiet sibling
  std::map<std::int64_t, double> median_high;  // per group size
  std::map<std::int64_t, double> median_low;
  bool high_converges_faster = false;  // at the largest group size
};

// relative-error-vs-n comparison of a sibling pair (defaults to F3's pair):
// the high-loss link's estimate converges faster because the quiet sibling
// contributes more information about their shared parent
SiblingProbeReport sibling_information_probe(const ExperimentConfig& config, const Topology& t,
                                             std::pair<LinkId, LinkId> pair);

// report writers (deterministic formatting)
std::string format_double(double v);
void write_link_estimates_csv(std::ostream& os, const Topology& t, const LinkEstimateTable& links,
                              const ConsistencyReport& report, const LossModel* truth,
                              const std::map<LinkId, int>* tree_of_link = nullptr);
void write_path_rates_csv(std::ostream& os, const PathRateTable& rates);
void write_relerr_cells_csv(std::ostream& os, const RelativeErrorReport& rep);
void write_relerr_medians_csv(std::ostream& os, const RelativeErrorReport& rep, const Topology& t);
void write_relerr_curves_dat(std::ostream& os, const RelativeErrorReport& rep);  // gnuplot columns

// full run: report CSVs + run log under config.out_dir
void write_experiment_outputs(const ExperimentConfig& config, const Topology& t,
                              const RelativeErrorReport& rep);

}  // namespace losstomo
