#ifndef DSBA_SIMULATOR_HPP
#define DSBA_SIMULATOR_HPP

#include "dsba/algorithms.hpp"
#include "dsba/dataset.hpp"
#include "dsba/sparsecomm.hpp"
#include "dsba/topology.hpp"

#include "json.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsba {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class CommMode { kDense, kSparse };

CommMode parse_comm(const std::string& name);
std::string to_string(CommMode m);

struct RunConfig {
  Variant variant = Variant::kDsba;
  CommMode comm = CommMode::kDense;
  Family family = Family::kRidge;

  int n_nodes = 10;
  double edge_prob = 0.4;
  std::uint64_t graph_seed = 1;
  double tau_scale = 1.0;

  // Exactly one of these.
  std::optional<std::string> dataset_path;
  std::optional<SyntheticSpec> synthetic;
  bool normalize = true;
  std::uint64_t partition_seed = 1;

  double alpha = 0.0;    // 0: 1 / (24 L)
  double lambda = -1.0;  // < 0: 1 / (10 Q)
  long rounds = 1000;
  long cadence = 0;      // 0: q_min for stochastic variants, 1 for extra
  std::uint64_t seed = 1;
  int newton_iters = 20;

  double stop_subopt = 0.0;  // stop at the first checkpoint at or below this; 0 disables
  bool lyapunov = false;
  bool shadow_check = false;  // sparse mode: also run dense and record the largest gap
};

// Throws ConfigError naming the offending field.
void validate_config(const RunConfig& cfg);

// Graph, mixing matrix, shards and operators. Operators borrow the shard
// samples, so a Problem is never copied.
struct Problem {
  Graph graph;
  MixingMatrix mixing;
  Shards shards;
  std::vector<Shard> ops;
  Family family = Family::kRidge;
  double lambda = 0.0;
  double lipschitz = 0.0;
  int dim = 0;
  Vec z0;

  Problem() = default;
  Problem(const Problem&) = delete;
  Problem& operator=(const Problem&) = delete;

  int n_nodes() const { return graph.n_nodes(); }
};

std::unique_ptr<Problem> build_problem(const RunConfig& cfg);
// Attaches operators for an already-partitioned data set.
std::unique_ptr<Problem> make_problem(Graph g, const MixingMatrix& m, Shards shards, Family family, double lambda);

// sum_n [(1/q_n) sum_i B_{n,i}(z) + lambda z]
Vec global_operator(const Problem& p, const Vec& z);

struct Reference {
  Vec z;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Damped Newton on the global operator with analytic Jacobians.
Reference reference_solution(const Problem& p, double tol = 1e-12, int max_iter = 100);

// Fraction of (positive, negative) pairs ranked correctly by w.a, ties 1/2.
double auc_score(const Vec& w, const std::vector<const Sample*>& samples);
double auc_score_bruteforce(const Vec& w, const std::vector<const Sample*>& samples);

std::vector<const Sample*> all_samples(const Problem& p);

struct MetricsRow {
  long round = 0;
  double effective_passes = 0.0;
  double subopt = 0.0;
  double consensus_error = 0.0;  // max_n |z_n - z_bar|
  double objective = 0.0;        // NaN for auc
  double auc = 0.0;              // NaN unless labels are binary and the family is not ridge
  std::uint64_t cmax_values = 0;
  std::uint64_t cmax_metadata = 0;
  double lyapunov = 0.0;  // NaN unless requested
  double wall_seconds = 0.0;
};

struct RunResult {
  std::vector<MetricsRow> rows;
  Reference reference;
  double alpha = 0.0;
  double lambda = 0.0;
  long rounds_run = 0;
  std::vector<NodeCounters> counters;
  std::uint64_t peak_round_values = 0;
  double shadow_max_gap = 0.0;
  Mat final_iterates;
  double wall_seconds = 0.0;
};

struct RunHooks {
  std::function<void(long round, const std::vector<NodeState>& nodes)> on_round;
  std::ostream* trace = nullptr;
  CommLedger* ledger_out = nullptr;  // receives the final ledger
};

double effective_passes(const Problem& p, Variant v, long round);

// Runs rounds of the chosen variant. Fully determined by the config seeds.
RunResult run(const Problem& p, const RunConfig& cfg, const Reference& ref, const RunHooks& hooks = {});

// Squared W-weighted distances and the Lyapunov value at the current state.
struct LyapunovTerms {
  double iterate = 0.0;  // |Z - Z*|^2_Wt
  double dual = 0.0;     // |UQ - UQ*|^2
  double table = 0.0;    // D
  double c = 0.0;
  double total() const { return iterate + dual + c * table; }
};

class LyapunovTracker {
 public:
  LyapunovTracker(const Problem& p, const Vec& z_star, double alpha);
  // Call once per round with the new iterates (and once at round 0).
  void accumulate(const std::vector<NodeState>& nodes);
  LyapunovTerms evaluate(const std::vector<NodeState>& nodes) const;

 private:
  const Problem* p_;
  Vec z_star_;
  Mat uq_star_;
  Mat sum_z_;
  std::vector<std::vector<ComponentValue>> at_star_;
  double c_;
};

extern const char* const kMetricsHeader;
void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows);
void write_compare_csv(std::ostream& os, const std::vector<std::pair<std::string, std::vector<MetricsRow>>>& runs,
                       bool header = true);

nlohmann::json config_to_json(const RunConfig& cfg);
nlohmann::json run_manifest(const Problem& p, const RunConfig& cfg, const RunResult& r);

// Least-squares fit of log10(subopt) on round over rows with subopt in [lo, hi].
struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};
LinearFit fit_log_subopt(const std::vector<MetricsRow>& rows, double lo, double hi);

// First effective pass at which subopt <= target, or NaN.
double passes_to_reach(const std::vector<MetricsRow>& rows, double target);

}  // namespace dsba

#endif  // DSBA_SIMULATOR_HPP
