#ifndef DSBA_ALGORITHMS_HPP
#define DSBA_ALGORITHMS_HPP

#include "dsba/operators.hpp"
#include "dsba/topology.hpp"

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsba {

class AlgorithmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Variant { kDsba, kDsa, kExtra, kPointSaga };

Variant parse_variant(const std::string& name);
std::string to_string(Variant v);

// A node's component operators; the lambda I part is kept separate.
using Shard = std::vector<Operator>;

// SAGA history: one compact operator value per sample and their dense mean.
class PhiTable {
 public:
  PhiTable() = default;
  PhiTable(const Shard& ops, const Vec& z0);

  std::size_t size() const { return entries_.size(); }
  const ComponentValue& entry(std::size_t i) const { return entries_.at(i); }
  SparseVec expanded(std::size_t i) const { return (*ops_)[i].expand(entries_.at(i)); }
  const Vec& mean() const { return mean_; }

  // Stores v at slot i and returns v - old. The mean is updated by delta / q
  // and recomputed from scratch every q replacements.
  ComponentValue replace(std::size_t i, const ComponentValue& v);

  Vec exact_mean() const;

 private:
  const Shard* ops_ = nullptr;
  std::vector<ComponentValue> entries_;
  Vec mean_;
  std::size_t since_recompute_ = 0;
};

struct NodeCounters {
  std::uint64_t evals = 0;
  std::uint64_t resolves = 0;
};

struct NodeState {
  int id = 0;
  const Shard* ops = nullptr;
  double lambda = 0.0;
  Vec z_curr;            // z^t
  Vec z_prev;            // z^{t-1}
  SparseVec delta_prev;  // delta^{t-1}
  PhiTable table;
  std::mt19937_64 rng;
  long t = 0;
  NodeCounters counters;
  Vec grad_prev;  // extra only: local full operator at z^{t-1}

  std::size_t q() const { return ops->size(); }
  int dim() const { return static_cast<int>(z_curr.size()); }
};

struct StepConfig {
  double alpha = 0.0;
  Variant variant = Variant::kDsba;
  ResolventOptions resolvent;
};

// Per-node stream derived from the master seed and node id.
std::mt19937_64 node_stream(std::uint64_t master_seed, int node);

NodeState init_node(const Shard& shard, const Vec& z0, double lambda, int node_id, std::uint64_t master_seed);

// Uniform with replacement from the node's stream.
std::size_t draw_sample(NodeState& s);

// Neighbor iterates indexed by node id; null entries are missing values.
using NodeValues = std::vector<const Vec*>;

// sum_m row[m] * (c1 * a_m + c2 * b_m) over nonzero weights; b may be empty
// when c2 == 0. Throws when a weighted neighbor value is missing.
Vec mix_rows(const Eigen::RowVectorXd& row, const NodeValues& a, const NodeValues& b, double c1, double c2);

// psi^0 = sum_m w_nm z_m^0 + alpha (phi_i - phi_bar)
Vec compute_psi_initial(const NodeState& s, const NodeValues& neighbor_z, const Eigen::RowVectorXd& w_row,
                        double alpha, std::size_t i);

// psi^t = sum_m wt_nm (2 z_m^t - z_m^{t-1}) + alpha lambda z_n^t
//         + alpha ((q-1)/q delta^{t-1} + phi_i)
Vec compute_psi(const NodeState& s, const NodeValues& neighbor_z_curr, const NodeValues& neighbor_z_prev,
                const Eigen::RowVectorXd& wt_row, double alpha, std::size_t i);

// Same, with the mixing term already formed (W z^0 at t = 0, Wt (2 Z^t - Z^{t-1}) after).
Vec psi_from_mix(const NodeState& s, const Vec& mix, double alpha, std::size_t i);

struct StepResult {
  Vec z_next;
  SparseVec delta;
};

// z_next = J_{alpha (B_i + lambda I)}(psi), delta = B_i(z_next) - phi_i; the table,
// iterates and delta_prev are advanced.
StepResult dsba_node_step(NodeState& s, const Vec& psi, double alpha, std::size_t i, const ResolventOptions& opts = {});

// Explicit counterpart with delta evaluated at z^t:
//   z^1     = W z^0 - alpha (delta^0 + phi_bar^0 + lambda z^0)
//   z^{t+1} = Wt (2 z^t - z^{t-1}) - alpha lambda (z^t - z^{t-1}) + alpha ((q-1)/q delta^{t-1} - delta^t)
StepResult dsa_node_step(NodeState& s, const Vec& mix, double alpha, std::size_t i);

// Mixing term for round t of node n from a frozen snapshot.
Vec dense_mix(const MixingMatrix& m, int node, long t, const NodeValues& z_curr, const NodeValues& z_prev);

// One synchronous round of either stochastic variant over all nodes.
void stochastic_round(std::vector<NodeState>& nodes, const MixingMatrix& m, const StepConfig& cfg);

// (1/q) sum_i B_i(z) + lambda z
Vec local_operator(const Shard& ops, const Vec& z, double lambda);

// One EXTRA round over all nodes.
void extra_round(std::vector<NodeState>& nodes, const Mat& w, const Mat& w_tilde, double alpha);

// Dsba step with Wt = [1]; needs exactly one node.
Vec pointsaga_step(std::vector<NodeState>& nodes, double alpha, std::size_t i, const ResolventOptions& opts = {});

// Textbook form: z^{t+1} = J_{alpha B^l_i}(z^t + alpha (phi_i - phi_bar)).
Vec pointsaga_classic_step(NodeState& s, double alpha, std::size_t i, const ResolventOptions& opts = {});

// 1 / (24 L)
double step_size_bound(double lipschitz);

// Max over samples of Lip(B_i) + lambda.
double shard_lipschitz(const std::vector<Shard>& shards, double lambda);

// B_i(z) - phi_i + phi_bar + lambda z
Vec saga_estimate(const NodeState& s, const Vec& z, std::size_t i);

}  // namespace dsba

#endif  // DSBA_ALGORITHMS_HPP
