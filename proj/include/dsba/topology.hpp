#ifndef DSBA_TOPOLOGY_HPP
#define DSBA_TOPOLOGY_HPP

#include "dsba/sparse_vec.hpp"

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dsba {

using NodeId = int;

class TopologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Undirected simple graph. Neighbor lists are sorted ascending.
class Graph {
 public:
  explicit Graph(int n_nodes = 0);

  // Throws on self-loops or out-of-range ids. Duplicate edges are ignored.
  void add_edge(NodeId u, NodeId v);

  int n_nodes() const { return static_cast<int>(adj_.size()); }
  const std::vector<NodeId>& neighbors(NodeId n) const { return adj_.at(n); }
  int degree(NodeId n) const { return static_cast<int>(adj_.at(n).size()); }
  int max_degree() const;
  bool has_edge(NodeId u, NodeId v) const;
  // Each edge once, as (min, max), sorted.
  std::vector<std::pair<NodeId, NodeId>> edges() const;
  std::size_t n_edges() const;
  bool connected() const;

  static Graph complete(int n);
  static Graph path(int n);
  static Graph star(int n_leaves);  // center 0, leaves 1..n_leaves

  bool operator==(const Graph&) const = default;

 private:
  std::vector<std::vector<NodeId>> adj_;
};

// Erdos-Renyi sampling, resampled with a derived stream until connected.
// Throws TopologyError after `max_attempts` disconnected draws.
Graph gen_random_graph(int n_nodes, double edge_prob, std::uint64_t seed,
                       int max_attempts = 1000);

// Edge-list text format: first line N, then one "u v" per line (0-based).
void write_edge_list(std::ostream& os, const Graph& g);
Graph read_edge_list(std::istream& is);

struct MixingMatrix {
  Mat w;         // W = I - L / tau
  Mat w_tilde;   // (W + I) / 2
  double tau = 0.0;
  double gamma = 0.0;     // smallest nonzero eigenvalue of (I - W) / 2
  double eig_min = 0.0;   // spectrum of W
  double eig_max = 0.0;
};

struct MixingOptions {
  // tau = tau_scale * lambda_max(L). Values below 1 break 0 <= W and are
  // rejected unless allow_invalid is set (used to exercise validate_mixing).
  double tau_scale = 1.0;
  bool allow_invalid = false;
};

MixingMatrix build_mixing_matrix(const Graph& g, const MixingOptions& opts = {});

// Recomputes gamma and spectrum for an arbitrary (possibly invalid) W.
MixingMatrix mixing_from_weights(const Mat& w);

void write_mixing_csv(std::ostream& os, const Mat& m);

struct ConditionCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ValidationReport {
  std::vector<ConditionCheck> checks;  // sparsity, symmetry, null space, spectral
  bool all_pass() const;
};

ValidationReport validate_mixing(const MixingMatrix& m, const Graph& g);

struct DistanceMap {
  NodeId root = 0;
  std::vector<int> xi;  // hop distance from root
  int diameter = 0;     // max over xi (eccentricity of root)
};

DistanceMap distance_map(const Graph& g, NodeId root);

// All-pairs hop distances, dist[u][v].
std::vector<std::vector<int>> all_pairs_distances(const Graph& g);

// Largest eccentricity over all nodes.
int graph_diameter(const Graph& g);

struct ConditionNumbers {
  double kappa = 0.0;    // L / mu
  double kappa_g = 0.0;  // 1 / gamma
};

ConditionNumbers condition_numbers(const MixingMatrix& m, double lipschitz, double mu);

}  // namespace dsba

#endif  // DSBA_TOPOLOGY_HPP
