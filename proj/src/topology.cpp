#include "dsba/topology.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <deque>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

namespace dsba {

namespace {

constexpr double kEigZero = 1e-10;

Mat laplacian(const Graph& g) {
  const int n = g.n_nodes();
  Mat l = Mat::Zero(n, n);
  for (int u = 0; u < n; ++u) {
    l(u, u) = g.degree(u);
    for (NodeId v : g.neighbors(u)) l(u, v) = -1.0;
  }
  return l;
}

Eigen::VectorXd sym_eigenvalues(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw TopologyError("eigensolver failed");
  return es.eigenvalues();  // ascending
}

// Hop counts from root, -1 where unreachable.
std::vector<int> bfs_hops(const Graph& g, NodeId root) {
  std::vector<int> xi(static_cast<std::size_t>(g.n_nodes()), -1);
  xi[root] = 0;
  std::deque<NodeId> queue{root};
  while (!queue.empty()) {
    const NodeId u = queue.front();
    queue.pop_front();
    for (NodeId v : g.neighbors(u)) {
      if (xi[v] < 0) {
        xi[v] = xi[u] + 1;
        queue.push_back(v);
      }
    }
  }
  return xi;
}

}  // namespace

Graph::Graph(int n_nodes) {
  if (n_nodes < 0) throw TopologyError("negative node count");
  adj_.resize(static_cast<std::size_t>(n_nodes));
}

void Graph::add_edge(NodeId u, NodeId v) {
  if (u < 0 || v < 0 || u >= n_nodes() || v >= n_nodes())
    throw TopologyError("edge endpoint out of range");
  if (u == v) throw TopologyError("self-loop at node " + std::to_string(u));
  if (has_edge(u, v)) return;
  auto insert_sorted = [](std::vector<NodeId>& list, NodeId x) {
    list.insert(std::lower_bound(list.begin(), list.end(), x), x);
  };
  insert_sorted(adj_[u], v);
  insert_sorted(adj_[v], u);
}

int Graph::max_degree() const {
  int m = 0;
  for (const auto& a : adj_) m = std::max(m, static_cast<int>(a.size()));
  return m;
}

bool Graph::has_edge(NodeId u, NodeId v) const {
  const auto& a = adj_.at(u);
  return std::binary_search(a.begin(), a.end(), v);
}

std::vector<std::pair<NodeId, NodeId>> Graph::edges() const {
  std::vector<std::pair<NodeId, NodeId>> out;
  for (NodeId u = 0; u < n_nodes(); ++u)
    for (NodeId v : adj_[u])
      if (u < v) out.emplace_back(u, v);
  return out;
}

std::size_t Graph::n_edges() const {
  std::size_t s = 0;
  for (const auto& a : adj_) s += a.size();
  return s / 2;
}

bool Graph::connected() const {
  if (n_nodes() <= 1) return true;
  const auto xi = bfs_hops(*this, 0);
  return std::none_of(xi.begin(), xi.end(), [](int x) { return x < 0; });
}

Graph Graph::complete(int n) {
  Graph g(n);
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v) g.add_edge(u, v);
  return g;
}

Graph Graph::path(int n) {
  Graph g(n);
  for (int u = 0; u + 1 < n; ++u) g.add_edge(u, u + 1);
  return g;
}

Graph Graph::star(int n_leaves) {
  Graph g(n_leaves + 1);
  for (int v = 1; v <= n_leaves; ++v) g.add_edge(0, v);
  return g;
}

Graph gen_random_graph(int n_nodes, double edge_prob, std::uint64_t seed, int max_attempts) {
  if (n_nodes < 1) throw TopologyError("gen_random_graph: need at least one node");
  if (!(edge_prob > 0.0 && edge_prob <= 1.0))
    throw TopologyError("gen_random_graph: edge probability must be in (0, 1]");
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(attempt)};
    std::mt19937_64 rng(seq);
    std::bernoulli_distribution coin(edge_prob);
    Graph g(n_nodes);
    for (int u = 0; u < n_nodes; ++u)
      for (int v = u + 1; v < n_nodes; ++v)
        if (coin(rng)) g.add_edge(u, v);
    if (g.connected()) return g;
  }
  std::ostringstream msg;
  msg << "gen_random_graph: no connected graph after " << max_attempts << " attempts (n="
      << n_nodes << ", p=" << edge_prob << "); edge probability too small";
  throw TopologyError(msg.str());
}

void write_edge_list(std::ostream& os, const Graph& g) {
  os << g.n_nodes() << '\n';
  for (auto [u, v] : g.edges()) os << u << ' ' << v << '\n';
}

Graph read_edge_list(std::istream& is) {
  int n = 0;
  if (!(is >> n) || n < 0) throw TopologyError("edge list: bad node count");
  Graph g(n);
  NodeId u = 0, v = 0;
  while (is >> u >> v) g.add_edge(u, v);
  if (!is.eof()) throw TopologyError("edge list: malformed edge line");
  return g;
}

MixingMatrix mixing_from_weights(const Mat& w) {
  MixingMatrix m;
  const auto n = w.rows();
  m.w = w;
  m.w_tilde = (w + Mat::Identity(n, n)) / 2.0;
  const Mat sym = (w + w.transpose()) / 2.0;
  const Eigen::VectorXd ev = sym_eigenvalues(sym);
  m.eig_min = ev(0);
  m.eig_max = ev(n - 1);
  const Eigen::VectorXd gap = sym_eigenvalues((Mat::Identity(n, n) - sym) / 2.0);
  m.gamma = 1.0;  // single node: no consensus gap to close
  for (Eigen::Index k = 0; k < n; ++k) {
    if (gap(k) > kEigZero) {
      m.gamma = gap(k);
      break;
    }
  }
  return m;
}

MixingMatrix build_mixing_matrix(const Graph& g, const MixingOptions& opts) {
  if (!g.connected()) throw TopologyError("build_mixing_matrix: graph is not connected");
  const int n = g.n_nodes();
  if (n == 1) {
    auto m = mixing_from_weights(Mat::Identity(1, 1));
    m.tau = 1.0;
    return m;
  }
  if (!(opts.tau_scale > 0.0)) throw TopologyError("build_mixing_matrix: tau_scale must be positive");
  if (opts.tau_scale < 1.0 && !opts.allow_invalid)
    throw TopologyError("build_mixing_matrix: tau below lambda_max(L) violates 0 <= W");
  const Mat l = laplacian(g);
  const double lmax = sym_eigenvalues(l)(n - 1);
  const double tau = opts.tau_scale * lmax;
  Mat w = Mat::Identity(n, n) - l / tau;
  // Exact symmetric zero pattern; re-impose the row sums to kill rounding.
  for (int u = 0; u < n; ++u) {
    double off = 0.0;
    for (NodeId v : g.neighbors(u)) off += w(u, v);
    w(u, u) = 1.0 - off;
  }
  auto m = mixing_from_weights(w);
  m.tau = tau;
  return m;
}

void write_mixing_csv(std::ostream& os, const Mat& m) {
  os << std::setprecision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << (j ? "," : "") << m(i, j);
    os << '\n';
  }
}

bool ValidationReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
}

ValidationReport validate_mixing(const MixingMatrix& m, const Graph& g) {
  const int n = g.n_nodes();
  if (m.w.rows() != n || m.w.cols() != n) throw TopologyError("validate_mixing: shape mismatch");
  ValidationReport rep;
  auto fmt = [](double x) {
    std::ostringstream s;
    s << std::setprecision(3) << x;
    return s.str();
  };

  double worst_off = 0.0;
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v)
      if (u != v && !g.has_edge(u, v)) worst_off = std::max(worst_off, std::abs(m.w(u, v)));
  rep.checks.push_back({"graph sparsity", worst_off <= 1e-12, "max |w| off-graph = " + fmt(worst_off)});

  const double asym = (m.w - m.w.transpose()).cwiseAbs().maxCoeff();
  rep.checks.push_back({"symmetry", asym < 1e-12, "max |W - W^T| = " + fmt(asym)});

  const Eigen::VectorXd ev = sym_eigenvalues((m.w + m.w.transpose()) / 2.0);
  int mult_one = 0;
  for (Eigen::Index k = 0; k < ev.size(); ++k)
    if (std::abs(ev(k) - 1.0) <= 1e-9) ++mult_one;
  const double row_err = (m.w * Eigen::VectorXd::Ones(n) - Eigen::VectorXd::Ones(n)).cwiseAbs().maxCoeff();
  rep.checks.push_back({"null space", mult_one == 1 && row_err <= 1e-12,
                        "multiplicity of eigenvalue 1 = " + std::to_string(mult_one) +
                            ", max |W1 - 1| = " + fmt(row_err)});

  const bool spectral = ev(0) >= -1e-10 && ev(ev.size() - 1) <= 1.0 + 1e-10;
  rep.checks.push_back({"spectral", spectral,
                        "eigenvalues in [" + fmt(ev(0)) + ", " + fmt(ev(ev.size() - 1)) + "]"});
  return rep;
}

DistanceMap distance_map(const Graph& g, NodeId root) {
  const int n = g.n_nodes();
  if (root < 0 || root >= n) throw TopologyError("distance_map: root out of range");
  DistanceMap dm;
  dm.root = root;
  dm.xi = bfs_hops(g, root);
  for (NodeId v = 0; v < n; ++v)
    if (dm.xi[v] < 0)
      throw TopologyError("distance_map: node " + std::to_string(v) + " unreachable from " +
                          std::to_string(root));
  dm.diameter = *std::max_element(dm.xi.begin(), dm.xi.end());
  return dm;
}

std::vector<std::vector<int>> all_pairs_distances(const Graph& g) {
  std::vector<std::vector<int>> d;
  d.reserve(static_cast<std::size_t>(g.n_nodes()));
  for (NodeId u = 0; u < g.n_nodes(); ++u) {
    d.push_back(distance_map(g, u).xi);
  }
  return d;
}

int graph_diameter(const Graph& g) {
  int e = 0;
  for (const auto& row : all_pairs_distances(g)) e = std::max(e, *std::max_element(row.begin(), row.end()));
  return e;
}

ConditionNumbers condition_numbers(const MixingMatrix& m, double lipschitz, double mu) {
  if (!(mu > 0.0)) throw TopologyError("condition_numbers: mu must be positive");
  if (lipschitz < mu) throw TopologyError("condition_numbers: L must be at least mu");
  if (!(m.gamma > 0.0)) throw TopologyError("condition_numbers: gamma must be positive");
  return {lipschitz / mu, 1.0 / m.gamma};
}

}  // namespace dsba
