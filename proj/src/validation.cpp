#include "dsba/validation.hpp"

#include "dsba/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

namespace dsba {

namespace {

std::string sci(double x) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << x;
  return os.str();
}

Vec gaussian(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Vec v(n);
  for (int k = 0; k < n; ++k) v[k] = g(rng);
  return v;
}

std::unique_ptr<Problem> synthetic_problem(const Graph& g, Family fam, std::size_t q, int d, double rho,
                                           std::uint64_t seed, double lambda = -1.0) {
  SyntheticSpec spec;
  spec.kind = fam == Family::kRidge ? SyntheticKind::kRegression : SyntheticKind::kClassification;
  spec.n_samples = q * static_cast<std::size_t>(g.n_nodes());
  spec.dim = d;
  spec.rho = rho;
  spec.seed = seed;
  auto data = make_synthetic(spec);
  auto shards = partition(std::move(data.samples), data.dim, g.n_nodes(), seed + 1);
  return make_problem(g, build_mixing_matrix(g), std::move(shards), fam, lambda);
}

Graph diamond() {
  Graph g(4);
  g.add_edge(0, 1);
  g.add_edge(0, 2);
  g.add_edge(1, 3);
  g.add_edge(2, 3);
  return g;
}

}  // namespace

std::vector<Check> mixing_suite(const SuiteOptions& o) {
  const double probs[] = {0.3, 0.4, 0.6};
  std::map<std::string, int> passed;
  std::map<std::string, std::string> first_failure;
  std::vector<std::string> order;
  MixingOptions mo;
  mo.tau_scale = o.tau_scale;
  mo.allow_invalid = true;
  for (int k = 0; k < o.graphs; ++k) {
    const int n = 3 + k % 10;
    const double p = probs[k % 3];
    const Graph g = gen_random_graph(n, p, 1000 + static_cast<std::uint64_t>(k));
    const auto rep = validate_mixing(build_mixing_matrix(g, mo), g);
    for (const auto& c : rep.checks) {
      if (!passed.count(c.name)) {
        order.push_back(c.name);
        passed[c.name] = 0;
      }
      if (c.pass)
        ++passed[c.name];
      else if (!first_failure.count(c.name))
        first_failure[c.name] = "graph " + std::to_string(k) + " (N=" + std::to_string(n) + "): " + c.detail;
    }
  }
  std::vector<Check> out;
  for (const auto& name : order) {
    Check c{"mixing " + name, passed[name] == o.graphs,
            std::to_string(passed[name]) + "/" + std::to_string(o.graphs) + " graphs"};
    if (first_failure.count(name)) c.detail += "; first failure " + first_failure[name];
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<Check> resolvent_suite(const SuiteOptions& o) {
  std::vector<Check> out;
  const int d = 50;
  ResolventOptions ro;
  ro.newton_iters = o.newton_iters;
  for (Family fam : {Family::kRidge, Family::kLogistic, Family::kAuc}) {
    std::mt19937_64 rng(4242 + static_cast<int>(fam));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double tol = fam == Family::kLogistic ? 1e-10 : 1e-9;
    double worst = 0.0;
    int failures = 0;
    for (int k = 0; k < o.resolvent_instances; ++k) {
      Sample s;
      std::vector<int> support(d);
      for (int j = 0; j < d; ++j) support[j] = j;
      std::shuffle(support.begin(), support.end(), rng);
      support.resize(5);
      std::sort(support.begin(), support.end());
      const Vec vals = gaussian(5, rng).normalized();
      for (int j = 0; j < 5; ++j) s.features.push(support[j], vals[j]);
      s.label = fam == Family::kRidge ? gaussian(1, rng)[0] : (unif(rng) < 0.5 ? -1.0 : 1.0);
      const Operator op(fam, s, d, 0.3);
      const double alpha = std::exp(std::log(1e-3) + unif(rng) * std::log(1e5));
      const Vec psi = gaussian(op.dim(), rng, 3.0);
      const Vec z = op.resolvent(alpha, psi, ro);
      const double res = (z + alpha * op.eval(z, 0.0) - psi).norm();
      worst = std::max(worst, std::isfinite(res) ? res : INFINITY);
      failures += !(res <= tol);
    }
    out.push_back({"resolvent " + to_string(fam), failures == 0,
                   "worst " + sci(worst) + " vs " + sci(tol) + ", " + std::to_string(failures) + " of " +
                       std::to_string(o.resolvent_instances) + " above"});
  }
  return out;
}

std::vector<Check> saga_suite(const SuiteOptions& o) {
  std::vector<Check> out;
  auto p = synthetic_problem(Graph::path(3), Family::kLogistic, 9, 12, 0.4, 17);
  std::mt19937_64 rng(99);
  StepConfig cfg{0.05, Variant::kDsba, {}};
  cfg.resolvent.newton_iters = o.newton_iters;
  std::vector<NodeState> nodes;
  for (int n = 0; n < 3; ++n) nodes.push_back(init_node(p->ops[n], gaussian(p->dim, rng), p->lambda, n, 5));
  for (int r = 0; r < 4; ++r) stochastic_round(nodes, p->mixing, cfg);

  double worst_mean = 0.0, worst_back = 0.0;
  for (int trial = 0; trial < o.node_states; ++trial) {
    NodeState s = nodes[trial % 3];
    // Scramble the table, then probe at a fresh point.
    for (int k = 0; k < 5; ++k) {
      s.z_curr = gaussian(p->dim, rng);
      const std::size_t i = draw_sample(s);
      dsba_node_step(s, psi_from_mix(s, gaussian(p->dim, rng), cfg.alpha, i), cfg.alpha, i, cfg.resolvent);
    }
    const Vec z = gaussian(p->dim, rng);
    Vec avg = Vec::Zero(p->dim);
    for (std::size_t i = 0; i < s.q(); ++i) avg += saga_estimate(s, z, i);
    avg /= static_cast<double>(s.q());
    worst_mean = std::max(worst_mean, (avg - local_operator(*s.ops, z, s.lambda)).norm());

    s.z_curr = gaussian(p->dim, rng);
    s.z_prev = gaussian(p->dim, rng);
    const Vec mix = gaussian(p->dim, rng);
    const std::size_t i = draw_sample(s);
    const Vec dprev = s.delta_prev.to_dense(p->dim);
    const Vec zc = s.z_curr;
    const double a = cfg.alpha, l = s.lambda, kq = (s.q() - 1.0) / s.q();
    const auto r = dsba_node_step(s, psi_from_mix(s, mix, a, i), a, i, cfg.resolvent);
    const Vec rhs = (mix + a * l * zc + a * kq * dprev - a * r.delta.to_dense(p->dim)) / (1.0 + a * l);
    worst_back = std::max(worst_back, (rhs - r.z_next).norm());
  }
  out.push_back({"saga unbiasedness", worst_mean <= 1e-10, "worst " + sci(worst_mean) + " vs 1.00e-10"});
  out.push_back({"back substitution", worst_back <= 1e-9, "worst " + sci(worst_back) + " vs 1.00e-09"});
  return out;
}

std::vector<Check> equivalence_suite(const SuiteOptions& o) {
  std::vector<Check> out;
  const std::vector<std::pair<std::string, Graph>> graphs{
      {"K3", Graph::complete(3)}, {"path-4", Graph::path(4)}, {"diamond-4", diamond()}};
  for (const auto& [name, g] : graphs) {
    auto p = synthetic_problem(g, Family::kRidge, 20, 50, 0.1, 31);
    StepConfig cfg{step_size_bound(p->lipschitz), Variant::kDsba, {}};
    std::vector<NodeState> dense, sparse;
    for (int n = 0; n < g.n_nodes(); ++n) {
      dense.push_back(init_node(p->ops[n], p->z0, p->lambda, n, 7));
      sparse.push_back(init_node(p->ops[n], p->z0, p->lambda, n, 7));
    }
    SparseProtocol proto(g, p->mixing, cfg, sparse, p->z0);
    double worst = 0.0;
    for (int r = 0; r < o.equivalence_rounds; ++r) {
      stochastic_round(dense, p->mixing, cfg);
      proto.round(sparse);
      for (std::size_t n = 0; n < dense.size(); ++n)
        worst = std::max(worst, (dense[n].z_curr - sparse[n].z_curr).cwiseAbs().maxCoeff());
    }
    out.push_back({"dense = sparse on " + name, worst <= 1e-9,
                   "max gap " + sci(worst) + " over " + std::to_string(o.equivalence_rounds) + " rounds"});
  }
  return out;
}

std::vector<Check> run_validation(const SuiteOptions& o) {
  std::vector<Check> all;
  for (auto suite : {mixing_suite, resolvent_suite, saga_suite, equivalence_suite}) {
    auto part = suite(o);
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

bool print_checks(std::ostream& os, const std::vector<Check>& checks) {
  std::size_t width = 0;
  for (const auto& c : checks) width = std::max(width, c.name.size());
  bool ok = true;
  for (const auto& c : checks) {
    os << (c.pass ? "PASS  " : "FAIL  ") << std::left << std::setw(static_cast<int>(width)) << c.name << "  "
       << c.detail << '\n';
    ok = ok && c.pass;
  }
  return ok;
}

}  // namespace dsba
