#include "doctest.h"

#include "dsba/simulator.hpp"

#include <random>
#include <sstream>

using namespace dsba;

namespace {

Sample sample(std::initializer_list<std::pair<int, double>> entries, double label) {
  Sample s;
  for (auto [i, v] : entries) s.features.push(i, v);
  s.label = label;
  return s;
}

RunConfig small_config(Family fam, Variant v = Variant::kDsba) {
  RunConfig c;
  c.variant = v;
  c.family = fam;
  c.n_nodes = 4;
  c.edge_prob = 0.6;
  SyntheticSpec s;
  s.kind = fam == Family::kRidge ? SyntheticKind::kRegression : SyntheticKind::kClassification;
  s.n_samples = 40;
  s.dim = 8;
  s.rho = 0.5;
  c.synthetic = s;
  c.rounds = 60;
  return c;
}

}  // namespace

TEST_CASE("reference solution") {
  SUBCASE("two-sample ridge by hand") {
    Shards sh;
    sh.per_node = {{sample({{0, 1.0}}, 1.0), sample({{1, 1.0}}, -1.0)}};
    sh.dim = 2;
    sh.q_min = sh.total = 2;
    auto p = make_problem(Graph(1), build_mixing_matrix(Graph(1)), sh, Family::kRidge, 0.0);
    const auto ref = reference_solution(*p);
    CHECK(ref.converged);
    CHECK(ref.z[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(ref.z[1] == doctest::Approx(-1.0).epsilon(1e-14));
  }
  SUBCASE("heavy regularization drives z* to zero") {
    auto cfg = small_config(Family::kRidge);
    cfg.lambda = 1e8;
    const auto p = build_problem(cfg);
    CHECK(reference_solution(*p).z.norm() < 1e-7);
  }
  SUBCASE("residual certificate") {
    for (Family fam : {Family::kRidge, Family::kLogistic, Family::kAuc}) {
      for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto cfg = small_config(fam);
        cfg.graph_seed = seed;
        cfg.synthetic->seed = seed;
        const auto p = build_problem(cfg);
        const auto ref = reference_solution(*p);
        CHECK(ref.residual <= 1e-10);
        CHECK(global_operator(*p, ref.z).norm() == doctest::Approx(ref.residual));
      }
    }
  }
}

TEST_CASE("auc score") {
  std::vector<Sample> data{sample({{0, 2.0}}, 1.0), sample({{0, 1.0}}, 1.0), sample({{0, 1.5}}, -1.0),
                           sample({{0, -1.0}}, -1.0)};
  std::vector<const Sample*> ptrs;
  for (const auto& s : data) ptrs.push_back(&s);
  Vec w(1);
  w << 1.0;
  CHECK(auc_score(w, ptrs) == 0.75);
  CHECK(auc_score_bruteforce(w, ptrs) == 0.75);
  CHECK(auc_score(Vec::Zero(1), ptrs) == 0.5);
  data[2].features.val[0] = 0.5;
  CHECK(auc_score(w, ptrs) == 1.0);

  std::vector<const Sample*> one_class{ptrs[0], ptrs[1]};
  CHECK_THROWS_AS(auc_score(w, one_class), ConfigError);

  // Random subsets with deliberate ties.
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> bucket(-3, 3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Sample> pool;
    for (int k = 0; k < 30; ++k) pool.push_back(sample({{0, bucket(rng) * 0.5}, {1, 1.0}}, k % 3 == 0 ? 1.0 : -1.0));
    std::vector<const Sample*> p;
    for (const auto& s : pool) p.push_back(&s);
    Vec v(2);
    v << 1.0, 0.25;
    CHECK(auc_score(v, p) == auc_score_bruteforce(v, p));
  }
}

TEST_CASE("run bookkeeping") {
  const auto cfg = small_config(Family::kRidge);
  const auto p = build_problem(cfg);
  const auto ref = reference_solution(*p);

  SUBCASE("initial row") {
    auto c = cfg;
    c.rounds = 1;
    c.cadence = 1000;
    const auto r = run(*p, c, ref);
    REQUIRE(r.rows.size() == 2);
    CHECK(r.rows[0].round == 0);
    CHECK(r.rows[0].subopt == 1.0);
    CHECK(r.rows[0].cmax_values == 0);
    CHECK(r.rows[1].round == 1);
  }
  SUBCASE("cadence defaults to one pass") {
    const auto r = run(*p, cfg, ref);
    CHECK(r.rows[1].round == static_cast<long>(p->shards.q_min));
    CHECK(r.rows[1].effective_passes == 1.0);
    for (std::size_t k = 1; k < r.rows.size(); ++k) CHECK(r.rows[k].round > r.rows[k - 1].round);
    CHECK(r.rows.back().round == cfg.rounds);
  }
  SUBCASE("two operator touches per node per round") {
    const auto r = run(*p, cfg, ref);
    for (std::size_t n = 0; n < r.counters.size(); ++n) {
      CHECK(r.counters[n].resolves == static_cast<std::uint64_t>(cfg.rounds));
      CHECK(r.counters[n].evals == p->ops[n].size() + static_cast<std::uint64_t>(cfg.rounds));
    }
  }
  SUBCASE("deterministic") {
    std::ostringstream a, b;
    write_metrics_csv(a, run(*p, cfg, ref).rows);
    write_metrics_csv(b, run(*p, cfg, ref).rows);
    CHECK(a.str() == b.str());
    auto other = cfg;
    other.seed = 2;
    std::ostringstream c;
    write_metrics_csv(c, run(*p, other, ref).rows);
    CHECK(a.str() != c.str());
  }
  SUBCASE("sparse matches dense and sends less") {
    auto sparse = cfg;
    sparse.comm = CommMode::kSparse;
    sparse.shadow_check = true;
    const auto rs = run(*p, sparse, ref);
    const auto rd = run(*p, cfg, ref);
    CHECK(rs.shadow_max_gap <= 1e-9);
    CHECK((rs.final_iterates - rd.final_iterates).cwiseAbs().maxCoeff() <= 1e-9);
  }
  SUBCASE("config errors") {
    auto c = cfg;
    c.synthetic.reset();
    CHECK_THROWS_AS(build_problem(c), ConfigError);
    c = cfg;
    c.variant = Variant::kExtra;
    c.comm = CommMode::kSparse;
    CHECK_THROWS_AS(validate_config(c), ConfigError);
    c = cfg;
    c.variant = Variant::kPointSaga;
    CHECK_THROWS_AS(validate_config(c), ConfigError);
  }
}

TEST_CASE("single node started at the optimum stays there") {
  // Rounding noise is never corrected along the telescoped direction, so the
  // gap grows by roughly 1e-14 per round; 50 rounds keeps it well inside.
  for (Family fam : {Family::kRidge, Family::kLogistic, Family::kAuc}) {
    auto cfg = small_config(fam);
    cfg.n_nodes = 1;
    cfg.rounds = 50;
    cfg.cadence = 1;
    auto p = build_problem(cfg);
    const auto ref = reference_solution(*p);
    p->z0 = ref.z;
    const auto r = run(*p, cfg, ref);
    INFO(to_string(fam));
    for (const auto& row : r.rows) CHECK(row.subopt <= 1e-12);
  }
}

TEST_CASE("every variant converges on a small ridge problem") {
  for (Variant v : {Variant::kDsba, Variant::kDsa, Variant::kExtra}) {
    auto cfg = small_config(Family::kRidge, v);
    cfg.rounds = 20000;
    cfg.stop_subopt = 1e-6;
    const auto p = build_problem(cfg);
    const auto ref = reference_solution(*p);
    const auto r = run(*p, cfg, ref);
    INFO(to_string(v));
    CHECK(r.rows.back().subopt <= 1e-6);
    CHECK(r.rows.back().consensus_error <= 1e-6);
  }
}

TEST_CASE("lyapunov terms at the optimum") {
  auto cfg = small_config(Family::kRidge);
  auto p = build_problem(cfg);
  const auto ref = reference_solution(*p);
  LyapunovTracker tracker(*p, ref.z, step_size_bound(p->lipschitz));
  std::vector<NodeState> nodes;
  for (int n = 0; n < p->n_nodes(); ++n) nodes.push_back(init_node(p->ops[n], ref.z, p->lambda, n, 1));
  const auto h = tracker.evaluate(nodes);
  CHECK(h.iterate == doctest::Approx(0.0));
  CHECK(h.table == doctest::Approx(0.0));
  CHECK(h.c > 0.0);
}

TEST_CASE("log-linear fit") {
  std::vector<MetricsRow> rows;
  for (int k = 0; k <= 10; ++k) {
    MetricsRow r;
    r.round = 10 * k;
    r.effective_passes = k;
    r.subopt = std::pow(10.0, -0.1 * r.round);
    rows.push_back(r);
  }
  const auto f = fit_log_subopt(rows, 1e-12, 1.0);
  CHECK(f.slope == doctest::Approx(-0.1));
  CHECK(f.r2 == doctest::Approx(1.0));
  CHECK(passes_to_reach(rows, 1e-5) == 5.0);
}
