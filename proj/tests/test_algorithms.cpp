#include "doctest.h"

#include "test_util.hpp"

#include <cmath>

using namespace dsba;
using namespace testutil;

namespace {

Mat stack(const std::vector<NodeState>& nodes, bool prev = false) {
  Mat z(nodes.size(), nodes.front().dim());
  for (std::size_t n = 0; n < nodes.size(); ++n) z.row(n) = (prev ? nodes[n].z_prev : nodes[n].z_curr).transpose();
  return z;
}

}  // namespace

TEST_CASE("init_node fills the table") {
  auto toy = make_toy(Family::kRidge, 1, 6, 8, 0.5, 3, 0.0);
  const NodeState s = init_node(toy->ops[0], Vec::Zero(8), 0.0, 0, 1);
  for (std::size_t i = 0; i < s.q(); ++i) {
    const Sample& smp = toy->ops[0][i].sample();
    const Vec expect = -smp.label * smp.features.to_dense(8);
    CHECK((s.table.expanded(i).to_dense(8) - expect).norm() < 1e-15);
  }
  CHECK((s.table.exact_mean() - s.table.mean()).norm() < 1e-12);
  CHECK(s.delta_prev.empty());
  Shard empty;
  CHECK_THROWS_AS(init_node(empty, Vec::Zero(8), 0.0, 0, 1), AlgorithmError);
}

TEST_CASE("psi at t = 0") {
  auto toy = make_toy(Family::kRidge, 1, 5, 4, 1.0, 2);
  const Vec z0 = Vec::Constant(4, 0.3);
  const NodeState s = init_node(toy->ops[0], z0, toy->lambda, 0, 1);
  const Eigen::RowVectorXd one = Eigen::RowVectorXd::Ones(1);
  const Vec psi = compute_psi_initial(s, {&z0}, one, 0.1, 2);
  const Vec expect = z0 + 0.1 * (s.table.expanded(2).to_dense(4) - s.table.mean());
  CHECK((psi - expect).norm() < 1e-15);

  // q = 1: phi_i = phi_bar, and a consensus start stays put under averaging.
  auto one_sample = make_toy(Family::kRidge, 2, 1, 4, 1.0, 5);
  const NodeState a = init_node(one_sample->ops[0], z0, 0.0, 0, 1);
  Eigen::RowVectorXd half(2);
  half << 0.5, 0.5;
  CHECK((compute_psi_initial(a, {&z0, &z0}, half, 0.2, 0) - z0).norm() < 1e-15);
  CHECK_THROWS_AS(compute_psi_initial(a, {&z0, nullptr}, half, 0.2, 0), AlgorithmError);
}

TEST_CASE("psi at t >= 1 reduces at a stationary consensus") {
  auto toy = make_toy(Family::kRidge, 1, 4, 6, 1.0, 9);
  const Vec zbar = Vec::Constant(6, -0.2);
  NodeState s = init_node(toy->ops[0], zbar, 0.0, 0, 1);
  s.t = 3;
  const Eigen::RowVectorXd one = Eigen::RowVectorXd::Ones(1);
  const Vec psi = compute_psi(s, {&zbar}, {&zbar}, one, 0.05, 1);
  CHECK((psi - (zbar + 0.05 * s.table.expanded(1).to_dense(6))).norm() < 1e-15);
}

TEST_CASE("back substitution identity and table bookkeeping") {
  auto toy = make_toy(Family::kRidge, 3, 7, 10, 0.3, 4, 0.05);
  const auto m = build_mixing_matrix(Graph::path(3));
  std::mt19937_64 rng(8);
  auto nodes = init_all(*toy, Vec::Zero(toy->dim), 2);
  StepConfig cfg{0.04, Variant::kDsba, {}};
  for (int r = 0; r < 5; ++r) stochastic_round(nodes, m, cfg);
  for (int trial = 0; trial < 50; ++trial) {
    NodeState s = nodes[trial % 3];
    s.z_curr = random_vec(toy->dim, rng);
    s.z_prev = random_vec(toy->dim, rng);
    const Vec mix = random_vec(toy->dim, rng);
    const std::size_t i = draw_sample(s);
    const SparseVec dprev = s.delta_prev;
    const Vec zc = s.z_curr;
    const double a = cfg.alpha, l = s.lambda, kq = (s.q() - 1.0) / s.q();
    const auto r = dsba_node_step(s, psi_from_mix(s, mix, a, i), a, i);
    Vec rhs = mix + a * l * zc + a * kq * dprev.to_dense(toy->dim) - a * r.delta.to_dense(toy->dim);
    rhs /= 1.0 + a * l;
    CHECK((rhs - r.z_next).norm() <= 1e-9);
    CHECK((s.table.exact_mean() - s.table.mean()).norm() <= 1e-10);
    for (auto k : r.delta.idx) {
      const auto& sup = (*s.ops)[i].sample().features.idx;
      CHECK(std::binary_search(sup.begin(), sup.end(), k));
    }
  }
}

TEST_CASE("saga estimate is unbiased") {
  auto toy = make_toy(Family::kLogistic, 1, 9, 6, 0.5, 6, 0.1);
  std::mt19937_64 rng(2);
  NodeState s = init_node(toy->ops[0], random_vec(6, rng), toy->lambda, 0, 3);
  for (int k = 0; k < 20; ++k) {
    s.z_curr = random_vec(6, rng);
    const std::size_t i = draw_sample(s);
    dsba_node_step(s, psi_from_mix(s, random_vec(6, rng), 0.1, i), 0.1, i);
  }
  const Vec z = random_vec(6, rng);
  Vec avg = Vec::Zero(6);
  for (std::size_t i = 0; i < s.q(); ++i) avg += saga_estimate(s, z, i);
  avg /= static_cast<double>(s.q());
  CHECK((avg - local_operator(*s.ops, z, s.lambda)).norm() <= 1e-10);
}

TEST_CASE("single node fixed point") {
  auto toy = make_toy(Family::kRidge, 1, 5, 4, 1.0, 12, 0.01);
  const Vec zs = solve_affine(*toy);
  auto nodes = init_all(*toy, zs, 1);
  const auto m = build_mixing_matrix(Graph(1));
  for (int r = 0; r < 50; ++r) stochastic_round(nodes, m, {0.04, Variant::kDsba, {}});
  CHECK((nodes[0].z_curr - zs).norm() < 1e-12);
}

TEST_CASE("dsa and dsba agree to second order on the first step") {
  auto toy = make_toy(Family::kRidge, 3, 5, 6, 1.0, 14, 0.0);
  const auto m = build_mixing_matrix(Graph::complete(3));
  std::mt19937_64 rng(3);
  const Vec z0 = random_vec(toy->dim, rng);
  double prev_gap = 0.0;
  for (double alpha : {1e-2, 1e-3}) {
    auto a = init_all(*toy, z0, 4);
    auto b = init_all(*toy, z0, 4);
    stochastic_round(a, m, {alpha, Variant::kDsba, {}});
    stochastic_round(b, m, {alpha, Variant::kDsa, {}});
    const double gap = (stack(a) - stack(b)).norm();
    if (prev_gap > 0.0) CHECK(gap < prev_gap / 50.0);
    prev_gap = gap;
  }
}

TEST_CASE("dsa on one node is saga") {
  auto toy = make_toy(Family::kRidge, 1, 6, 5, 1.0, 15, 0.02);
  const auto m = build_mixing_matrix(Graph(1));
  auto nodes = init_all(*toy, Vec::Zero(5), 6);
  NodeState mirror = nodes[0];
  const double alpha = 0.05;
  for (int r = 0; r < 40; ++r) {
    const std::size_t i = draw_sample(mirror);
    const Operator& op = (*mirror.ops)[i];
    Vec expect = mirror.z_curr - alpha * saga_estimate(mirror, mirror.z_curr, i);
    mirror.table.replace(i, op.value(mirror.z_curr));
    mirror.z_curr = expect;
    stochastic_round(nodes, m, {alpha, Variant::kDsa, {}});
    CHECK((nodes[0].z_curr - expect).norm() < 1e-12);
  }
}

TEST_CASE("stacked recursion matches a dense round") {
  auto toy = make_toy(Family::kRidge, 4, 6, 8, 0.5, 16, 0.03);
  const auto g = Graph::path(4);
  const auto m = build_mixing_matrix(g);
  const int n = 4;
  for (Variant v : {Variant::kDsba, Variant::kDsa}) {
    auto nodes = init_all(*toy, Vec::Zero(toy->dim), 8);
    const double a = 0.04, l = toy->lambda;
    StepConfig cfg{a, v, {}};
    for (int r = 0; r < 3; ++r) stochastic_round(nodes, m, cfg);
    for (int r = 0; r < 10; ++r) {
      const Mat zc = stack(nodes), zp = stack(nodes, true);
      Mat dprev(n, toy->dim);
      for (int k = 0; k < n; ++k) dprev.row(k) = nodes[k].delta_prev.to_dense(toy->dim).transpose();
      stochastic_round(nodes, m, cfg);
      Mat g_term(n, toy->dim);
      for (int k = 0; k < n; ++k) {
        const double kq = (nodes[k].q() - 1.0) / nodes[k].q();
        g_term.row(k) = a * (kq * dprev.row(k) - nodes[k].delta_prev.to_dense(toy->dim).transpose());
      }
      const Mat wt = m.w_tilde, id = Mat::Identity(n, n);
      Mat expect;
      if (v == Variant::kDsba)
        expect = ((2 * wt + a * l * id) * zc - wt * zp + g_term) / (1 + a * l);
      else
        expect = (2 * wt - a * l * id) * zc - (wt - a * l * id) * zp + g_term;
      CHECK((expect - stack(nodes)).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("extra") {
  SUBCASE("single node matches the direct recursion") {
    auto toy = make_toy(Family::kRidge, 1, 5, 4, 1.0, 17, 0.1);
    auto nodes = init_all(*toy, Vec::Zero(4), 1);
    const Mat one = Mat::Ones(1, 1);
    const double a = 0.3;
    auto grad = [&](const Vec& z) { return local_operator(toy->ops[0], z, toy->lambda); };
    Vec zp = Vec::Zero(4), zc = zp - a * grad(zp);
    extra_round(nodes, one, one, a);
    CHECK((nodes[0].z_curr - zc).norm() < 1e-14);
    for (int r = 0; r < 20; ++r) {
      const Vec direct = 2 * zc - zp - a * (grad(zc) - grad(zp));
      zp = zc;
      zc = direct;
      extra_round(nodes, one, one, a);
      CHECK((nodes[0].z_curr - zc).norm() < 1e-12);
    }
  }
  SUBCASE("optimum is a fixed point") {
    auto toy = make_toy(Family::kRidge, 3, 5, 4, 1.0, 18, 0.1);
    const Vec zs = solve_affine(*toy);
    auto nodes = init_all(*toy, zs, 1);
    const auto m = build_mixing_matrix(Graph::path(3));
    // Local operators do not vanish at z*, so the first step leaves consensus.
    for (int r = 0; r < 3000; ++r) extra_round(nodes, m.w, m.w_tilde, 0.2);
    for (const auto& s : nodes) CHECK((s.z_curr - zs).norm() < 1e-9);
  }
  SUBCASE("zero step is pure mixing") {
    auto toy = make_toy(Family::kRidge, 3, 5, 4, 1.0, 19, 0.1);
    std::mt19937_64 rng(1);
    auto nodes = init_all(*toy, Vec::Zero(4), 1);
    for (auto& s : nodes) s.z_curr = random_vec(4, rng);
    const auto m = build_mixing_matrix(Graph::path(3));
    extra_round(nodes, m.w, m.w_tilde, 0.0);
    for (int r = 0; r < 3; ++r) {
      const Mat zc = stack(nodes), zp = stack(nodes, true);
      extra_round(nodes, m.w, m.w_tilde, 0.0);
      CHECK((stack(nodes) - (2 * m.w_tilde * zc - m.w_tilde * zp)).norm() < 1e-14);
    }
  }
}

TEST_CASE("point-saga") {
  // One coordinate keeps mu = L, so 1000 steps contract by (1 + 1/24)^-1000.
  auto toy = make_toy(Family::kRidge, 1, 2, 1, 1.0, 21, 0.0);
  const auto m = build_mixing_matrix(Graph(1));
  const double alpha = step_size_bound(shard_lipschitz(toy->ops, toy->lambda));
  auto a = init_all(*toy, Vec::Zero(1), 5);
  auto b = init_all(*toy, Vec::Zero(1), 5);
  auto c = init_all(*toy, Vec::Zero(1), 5);
  for (int r = 0; r < 1000; ++r) {
    stochastic_round(a, m, {alpha, Variant::kDsba, {}});
    const std::size_t i = draw_sample(b[0]);
    pointsaga_step(b, alpha, i);
    pointsaga_classic_step(c[0], alpha, draw_sample(c[0]));
    CHECK(a[0].z_curr == b[0].z_curr);
    CHECK((a[0].z_curr - c[0].z_curr).norm() < 1e-9);
  }
  CHECK((a[0].z_curr - solve_affine(*toy)).norm() < 1e-6);
  auto two = init_all(*make_toy(Family::kRidge, 2, 2, 2, 1.0, 3), Vec::Zero(2), 1);
  CHECK_THROWS_AS(pointsaga_step(two, alpha, 0), AlgorithmError);
}

TEST_CASE("step size bound") {
  CHECK(step_size_bound(1.0) == doctest::Approx(1.0 / 24.0));
  CHECK(step_size_bound(24.0) == doctest::Approx(1.0 / 576.0));
  CHECK_THROWS_AS(step_size_bound(0.0), AlgorithmError);
  auto toy = make_toy(Family::kRidge, 2, 5, 10, 0.3, 1, 0.0);
  CHECK(step_size_bound(shard_lipschitz(toy->ops, 0.0)) == doctest::Approx(1.0 / 24.0));
}
