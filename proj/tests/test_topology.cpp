#include "doctest.h"

#include "dsba/topology.hpp"

#include <sstream>

using namespace dsba;

TEST_CASE("random graphs are connected and reproducible") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Graph g = gen_random_graph(10, 0.4, seed);
    CHECK(g.connected());
    CHECK(g == gen_random_graph(10, 0.4, seed));
  }
  CHECK_THROWS_AS(gen_random_graph(30, 0.001, 1, 5), TopologyError);
  CHECK_THROWS_AS(gen_random_graph(3, 0.0, 1), TopologyError);
}

TEST_CASE("edge list round trip") {
  const Graph g = gen_random_graph(8, 0.5, 3);
  std::stringstream ss;
  write_edge_list(ss, g);
  CHECK(read_edge_list(ss) == g);
  std::stringstream bad("3\n0 1\n1 x\n");
  CHECK_THROWS_AS(read_edge_list(bad), TopologyError);
  std::stringstream loop("2\n1 1\n");
  CHECK_THROWS_AS(read_edge_list(loop), TopologyError);
}

TEST_CASE("path-3 mixing matrix by hand") {
  // L eigenvalues {0, 1, 3}; tau = 3.
  const auto m = build_mixing_matrix(Graph::path(3));
  CHECK(m.tau == doctest::Approx(3.0));
  Mat expect(3, 3);
  expect << 2.0 / 3, 1.0 / 3, 0, 1.0 / 3, 1.0 / 3, 1.0 / 3, 0, 1.0 / 3, 2.0 / 3;
  CHECK((m.w - expect).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((m.w_tilde - (m.w + Mat::Identity(3, 3)) / 2).cwiseAbs().maxCoeff() < 1e-15);
  // (I - W)/2 = L/6 -> smallest nonzero eigenvalue 1/6.
  CHECK(m.gamma == doctest::Approx(1.0 / 6.0));
  CHECK(validate_mixing(m, Graph::path(3)).all_pass());
}

TEST_CASE("complete graph mixing") {
  const auto m = build_mixing_matrix(Graph::complete(4));
  // L = 4I - 11^T, lambda_max = 4 -> W = 11^T / 4.
  CHECK((m.w - Mat::Constant(4, 4, 0.25)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(m.gamma == doctest::Approx(0.5));
}

TEST_CASE("single node") {
  const auto m = build_mixing_matrix(Graph(1));
  CHECK(m.w(0, 0) == 1.0);
  CHECK(m.gamma == 1.0);
  CHECK(validate_mixing(m, Graph(1)).all_pass());
}

TEST_CASE("half tau breaks the spectral condition") {
  const Graph g = gen_random_graph(6, 0.5, 2);
  CHECK_THROWS_AS(build_mixing_matrix(g, {0.5, false}), TopologyError);
  const auto m = build_mixing_matrix(g, {0.5, true});
  const auto rep = validate_mixing(m, g);
  CHECK_FALSE(rep.all_pass());
  for (const auto& c : rep.checks) CHECK(c.pass == (c.name != "spectral"));
}

TEST_CASE("disconnected graphs are rejected") {
  Graph g(4);
  g.add_edge(0, 1);
  g.add_edge(2, 3);
  CHECK_FALSE(g.connected());
  CHECK_THROWS_AS(build_mixing_matrix(g), TopologyError);
  CHECK_THROWS_AS(distance_map(g, 0), TopologyError);
}

TEST_CASE("validate_mixing flags off-graph weights and asymmetry") {
  const Graph g = Graph::path(3);
  Mat w = build_mixing_matrix(g).w;
  w(0, 2) = w(2, 0) = 0.01;
  w(0, 0) -= 0.01;
  w(2, 2) -= 0.01;
  auto rep = validate_mixing(mixing_from_weights(w), g);
  CHECK_FALSE(rep.checks[0].pass);
  CHECK(rep.checks[1].pass);

  Mat a = build_mixing_matrix(g).w;
  a(0, 1) += 1e-6;
  a(0, 0) -= 1e-6;
  rep = validate_mixing(mixing_from_weights(a), g);
  CHECK_FALSE(rep.checks[1].pass);
}

TEST_CASE("distance maps") {
  const auto dm = distance_map(Graph::path(3), 0);
  CHECK(dm.xi == std::vector<int>{0, 1, 2});
  CHECK(dm.diameter == 2);
  CHECK(graph_diameter(Graph::complete(5)) == 1);
  CHECK(graph_diameter(Graph::star(4)) == 2);
  CHECK(graph_diameter(Graph::path(6)) == 5);
  CHECK(distance_map(Graph(1), 0).diameter == 0);
}

TEST_CASE("condition numbers") {
  const auto m = build_mixing_matrix(Graph::path(3));
  const auto c = condition_numbers(m, 2.0, 0.5);
  CHECK(c.kappa == doctest::Approx(4.0));
  CHECK(c.kappa_g == doctest::Approx(6.0));
  CHECK_THROWS_AS(condition_numbers(m, 1.0, 0.0), TopologyError);
}
