#ifndef DSBA_VALIDATION_HPP
#define DSBA_VALIDATION_HPP

#include <ostream>
#include <string>
#include <vector>

namespace dsba {

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct SuiteOptions {
  double tau_scale = 1.0;  // below 1 builds deliberately invalid mixing matrices
  int newton_iters = 20;
  int graphs = 50;
  int resolvent_instances = 1000;  // per family
  int node_states = 200;
  int equivalence_rounds = 300;
};

// 50 seeded graphs, N in 3..12, p in {0.3, 0.4, 0.6}; one check per condition.
std::vector<Check> mixing_suite(const SuiteOptions& o);
// |J(psi) + alpha B(J(psi)) - psi| per family.
std::vector<Check> resolvent_suite(const SuiteOptions& o);
// SAGA unbiasedness and the back-substitution identity on random node states.
std::vector<Check> saga_suite(const SuiteOptions& o);
// Dense vs sparse DSBA on K3, path-4 and diamond-4 (ridge, d = 50, q = 20).
std::vector<Check> equivalence_suite(const SuiteOptions& o);

std::vector<Check> run_validation(const SuiteOptions& o);

// Fixed-width PASS/FAIL table; returns true when every check passed.
bool print_checks(std::ostream& os, const std::vector<Check>& checks);

}  // namespace dsba

#endif  // DSBA_VALIDATION_HPP
