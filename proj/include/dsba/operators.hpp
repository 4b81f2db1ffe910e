#ifndef DSBA_OPERATORS_HPP
#define DSBA_OPERATORS_HPP

#include "dsba/dataset.hpp"
#include "dsba/sparse_vec.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace dsba {

class OperatorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Family { kRidge, kLogistic, kAuc };

Family parse_family(const std::string& name);
std::string to_string(Family f);

// Value of one unregularized component operator in compact form. Every
// family here has a linear predictor, so the output is `coef * a` on the
// sample support plus (auc only) three tail coordinates for [a; b; theta].
struct ComponentValue {
  double coef = 0.0;
  std::array<double, 3> tail{};
};

inline ComponentValue operator-(const ComponentValue& x, const ComponentValue& y) {
  return {x.coef - y.coef, {x.tail[0] - y.tail[0], x.tail[1] - y.tail[1], x.tail[2] - y.tail[2]}};
}

struct ResolventOptions {
  int newton_iters = 20;
  double newton_tol = 1e-14;
};

// One component operator B_{n,i} bound to a sample. The sample is borrowed;
// it must outlive the operator.
//
// Auc points are laid out as z = [w; a; b; theta] with dim = d + 3.
class Operator {
 public:
  Operator(Family family, const Sample& sample, int data_dim, double positive_ratio = 0.5);

  Family family() const { return family_; }
  int dim() const { return dim_; }
  int data_dim() const { return data_dim_; }
  const Sample& sample() const { return *sample_; }
  double p() const { return p_; }

  ComponentValue value(const Vec& z) const;

  // Dense B(z) + lambda z.
  Vec eval(const Vec& z, double lambda = 0.0) const;

  void add_scaled(const ComponentValue& v, double scale, Vec& out) const;
  SparseVec expand(const ComponentValue& v) const;

  // J_{alpha B}(psi) for the unregularized operator.
  Vec resolvent(double alpha, const Vec& psi, const ResolventOptions& opts = {}) const;

  // J_{alpha (B + lambda I)}(psi).
  Vec resolvent_l2(double alpha, double lambda, const Vec& psi, const ResolventOptions& opts = {}) const;

  // out += scale * dB/dz (unregularized).
  void add_jacobian(const Vec& z, double scale, Mat& out) const;

  // Per-sample loss for ridge (squared) and logistic; not defined for auc.
  double loss(const Vec& z) const;

  // Lipschitz constant of the unregularized operator.
  double lipschitz() const;

 private:
  void check_dim(const Vec& z) const;
  double predictor(const Vec& z) const { return sample_->features.dot(z); }

  Family family_;
  const Sample* sample_;
  int data_dim_;
  int dim_;
  double p_;
  double norm2_;
};

Vec eval(const Operator& op, const Vec& z, double lambda = 0.0);
Vec resolvent_ridge(const Operator& op, double alpha, const Vec& psi);
Vec resolvent_logistic(const Operator& op, double alpha, const Vec& psi, int newton_iters = 20);
Vec resolvent_auc(const Operator& op, double alpha, const Vec& psi);

using Resolvent = std::function<Vec(double alpha, const Vec& psi)>;

// J_{alpha (B + lambda I)}(z) = J_{rho alpha B}(rho z), rho = 1 - lambda alpha / (1 + lambda alpha).
Vec wrap_l2_resolvent(const Resolvent& resolvent_of_b, double lambda, double alpha, const Vec& z);
double l2_shrink_factor(double lambda, double alpha);

// min over random pairs of <B^l(x) - B^l(y), x - y> / |x - y|^2.
double strong_monotonicity_estimate(const Operator& op, double lambda, int trials, std::uint64_t seed);

// Solves the 4x4 system by Gaussian elimination with partial pivoting.
std::array<double, 4> solve4(std::array<std::array<double, 4>, 4> a, std::array<double, 4> b);

}  // namespace dsba

#endif  // DSBA_OPERATORS_HPP
