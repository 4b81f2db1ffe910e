#include "dsba/operators.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace dsba {

namespace {

// Logistic link pieces for label y in {-1, +1}:
//   e(t)  = -y / (1 + exp(y t))
//   e'(t) = -y e(t) - e(t)^2
double logistic_e(double y, double t) { return -y / (1.0 + std::exp(y * t)); }
double logistic_de(double y, double e) { return -y * e - e * e; }

}  // namespace

Family parse_family(const std::string& name) {
  if (name == "ridge") return Family::kRidge;
  if (name == "logistic") return Family::kLogistic;
  if (name == "auc") return Family::kAuc;
  throw OperatorError("unknown operator family '" + name + "'");
}

std::string to_string(Family f) {
  switch (f) {
    case Family::kRidge: return "ridge";
    case Family::kLogistic: return "logistic";
    case Family::kAuc: return "auc";
  }
  return "?";
}

Operator::Operator(Family family, const Sample& sample, int data_dim, double positive_ratio)
    : family_(family),
      sample_(&sample),
      data_dim_(data_dim),
      dim_(family == Family::kAuc ? data_dim + 3 : data_dim),
      p_(positive_ratio),
      norm2_(sample.features.squared_norm()) {
  if (data_dim < 1) throw OperatorError("operator: dimension must be positive");
  if (!sample.features.idx.empty() && sample.features.idx.back() >= data_dim)
    throw OperatorError("operator: sample index beyond dimension");
  if (family == Family::kLogistic || family == Family::kAuc) {
    if (sample.label != 1.0 && sample.label != -1.0)
      throw OperatorError(to_string(family) + " operator needs a +1/-1 label");
  }
  if (family == Family::kAuc && !(p_ > 0.0 && p_ < 1.0))
    throw OperatorError("auc operator needs a positive ratio in (0, 1)");
}

void Operator::check_dim(const Vec& z) const {
  if (z.size() != dim_)
    throw OperatorError("dimension mismatch: expected " + std::to_string(dim_) + ", got " +
                        std::to_string(z.size()));
}

ComponentValue Operator::value(const Vec& z) const {
  check_dim(z);
  const double s = predictor(z);
  const double y = sample_->label;
  ComponentValue v;
  switch (family_) {
    case Family::kRidge:
      v.coef = s - y;
      break;
    case Family::kLogistic:
      v.coef = logistic_e(y, s);
      break;
    case Family::kAuc: {
      const double za = z[data_dim_], zb = z[data_dim_ + 1], th = z[data_dim_ + 2];
      if (y > 0) {
        const double c = 2.0 * (1.0 - p_);
        v.coef = c * ((s - za) - (1.0 + th));
        v.tail = {-c * (s - za), 0.0, c * p_ * th + c * s};
      } else {
        const double c = 2.0 * p_;
        v.coef = c * ((s - zb) + (1.0 + th));
        v.tail = {0.0, -c * (s - zb), c * (1.0 - p_) * th - c * s};
      }
      break;
    }
  }
  return v;
}

void Operator::add_scaled(const ComponentValue& v, double scale, Vec& out) const {
  sample_->features.axpy_into(scale * v.coef, out);
  if (family_ == Family::kAuc)
    for (int k = 0; k < 3; ++k) out[data_dim_ + k] += scale * v.tail[k];
}

SparseVec Operator::expand(const ComponentValue& v) const {
  SparseVec out;
  const auto& f = sample_->features;
  out.idx = f.idx;
  out.val.reserve(f.nnz() + 3);
  for (double x : f.val) out.val.push_back(v.coef * x);
  if (family_ == Family::kAuc)
    for (int k = 0; k < 3; ++k) out.push(data_dim_ + k, v.tail[k]);
  return out;
}

Vec Operator::eval(const Vec& z, double lambda) const {
  check_dim(z);
  Vec out = lambda * z;
  add_scaled(value(z), 1.0, out);
  return out;
}

Vec Operator::resolvent(double alpha, const Vec& psi, const ResolventOptions& opts) const {
  check_dim(psi);
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw OperatorError("resolvent: alpha must be positive");
  const auto& a = sample_->features;
  const double y = sample_->label;
  const double s0 = a.dot(psi);
  Vec z = psi;

  switch (family_) {
    case Family::kRidge: {
      const double s = (alpha * y * norm2_ + s0) / (1.0 + alpha * norm2_);
      a.axpy_into(-alpha * (s - y), z);
      break;
    }
    case Family::kLogistic: {
      // Scalar root of g(t) = t + alpha |a|^2 e(t) - s0, then z = psi - (s0 - t)/|a|^2 a.
      if (norm2_ == 0.0) break;
      const double scale = alpha * norm2_;
      auto g = [&](double t) { return t + scale * logistic_e(y, t) - s0; };
      // |e| <= 1 brackets the root.
      const double lo = s0 - scale, hi = s0 + scale;
      double t = 0.0;
      bool diverged = false;
      for (int k = 0; k < opts.newton_iters; ++k) {
        const double e = logistic_e(y, t);
        const double step = (t + scale * e - s0) / (1.0 + scale * logistic_de(y, e));
        const double next = t - step;
        if (!std::isfinite(next) || next < lo - 1.0 || next > hi + 1.0) {
          diverged = true;
          break;
        }
        t = next;
        if (std::abs(step) < opts.newton_tol) break;
      }
      if (diverged) {
        double left = lo, right = hi;
        for (int k = 0; k < 60; ++k) {
          const double mid = 0.5 * (left + right);
          (g(mid) > 0.0 ? right : left) = mid;
        }
        t = 0.5 * (left + right);
      }
      a.axpy_into(-(s0 - t) / norm2_, z);
      break;
    }
    case Family::kAuc: {
      const int d = data_dim_;
      const double za = psi[d], zb = psi[d + 1], th = psi[d + 2];
      const double q2 = 2.0 * p_ * (1.0 - p_) * alpha;
      std::array<double, 4> sol{};
      if (y > 0) {
        const double c = 2.0 * (1.0 - p_) * alpha;
        const double cn = c * norm2_;
        sol = solve4({{{1.0 + cn, -cn, 0.0, -cn},
                       {-c, 1.0 + c, 0.0, 0.0},
                       {0.0, 0.0, 1.0, 0.0},
                       {c, 0.0, 0.0, 1.0 + q2}}},
                     {s0 + cn, za, zb, th});
        a.axpy_into(-c * ((sol[0] - sol[1]) - (1.0 + sol[3])), z);
      } else {
        const double c = 2.0 * p_ * alpha;
        const double cn = c * norm2_;
        sol = solve4({{{1.0 + cn, 0.0, -cn, cn},
                       {0.0, 1.0, 0.0, 0.0},
                       {-c, 0.0, 1.0 + c, 0.0},
                       {-c, 0.0, 0.0, 1.0 + q2}}},
                     {s0 - cn, za, zb, th});
        a.axpy_into(-c * ((sol[0] - sol[2]) + (1.0 + sol[3])), z);
      }
      z[d] = sol[1];
      z[d + 1] = sol[2];
      z[d + 2] = sol[3];
      break;
    }
  }
  if (!z.allFinite()) throw OperatorError("resolvent produced a non-finite value (alpha=" + std::to_string(alpha) + ")");
  return z;
}

Vec Operator::resolvent_l2(double alpha, double lambda, const Vec& psi, const ResolventOptions& opts) const {
  return wrap_l2_resolvent([&](double a, const Vec& x) { return resolvent(a, x, opts); }, lambda, alpha, psi);
}

void Operator::add_jacobian(const Vec& z, double scale, Mat& out) const {
  check_dim(z);
  const auto& a = sample_->features;
  const double y = sample_->label;
  auto add_outer = [&](double c) {
    for (std::size_t i = 0; i < a.nnz(); ++i)
      for (std::size_t j = 0; j < a.nnz(); ++j) out(a.idx[i], a.idx[j]) += scale * c * a.val[i] * a.val[j];
  };
  switch (family_) {
    case Family::kRidge:
      add_outer(1.0);
      break;
    case Family::kLogistic:
      add_outer(logistic_de(y, logistic_e(y, predictor(z))));
      break;
    case Family::kAuc: {
      const int d = data_dim_;
      const int ia = d, ib = d + 1, it = d + 2;
      const int off = y > 0 ? ia : ib;  // the offset this sample couples to
      const double c = y > 0 ? 2.0 * (1.0 - p_) : 2.0 * p_;
      const double sgn = y > 0 ? -1.0 : 1.0;  // sign of the (1 + theta) term in coef
      add_outer(c);
      for (std::size_t i = 0; i < a.nnz(); ++i) {
        out(a.idx[i], off) += scale * -c * a.val[i];
        out(a.idx[i], it) += scale * sgn * c * a.val[i];
        out(off, a.idx[i]) += scale * -c * a.val[i];
        out(it, a.idx[i]) += scale * -sgn * c * a.val[i];
      }
      out(off, off) += scale * c;
      out(it, it) += scale * 2.0 * p_ * (1.0 - p_);
      break;
    }
  }
}

double Operator::loss(const Vec& z) const {
  const double s = predictor(z);
  switch (family_) {
    case Family::kRidge:
      return 0.5 * (s - sample_->label) * (s - sample_->label);
    case Family::kLogistic: {
      const double m = -sample_->label * s;
      return m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
    }
    case Family::kAuc:
      break;
  }
  throw OperatorError("loss: not defined for the auc operator");
}

double Operator::lipschitz() const {
  switch (family_) {
    case Family::kRidge:
      return norm2_;
    case Family::kLogistic:
      return 0.25 * norm2_;
    case Family::kAuc: {
      // Affine, so L is the spectral norm of the Jacobian on the support plus the tail.
      const auto& a = sample_->features;
      const int k = static_cast<int>(a.nnz());
      Sample local;
      local.label = sample_->label;
      for (int j = 0; j < k; ++j) local.features.push(j, a.val[j]);
      const Operator small(Family::kAuc, local, std::max(k, 1), p_);
      Mat jac = Mat::Zero(small.dim(), small.dim());
      small.add_jacobian(Vec::Zero(small.dim()), 1.0, jac);
      Eigen::JacobiSVD<Mat> svd(jac);
      return svd.singularValues()(0);
    }
  }
  return 0.0;
}

Vec eval(const Operator& op, const Vec& z, double lambda) { return op.eval(z, lambda); }

Vec resolvent_ridge(const Operator& op, double alpha, const Vec& psi) {
  if (op.family() != Family::kRidge) throw OperatorError("resolvent_ridge: wrong family");
  return op.resolvent(alpha, psi);
}

Vec resolvent_logistic(const Operator& op, double alpha, const Vec& psi, int newton_iters) {
  if (op.family() != Family::kLogistic) throw OperatorError("resolvent_logistic: wrong family");
  if (newton_iters < 1) throw OperatorError("resolvent_logistic: need at least one Newton iteration");
  ResolventOptions opts;
  opts.newton_iters = newton_iters;
  return op.resolvent(alpha, psi, opts);
}

Vec resolvent_auc(const Operator& op, double alpha, const Vec& psi) {
  if (op.family() != Family::kAuc) throw OperatorError("resolvent_auc: wrong family");
  return op.resolvent(alpha, psi);
}

double l2_shrink_factor(double lambda, double alpha) { return 1.0 - lambda * alpha / (1.0 + lambda * alpha); }

Vec wrap_l2_resolvent(const Resolvent& resolvent_of_b, double lambda, double alpha, const Vec& z) {
  if (lambda < 0.0) throw OperatorError("wrap_l2_resolvent: lambda must be non-negative");
  if (!(alpha > 0.0)) throw OperatorError("wrap_l2_resolvent: alpha must be positive");
  const double rho = l2_shrink_factor(lambda, alpha);
  return resolvent_of_b(rho * alpha, rho * z);
}

double strong_monotonicity_estimate(const Operator& op, double lambda, int trials, std::uint64_t seed) {
  if (trials < 1) throw OperatorError("strong_monotonicity_estimate: need at least one trial");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double best = std::numeric_limits<double>::infinity();
  for (int t = 0; t < trials; ++t) {
    Vec x(op.dim()), y(op.dim());
    for (int k = 0; k < op.dim(); ++k) {
      x[k] = gauss(rng);
      y[k] = gauss(rng);
    }
    const Vec diff = x - y;
    const double denom = diff.squaredNorm();
    if (denom == 0.0) continue;
    best = std::min(best, (op.eval(x, lambda) - op.eval(y, lambda)).dot(diff) / denom);
  }
  return best;
}

std::array<double, 4> solve4(std::array<std::array<double, 4>, 4> a, std::array<double, 4> b) {
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (std::abs(a[piv][col]) < 1e-300) throw OperatorError("solve4: singular system");
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    for (int r = col + 1; r < 4; ++r) {
      const double f = a[r][col] / a[col][col];
      for (int c = col; c < 4; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::array<double, 4> x{};
  for (int r = 3; r >= 0; --r) {
    double s = b[r];
    for (int c = r + 1; c < 4; ++c) s -= a[r][c] * x[c];
    x[r] = s / a[r][r];
  }
  return x;
}

}  // namespace dsba
