#ifndef DSBA_SPARSE_VEC_HPP
#define DSBA_SPARSE_VEC_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace dsba {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Index/value pairs over a fixed dimension. Indices are kept strictly
// increasing by every producer in this library.
struct SparseVec {
  std::vector<std::int32_t> idx;
  std::vector<double> val;

  std::size_t nnz() const { return idx.size(); }
  bool empty() const { return idx.empty(); }

  void push(std::int32_t i, double v) {
    idx.push_back(i);
    val.push_back(v);
  }

  double dot(const Vec& z) const {
    double s = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) s += val[k] * z[idx[k]];
    return s;
  }

  double squared_norm() const {
    double s = 0.0;
    for (double v : val) s += v * v;
    return s;
  }

  // z += scale * this
  void axpy_into(double scale, Vec& z) const {
    for (std::size_t k = 0; k < idx.size(); ++k) z[idx[k]] += scale * val[k];
  }

  Vec to_dense(Eigen::Index dim) const {
    Vec z = Vec::Zero(dim);
    axpy_into(1.0, z);
    return z;
  }

  bool operator==(const SparseVec&) const = default;
};

}  // namespace dsba

#endif  // DSBA_SPARSE_VEC_HPP
