#pragma once

#include <Eigen/Core>

#include <cmath>
#include <limits>

namespace ragtrain {

using Scalar = double;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Numerically stable log(sum(exp(x))).
template <typename Derived>
typename Derived::Scalar logsumexp(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  if (x.size() == 0) return -std::numeric_limits<S>::infinity();
  const S m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((x.array() - m).exp().sum());
}

/// Log-softmax of a logit vector.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> log_softmax(
    const Eigen::MatrixBase<Derived>& logits) {
  return (logits.array() - logsumexp(logits)).matrix();
}

/// Softmax of a logit vector.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(
    const Eigen::MatrixBase<Derived>& logits) {
  const auto ls = log_softmax(logits);
  return ls.array().exp().matrix();
}

/// Mean of a vector; 0 for empty input.
template <typename Derived>
typename Derived::Scalar mean_of(const Eigen::MatrixBase<Derived>& x) {
  if (x.size() == 0) return typename Derived::Scalar(0);
  return x.mean();
}

/// Population standard deviation (divides by N).
template <typename Derived>
typename Derived::Scalar population_std(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  if (x.size() == 0) return S(0);
  const S m = x.mean();
  return std::sqrt((x.array() - m).square().sum() / static_cast<S>(x.size()));
}

}  // namespace ragtrain
