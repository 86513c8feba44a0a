#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include <Eigen/Core>

#include "trendscope/common.hpp"

namespace trendscope {

template <typename Scalar>
using EmbeddingVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Column-per-item storage: rows are embedding dimensions.
template <typename Scalar>
using EmbeddingMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr double kUnitNormTolerance = 1e-6;

namespace detail {

/// Half squared Euclidean distance with a fixed scalar summation order, so
/// that every caller (index scan, canopy, tests) sees bit-identical values.
template <typename Scalar>
double half_sq_distance(const Scalar* a, const Scalar* b, Eigen::Index dim) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < dim; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return 0.5 * acc;
}

}  // namespace detail

/// Returns v / |v|. Throws on empty, zero or non-finite input.
template <typename Derived>
EmbeddingVector<typename Derived::Scalar> normalized_embedding(
    const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  if (v.size() == 0) throw Error("empty embedding");
  if (!v.allFinite()) throw Error("embedding has non-finite entries");
  const double norm = v.template cast<double>().norm();
  if (!(norm > 0.0)) throw Error("zero embedding cannot be normalized");
  EmbeddingVector<Scalar> out = (v.template cast<double>() / norm).template cast<Scalar>();
  return out;
}

template <typename Derived>
bool is_unit_norm(const Eigen::MatrixBase<Derived>& v, double tol = kUnitNormTolerance) {
  return v.allFinite() && std::abs(v.template cast<double>().norm() - 1.0) <= tol;
}

/// Cosine distance on unit vectors, 1 - a.b, evaluated as |a-b|^2 / 2 (the
/// same quantity on the unit sphere). Exactly symmetric and zero on the
/// diagonal; clamped to [0, 2].
template <typename DA, typename DB>
double cosine_distance(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  static_assert(std::is_same_v<typename DA::Scalar, typename DB::Scalar>,
                "mixed-scalar distance");
  if (a.size() != b.size()) throw Error("embedding dimension mismatch");
  const EmbeddingVector<typename DA::Scalar> ea = a, eb = b;
  const double d = detail::half_sq_distance(ea.data(), eb.data(), ea.size());
  return std::min(2.0, std::max(0.0, d));
}

/// Cosine distance between arbitrary non-zero vectors (not assumed unit).
/// Zero vectors: distance 0 to another zero vector, 1 to anything else.
template <typename DA, typename DB>
double general_cosine_distance(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  if (a.size() != b.size()) throw Error("vector dimension mismatch");
  const auto da = a.template cast<double>().eval();
  const auto db = b.template cast<double>().eval();
  const double na = da.norm(), nb = db.norm();
  if (na == 0.0 || nb == 0.0) return (na == 0.0 && nb == 0.0) ? 0.0 : 1.0;
  const double cos = da.dot(db) / (na * nb);
  return std::min(2.0, std::max(0.0, 1.0 - cos));
}

/// Bag-of-words hash embedding: each lowercased whitespace token draws a
/// seeded pseudo-random vector in [-1, 1]^dim; the sum is normalized. Texts
/// sharing words land near each other. Deterministic for (text, dim, seed).
EmbeddingVector<float> hash_embedding(std::string_view text, int dim, std::uint64_t seed);

}  // namespace trendscope
