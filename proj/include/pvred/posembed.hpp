#pragma once

// Sinusoidal temporal position embedding over 1-based frame indices.
//
// Component pairs are laid out (cos, sin) with angular frequency
// 10000^(-2i/d) for pair i = 1..ceil(d/2). An odd dimension keeps only the cos
// half of the last pair.

#include <cmath>
#include <string>

#include <Eigen/Core>

#include "pvred/error.hpp"

namespace pvred::posembed {

/// Angular frequency of the 1-based pair `pair` in a d-dimensional embedding.
inline double pair_frequency(long pair, long dim) {
  return std::pow(10000.0, -2.0 * static_cast<double>(pair) / static_cast<double>(dim));
}

inline Eigen::VectorXd embed_position(long t, long dim) {
  if (t < 1) throw InvalidInput("embed_position: frame index must be >= 1, got " + std::to_string(t));
  if (dim < 1) throw InvalidInput("embed_position: dimension must be >= 1, got " + std::to_string(dim));
  Eigen::VectorXd p(dim);
  for (long k = 0; k < dim; ++k) {
    const double angle = static_cast<double>(t) * pair_frequency(k / 2 + 1, dim);
    p(k) = (k % 2 == 0) ? std::cos(angle) : std::sin(angle);
  }
  return p;
}

/// Columns are embed_position(first, dim) .. embed_position(first + count - 1, dim).
inline Eigen::MatrixXd position_table(long first, long count, long dim) {
  Eigen::MatrixXd table(dim, count);
  for (long c = 0; c < count; ++c) table.col(c) = embed_position(first + c, dim);
  return table;
}

/// The linear map M_k with M_k * embed_position(t, d) == embed_position(t + k, d)
/// for every t. Requires an even dimension: a lone trailing cos component has
/// no linear shift.
inline Eigen::MatrixXd offset_map(long offset, long dim) {
  if (dim < 2 || dim % 2 != 0)
    throw InvalidInput("offset_map: dimension must be even and >= 2, got " + std::to_string(dim));
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim, dim);
  for (long pair = 1; pair <= dim / 2; ++pair) {
    const double angle = static_cast<double>(offset) * pair_frequency(pair, dim);
    const double c = std::cos(angle), s = std::sin(angle);
    const long i = 2 * (pair - 1);
    // acts on (cos, sin)
    m(i, i) = c;
    m(i, i + 1) = -s;
    m(i + 1, i) = s;
    m(i + 1, i + 1) = c;
  }
  return m;
}

}  // namespace pvred::posembed
