// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#include "laqd/diffcore/random.hpp"

#include <Eigen/Dense>
#include <stdexcept>

namespace laqd::diff {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  // splitmix64 finaliser over the combined words
  std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

Tensor normal_tensor(Shape shape, double sd, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, sd);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

Tensor orthonormal(std::size_t rows, std::size_t cols, Rng& rng) {
  if (cols > rows) throw std::invalid_argument("orthonormal: need rows >= cols");
  Tensor g = normal_tensor({rows, cols}, 1.0, rng);
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = g.at(i, j);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
  const Eigen::MatrixXd r = qr.matrixQR();
  Tensor out({rows, cols});
  for (std::size_t j = 0; j < cols; ++j) {
    const double s = r(j, j) < 0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < rows; ++i) out.at(i, j) = s * q(i, j);
  }
  return out;
}

Tensor float_normal(Shape shape, double sd, Rng& rng) {
  Tensor t = normal_tensor(std::move(shape), sd, rng);
  round_to_float(t);
  return t;
}

}  // namespace laqd::diff
