/*
 * Copyright 2026 The expstab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Dense row-major matrix and the two small solvers the library needs: a
// Cholesky solve for normal equations and a cyclic Jacobi eigensolver for
// symmetric matrices.

#ifndef EXPSTAB_LINALG_H_
#define EXPSTAB_LINALG_H_

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace expstab {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// AᵀA.
Matrix gram(const Matrix& a);

// Solves S x = b for symmetric positive definite S. Returns nullopt when the
// factorization meets a non-positive pivot.
std::optional<std::vector<double>> cholesky_solve(const Matrix& s, std::span<const double> b);

struct EigenResult {
  // Ascending.
  std::vector<double> values;
  std::size_t sweeps = 0;
  double off_diagonal_norm = 0.0;
};

// Cyclic Jacobi rotations until the Frobenius norm of the off-diagonal part
// falls below `tolerance` times the Frobenius norm of the input.
EigenResult jacobi_eigenvalues(const Matrix& symmetric, double tolerance = 1e-12,
                               std::size_t max_sweeps = 100);

// Singular values of a (rows >= cols), descending, by one-sided Jacobi
// rotations applied to the columns of `a` until every column pair is
// orthogonal to within `tolerance` relative to the product of their norms.
std::vector<double> jacobi_singular_values(const Matrix& a, double tolerance = 1e-12,
                                           std::size_t max_sweeps = 100);

}  // namespace expstab

#endif  // EXPSTAB_LINALG_H_
