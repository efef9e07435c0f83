// Copyright 2026 The flatcar Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FLATCAR__BANDED_HPP_
#define FLATCAR__BANDED_HPP_

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "flatcar/errors.hpp"

namespace flatcar
{

/**
 * Square band matrix with LU factorization by partial pivoting.
 *
 * Row i stores columns [i - lower, i + upper + lower]; the extra `lower`
 * superdiagonals hold the fill-in produced by row interchanges. Both A x = b
 * and A^T x = b can be solved from one factorization.
 */
class BandedLu
{
public:
  BandedLu() = default;

  BandedLu(int n, int lower, int upper) { resize(n, lower, upper); }

  void resize(int n, int lower, int upper)
  {
    n_ = n;
    lower_ = lower;
    upper_ = upper;
    width_ = 2 * lower + upper + 1;
    data_.assign(static_cast<std::size_t>(n) * width_, 0.0);
    pivots_.assign(n, 0);
    factored_ = false;
  }

  void set_zero()
  {
    std::fill(data_.begin(), data_.end(), 0.0);
    factored_ = false;
  }

  int size() const { return n_; }
  bool factored() const { return factored_; }

  /// Entry access; (i, j) must lie within the original band.
  double & operator()(int i, int j) { return data_[index(i, j)]; }
  double operator()(int i, int j) const { return data_[index(i, j)]; }

  void factorize()
  {
    const int kmax = lower_ + upper_;
    for (int j = 0; j < n_; ++j) {
      const int last_row = std::min(n_ - 1, j + lower_);
      int p = j;
      double best = std::abs(at(j, j));
      for (int i = j + 1; i <= last_row; ++i) {
        const double mag = std::abs(at(i, j));
        if (mag > best) {
          best = mag;
          p = i;
        }
      }
      if (!(best > 0.0) || !std::isfinite(best)) {
        throw NumericalError("banded LU: singular or non-finite pivot");
      }
      pivots_[j] = p;
      const int last_col = std::min(n_ - 1, j + kmax);
      if (p != j) {
        for (int c = j; c <= last_col; ++c) {
          std::swap(at(j, c), at(p, c));
        }
      }
      const double inv_pivot = 1.0 / at(j, j);
      for (int i = j + 1; i <= last_row; ++i) {
        const double l = at(i, j) * inv_pivot;
        at(i, j) = l;
        if (l != 0.0) {
          for (int c = j + 1; c <= last_col; ++c) {
            at(i, c) -= l * at(j, c);
          }
        }
      }
    }
    factored_ = true;
  }

  /// Solves A X = B in place; B has n rows and any number of columns.
  template <typename Derived>
  void solve(Eigen::MatrixBase<Derived> & b) const
  {
    require_factored();
    const int kmax = lower_ + upper_;
    for (int j = 0; j < n_; ++j) {
      if (pivots_[j] != j) {
        b.row(j).swap(b.row(pivots_[j]));
      }
      const int last_row = std::min(n_ - 1, j + lower_);
      for (int i = j + 1; i <= last_row; ++i) {
        const double l = at(i, j);
        if (l != 0.0) {
          b.row(i) -= l * b.row(j);
        }
      }
    }
    for (int i = n_ - 1; i >= 0; --i) {
      const int last_col = std::min(n_ - 1, i + kmax);
      for (int c = i + 1; c <= last_col; ++c) {
        const double u = at(i, c);
        if (u != 0.0) {
          b.row(i) -= u * b.row(c);
        }
      }
      b.row(i) /= at(i, i);
    }
  }

  /// Solves A^T X = B in place.
  template <typename Derived>
  void solve_transpose(Eigen::MatrixBase<Derived> & b) const
  {
    require_factored();
    const int kmax = lower_ + upper_;
    // U^T z = b
    for (int i = 0; i < n_; ++i) {
      const int first = std::max(0, i - kmax);
      for (int r = first; r < i; ++r) {
        const double u = at(r, i);
        if (u != 0.0) {
          b.row(i) -= u * b.row(r);
        }
      }
      b.row(i) /= at(i, i);
    }
    // L^T with the interchanges undone in reverse order
    for (int j = n_ - 1; j >= 0; --j) {
      const int last_row = std::min(n_ - 1, j + lower_);
      for (int i = j + 1; i <= last_row; ++i) {
        const double l = at(i, j);
        if (l != 0.0) {
          b.row(j) -= l * b.row(i);
        }
      }
      if (pivots_[j] != j) {
        b.row(j).swap(b.row(pivots_[j]));
      }
    }
  }

private:
  std::size_t index(int i, int j) const
  {
    return static_cast<std::size_t>(i) * width_ + static_cast<std::size_t>(j - i + lower_);
  }
  double & at(int i, int j) { return data_[index(i, j)]; }
  double at(int i, int j) const { return data_[index(i, j)]; }

  void require_factored() const
  {
    if (!factored_) {
      throw ContractViolation("banded LU: solve called before factorize");
    }
  }

  int n_{0};
  int lower_{0};
  int upper_{0};
  int width_{1};
  std::vector<double> data_;
  std::vector<int> pivots_;
  bool factored_{false};
};

}  // namespace flatcar

#endif  // FLATCAR__BANDED_HPP_
