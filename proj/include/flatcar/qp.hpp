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

#ifndef FLATCAR__QP_HPP_
#define FLATCAR__QP_HPP_

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flatcar/errors.hpp"

namespace flatcar
{

/// Bounds at or beyond this magnitude are treated as absent.
inline constexpr double kQpInfinity = 1e20;

/**
 * minimize 1/2 x'Px + q'x  subject to  l <= Ax <= u.
 * P is stored in full (both triangles).
 */
struct QpProblem
{
  Eigen::SparseMatrix<double> P;
  Eigen::VectorXd q;
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd l;
  Eigen::VectorXd u;

  Eigen::Index variables() const { return q.size(); }
  Eigen::Index constraints() const { return l.size(); }

  void validate() const
  {
    const Eigen::Index n = q.size();
    const Eigen::Index m = l.size();
    if (P.rows() != n || P.cols() != n || A.cols() != n || A.rows() != m || u.size() != m) {
      throw InputError("qp: dimension mismatch");
    }
    const Eigen::SparseMatrix<double> diff = P - Eigen::SparseMatrix<double>(P.transpose());
    for (int k = 0; k < diff.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(diff, k); it; ++it) {
        if (std::abs(it.value()) > 1e-12) {
          throw InputError("qp: P is not symmetric");
        }
      }
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      if (std::isnan(l(i)) || std::isnan(u(i)) || l(i) > u(i)) {
        throw InputError("qp: need l <= u in row " + std::to_string(i));
      }
    }
    if (!q.allFinite()) {
      throw InputError("qp: q must be finite");
    }
  }
};

struct QpSettings
{
  double rho{0.1};
  double sigma{1e-6};
  double alpha{1.6};
  double eps_abs{1e-6};
  double eps_rel{1e-6};
  int max_iter{4000};
  double eps_prim_inf{1e-5};
  double eps_dual_inf{1e-5};
  bool adaptive_rho{true};
  int adaptive_rho_interval{25};
  // Refactor only when the suggested rho moves by more than this factor.
  double adaptive_rho_tolerance{5.0};
  bool polish{true};
  double polish_delta{1e-9};
  int polish_refine{5};

  void validate() const
  {
    if (!(rho > 0.0) || !(sigma > 0.0) || !(eps_abs >= 0.0) || !(eps_rel >= 0.0) || max_iter < 1 ||
        !(eps_prim_inf > 0.0) || !(eps_dual_inf > 0.0) || !(adaptive_rho_tolerance > 1.0) ||
        adaptive_rho_interval < 1 || !(polish_delta > 0.0) || polish_refine < 0) {
      throw InputError("qp settings: parameters must be positive");
    }
    if (!(eps_abs > 0.0 || eps_rel > 0.0)) {
      throw InputError("qp settings: need a positive tolerance");
    }
    if (!(alpha > 0.0 && alpha < 2.0)) {
      throw InputError("qp settings: alpha must lie in (0, 2)");
    }
  }
};

enum class QpStatus { kSolved, kMaxIterations, kPrimalInfeasible, kDualInfeasible };

inline std::string_view to_string(QpStatus s)
{
  switch (s) {
    case QpStatus::kSolved:
      return "Solved";
    case QpStatus::kMaxIterations:
      return "MaxIter";
    case QpStatus::kPrimalInfeasible:
      return "PrimalInfeasible";
    case QpStatus::kDualInfeasible:
      return "DualInfeasible";
  }
  return "unknown";
}

struct QpWarmStart
{
  Eigen::VectorXd x;
  Eigen::VectorXd y;
};

struct QpResult
{
  Eigen::VectorXd x;
  Eigen::VectorXd y;  // multipliers of l <= Ax <= u; negative on active lower bounds
  QpStatus status{QpStatus::kMaxIterations};
  int iterations{0};
  double prim_res{0.0};
  double dual_res{0.0};
  bool polished{false};
  int refactorizations{0};
};

namespace detail
{

inline double inf_norm(const Eigen::VectorXd & v) { return v.size() > 0 ? v.cwiseAbs().maxCoeff() : 0.0; }

// Assembles the upper triangle of [[P + sigma I, A'], [A, -diag(1/rho)]].
inline Eigen::SparseMatrix<double> kkt_matrix(
  const Eigen::SparseMatrix<double> & P, const Eigen::SparseMatrix<double> & A, double sigma,
  const Eigen::VectorXd & rho)
{
  const Eigen::Index n = P.rows();
  const Eigen::Index m = A.rows();
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(P.nonZeros() + A.nonZeros() + n + m));
  for (int k = 0; k < P.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(P, k); it; ++it) {
      if (it.row() <= it.col()) {
        t.emplace_back(it.row(), it.col(), it.value());
      }
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    t.emplace_back(i, i, sigma);
  }
  for (int k = 0; k < A.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it) {
      t.emplace_back(it.col(), n + it.row(), it.value());
    }
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    t.emplace_back(n + i, n + i, -1.0 / rho(i));
  }
  Eigen::SparseMatrix<double> K(n + m, n + m);
  K.setFromTriplets(t.begin(), t.end());
  return K;
}

}  // namespace detail

/**
 * Operator-splitting (ADMM) solver. The quasi-definite KKT matrix is factored
 * once and reused; a change of the step size rho refactors it. Equality rows
 * get a stiffer rho and free rows a nearly zero one.
 */
class QpSolver
{
public:
  explicit QpSolver(QpSettings settings = {}) : settings_(settings) { settings_.validate(); }

  const QpSettings & settings() const { return settings_; }

  QpResult solve(const QpProblem & prob, const std::optional<QpWarmStart> & warm = std::nullopt)
  {
    prob.validate();
    const Eigen::Index n = prob.variables();
    const Eigen::Index m = prob.constraints();
    if (warm && (warm->x.size() != n || warm->y.size() != m)) {
      throw InputError("qp: warm start has the wrong dimensions");
    }
    const Eigen::SparseMatrix<double> & P = prob.P;
    const Eigen::SparseMatrix<double> & A = prob.A;
    const Eigen::SparseMatrix<double> At = A.transpose();
    const Eigen::VectorXd l = prob.l.cwiseMax(-kQpInfinity);
    const Eigen::VectorXd u = prob.u.cwiseMin(kQpInfinity);
    const double sigma = settings_.sigma;
    const double alpha = settings_.alpha;

    QpResult res;
    Eigen::VectorXd x = warm ? warm->x : Eigen::VectorXd::Zero(n);
    Eigen::VectorXd y = warm ? warm->y : Eigen::VectorXd::Zero(m);
    Eigen::VectorXd z = (A * x).cwiseMax(l).cwiseMin(u);

    double rho_base = settings_.rho;
    Eigen::VectorXd rho(m);
    auto set_rho = [&](double base) {
      rho_base = std::clamp(base, 1e-6, 1e6);
      for (Eigen::Index i = 0; i < m; ++i) {
        if (l(i) <= -kQpInfinity && u(i) >= kQpInfinity) {
          rho(i) = 1e-6;
        } else if (u(i) - l(i) < 1e-4) {
          rho(i) = 1e3 * rho_base;
        } else {
          rho(i) = rho_base;
        }
      }
    };
    set_rho(rho_base);
    factor(detail::kkt_matrix(P, A, sigma, rho));
    res.refactorizations = 1;

    Eigen::VectorXd rhs(n + m);
    Eigen::VectorXd sol(n + m);
    Eigen::VectorXd x_prev(n);
    Eigen::VectorXd y_prev(m);
    Eigen::VectorXd z_tilde(m);
    Eigen::VectorXd Ax(m);
    Eigen::VectorXd Px(n);
    Eigen::VectorXd Aty(n);

    for (int it = 1; it <= settings_.max_iter; ++it) {
      x_prev = x;
      y_prev = y;
      rhs.head(n) = sigma * x - prob.q;
      rhs.tail(m) = z - y.cwiseQuotient(rho);
      sol = ldlt_.solve(rhs);
      if (!sol.allFinite()) {
        throw NumericalError("qp: KKT solve produced non-finite values");
      }
      z_tilde = z + (sol.tail(m) - y).cwiseQuotient(rho);
      x = alpha * sol.head(n) + (1.0 - alpha) * x_prev;
      const Eigen::VectorXd z_relaxed = alpha * z_tilde + (1.0 - alpha) * z;
      const Eigen::VectorXd z_new = (z_relaxed + y.cwiseQuotient(rho)).cwiseMax(l).cwiseMin(u);
      y += rho.cwiseProduct(z_relaxed - z_new);
      z = z_new;
      res.iterations = it;

      Ax = A * x;
      Px = P * x;
      Aty = At * y;
      const double prim = detail::inf_norm(Ax - z);
      const double dual = detail::inf_norm(Px + prob.q + Aty);
      const double eps_prim =
        settings_.eps_abs + settings_.eps_rel * std::max(detail::inf_norm(Ax), detail::inf_norm(z));
      const double eps_dual =
        settings_.eps_abs +
        settings_.eps_rel * std::max({detail::inf_norm(Px), detail::inf_norm(Aty), detail::inf_norm(prob.q)});
      res.prim_res = prim;
      res.dual_res = dual;
      if (prim <= eps_prim && dual <= eps_dual) {
        res.status = QpStatus::kSolved;
        break;
      }
      if (primal_infeasible(At, l, u, y - y_prev)) {
        res.status = QpStatus::kPrimalInfeasible;
        break;
      }
      if (dual_infeasible(P, A, prob.q, l, u, x - x_prev)) {
        res.status = QpStatus::kDualInfeasible;
        break;
      }
      if (settings_.adaptive_rho && it % settings_.adaptive_rho_interval == 0) {
        const double prim_scale = std::max({detail::inf_norm(Ax), detail::inf_norm(z), 1e-30});
        const double dual_scale =
          std::max({detail::inf_norm(Px), detail::inf_norm(Aty), detail::inf_norm(prob.q), 1e-30});
        const double ratio = (prim / prim_scale) / std::max(dual / dual_scale, 1e-30);
        const double suggested = rho_base * std::sqrt(ratio);
        if (suggested > settings_.adaptive_rho_tolerance * rho_base ||
            suggested * settings_.adaptive_rho_tolerance < rho_base) {
          set_rho(suggested);
          factor(detail::kkt_matrix(P, A, sigma, rho));
          ++res.refactorizations;
        }
      }
    }

    res.x = x;
    res.y = y;
    if (res.status == QpStatus::kSolved && settings_.polish) {
      polish(prob, l, u, z, res);
    }
    return res;
  }

private:
  void factor(const Eigen::SparseMatrix<double> & K)
  {
    ldlt_.compute(K);
    if (ldlt_.info() != Eigen::Success) {
      throw NumericalError("qp: KKT factorization failed");
    }
  }

  bool primal_infeasible(
    const Eigen::SparseMatrix<double> & At, const Eigen::VectorXd & l, const Eigen::VectorXd & u,
    const Eigen::VectorXd & dy) const
  {
    const double norm = detail::inf_norm(dy);
    if (!(norm > 0.0)) {
      return false;
    }
    const double eps = settings_.eps_prim_inf * norm;
    if (detail::inf_norm(At * dy) > eps) {
      return false;
    }
    double support = 0.0;
    for (Eigen::Index i = 0; i < dy.size(); ++i) {
      if (dy(i) > 0.0) {
        if (u(i) >= kQpInfinity) {
          if (dy(i) > eps) {
            return false;
          }
          continue;
        }
        support += u(i) * dy(i);
      } else if (dy(i) < 0.0) {
        if (l(i) <= -kQpInfinity) {
          if (-dy(i) > eps) {
            return false;
          }
          continue;
        }
        support += l(i) * dy(i);
      }
    }
    return support < -eps;
  }

  bool dual_infeasible(
    const Eigen::SparseMatrix<double> & P, const Eigen::SparseMatrix<double> & A, const Eigen::VectorXd & q,
    const Eigen::VectorXd & l, const Eigen::VectorXd & u, const Eigen::VectorXd & dx) const
  {
    const double norm = detail::inf_norm(dx);
    if (!(norm > 0.0)) {
      return false;
    }
    const double eps = settings_.eps_dual_inf * norm;
    if (!(q.dot(dx) < -eps) || detail::inf_norm(P * dx) > eps) {
      return false;
    }
    const Eigen::VectorXd adx = A * dx;
    for (Eigen::Index i = 0; i < adx.size(); ++i) {
      const bool upper_free = u(i) >= kQpInfinity;
      const bool lower_free = l(i) <= -kQpInfinity;
      if ((!upper_free && adx(i) > eps) || (!lower_free && adx(i) < -eps)) {
        return false;
      }
    }
    return true;
  }

  // Re-solves the equality-constrained problem on the guessed active set and
  // keeps the result when it is at least as accurate as the ADMM iterate.
  void polish(
    const QpProblem & prob, const Eigen::VectorXd & l, const Eigen::VectorXd & u, const Eigen::VectorXd & z,
    QpResult & res) const
  {
    const Eigen::Index n = prob.variables();
    const Eigen::Index m = prob.constraints();
    std::vector<Eigen::Index> rows;
    std::vector<double> target;
    std::vector<int> side;  // -1 lower, +1 upper, 0 equality
    for (Eigen::Index i = 0; i < m; ++i) {
      const int s = l(i) == u(i) ? 0 : (z(i) - l(i) < -res.y(i) ? -1 : (u(i) - z(i) < res.y(i) ? 1 : 2));
      if (s != 2) {
        rows.push_back(i);
        target.push_back(s > 0 ? u(i) : l(i));
        side.push_back(s);
      }
    }
    const auto na = static_cast<Eigen::Index>(rows.size());
    std::vector<Eigen::Triplet<double>> t;
    std::vector<Eigen::Triplet<double>> t_exact;
    for (int k = 0; k < prob.P.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(prob.P, k); it; ++it) {
        if (it.row() <= it.col()) {
          t.emplace_back(it.row(), it.col(), it.value());
          t_exact.emplace_back(it.row(), it.col(), it.value());
        }
      }
    }
    std::vector<Eigen::Index> slot(static_cast<std::size_t>(m), -1);
    for (Eigen::Index r = 0; r < na; ++r) {
      slot[static_cast<std::size_t>(rows[static_cast<std::size_t>(r)])] = r;
    }
    for (int k = 0; k < prob.A.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(prob.A, k); it; ++it) {
        const Eigen::Index r = slot[static_cast<std::size_t>(it.row())];
        if (r >= 0) {
          t.emplace_back(it.col(), n + r, it.value());
          t_exact.emplace_back(it.col(), n + r, it.value());
        }
      }
    }
    const double delta = settings_.polish_delta;
    for (Eigen::Index i = 0; i < n; ++i) {
      t.emplace_back(i, i, delta);
    }
    for (Eigen::Index r = 0; r < na; ++r) {
      t.emplace_back(n + r, n + r, -delta);
    }
    Eigen::SparseMatrix<double> K(n + na, n + na);
    K.setFromTriplets(t.begin(), t.end());
    Eigen::SparseMatrix<double> K_upper(n + na, n + na);
    K_upper.setFromTriplets(t_exact.begin(), t_exact.end());
    const Eigen::SparseMatrix<double> K_exact =
      Eigen::SparseMatrix<double>(K_upper.selfadjointView<Eigen::Upper>());

    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Upper> ldlt(K);
    if (ldlt.info() != Eigen::Success) {
      return;
    }
    Eigen::VectorXd rhs(n + na);
    rhs.head(n) = -prob.q;
    for (Eigen::Index r = 0; r < na; ++r) {
      rhs(n + r) = target[static_cast<std::size_t>(r)];
    }
    Eigen::VectorXd sol = ldlt.solve(rhs);
    for (int k = 0; k < settings_.polish_refine; ++k) {
      sol += ldlt.solve(rhs - K_exact * sol);
    }
    if (!sol.allFinite()) {
      return;
    }
    const Eigen::VectorXd xp = sol.head(n);
    Eigen::VectorXd yp = Eigen::VectorXd::Zero(m);
    const double sign_tol = std::max(settings_.eps_abs, 1e-9);
    for (Eigen::Index r = 0; r < na; ++r) {
      const double yr = sol(n + r);
      // A multiplier pushing the wrong way means the active set guess was off.
      if (side[static_cast<std::size_t>(r)] * yr < -sign_tol) {
        return;
      }
      yp(rows[static_cast<std::size_t>(r)]) = yr;
    }
    const Eigen::VectorXd axp = prob.A * xp;
    const Eigen::VectorXd zp = axp.cwiseMax(l).cwiseMin(u);
    const double prim = detail::inf_norm(axp - zp);
    const double dual = detail::inf_norm(prob.P * xp + prob.q + prob.A.transpose() * yp);
    if (prim <= std::max(res.prim_res, 1e-10) && dual <= std::max(res.dual_res, 1e-10)) {
      res.x = xp;
      res.y = yp;
      res.prim_res = prim;
      res.dual_res = dual;
      res.polished = true;
    }
  }

  QpSettings settings_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Upper> ldlt_;
};

inline QpResult solve_qp(
  const QpProblem & problem, const QpSettings & settings = {},
  const std::optional<QpWarmStart> & warm = std::nullopt)
{
  QpSolver solver(settings);
  return solver.solve(problem, warm);
}

}  // namespace flatcar

#endif  // FLATCAR__QP_HPP_
