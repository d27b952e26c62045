#pragma once

// Independent reference implementations used only to check the library:
// an active-set enumeration QP solver, a brute-force shape-constrained fit,
// and closed forms for the logistic scale curve.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "prodest/qp.hpp"

namespace oracles {

//! Exhaustive active-set enumeration for strictly convex QPs: walk subsets of
//! the inequality constraints in increasing cardinality, solve the
//! equality-constrained KKT system, and accept the first primal-feasible
//! point with correctly signed multipliers. Strict convexity makes that
//! point the unique optimum.
inline std::optional<Eigen::VectorXd> enumerate_qp(
    const prodest::qp::Problem& p, int max_active = 10) {
  const int n = p.num_vars();
  const int mi = p.num_ineq();
  const int me = p.num_eq();

  std::vector<int> subset;
  std::optional<Eigen::VectorXd> found;

  auto try_subset = [&](const std::vector<int>& active) -> bool {
    const int k = static_cast<int>(active.size()) + me;
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + k, n + k);
    Eigen::VectorXd rhs(n + k);
    kkt.topLeftCorner(n, n) = p.Q;
    rhs.head(n) = -p.c;
    int row = n;
    for (int e = 0; e < me; ++e, ++row) {
      kkt.block(row, 0, 1, n) = p.A_eq.row(e);
      kkt.block(0, row, n, 1) = p.A_eq.row(e).transpose();
      rhs[row] = p.b_eq[e];
    }
    for (int idx : active) {
      kkt.block(row, 0, 1, n) = p.A_ineq.row(idx);
      kkt.block(0, row, n, 1) = p.A_ineq.row(idx).transpose();
      rhs[row] = p.b_ineq[idx];
      ++row;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (!lu.isInvertible()) return false;
    const Eigen::VectorXd sol = lu.solve(rhs);
    const Eigen::VectorXd x = sol.head(n);
    // multipliers of active inequalities must be nonnegative
    for (std::size_t t = 0; t < active.size(); ++t) {
      if (sol[n + me + static_cast<int>(t)] < -1e-9) return false;
    }
    if (mi > 0) {
      const Eigen::VectorXd slack = p.b_ineq - p.A_ineq * x;
      if (slack.minCoeff() < -1e-8) return false;
    }
    found = x;
    return true;
  };

  std::function<bool(int, int)> walk = [&](int start, int remaining) -> bool {
    if (remaining == 0) return try_subset(subset);
    for (int i = start; i <= mi - remaining; ++i) {
      subset.push_back(i);
      if (walk(i + 1, remaining - 1)) return true;
      subset.pop_back();
    }
    return false;
  };

  for (int size = 0; size <= std::min(max_active, mi); ++size) {
    subset.clear();
    if (walk(0, size)) return found;
  }
  return std::nullopt;
}

inline double qp_objective(const prodest::qp::Problem& p, const Eigen::VectorXd& x) {
  return 0.5 * x.dot(p.Q * x) + p.c.dot(x);
}

//! Best convex, monotone-decreasing fit to three points by brute force over
//! fitted values on a coarse-to-fine grid.
inline Eigen::Vector3d brute_force_convex_decreasing_3(
    const Eigen::Vector3d& x, const Eigen::Vector3d& y) {
  auto admissible = [&](double f0, double f1, double f2) {
    const double s0 = (f1 - f0) / (x[1] - x[0]);
    const double s1 = (f2 - f1) / (x[2] - x[1]);
    return f0 >= f1 && f1 >= f2 && s1 >= s0 - 1e-12;
  };
  auto sse = [&](double f0, double f1, double f2) {
    return (f0 - y[0]) * (f0 - y[0]) + (f1 - y[1]) * (f1 - y[1]) +
           (f2 - y[2]) * (f2 - y[2]);
  };
  const double lo = y.minCoeff() - 1.0;
  const double hi = y.maxCoeff() + 1.0;
  Eigen::Vector3d best(y[0], y[1], y[2]);
  double best_sse = std::numeric_limits<double>::infinity();
  auto scan = [&](double f0_lo, double f0_hi, double f1_lo, double f1_hi,
                  double f2_lo, double f2_hi, double step) {
    for (double f0 = f0_lo; f0 <= f0_hi + 1e-15; f0 += step)
      for (double f1 = f1_lo; f1 <= std::min(f0, f1_hi) + 1e-15; f1 += step)
        for (double f2 = f2_lo; f2 <= std::min(f1, f2_hi) + 1e-15; f2 += step) {
          if (!admissible(f0, f1, f2)) continue;
          const double s = sse(f0, f1, f2);
          if (s < best_sse) {
            best_sse = s;
            best << f0, f1, f2;
          }
        }
  };
  scan(lo, hi, lo, hi, lo, hi, 0.01);
  const double r = 0.02;
  scan(best[0] - r, best[0] + r, best[1] - r, best[1] + r, best[2] - r,
       best[2] + r, 0.0005);
  return best;
}

// Logistic scale curve 15 / (1 + z^-5): closed-form landmarks.
inline double f0(double z) { return z <= 0 ? 0.0 : 15.0 / (1.0 + std::pow(z, -5.0)); }
inline double f0_inflection() { return std::pow(2.0 / 3.0, 0.2); }
inline double f0_mpss() { return std::pow(4.0, 0.2); }
inline double f0_elasticity(double z) { return 5.0 / (1.0 + std::pow(z, 5.0)); }

}  // namespace oracles
