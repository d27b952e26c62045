#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>

namespace prodest::qp {

enum class Status { Optimal, Infeasible, MaxIterations };

//! Dense convex quadratic program
//!   min 1/2 x'Qx + c'x   s.t.  A_ineq x <= b_ineq,  A_eq x = b_eq.
struct Problem {
  Eigen::MatrixXd Q;
  Eigen::VectorXd c;
  Eigen::MatrixXd A_ineq;
  Eigen::VectorXd b_ineq;
  Eigen::MatrixXd A_eq;
  Eigen::VectorXd b_eq;

  int num_vars() const { return static_cast<int>(c.size()); }
  int num_ineq() const { return static_cast<int>(b_ineq.size()); }
  int num_eq() const { return static_cast<int>(b_eq.size()); }

  //! Throws std::invalid_argument on inconsistent dimensions, asymmetry
  //! beyond 1e-12 relative, or eigenvalues below -1e-10 * ||Q||.
  //! The spectral check is O(n^3); solve() itself only checks shape and
  //! symmetry.
  void validate() const;
};

struct Settings {
  double eps_feas = 1e-8;  // absolute primal feasibility target
  double eps_rel = 1e-6;   // relative optimality target
  int max_iter = 100000;
  bool polish = true;
  std::optional<Eigen::VectorXd> x0;  // optional initial point
};

struct Solution {
  Eigen::VectorXd x;
  Eigen::VectorXd dual_ineq;  // multipliers for A_ineq (>= 0 at optimum)
  Eigen::VectorXd dual_eq;
  double objective = 0.0;
  Status status = Status::MaxIterations;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
};

//! Solve a dense convex QP. Pure and reentrant; concurrent calls on distinct
//! problems are safe.
Solution solve(const Problem& problem, const Settings& settings = {});

//! Operator-splitting core for the box form
//!   min 1/2 x'Qx + c'x   s.t.  lower <= Ax <= upper.
//!
//! The reduced KKT factorization depends on (Q, A, rho) only, so one instance
//! can be reused across solves that share the constraint matrix and differ in
//! (c, lower, upper) - the pattern of an inflection-point sweep, where only
//! constraint activities flip sign. Instances are not safe for concurrent
//! solve() calls.
class BoxSolver {
public:
  BoxSolver(Eigen::MatrixXd Q, Eigen::MatrixXd A);
  ~BoxSolver();
  BoxSolver(BoxSolver&&) noexcept;
  BoxSolver& operator=(BoxSolver&&) noexcept;

  struct Result {
    Eigen::VectorXd x;
    Eigen::VectorXd y;  // row multipliers, sign-split by bound
    double objective = 0.0;
    Status status = Status::MaxIterations;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    int iterations = 0;
  };

  Result solve(const Eigen::VectorXd& c, const Eigen::VectorXd& lower,
               const Eigen::VectorXd& upper, const Settings& settings = {},
               const Eigen::VectorXd* warm_x = nullptr,
               const Eigen::VectorXd* warm_y = nullptr);

  int num_vars() const;
  int num_rows() const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace prodest::qp
