#include "prodest/qp.hpp"

#include <doctest.h>

#include "oracles.hpp"
#include "prodest/rng.hpp"

using namespace prodest;

namespace {

qp::Problem empty_problem(int n) {
  qp::Problem p;
  p.Q = Eigen::MatrixXd::Identity(n, n);
  p.c = Eigen::VectorXd::Zero(n);
  p.A_ineq.resize(0, n);
  p.b_ineq.resize(0);
  p.A_eq.resize(0, n);
  p.b_eq.resize(0);
  return p;
}

//! Random strictly convex QP, feasible by construction (every constraint
//! holds at a random anchor point) with a handful of binding rows, so the
//! active set stays small enough to enumerate.
qp::Problem random_qp(rng::Rng& gen, int max_vars = 20, int max_cons = 30) {
  const int n = gen.uniform_int(2, max_vars);
  const int m = gen.uniform_int(3, max_cons);
  Eigen::MatrixXd B(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) B(i, j) = gen.normal();
  qp::Problem p = empty_problem(n);
  p.Q = B.transpose() * B + 0.5 * Eigen::MatrixXd::Identity(n, n);
  for (int i = 0; i < n; ++i) p.c[i] = gen.normal();
  const Eigen::VectorXd x_free = p.Q.ldlt().solve(-p.c);
  Eigen::VectorXd anchor(n);
  for (int i = 0; i < n; ++i) anchor[i] = x_free[i] + 0.35 * gen.normal();
  p.A_ineq.resize(m, n);
  p.b_ineq.resize(m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) p.A_ineq(i, j) = gen.normal();
    p.A_ineq.row(i) /= p.A_ineq.row(i).norm();
    p.b_ineq[i] = p.A_ineq.row(i).dot(anchor) + gen.uniform(0.0, 1.2);
  }
  return p;
}

}  // namespace

TEST_CASE("projection onto a half-line") {
  // min (x-1)^2 s.t. x <= 0
  qp::Problem p = empty_problem(1);
  p.Q(0, 0) = 2.0;
  p.c[0] = -2.0;
  p.A_ineq.resize(1, 1);
  p.A_ineq(0, 0) = 1.0;
  p.b_ineq.resize(1);
  p.b_ineq[0] = 0.0;
  const qp::Solution sol = qp::solve(p);
  REQUIRE(sol.status == qp::Status::Optimal);
  CHECK(sol.x[0] == doctest::Approx(0.0).epsilon(1e-7));
  // objective of (x-1)^2 at 0 is 1; solver reports 1/2 x'Qx + c'x = x^2 - 2x
  CHECK(sol.objective + 1.0 == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("unconstrained stationary point") {
  qp::Problem p = empty_problem(2);
  p.c << -2.0, -3.0;
  const qp::Solution sol = qp::solve(p);
  REQUIRE(sol.status == qp::Status::Optimal);
  CHECK(sol.x[0] == doctest::Approx(2.0));
  CHECK(sol.x[1] == doctest::Approx(3.0));
}

TEST_CASE("half-space constraint splits evenly") {
  // min x1^2 + x2^2 s.t. x1 + x2 >= 1
  qp::Problem p = empty_problem(2);
  p.Q *= 2.0;
  p.A_ineq.resize(1, 2);
  p.A_ineq << -1.0, -1.0;
  p.b_ineq.resize(1);
  p.b_ineq[0] = -1.0;
  const qp::Solution sol = qp::solve(p);
  REQUIRE(sol.status == qp::Status::Optimal);
  CHECK(sol.x[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(sol.x[1] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(sol.objective == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("equality constraints are honored") {
  qp::Problem p = empty_problem(3);
  p.A_eq.resize(1, 3);
  p.A_eq << 1.0, 1.0, 1.0;
  p.b_eq.resize(1);
  p.b_eq[0] = 3.0;
  const qp::Solution sol = qp::solve(p);
  REQUIRE(sol.status == qp::Status::Optimal);
  for (int i = 0; i < 3; ++i) CHECK(sol.x[i] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("infeasible constraint set is detected") {
  qp::Problem p = empty_problem(1);
  p.A_ineq.resize(2, 1);
  p.A_ineq << 1.0, -1.0;  // x <= -1 and -x <= -1 (x >= 1)
  p.b_ineq.resize(2);
  p.b_ineq << -1.0, -1.0;
  const qp::Solution sol = qp::solve(p);
  CHECK(sol.status == qp::Status::Infeasible);
}

TEST_CASE("validate flags shape problems") {
  qp::Problem p = empty_problem(2);
  CHECK_NOTHROW(p.validate());
  qp::Problem bad = p;
  bad.Q(0, 1) = 0.5;  // asymmetric
  CHECK_THROWS(bad.validate());
  qp::Problem indefinite = p;
  indefinite.Q(0, 0) = -1.0;
  CHECK_THROWS(indefinite.validate());
}

TEST_CASE("matches active-set enumeration on random strictly convex QPs") {
  rng::Rng gen(20240811);
  for (int trial = 0; trial < 60; ++trial) {
    const qp::Problem p = random_qp(gen, 12, 18);
    const auto reference = oracles::enumerate_qp(p, 12);
    REQUIRE(reference.has_value());
    const qp::Solution sol = qp::solve(p);
    REQUIRE(sol.status == qp::Status::Optimal);
    const double ref_obj = oracles::qp_objective(p, *reference);
    CHECK(std::abs(sol.objective - ref_obj) <=
          1e-5 * std::max(1.0, std::abs(ref_obj)));
  }
}

TEST_CASE("complementary slackness at the optimum") {
  rng::Rng gen(77);
  for (int trial = 0; trial < 20; ++trial) {
    const qp::Problem p = random_qp(gen, 10, 14);
    const qp::Solution sol = qp::solve(p);
    REQUIRE(sol.status == qp::Status::Optimal);
    const Eigen::VectorXd slack = p.b_ineq - p.A_ineq * sol.x;
    for (int i = 0; i < p.num_ineq(); ++i)
      CHECK(std::min(slack[i], sol.dual_ineq[i]) <= 1e-6);
  }
}

TEST_CASE("objective rescaling leaves the argmin unchanged") {
  rng::Rng gen(99);
  const qp::Problem p = random_qp(gen, 8, 12);
  qp::Problem scaled = p;
  scaled.Q *= 37.5;
  scaled.c *= 37.5;
  const qp::Solution a = qp::solve(p);
  const qp::Solution b = qp::solve(scaled);
  REQUIRE(a.status == qp::Status::Optimal);
  REQUIRE(b.status == qp::Status::Optimal);
  CHECK((a.x - b.x).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("box solver reuses the factorization across bound flips") {
  // min (x0-1)^2 + (x1+1)^2 with one row x0 - x1 constrained either way
  Eigen::MatrixXd Q = 2.0 * Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd A(1, 2);
  A << 1.0, -1.0;
  qp::BoxSolver solver(Q, A);
  Eigen::VectorXd c(2);
  c << -2.0, 2.0;
  Eigen::VectorXd lo(1), up(1);
  lo << 0.0;
  up << std::numeric_limits<double>::infinity();
  auto r1 = solver.solve(c, lo, up);
  REQUIRE(r1.status == qp::Status::Optimal);
  CHECK(r1.x[0] - r1.x[1] >= -1e-8);
  // the unconstrained optimum (1, -1) satisfies the first orientation
  CHECK(r1.x[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r1.x[1] == doctest::Approx(-1.0).epsilon(1e-6));
  lo << -std::numeric_limits<double>::infinity();
  up << 0.0;
  auto r2 = solver.solve(c, lo, up, {}, &r1.x);
  REQUIRE(r2.status == qp::Status::Optimal);
  // flipping the bound makes the row bind: projection onto x0 = x1
  CHECK(r2.x[0] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(r2.x[1] == doctest::Approx(0.0).epsilon(1e-6));
}
