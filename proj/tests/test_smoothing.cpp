#include "prodest/smoothing.hpp"

#include <doctest.h>

#include "prodest/rng.hpp"
#include "prodest/simulation.hpp"

using namespace prodest;

TEST_CASE("kernel integrates to one") {
  // Simpson's rule over [-1, 1]
  const int panels = 2000;
  double acc = 0.0;
  const double h = 2.0 / panels;
  for (int i = 0; i < panels; ++i) {
    const double a = -1.0 + i * h;
    acc += (smoothing::epanechnikov(a) + 4.0 * smoothing::epanechnikov(a + h / 2) +
            smoothing::epanechnikov(a + h)) *
           h / 6.0;
  }
  CHECK(acc == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(smoothing::epanechnikov(0.0) == doctest::Approx(0.75));
  CHECK(smoothing::epanechnikov(1.1) == 0.0);
}

TEST_CASE("local linear reproduces affine functions exactly") {
  rng::Rng gen(11);
  const int n = 60;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = gen.uniform(0.2, 2.0);
    X(i, 1) = gen.uniform(0.2, 2.0);
    y[i] = 1.5 + 2.0 * X(i, 0) - 0.5 * X(i, 1);
  }
  smoothing::Bandwidth bw;
  bw.h = Eigen::VectorXd::Constant(2, 0.8);
  Eigen::VectorXd q(2);
  q << 1.0, 1.0;
  CHECK(smoothing::local_linear_fit(X, y, bw, q) == doctest::Approx(3.0).epsilon(1e-10));

  // adding a constant shifts the fit by that constant
  const double base = smoothing::local_linear_fit(X, y, bw, q);
  const double shifted =
      smoothing::local_linear_fit(X, Eigen::VectorXd(y.array() + 4.0), bw, q);
  CHECK(shifted - base == doctest::Approx(4.0).epsilon(1e-10));
}

TEST_CASE("all mass on the query point returns the weighted mean") {
  Eigen::MatrixXd X(4, 1);
  X << 1.0, 1.0, 1.0, 9.0;
  Eigen::VectorXd y(4);
  y << 2.0, 4.0, 6.0, 100.0;
  smoothing::Bandwidth bw;
  bw.h = Eigen::VectorXd::Constant(1, 0.5);  // excludes the far point
  Eigen::VectorXd q(1);
  q << 1.0;
  CHECK(smoothing::local_linear_fit(X, y, bw, q) == doctest::Approx(4.0));
}

TEST_CASE("rank-deficient designs raise and the adaptive wrapper recovers") {
  Eigen::MatrixXd X(5, 1);
  X << 1.0, 1.1, 2.9, 3.0, 3.1;
  Eigen::VectorXd y(5);
  y << 1.0, 1.1, 2.9, 3.0, 3.1;
  smoothing::Bandwidth bw;
  bw.h = Eigen::VectorXd::Constant(1, 0.05);
  Eigen::VectorXd q(1);
  q << 2.0;  // no observation in reach
  CHECK_THROWS_AS(smoothing::local_linear_fit(X, y, bw, q), smoothing::RankDeficient);
  CHECK(smoothing::local_linear_fit_adaptive(X, y, bw, q) ==
        doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("rule-of-thumb bandwidth follows the sample-size power law") {
  rng::Rng gen(3);
  Eigen::MatrixXd X(1000, 2);
  for (int i = 0; i < 1000; ++i)
    for (int k = 0; k < 2; ++k) X(i, k) = gen.normal();
  // standardize so the sample sd is exactly one
  for (int k = 0; k < 2; ++k) {
    X.col(k).array() -= X.col(k).mean();
    X.col(k) /= std::sqrt(X.col(k).squaredNorm() / (X.rows() - 1));
    X.col(k).array() += 5.0;
  }
  const auto bw = smoothing::rule_of_thumb_bandwidth(X);
  const double expected = 1.06 * std::pow(1000.0, -1.0 / 6.0);
  CHECK(std::abs(bw.h[0] - expected) <= 1e-12);
  CHECK(std::abs(bw.h[1] - expected) <= 1e-12);

  const auto bw_half = smoothing::rule_of_thumb_bandwidth(X.topRows(500));
  // doubling n shrinks h by 2^(-1/(d+4)) for identical spread
  const double ratio_expected = std::pow(2.0, -1.0 / 6.0);
  const double sd_ratio = data::sample_sd(X.topRows(500).col(0));
  CHECK(bw.h[0] / bw_half.h[0] ==
        doctest::Approx(ratio_expected / sd_ratio).epsilon(1e-12));

  Eigen::MatrixXd tiny(1, 2);
  tiny << 1.0, 1.0;
  CHECK_THROWS(smoothing::rule_of_thumb_bandwidth(tiny));
}

TEST_CASE("cross-validation selection rules") {
  rng::Rng gen(17);
  const int n = 40;
  Eigen::MatrixXd X(n, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = gen.uniform(0.0, 3.0);
    y[i] = 2.0 + 0.7 * X(i, 0);
  }
  // one-element grid returns that element
  smoothing::Bandwidth only;
  only.h = Eigen::VectorXd::Constant(1, 0.9);
  const auto picked = smoothing::loocv_bandwidth(X, y, {only});
  CHECK(picked.h[0] == doctest::Approx(0.9));

  // noiseless affine data: every bandwidth fits exactly, tie goes to largest
  const auto grid = smoothing::default_bandwidth_grid(X);
  const auto chosen = smoothing::loocv_bandwidth(X, y, grid);
  CHECK(chosen.h[0] == doctest::Approx(grid.back().h[0]));
}

TEST_CASE("cross-validation picks interior bandwidths on noisy data") {
  int interior = 0;
  const int reps = 20;
  for (int rep = 0; rep < reps; ++rep) {
    const auto generated = simulation::generate(simulation::default_spec(
        simulation::DgpKind::CesHomothetic, 500, 2.0, 1000 + rep));
    const auto grid = smoothing::default_bandwidth_grid(generated.ds.X);
    const auto chosen = smoothing::loocv_bandwidth(generated.ds.X, generated.ds.y, grid);
    const bool is_endpoint =
        (chosen.h - grid.front().h).cwiseAbs().maxCoeff() < 1e-12 ||
        (chosen.h - grid.back().h).cwiseAbs().maxCoeff() < 1e-12;
    if (!is_endpoint) ++interior;
  }
  CHECK(interior >= static_cast<int>(0.8 * reps));
}
