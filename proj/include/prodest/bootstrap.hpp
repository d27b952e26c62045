#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "prodest/dataset.hpp"

namespace prodest::bootstrap {

//! Fit a dataset, return an evaluator for the fitted surface.
using Fitter = std::function<std::function<double(const Eigen::VectorXd&)>(
    const data::Dataset&)>;

struct BootstrapResult {
  int replications = 0;          // requested B
  int successes = 0;             // refits that converged
  Eigen::MatrixXd samples;       // successes x eval points
  Eigen::VectorXd lower;         // alpha/2 percentile per eval point
  Eigen::VectorXd upper;         // 1 - alpha/2 percentile
  Eigen::VectorXd point;         // fit on the original responses
  std::vector<std::string> warnings;
};

//! Wild-bootstrap percentile intervals: residuals from a local-linear fit,
//! Rademacher sign flips, refit per replication. Fails when fewer than 80%
//! of the replications refit successfully.
BootstrapResult wild_bootstrap_ci(const data::Dataset& ds, const Fitter& fitter,
                                  const Eigen::MatrixXd& eval_points, int B,
                                  double alpha, std::uint64_t seed,
                                  int threads = 1);

struct ShapeTest {
  double statistic = 0.0;  // mean squared gap between the two fits
  double p_value = 1.0;    // fraction of bootstrap statistics >= observed
  Eigen::VectorXd bootstrap_statistics;
};

//! Constraint-validation statistic: resample under the constrained fit's
//! residuals and compare the refits of both estimators at the observations.
ShapeTest shape_test_statistic(const data::Dataset& ds, const Fitter& constrained,
                               const Fitter& unconstrained, int B,
                               std::uint64_t seed, int threads = 1);

}  // namespace prodest::bootstrap
