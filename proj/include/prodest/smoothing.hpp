#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

namespace prodest::smoothing {

//! Epanechnikov profile: 0.75 (1 - u^2) for |u| <= 1, else 0. The
//! multivariate kernel is spherically symmetric, k(||u||).
double epanechnikov(double u);

struct Bandwidth {
  Eigen::VectorXd h;  // one entry per input dimension, all positive
  void check() const;
};

//! Thrown when the weighted local design is rank deficient at the query
//! point (bandwidth too small there).
struct RankDeficient : std::runtime_error {
  using std::runtime_error::runtime_error;
};

//! Local-linear estimate at x: intercept of the weighted least-squares affine
//! fit with weights k(||(X_j - x) ./ h||). Throws RankDeficient when fewer
//! than d+1 points carry weight or the design degenerates.
double local_linear_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const Bandwidth& h, const Eigen::VectorXd& x);

//! Same estimate, doubling every bandwidth until the local design is solvable
//! (at most 10 doublings).
double local_linear_fit_adaptive(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 const Bandwidth& h, const Eigen::VectorXd& x);

//! h_k = 1.06 sd(X_k) n^{-1/(d+4)}.
Bandwidth rule_of_thumb_bandwidth(const Eigen::MatrixXd& X);

//! Ten geometrically spaced bandwidths spanning [0.25, 4] x rule-of-thumb.
std::vector<Bandwidth> default_bandwidth_grid(const Eigen::MatrixXd& X);

//! Leave-one-out cross-validation over the grid; ties resolve to the larger
//! bandwidth. Grid points failing rank conditions are skipped; throws when
//! every grid point fails.
Bandwidth loocv_bandwidth(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const std::vector<Bandwidth>& grid);

//! Univariate weighted variant used for the radial bandwidth on a ray:
//! external weights multiply the kernel weights and the CV loss.
double loocv_bandwidth_1d(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& weights,
                          const std::vector<double>& grid);

//! One-dimensional weighted local-linear fit used by the bandwidth selector.
double local_linear_fit_1d(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& weights, double h, double xq);

}  // namespace prodest::smoothing
