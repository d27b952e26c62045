#pragma once

#include <Eigen/Dense>
#include <vector>

#include "prodest/qp.hpp"
#include "prodest/sshape.hpp"

namespace prodest::isoquants {

//! Convex monotone-decreasing isoquant at one output level, stored as
//! supporting hyperplanes: eval(x_rest) = max_j (intercept_j + slope_j'x_rest)
//! gives the d-th input. Slopes are componentwise nonpositive.
struct IsoquantEstimate {
  double level = 0.0;
  Eigen::MatrixXd support;     // m x (d-1) support points
  Eigen::VectorXd intercepts;  // m
  Eigen::MatrixXd slopes;      // m x (d-1)

  int planes() const { return static_cast<int>(intercepts.size()); }
  int dim_rest() const { return static_cast<int>(slopes.cols()); }

  double eval(const Eigen::VectorXd& x_rest) const;
  Eigen::VectorXd subgradient(const Eigen::VectorXd& x_rest) const;

  //! Checks slope signs and the Afriat system at the support points.
  void validate(double tol = 1e-6) const;
};

struct LevelAssignment {
  Eigen::VectorXd levels;   // strictly increasing
  std::vector<int> index;   // per-observation level index
};

//! Nearest level per pilot value; exact midpoints resolve to the lower level.
LevelAssignment assign_levels(const Eigen::VectorXd& pilot_values,
                              const Eigen::VectorXd& levels);

//! Convex nonparametric least squares on (X_rest -> X_d): minimizes the sum
//! of squared residuals subject to the Afriat inequalities and nonpositive
//! slopes. `points` holds full d-dimensional input vectors, one per row.
IsoquantEstimate cnls_isoquant(const Eigen::MatrixXd& points, double level,
                               const qp::Settings& qp_settings = {});

//! Directional variant: allows errors along `direction` (size d, nonnegative,
//! nonzero; last component pairs with the response input). Coefficients are
//! normalized by the translation-property constraint; near-vertical planes
//! (gamma below 1e-8) are excluded from the returned envelope.
IsoquantEstimate directional_cnls_isoquant(const Eigen::MatrixXd& points,
                                           double level,
                                           const Eigen::VectorXd& direction,
                                           const qp::Settings& qp_settings = {});

//! Average of `directions` directional fits, directions taken at equally
//! spaced percentiles of the input ratios. Failed directions are dropped as
//! long as at least one succeeds.
IsoquantEstimate averaging_directional_cnls(const Eigen::MatrixXd& points,
                                            double level, int directions,
                                            const qp::Settings& qp_settings = {});

//! Homothetic pooling: rescale the middle levels onto the unit-ray isoquant,
//! refit jointly, and rederive every level as a radial scaling.
struct HomotheticFamily {
  IsoquantEstimate unit;                    // pooled isoquant at level F(1)
  Eigen::VectorXd lambda;                   // per-level unit-ray scaling
  std::vector<IsoquantEstimate> per_level;  // rederived isoquants
};

HomotheticFamily homothetic_isoquant(const Eigen::MatrixXd& X,
                                     const LevelAssignment& assignment,
                                     const std::vector<IsoquantEstimate>& fitted,
                                     double trim,
                                     const qp::Settings& qp_settings = {});

enum class ParametricFamily { Linear, Power };

//! Profile least squares over the unit simplex: the aggregator index
//! z = beta'x (Linear) or prod x_k^beta_k (Power), the link an S-curve fitted
//! by sshaped_univariate_fit. Grid of mesh 0.02 refined once to 0.002.
struct ParametricIsoquantFit {
  Eigen::VectorXd beta;  // on the unit simplex
  sshape::SCurve link;
  double sse = 0.0;
  ParametricFamily family = ParametricFamily::Power;

  double index(const Eigen::VectorXd& x) const;
  double predict(const Eigen::VectorXd& x) const { return link.eval(index(x)); }
};

ParametricIsoquantFit fit_parametric_isoquant(const Eigen::MatrixXd& X,
                                              const Eigen::VectorXd& y,
                                              ParametricFamily family);

}  // namespace prodest::isoquants
