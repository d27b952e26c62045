#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "prodest/geometry.hpp"
#include "prodest/qp.hpp"

namespace prodest::sshape {

//! Piecewise-linear convex-then-concave increasing curve along a ray.
//! `inflection` is the 0-based grid index at which the concave regime starts;
//! indices strictly before it form the convex regime.
struct SShapeCurve {
  geometry::Ray ray;
  Eigen::VectorXd grid;    // radii, strictly increasing
  Eigen::VectorXd values;  // a_g
  Eigen::VectorXd slopes;  // b_g >= 0
  int inflection = 0;
  double omega = 0.0;  // angle bandwidth used for the fit
  double h = 0.0;      // radial bandwidth used for the fit

  int size() const { return static_cast<int>(grid.size()); }

  //! Piecewise-linear in (grid, values); outside the grid the first/last
  //! segment is continued linearly and the value floored at 0.
  double eval(double r) const;

  //! Slope of the interpolant: right-segment slope at interior knots, the
  //! last segment's slope at the top knot.
  double interpolant_slope(double r) const;

  //! Throws std::runtime_error when monotonicity or the per-regime Afriat
  //! inequalities are violated beyond tol.
  void validate(double tol = 1e-6) const;
};

struct MpssPoint {
  double radius = 0.0;
  double aggregate_output = 0.0;
  double average_product = 0.0;
};

//! Shape-constrained kernel-weighted fit of an S-curve on one ray. Solves the
//! weighted QP once per candidate inflection index and keeps the smallest
//! objective; ties resolve to the smallest index.
//!   responses:  pilot (or raw) outputs, one per observation
//!   radii:      projected radii of the observations on this ray
//!   angles:     observation angle vectors (n x (d-1))
SShapeCurve sckls_fit(const Eigen::VectorXd& responses, const Eigen::VectorXd& radii,
                      const Eigen::MatrixXd& angles, const geometry::Ray& ray,
                      const Eigen::VectorXd& grid, double omega, double h,
                      const qp::Settings& qp_settings = {});

//! Univariate S-shaped least squares: fitted values at the sorted distinct
//! abscissae under increasing + convex-then-concave constraints.
struct SCurve {
  Eigen::VectorXd z;       // sorted distinct abscissae
  Eigen::VectorXd values;  // fitted values
  int inflection = 0;
  double sse = 0.0;

  double eval(double zq) const;  // pw-linear, flat beyond the ends
};

//! Exact inflection search runs one QP per candidate; `candidate_stride > 1`
//! scans a coarser candidate set (used inside profile searches where only the
//! objective ranking matters).
SCurve sshaped_univariate_fit(const Eigen::VectorXd& z, const Eigen::VectorXd& y,
                              int candidate_stride = 1);

//! Gap-minimization revision: pull each curve toward the isoquant levels at
//! the per-ray intersection radii while staying close to the original fit.
//! `intersection_radii[i][r]` is the radius at which the level-i isoquant
//! meets ray r (NaN when missing). Weights satisfy w_s + w_i = 1.
std::vector<SShapeCurve> minimize_gap(
    const std::vector<SShapeCurve>& curves,
    const std::vector<std::vector<double>>& intersection_radii,
    const Eigen::VectorXd& levels, double weight_sshape, double weight_isoquant,
    const qp::Settings& qp_settings = {});

//! Elasticity of scale along the ray: a'(r) * r / a(r).
double elasticity_of_scale(const SShapeCurve& curve, double r);

//! Grid point maximizing average product a_g / r_g, refined by golden-section
//! on the interpolant within the bracketing cell.
MpssPoint mpss(const SShapeCurve& curve);

}  // namespace prodest::sshape
