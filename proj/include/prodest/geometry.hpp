#pragma once

#include <Eigen/Dense>
#include <vector>

namespace prodest::isoquants {
struct IsoquantEstimate;
}
namespace prodest::pipeline {
struct ProductionModel;
}

namespace prodest::geometry {

//! Point of the positive orthant in spherical coordinates: radius and the
//! cascade of d-1 angles, each in [0, pi/2].
struct SphericalPoint {
  double r = 0.0;
  Eigen::VectorXd phi;
};

//! x -> (r, phi). Components may be zero only while the vector itself is not.
SphericalPoint to_spherical(const Eigen::VectorXd& x);
Eigen::VectorXd from_spherical(const SphericalPoint& p);

//! Angle part only; scale-invariant.
Eigen::VectorXd angles_of(const Eigen::VectorXd& x);

//! Ray from the origin through the positive orthant.
struct Ray {
  Eigen::VectorXd theta;           // d-1 angles in (0, pi/2)
  Eigen::VectorXd unit_direction;  // derived, positive components, norm 1

  static Ray from_angles(const Eigen::VectorXd& theta);
  static Ray through(const Eigen::VectorXd& x);
};

//! L2 distance between two angle vectors.
double angle_distance(const Eigen::VectorXd& phi_a, const Eigen::VectorXd& phi_b);

//! Scalar projection <x, unit_direction>.
double project_distance(const Eigen::VectorXd& x, const Ray& ray);

//! Radius at which an isoquant surface crosses a ray (bisection on the
//! radius; the surface is monotone along rays). Throws std::runtime_error
//! when the ray never crosses the surface.
double isoquant_ray_radius(const isoquants::IsoquantEstimate& isoquant,
                           const Ray& ray);

//! Crossing radius of every isoquant on every ray; NaN marks a miss.
Eigen::MatrixXd isoquant_ray_crossings(
    const std::vector<isoquants::IsoquantEstimate>& isoquants,
    const std::vector<Ray>& rays);

//! Project x onto every ray by sandwiching it between the two nearest
//! isoquants along its own ray and transporting the interpolation weight.
//! `isoquants` must be ordered by level. Outside the isoquant band the
//! projection degrades to a radial scaling of the nearest isoquant.
Eigen::VectorXd project_via_isoquants(
    const Eigen::VectorXd& x,
    const std::vector<isoquants::IsoquantEstimate>& isoquants,
    const std::vector<Ray>& rays);

//! Same, with the crossing radii precomputed by isoquant_ray_crossings.
Eigen::VectorXd project_via_isoquants(
    const Eigen::VectorXd& x,
    const std::vector<isoquants::IsoquantEstimate>& isoquants,
    const std::vector<Ray>& rays, const Eigen::MatrixXd& crossings);

//! Functional estimate at x: exact-ray value when the angle matches a ray,
//! otherwise the inverse-distance weighted average over the rays within the
//! d-th smallest angle distance (ties at the d-th distance included).
//! `crossings`, when given, must come from isoquant_ray_crossings on the
//! model's isoquants and rays.
double interpolate(const Eigen::VectorXd& x, const pipeline::ProductionModel& model,
                   const Eigen::MatrixXd* crossings = nullptr);

}  // namespace prodest::geometry
