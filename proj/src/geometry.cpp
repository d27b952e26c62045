#include "prodest/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "prodest/isoquants.hpp"
#include "prodest/pipeline.hpp"

namespace prodest::geometry {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }
}  // namespace

SphericalPoint to_spherical(const Eigen::VectorXd& x) {
  const int d = static_cast<int>(x.size());
  if (d < 1) throw std::invalid_argument("to_spherical: empty vector");
  if ((x.array() < 0.0).any())
    throw std::invalid_argument("to_spherical: negative component");
  SphericalPoint p;
  p.r = x.norm();
  if (p.r == 0.0) throw std::invalid_argument("to_spherical: zero vector");
  p.phi.resize(d - 1);
  double tail_sq = x.squaredNorm();
  for (int k = 0; k < d - 1; ++k) {
    const double tail = std::sqrt(std::max(tail_sq, 0.0));
    p.phi[k] = tail > 0.0 ? std::acos(clamp_unit(x[k] / tail)) : 0.0;
    tail_sq -= x[k] * x[k];
  }
  return p;
}

Eigen::VectorXd from_spherical(const SphericalPoint& p) {
  const int d = static_cast<int>(p.phi.size()) + 1;
  Eigen::VectorXd x(d);
  double prefix = p.r;  // r * prod of sines so far
  for (int k = 0; k < d - 1; ++k) {
    x[k] = prefix * std::cos(p.phi[k]);
    prefix *= std::sin(p.phi[k]);
  }
  x[d - 1] = prefix;
  return x;
}

Eigen::VectorXd angles_of(const Eigen::VectorXd& x) { return to_spherical(x).phi; }

Ray Ray::from_angles(const Eigen::VectorXd& theta) {
  for (int k = 0; k < theta.size(); ++k) {
    if (!(theta[k] > 0.0 && theta[k] < M_PI / 2.0))
      throw std::invalid_argument("ray: angles must lie strictly in (0, pi/2)");
  }
  Ray ray;
  ray.theta = theta;
  SphericalPoint p;
  p.r = 1.0;
  p.phi = theta;
  ray.unit_direction = from_spherical(p);
  return ray;
}

Ray Ray::through(const Eigen::VectorXd& x) {
  return from_angles(angles_of(x));
}

double angle_distance(const Eigen::VectorXd& phi_a, const Eigen::VectorXd& phi_b) {
  if (phi_a.size() != phi_b.size())
    throw std::invalid_argument("angle_distance: size mismatch");
  return (phi_a - phi_b).norm();
}

double project_distance(const Eigen::VectorXd& x, const Ray& ray) {
  if (x.size() != ray.unit_direction.size())
    throw std::invalid_argument("project_distance: dimension mismatch");
  return x.dot(ray.unit_direction);
}

double isoquant_ray_radius(const isoquants::IsoquantEstimate& isoquant,
                           const Ray& ray) {
  const int d = static_cast<int>(ray.unit_direction.size());
  if (isoquant.dim_rest() != d - 1)
    throw std::invalid_argument("isoquant_ray_radius: dimension mismatch");
  const Eigen::VectorXd u_rest = ray.unit_direction.head(d - 1);
  const double u_last = ray.unit_direction[d - 1];
  auto gap = [&](double t) {
    return t * u_last - isoquant.eval(t * u_rest);
  };
  double lo = 0.0;
  if (gap(0.0) >= 0.0)
    throw std::runtime_error("isoquant_ray_radius: degenerate isoquant on ray");
  double hi = 1.0;
  int expand = 0;
  while (gap(hi) < 0.0) {
    hi *= 2.0;
    if (++expand > 60)
      throw std::runtime_error("isoquant_ray_radius: isoquant does not cross ray");
  }
  while (hi - lo > 1e-10 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    (gap(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

namespace {

//! Sandwich weights along x's own ray, then transport to every target ray.
Eigen::VectorXd project_with_crossings(
    const Eigen::VectorXd& x,
    const std::vector<isoquants::IsoquantEstimate>& isoquants,
    const Eigen::MatrixXd& crossings) {
  const int count = static_cast<int>(isoquants.size());
  const int rays = static_cast<int>(crossings.cols());
  const Ray own = Ray::through(x);
  const double radius = x.norm();

  int below = -1, above = -1;
  double r_below = 0.0, r_above = 0.0;
  bool any = false;
  for (int i = 0; i < count; ++i) {
    double ri;
    try {
      ri = isoquant_ray_radius(isoquants[i], own);
    } catch (const std::runtime_error&) {
      continue;  // degenerate along this ray; skip the level
    }
    any = true;
    if (ri <= radius && (below < 0 || ri > r_below)) {
      below = i;
      r_below = ri;
    }
    if (ri > radius && (above < 0 || ri < r_above)) {
      above = i;
      r_above = ri;
    }
  }
  if (!any)
    throw std::runtime_error("project_via_isoquants: no isoquant crosses the ray of x");

  Eigen::VectorXd out(rays);
  for (int r = 0; r < rays; ++r) {
    const double below_r = below >= 0 ? crossings(below, r) : 0.0;
    const double above_r = above >= 0 ? crossings(above, r) : kNan;
    if (below >= 0 && above >= 0) {
      if (std::isnan(below_r) || std::isnan(above_r)) {
        out[r] = kNan;
        continue;
      }
      const double span = r_above - r_below;
      double rho = span > 0.0 ? (radius - r_below) / span : 1.0;
      rho = std::clamp(rho, 0.0, 1.0);
      out[r] = rho * above_r + (1.0 - rho) * below_r;
    } else if (above >= 0) {
      // below every isoquant: interpolate between the origin and the lowest
      if (std::isnan(above_r)) {
        out[r] = kNan;
        continue;
      }
      const double rho = std::clamp(radius / r_above, 0.0, 1.0);
      out[r] = rho * above_r;
    } else {
      // above every isoquant: radial scaling of the top one
      if (std::isnan(below_r)) {
        out[r] = kNan;
        continue;
      }
      out[r] = below_r * (radius / r_below);
    }
  }
  return out;
}

}  // namespace

Eigen::MatrixXd isoquant_ray_crossings(
    const std::vector<isoquants::IsoquantEstimate>& isoquants,
    const std::vector<Ray>& rays) {
  Eigen::MatrixXd crossings(static_cast<int>(isoquants.size()),
                            static_cast<int>(rays.size()));
  for (int i = 0; i < crossings.rows(); ++i) {
    for (int r = 0; r < crossings.cols(); ++r) {
      try {
        crossings(i, r) = isoquant_ray_radius(isoquants[i], rays[r]);
      } catch (const std::runtime_error&) {
        crossings(i, r) = kNan;
      }
    }
  }
  return crossings;
}

Eigen::VectorXd project_via_isoquants(
    const Eigen::VectorXd& x,
    const std::vector<isoquants::IsoquantEstimate>& isoquants,
    const std::vector<Ray>& rays) {
  if (isoquants.empty())
    throw std::invalid_argument("project_via_isoquants: no isoquants");
  return project_with_crossings(x, isoquants, isoquant_ray_crossings(isoquants, rays));
}

Eigen::VectorXd project_via_isoquants(
    const Eigen::VectorXd& x,
    const std::vector<isoquants::IsoquantEstimate>& isoquants,
    const std::vector<Ray>& rays, const Eigen::MatrixXd& crossings) {
  if (isoquants.empty())
    throw std::invalid_argument("project_via_isoquants: no isoquants");
  if (crossings.rows() != static_cast<int>(isoquants.size()) ||
      crossings.cols() != static_cast<int>(rays.size()))
    throw std::invalid_argument("project_via_isoquants: crossings shape mismatch");
  return project_with_crossings(x, isoquants, crossings);
}

double interpolate(const Eigen::VectorXd& x, const pipeline::ProductionModel& model,
                   const Eigen::MatrixXd* crossings) {
  const int ray_count = static_cast<int>(model.rays.size());
  if (ray_count == 0 || model.curves.size() != model.rays.size())
    throw std::invalid_argument("interpolate: model has no fitted rays");
  const int d = static_cast<int>(x.size());

  Eigen::VectorXd radii(ray_count);
  bool projected = false;
  if (!model.isoquant_estimates.empty()) {
    try {
      radii = crossings ? project_via_isoquants(x, model.isoquant_estimates,
                                                model.rays, *crossings)
                        : project_via_isoquants(x, model.isoquant_estimates,
                                                model.rays);
      projected = true;
    } catch (const std::runtime_error&) {
      projected = false;
    }
  }
  if (!projected) {
    for (int r = 0; r < ray_count; ++r)
      radii[r] = project_distance(x, model.rays[r]);
  }

  const Eigen::VectorXd phi = angles_of(x);
  std::vector<int> valid;
  for (int r = 0; r < ray_count; ++r)
    if (!std::isnan(radii[r])) valid.push_back(r);
  if (valid.empty()) {
    for (int r = 0; r < ray_count; ++r)
      radii[r] = project_distance(x, model.rays[r]);
    valid.resize(ray_count);
    for (int r = 0; r < ray_count; ++r) valid[r] = r;
  }

  std::vector<double> dist(valid.size());
  for (std::size_t k = 0; k < valid.size(); ++k)
    dist[k] = angle_distance(phi, model.rays[valid[k]].theta);

  // exact angular match bypasses the weighting
  for (std::size_t k = 0; k < valid.size(); ++k) {
    if (dist[k] <= 1e-12)
      return model.curves[valid[k]].eval(radii[valid[k]]);
  }

  // keep the rays within the d-th smallest distance, ties included
  std::vector<double> sorted = dist;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t keep = std::min<std::size_t>(d, sorted.size());
  const double threshold = sorted[keep - 1] * (1.0 + 1e-12);

  double weight_sum = 0.0, value_sum = 0.0;
  for (std::size_t k = 0; k < valid.size(); ++k) {
    if (dist[k] > threshold) continue;
    const double w = 1.0 / dist[k];
    weight_sum += w;
    value_sum += w * model.curves[valid[k]].eval(radii[valid[k]]);
  }
  return value_sum / weight_sum;
}

}  // namespace prodest::geometry
