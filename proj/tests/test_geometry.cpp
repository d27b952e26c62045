#include "prodest/geometry.hpp"

#include <doctest.h>

#include "prodest/isoquants.hpp"
#include "prodest/pipeline.hpp"
#include "prodest/rng.hpp"

using namespace prodest;

namespace {

//! Single-plane isoquant x_d = intercept + slope * x_rest (d = 2).
isoquants::IsoquantEstimate line_isoquant(double intercept, double slope,
                                          double level) {
  isoquants::IsoquantEstimate iso;
  iso.level = level;
  iso.support.resize(1, 1);
  iso.support(0, 0) = intercept / 2.0;
  iso.intercepts.resize(1);
  iso.intercepts[0] = intercept;
  iso.slopes.resize(1, 1);
  iso.slopes(0, 0) = slope;
  return iso;
}

}  // namespace

TEST_CASE("spherical coordinates of axis-aligned and generic points") {
  Eigen::VectorXd x(2);
  x << 1.0, 1.0;
  auto p = geometry::to_spherical(x);
  CHECK(p.r == doctest::Approx(std::sqrt(2.0)));
  CHECK(p.phi[0] == doctest::Approx(M_PI / 4.0));

  x << 0.0, 1.0;
  p = geometry::to_spherical(x);
  CHECK(p.r == doctest::Approx(1.0));
  CHECK(p.phi[0] == doctest::Approx(M_PI / 2.0));

  Eigen::VectorXd z(3);
  z << 3.0, 4.0, 12.0;
  p = geometry::to_spherical(z);
  CHECK(p.r == doctest::Approx(13.0));
  CHECK(p.phi[0] == doctest::Approx(std::acos(3.0 / 13.0)));
  CHECK(p.phi[1] == doctest::Approx(std::acos(4.0 / std::sqrt(160.0))));
}

TEST_CASE("round trip through spherical coordinates") {
  rng::Rng gen(31);
  for (int d = 2; d <= 5; ++d) {
    for (int trial = 0; trial < 50; ++trial) {
      Eigen::VectorXd x(d);
      for (int k = 0; k < d; ++k) x[k] = 0.05 + 3.0 * gen.uniform();
      const auto p = geometry::to_spherical(x);
      const Eigen::VectorXd back = geometry::from_spherical(p);
      CHECK((back - x).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
  CHECK_THROWS(geometry::to_spherical(zero));
}

TEST_CASE("angle distances") {
  Eigen::VectorXd a(1), b(1);
  a << M_PI / 4.0;
  b << M_PI / 2.0;
  CHECK(geometry::angle_distance(a, a) == 0.0);
  CHECK(geometry::angle_distance(a, b) == doctest::Approx(M_PI / 4.0));
  Eigen::VectorXd c(2), d(2);
  c << 0.3, 0.4;
  d << 0.0, 0.0;
  CHECK(geometry::angle_distance(c, d) == doctest::Approx(0.5));
}

TEST_CASE("scalar projection onto rays") {
  Eigen::VectorXd theta(1);
  theta << M_PI / 4.0;
  const auto ray = geometry::Ray::from_angles(theta);
  CHECK(geometry::project_distance(2.0 * ray.unit_direction, ray) ==
        doctest::Approx(2.0));
  Eigen::VectorXd x(2);
  x << 1.0, 2.0;
  CHECK(geometry::project_distance(x, ray) == doctest::Approx(3.0 / std::sqrt(2.0)));
  // a nearly perpendicular vector projects to nearly zero
  Eigen::VectorXd tiny_theta(1);
  tiny_theta << 1e-9;
  const auto flat = geometry::Ray::from_angles(tiny_theta);
  Eigen::VectorXd up(2);
  up << 0.0, 5.0;
  CHECK(std::abs(geometry::project_distance(up, flat)) <= 1e-6);
}

TEST_CASE("ray angles invert to the stated direction") {
  Eigen::VectorXd theta(2);
  theta << 0.7, 1.1;
  const auto ray = geometry::Ray::from_angles(theta);
  CHECK(ray.unit_direction.norm() == doctest::Approx(1.0));
  CHECK((geometry::angles_of(ray.unit_direction) - theta).cwiseAbs().maxCoeff() <=
        1e-10);
}

TEST_CASE("sandwich weights transport radii across rays") {
  // two parallel line isoquants crossing the 45-degree ray at radii 4 and 6
  std::vector<isoquants::IsoquantEstimate> isoquants{
      line_isoquant(4.0 * std::sqrt(2.0), -1.0, 1.0),
      line_isoquant(6.0 * std::sqrt(2.0), -1.0, 2.0)};
  Eigen::VectorXd theta(1);
  theta << M_PI / 4.0;
  std::vector<geometry::Ray> rays{geometry::Ray::from_angles(theta)};
  Eigen::VectorXd x = 5.0 * rays[0].unit_direction;
  const Eigen::VectorXd radii = geometry::project_via_isoquants(x, isoquants, rays);
  REQUIRE(radii.size() == 1);
  CHECK(radii[0] == doctest::Approx(5.0).epsilon(1e-8));  // rho = 0.5

  // a point exactly on an isoquant recovers that isoquant's crossing radius
  Eigen::VectorXd on = 4.0 * rays[0].unit_direction;
  const Eigen::VectorXd radii_on =
      geometry::project_via_isoquants(on, isoquants, rays);
  CHECK(radii_on[0] == doctest::Approx(4.0).epsilon(1e-8));
}

TEST_CASE("homothetic isoquant families project proportionally") {
  // radial scalings: isoquant at scale s is x2 = s * (3 - x1 / s) = 3 s - x1
  rng::Rng gen(5);
  std::vector<isoquants::IsoquantEstimate> isoquants;
  const std::vector<double> scales{1.0, 2.0, 3.0};
  for (std::size_t i = 0; i < scales.size(); ++i)
    isoquants.push_back(
        line_isoquant(3.0 * scales[i], -1.0, static_cast<double>(i + 1)));
  std::vector<geometry::Ray> rays;
  for (double t : {0.4, 0.8, 1.2}) {
    Eigen::VectorXd theta(1);
    theta << t;
    rays.push_back(geometry::Ray::from_angles(theta));
  }
  Eigen::VectorXd theta_x(1);
  theta_x << 0.9;
  const auto ray_x = geometry::Ray::from_angles(theta_x);
  const Eigen::VectorXd base =
      geometry::project_via_isoquants(1.3 * ray_x.unit_direction, isoquants, rays);
  for (double lambda : {1.7, 2.4}) {
    const Eigen::VectorXd scaled = geometry::project_via_isoquants(
        lambda * 1.3 * ray_x.unit_direction, isoquants, rays);
    for (int r = 0; r < base.size(); ++r)
      CHECK(scaled[r] == doctest::Approx(lambda * base[r]).epsilon(1e-9));
  }
}

namespace {

pipeline::ProductionModel toy_model(const std::vector<double>& thetas,
                                    const std::vector<double>& values) {
  pipeline::ProductionModel model;
  for (std::size_t r = 0; r < thetas.size(); ++r) {
    Eigen::VectorXd theta(1);
    theta << thetas[r];
    model.rays.push_back(geometry::Ray::from_angles(theta));
    sshape::SShapeCurve curve;
    curve.ray = model.rays.back();
    curve.grid.resize(2);
    curve.grid << 0.5, 4.0;
    curve.values.resize(2);
    curve.values << values[r], values[r];
    curve.slopes = Eigen::VectorXd::Zero(2);
    curve.inflection = 0;
    model.curves.push_back(std::move(curve));
  }
  model.provenance.estimator = "fixture";
  return model;
}

}  // namespace

TEST_CASE("interpolation uses the exact ray when angles match") {
  const auto model = toy_model({0.5, 1.0}, {2.0, 8.0});
  const Eigen::VectorXd x = 1.5 * model.rays[0].unit_direction;
  CHECK(geometry::interpolate(x, model) == doctest::Approx(2.0));
}

TEST_CASE("two equidistant rays average evenly") {
  const auto model = toy_model({0.5, 0.9}, {2.0, 8.0});
  Eigen::VectorXd theta(1);
  theta << 0.7;
  const Eigen::VectorXd x =
      2.0 * geometry::Ray::from_angles(theta).unit_direction;
  CHECK(geometry::interpolate(x, model) == doctest::Approx(5.0).epsilon(1e-9));
}

TEST_CASE("interpolation jumps only at the ray-selection boundary") {
  // three flat curves; d = 2 keeps the two nearest rays
  const auto model = toy_model({0.3, 0.7, 1.2}, {1.0, 2.0, 10.0});
  // crossing theta = 0.5 swaps nothing (rays 0 and 1 stay nearest)
  auto value_at = [&](double t) {
    Eigen::VectorXd theta(1);
    theta << t;
    return geometry::interpolate(
        1.0 * geometry::Ray::from_angles(theta).unit_direction, model);
  };
  const double step = 1e-7;
  // continuity away from the selection boundary
  for (double t : {0.45, 0.55, 0.8}) {
    CHECK(std::abs(value_at(t + step) - value_at(t)) <= 1e-4);
  }
  // the boundary where ray 0 and ray 2 swap: equidistant to theta=0.3, 1.2
  const double boundary = 0.75;
  const double jump = std::abs(value_at(boundary + 1e-9) - value_at(boundary - 1e-9));
  // weight of the swapped ray at the boundary bounds the jump
  const double dist_far = 0.45;   // distance to either outer ray
  const double dist_near = 0.05;  // distance to the middle ray
  const double weight_share = (1.0 / dist_far) / (1.0 / dist_far + 1.0 / dist_near);
  CHECK(jump <= weight_share * std::abs(10.0 - 1.0) + 1e-5);
  CHECK(jump > 0.0);
}
