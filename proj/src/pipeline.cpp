#include "prodest/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include "prodest/parallel.hpp"
#include "prodest/rng.hpp"
#include "prodest/smoothing.hpp"

namespace prodest::pipeline {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

void InitConfig::check() const {
  if (levels < 1 || rays < 1)
    throw std::invalid_argument("config: levels and rays must be >= 1");
  if (!(omega1 > 0.0) || !(delta_omega > 0.0))
    throw std::invalid_argument("config: bandwidth schedule must be positive");
  if (iterations < 1) throw std::invalid_argument("config: iterations must be >= 1");
  if (!(gap_tolerance > 0.0 && gap_tolerance < 1.0))
    throw std::invalid_argument("config: gap tolerance must be in (0,1)");
  if (violation_limit < 1)
    throw std::invalid_argument("config: violation limit must be >= 1");
  if (weight_sshape < 0.0 || weight_isoquant < 0.0 ||
      std::abs(weight_sshape + weight_isoquant - 1.0) > 1e-12)
    throw std::invalid_argument("config: estimate weights must sum to one");
  if (directions < 1) throw std::invalid_argument("config: directions must be >= 1");
  if (grid_points < 2) throw std::invalid_argument("config: grid needs >= 2 points");
  if (!(trim > 0.0 && trim < 0.5))
    throw std::invalid_argument("config: trim must be in (0, 1/2)");
}

Eigen::VectorXd pilot_values(const data::Dataset& ds) {
  const smoothing::Bandwidth rot = smoothing::rule_of_thumb_bandwidth(ds.X);
  Eigen::VectorXd out(ds.n());
  for (int j = 0; j < ds.n(); ++j)
    out[j] = smoothing::local_linear_fit_adaptive(ds.X, ds.y, rot, ds.X.row(j));
  return out;
}

namespace {

Eigen::VectorXd strict_increasing_or_throw(Eigen::VectorXd v, const char* what) {
  for (int i = 1; i < v.size(); ++i)
    if (!(v[i] > v[i - 1]))
      throw std::invalid_argument(std::string(what) +
                                  ": requested count exceeds distinct values");
  return v;
}

//! Relative gaps divide by the level, so nonpositive levels (possible with
//! noisy pilot values) are unusable and dropped.
Eigen::VectorXd positive_levels(const Eigen::VectorXd& v, const char* what) {
  std::vector<double> kept;
  for (int i = 0; i < v.size(); ++i)
    if (v[i] > 0.0) kept.push_back(v[i]);
  if (kept.empty())
    throw std::invalid_argument(std::string(what) + ": no positive levels");
  Eigen::VectorXd out(static_cast<int>(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) out[i] = kept[i];
  return out;
}

std::vector<geometry::Ray> rays_from_angle_rows(const Eigen::MatrixXd& thetas) {
  std::vector<geometry::Ray> rays;
  for (int r = 0; r < thetas.rows(); ++r) {
    const Eigen::VectorXd theta = thetas.row(r);
    bool duplicate = false;
    for (const auto& existing : rays)
      if (geometry::angle_distance(existing.theta, theta) <= 1e-6) duplicate = true;
    if (!duplicate) rays.push_back(geometry::Ray::from_angles(theta));
  }
  if (rays.empty()) throw std::invalid_argument("initialize: no usable rays");
  return rays;
}

}  // namespace

std::pair<Eigen::VectorXd, std::vector<geometry::Ray>> initialize(
    const data::Dataset& ds, const InitConfig& cfg,
    const Eigen::VectorXd& pilot) {
  cfg.check();
  const int n = ds.n();
  const int d = ds.d();
  Eigen::MatrixXd angles(n, d - 1);
  for (int j = 0; j < n; ++j) angles.row(j) = geometry::angles_of(ds.X.row(j));

  if (cfg.placement == Placement::KMeansCentroids) {
    Eigen::MatrixXd joint(n, d + 1);
    joint.leftCols(d) = ds.X;
    joint.col(d) = ds.y;
    const int k = std::max(cfg.levels, cfg.rays);
    if (k >= n)
      throw std::invalid_argument("initialize: cluster count exceeds sample size");
    KMeansResult km = kmeans_bic(joint, {k}, cfg.seed);
    Eigen::VectorXd levels = km.centroids.col(d);
    std::sort(levels.data(), levels.data() + levels.size());
    levels = positive_levels(levels, "initialize levels");
    levels = strict_increasing_or_throw(levels, "initialize levels");
    Eigen::MatrixXd thetas(km.centroids.rows(), d - 1);
    for (int r = 0; r < km.centroids.rows(); ++r)
      thetas.row(r) = geometry::angles_of(km.centroids.row(r).head(d));
    return {levels, rays_from_angle_rows(thetas)};
  }

  Eigen::VectorXd levels(cfg.levels);
  Eigen::MatrixXd thetas(cfg.rays, d - 1);
  if (cfg.placement == Placement::EvenGrid) {
    const double y_lo = pilot.minCoeff();
    const double y_hi = pilot.maxCoeff();
    for (int i = 0; i < cfg.levels; ++i)
      levels[i] = y_lo + (i + 1.0) / (cfg.levels + 1.0) * (y_hi - y_lo);
    for (int k = 0; k < d - 1; ++k) {
      const double a_lo = angles.col(k).minCoeff();
      const double a_hi = angles.col(k).maxCoeff();
      for (int r = 0; r < cfg.rays; ++r)
        thetas(r, k) = a_lo + (r + 1.0) / (cfg.rays + 1.0) * (a_hi - a_lo);
    }
  } else {  // PercentileGrid
    for (int i = 0; i < cfg.levels; ++i)
      levels[i] = data::percentile(pilot, 100.0 * (i + 1.0) / (cfg.levels + 1.0));
    for (int k = 0; k < d - 1; ++k) {
      for (int r = 0; r < cfg.rays; ++r)
        thetas(r, k) =
            data::percentile(angles.col(k), 100.0 * (r + 1.0) / (cfg.rays + 1.0));
    }
  }
  levels = positive_levels(levels, "initialize levels");
  levels = strict_increasing_or_throw(levels, "initialize levels");
  return {levels, rays_from_angle_rows(thetas)};
}

namespace {

struct KMeansRun {
  Eigen::MatrixXd centroids;
  std::vector<int> labels;
  double sse = kInf;
  bool ok = false;
};

KMeansRun lloyd(const Eigen::MatrixXd& points, int k, rng::Rng& gen) {
  const int n = static_cast<int>(points.rows());
  const int d = static_cast<int>(points.cols());
  KMeansRun run;
  // distinct random rows as initial centroids
  std::set<int> chosen;
  while (static_cast<int>(chosen.size()) < k) chosen.insert(gen.uniform_int(0, n - 1));
  run.centroids.resize(k, d);
  int row = 0;
  for (int idx : chosen) run.centroids.row(row++) = points.row(idx);

  run.labels.assign(n, -1);
  for (int iter = 0; iter < 200; ++iter) {
    bool changed = false;
    for (int j = 0; j < n; ++j) {
      int best = 0;
      double best_dist = (points.row(j) - run.centroids.row(0)).squaredNorm();
      for (int c = 1; c < k; ++c) {
        const double dist = (points.row(j) - run.centroids.row(c)).squaredNorm();
        if (dist < best_dist) {
          best_dist = dist;
          best = c;
        }
      }
      if (run.labels[j] != best) changed = true;
      run.labels[j] = best;
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, d);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (int j = 0; j < n; ++j) {
      sums.row(run.labels[j]) += points.row(j);
      counts[run.labels[j]] += 1.0;
    }
    if ((counts.array() == 0.0).any()) return run;  // empty cluster, retry outside
    for (int c = 0; c < k; ++c) run.centroids.row(c) = sums.row(c) / counts[c];
    if (!changed && iter > 0) break;
  }
  run.sse = 0.0;
  for (int j = 0; j < n; ++j)
    run.sse += (points.row(j) - run.centroids.row(run.labels[j])).squaredNorm();
  run.ok = true;
  return run;
}

double spherical_bic(const KMeansRun& run, const Eigen::MatrixXd& points, int k) {
  const int n = static_cast<int>(points.rows());
  const int d = static_cast<int>(points.cols());
  if (n <= k) return kInf;
  const double sigma2 = std::max(run.sse / (static_cast<double>(d) * (n - k)), 1e-30);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
  for (int label : run.labels) counts[label] += 1.0;
  double loglik = -0.5 * n * d * std::log(2.0 * M_PI * sigma2) -
                  0.5 * d * (n - k);
  for (int c = 0; c < k; ++c)
    if (counts[c] > 0.0) loglik += counts[c] * std::log(counts[c] / n);
  const double params = k * (d + 1) + 1;
  return -2.0 * loglik + params * std::log(static_cast<double>(n));
}

}  // namespace

KMeansResult kmeans_bic(const Eigen::MatrixXd& points,
                        const std::vector<int>& k_range, std::uint64_t seed) {
  const int n = static_cast<int>(points.rows());
  if (k_range.empty()) throw std::invalid_argument("kmeans_bic: empty k range");
  for (int k : k_range)
    if (k < 1 || k >= n)
      throw std::invalid_argument("kmeans_bic: k must be in [1, n)");

  KMeansResult best;
  best.bic = kInf;
  for (std::size_t slot = 0; slot < k_range.size(); ++slot) {
    int k = k_range[slot];
    KMeansRun best_run;
    while (true) {
      for (int restart = 0; restart < 10; ++restart) {
        rng::Rng gen = rng::Rng::substream(
            seed, (static_cast<std::uint64_t>(slot) << 16) + restart);
        KMeansRun run = lloyd(points, k, gen);
        for (int again = 0; !run.ok && again < 10; ++again)
          run = lloyd(points, k, gen);
        if (run.ok && run.sse < best_run.sse) best_run = run;
      }
      if (best_run.ok || k == 1) break;
      --k;  // persistent empty clusters: retry with one fewer
    }
    if (!best_run.ok) continue;
    const double bic = spherical_bic(best_run, points, k);
    if (bic < best.bic) {
      best.bic = bic;
      best.k = k;
      best.centroids = best_run.centroids;
      best.labels = best_run.labels;
    }
  }
  if (best.k == 0) throw std::runtime_error("kmeans_bic: clustering failed");
  return best;
}

namespace {

//! Per-observation projected radii onto each ray (n x R); isoquant-based when
//! possible, otherwise the distance-based fallback for that observation.
Eigen::MatrixXd projected_radii(const data::Dataset& ds,
                                const std::vector<isoquants::IsoquantEstimate>& isoq,
                                const std::vector<geometry::Ray>& rays,
                                const Eigen::MatrixXd* crossings) {
  const int n = ds.n();
  const int R = static_cast<int>(rays.size());
  Eigen::MatrixXd radii(n, R);
  for (int j = 0; j < n; ++j) {
    bool done = false;
    if (!isoq.empty() && crossings != nullptr) {
      try {
        radii.row(j) =
            geometry::project_via_isoquants(ds.X.row(j), isoq, rays, *crossings);
        done = true;
      } catch (const std::runtime_error&) {
      }
    }
    if (!done) {
      for (int r = 0; r < R; ++r)
        radii(j, r) = geometry::project_distance(ds.X.row(j), rays[r]);
    }
  }
  // distance fallback for rays where the isoquant band misses
  for (int j = 0; j < n; ++j)
    for (int r = 0; r < R; ++r)
      if (std::isnan(radii(j, r)))
        radii(j, r) = geometry::project_distance(ds.X.row(j), rays[r]);
  return radii;
}

std::vector<double> radial_bandwidth_grid(const Eigen::VectorXd& radii) {
  const double sd = data::sample_sd(radii);
  const double rot = 1.06 * (sd > 0 ? sd : 1.0) *
                     std::pow(static_cast<double>(radii.size()), -0.2);
  std::vector<double> grid;
  for (int k = 0; k < 10; ++k) grid.push_back(0.25 * rot * std::pow(16.0, k / 9.0));
  return grid;
}

//! SCKLS on one ray with the radial bandwidth from weighted LOOCV, widening
//! both bandwidths when the effective sample collapses at some grid point.
sshape::SShapeCurve fit_ray(const Eigen::VectorXd& responses,
                            const Eigen::VectorXd& radii,
                            const Eigen::MatrixXd& angles,
                            const geometry::Ray& ray, int grid_points,
                            double omega) {
  Eigen::VectorXd angle_weight(angles.rows());
  for (int j = 0; j < angles.rows(); ++j)
    angle_weight[j] = smoothing::epanechnikov(
        geometry::angle_distance(angles.row(j), ray.theta) / omega);
  if ((angle_weight.array() > 0.0).count() < 5)
    throw std::runtime_error("fit_ray: too few observations near the ray");

  const double r_lo = radii.minCoeff();
  const double r_hi = radii.maxCoeff();
  if (!(r_hi > r_lo)) throw std::runtime_error("fit_ray: degenerate radii");
  Eigen::VectorXd grid(grid_points);
  for (int g = 0; g < grid_points; ++g)
    grid[g] = r_lo + (r_hi - r_lo) * g / (grid_points - 1.0);

  double h = smoothing::loocv_bandwidth_1d(radii, responses, angle_weight,
                                           radial_bandwidth_grid(radii));
  double omega_used = omega;
  for (int attempt = 0;; ++attempt) {
    try {
      return sshape::sckls_fit(responses, radii, angles, ray, grid, omega_used, h);
    } catch (const std::runtime_error&) {
      if (attempt >= 6) throw;
      h *= 2.0;
      omega_used *= 1.5;
    }
  }
}

//! Radius at which a curve first attains a level, linear extensions included.
double curve_level_radius(const sshape::SShapeCurve& curve, double level) {
  const int G = curve.size();
  const double a0 = curve.values[0];
  const double aG = curve.values[G - 1];
  if (level < a0) {
    const double s = (curve.values[1] - curve.values[0]) /
                     (curve.grid[1] - curve.grid[0]);
    if (s <= 0.0) return kNan;
    const double r = curve.grid[0] - (a0 - level) / s;
    return r > 0.0 ? r : kNan;
  }
  if (level > aG) {
    const double s = (curve.values[G - 1] - curve.values[G - 2]) /
                     (curve.grid[G - 1] - curve.grid[G - 2]);
    if (s <= 0.0) return kNan;
    return curve.grid[G - 1] + (level - aG) / s;
  }
  for (int g = 0; g + 1 < G; ++g) {
    if (level > curve.values[g + 1]) continue;
    const double lo_v = curve.values[g];
    const double hi_v = curve.values[g + 1];
    if (hi_v <= lo_v) return curve.grid[g + 1];
    return curve.grid[g] +
           (curve.grid[g + 1] - curve.grid[g]) * (level - lo_v) / (hi_v - lo_v);
  }
  return curve.grid[G - 1];
}

struct Iterate {
  ProductionModel model;
  double mse = kInf;
  double max_gap = kInf;
  Eigen::VectorXd predictions;
};

//! MSE at the observations and the worst relative gap at the isoquant/ray
//! intersection points.
Iterate evaluate_model(ProductionModel model, const data::Dataset& ds) {
  Iterate it;
  Eigen::MatrixXd crossings;
  if (!model.isoquant_estimates.empty())
    crossings = geometry::isoquant_ray_crossings(model.isoquant_estimates,
                                                 model.rays);
  it.predictions.resize(ds.n());
  double sse = 0.0;
  for (int j = 0; j < ds.n(); ++j) {
    const double fit = model.homothetic
                           ? predict(model, ds.X.row(j))
                           : geometry::interpolate(ds.X.row(j), model,
                                                   crossings.size() ? &crossings
                                                                    : nullptr);
    it.predictions[j] = fit;
    sse += (ds.y[j] - fit) * (ds.y[j] - fit);
  }
  it.mse = sse / ds.n();

  double max_gap = 0.0;
  if (!model.homothetic) {
    for (int i = 0; i < crossings.rows(); ++i) {
      for (int r = 0; r < crossings.cols(); ++r) {
        if (std::isnan(crossings(i, r))) {
          max_gap = kInf;
          continue;
        }
        const Eigen::VectorXd point =
            crossings(i, r) * model.rays[r].unit_direction;
        const double fit = geometry::interpolate(point, model, &crossings);
        const double level = model.levels[i];
        max_gap = std::max(max_gap, std::abs(level - fit) / level);
      }
    }
  }
  it.max_gap = max_gap;
  it.model = std::move(model);
  it.model.provenance.mse = it.mse;
  it.model.provenance.max_rel_gap = it.max_gap;
  return it;
}

std::vector<isoquants::IsoquantEstimate> fit_level_isoquants(
    const data::Dataset& ds, const isoquants::LevelAssignment& assignment,
    const InitConfig& cfg, std::vector<int>* kept_levels) {
  const int I = static_cast<int>(assignment.levels.size());
  std::vector<isoquants::IsoquantEstimate> isoq;
  for (int i = 0; i < I; ++i) {
    std::vector<int> members;
    for (int j = 0; j < ds.n(); ++j)
      if (assignment.index[j] == i) members.push_back(j);
    if (static_cast<int>(members.size()) < std::max(2, ds.d())) continue;
    Eigen::MatrixXd points(static_cast<int>(members.size()), ds.d());
    for (std::size_t t = 0; t < members.size(); ++t)
      points.row(t) = ds.X.row(members[t]);
    try {
      switch (cfg.isoquant_method) {
        case IsoquantMethod::Cnls:
          isoq.push_back(isoquants::cnls_isoquant(points, assignment.levels[i]));
          break;
        case IsoquantMethod::Dcnls: {
          Eigen::VectorXd ones = Eigen::VectorXd::Ones(ds.d());
          isoq.push_back(isoquants::directional_cnls_isoquant(
              points, assignment.levels[i], ones / ones.norm()));
          break;
        }
        case IsoquantMethod::Adcnls:
          isoq.push_back(isoquants::averaging_directional_cnls(
              points, assignment.levels[i], cfg.directions));
          break;
      }
      if (kept_levels) kept_levels->push_back(i);
    } catch (const std::exception&) {
      // level dropped: too degenerate to support an isoquant fit
    }
  }
  return isoq;
}

}  // namespace

ProductionModel run_basic(const data::Dataset& ds, const InitConfig& cfg) {
  cfg.check();
  ds.check();
  if (ds.d() < 2) throw std::invalid_argument("run_basic: need d >= 2");
  if (ds.n() < ds.d() + 2) throw std::invalid_argument("run_basic: need n >= d+2");

  const Eigen::VectorXd pilot = cfg.use_pilot ? pilot_values(ds) : ds.y;
  auto [levels, rays] = initialize(ds, cfg, pilot);
  const isoquants::LevelAssignment assignment =
      isoquants::assign_levels(pilot, levels);

  std::vector<int> kept;
  std::vector<isoquants::IsoquantEstimate> isoq =
      fit_level_isoquants(ds, assignment, cfg, &kept);
  Eigen::VectorXd kept_levels(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) kept_levels[i] = levels[kept[i]];

  Eigen::MatrixXd crossings;
  if (!isoq.empty()) crossings = geometry::isoquant_ray_crossings(isoq, rays);
  const Eigen::MatrixXd radii =
      projected_radii(ds, isoq, rays, isoq.empty() ? nullptr : &crossings);

  Eigen::MatrixXd angles(ds.n(), ds.d() - 1);
  for (int j = 0; j < ds.n(); ++j) angles.row(j) = geometry::angles_of(ds.X.row(j));

  Iterate best;
  bool have_best = false;
  for (int step = 0; step < cfg.iterations; ++step) {
    const double omega = cfg.omega1 + step * cfg.delta_omega;
    std::vector<geometry::Ray> used_rays;
    std::vector<sshape::SShapeCurve> curves;
    for (std::size_t r = 0; r < rays.size(); ++r) {
      try {
        curves.push_back(fit_ray(pilot, radii.col(r), angles, rays[r],
                                 cfg.grid_points, omega));
        used_rays.push_back(rays[r]);
      } catch (const std::exception&) {
      }
    }
    if (curves.empty()) continue;

    ProductionModel model;
    model.rays = used_rays;
    model.curves = std::move(curves);
    model.levels = kept_levels;
    model.isoquant_estimates = isoq;
    model.provenance.estimator = "basic";
    model.provenance.omega = omega;
    model.provenance.iteration = step;
    Iterate it = evaluate_model(std::move(model), ds);
    if (!have_best || it.mse < best.mse) {
      best = std::move(it);
      have_best = true;
    }
  }
  if (!have_best) throw std::runtime_error("run_basic: no ray fit succeeded");
  best.model.provenance.within_tolerance = best.max_gap <= cfg.gap_tolerance;
  return best.model;
}

ProductionModel run_iterative(const data::Dataset& ds, const InitConfig& cfg) {
  cfg.check();
  ds.check();
  if (ds.d() < 2) throw std::invalid_argument("run_iterative: need d >= 2");
  if (ds.n() < ds.d() + 2)
    throw std::invalid_argument("run_iterative: need n >= d+2");

  const Eigen::VectorXd pilot = cfg.use_pilot ? pilot_values(ds) : ds.y;
  auto [levels0, rays0] = initialize(ds, cfg, pilot);
  const isoquants::LevelAssignment assignment =
      isoquants::assign_levels(pilot, levels0);

  std::vector<int> kept;
  std::vector<isoquants::IsoquantEstimate> isoq =
      fit_level_isoquants(ds, assignment, cfg, &kept);
  if (isoq.empty()) throw std::runtime_error("run_iterative: no isoquant fit");
  std::vector<double> levels;
  for (std::size_t i = 0; i < kept.size(); ++i) levels.push_back(levels0[kept[i]]);
  std::vector<geometry::Ray> rays = rays0;

  Eigen::MatrixXd angles(ds.n(), ds.d() - 1);
  for (int j = 0; j < ds.n(); ++j) angles.row(j) = geometry::angles_of(ds.X.row(j));

  std::vector<int> ray_violations(rays.size(), 0);
  std::vector<int> level_violations(levels.size(), 0);

  std::vector<Iterate> iterates;
  Eigen::VectorXd prev_predictions;
  double omega = cfg.omega1;
  for (int step = 0; step < cfg.iterations; ++step) {
    Eigen::VectorXd level_vec(levels.size());
    for (std::size_t i = 0; i < levels.size(); ++i) level_vec[i] = levels[i];

    Eigen::MatrixXd crossings = geometry::isoquant_ray_crossings(isoq, rays);
    const Eigen::MatrixXd radii = projected_radii(ds, isoq, rays, &crossings);

    // ray curves at the current angle bandwidth
    std::vector<sshape::SShapeCurve> curves;
    std::vector<int> live;
    for (std::size_t r = 0; r < rays.size(); ++r) {
      try {
        curves.push_back(fit_ray(pilot, radii.col(r), angles, rays[r],
                                 cfg.grid_points, omega));
        live.push_back(static_cast<int>(r));
      } catch (const std::exception&) {
      }
    }
    if (curves.empty())
      throw std::runtime_error("run_iterative: every ray fit failed");
    if (live.size() != rays.size()) {
      std::vector<geometry::Ray> pruned;
      std::vector<int> pruned_viol;
      for (int r : live) {
        pruned.push_back(rays[r]);
        pruned_viol.push_back(ray_violations[r]);
      }
      rays = std::move(pruned);
      ray_violations = std::move(pruned_viol);
      crossings = geometry::isoquant_ray_crossings(isoq, rays);
    }

    // cut the curves at each level and re-estimate the isoquants
    std::vector<std::vector<double>> cut_radii(levels.size(),
                                               std::vector<double>(rays.size()));
    for (std::size_t i = 0; i < levels.size(); ++i)
      for (std::size_t r = 0; r < rays.size(); ++r)
        cut_radii[i][r] = curve_level_radius(curves[r], levels[i]);

    for (std::size_t i = 0; i < levels.size(); ++i) {
      std::vector<Eigen::VectorXd> pts;
      for (std::size_t r = 0; r < rays.size(); ++r)
        if (!std::isnan(cut_radii[i][r]))
          pts.push_back(cut_radii[i][r] * rays[r].unit_direction);
      if (static_cast<int>(pts.size()) < 2) continue;  // keep the previous estimate
      Eigen::MatrixXd points(static_cast<int>(pts.size()), ds.d());
      for (std::size_t t = 0; t < pts.size(); ++t) points.row(t) = pts[t];
      try {
        isoq[i] = isoquants::cnls_isoquant(points, levels[i]);
      } catch (const std::exception&) {
      }
    }

    const std::vector<sshape::SShapeCurve> revised = sshape::minimize_gap(
        curves, cut_radii, level_vec, cfg.weight_sshape, cfg.weight_isoquant);

    ProductionModel model;
    model.rays = rays;
    model.curves = revised;
    model.levels = level_vec;
    model.isoquant_estimates = isoq;
    model.provenance.estimator = "iterative";
    model.provenance.omega = omega;
    model.provenance.iteration = step;
    Iterate it = evaluate_model(std::move(model), ds);

    // per-ray / per-level violation bookkeeping on the recorded gaps
    Eigen::MatrixXd gap(levels.size(), rays.size());
    {
      Eigen::MatrixXd cross_now =
          geometry::isoquant_ray_crossings(it.model.isoquant_estimates, rays);
      for (std::size_t i = 0; i < levels.size(); ++i) {
        for (std::size_t r = 0; r < rays.size(); ++r) {
          if (std::isnan(cross_now(i, r))) {
            gap(i, r) = kInf;
            continue;
          }
          const Eigen::VectorXd point = cross_now(i, r) * rays[r].unit_direction;
          const double fit = geometry::interpolate(point, it.model, &cross_now);
          gap(i, r) = std::abs(levels[i] - fit) / levels[i];
        }
      }
    }
    iterates.push_back(std::move(it));

    const bool stable =
        prev_predictions.size() == ds.n() &&
        (iterates.back().predictions - prev_predictions).cwiseAbs().maxCoeff() <
            1e-4;
    prev_predictions = iterates.back().predictions;

    // deletion rules on this iteration's gaps (never removing the last one)
    for (std::size_t r = 0; r < rays.size(); ++r) {
      bool violated = false;
      for (std::size_t i = 0; i < levels.size(); ++i)
        if (gap(i, r) > cfg.gap_tolerance) violated = true;
      ray_violations[r] = violated ? ray_violations[r] + 1 : 0;
    }
    for (std::size_t i = 0; i < levels.size(); ++i) {
      bool violated = false;
      for (std::size_t r = 0; r < rays.size(); ++r)
        if (gap(i, r) > cfg.gap_tolerance) violated = true;
      level_violations[i] = violated ? level_violations[i] + 1 : 0;
    }
    std::vector<int> keep_rays;
    for (std::size_t r = 0; r < rays.size(); ++r)
      if (ray_violations[r] < cfg.violation_limit || rays.size() == 1)
        keep_rays.push_back(static_cast<int>(r));
    if (keep_rays.empty()) keep_rays.push_back(0);
    if (keep_rays.size() != rays.size()) {
      std::vector<geometry::Ray> pruned;
      std::vector<int> pv;
      for (int r : keep_rays) {
        pruned.push_back(rays[r]);
        pv.push_back(ray_violations[r]);
      }
      rays = std::move(pruned);
      ray_violations = std::move(pv);
    }
    std::vector<int> keep_levels;
    for (std::size_t i = 0; i < levels.size(); ++i)
      if (level_violations[i] < cfg.violation_limit || levels.size() == 1)
        keep_levels.push_back(static_cast<int>(i));
    if (keep_levels.empty()) keep_levels.push_back(0);
    if (keep_levels.size() != levels.size()) {
      std::vector<double> lv;
      std::vector<int> lviol;
      std::vector<isoquants::IsoquantEstimate> iso;
      for (int i : keep_levels) {
        lv.push_back(levels[i]);
        lviol.push_back(level_violations[i]);
        iso.push_back(isoq[i]);
      }
      levels = std::move(lv);
      level_violations = std::move(lviol);
      isoq = std::move(iso);
    }

    if (stable) break;
    omega += cfg.delta_omega;
  }

  // smallest MSE among the iterates within the gap tolerance
  int best = -1;
  for (std::size_t t = 0; t < iterates.size(); ++t) {
    if (iterates[t].max_gap > cfg.gap_tolerance) continue;
    if (best < 0 || iterates[t].mse < iterates[best].mse)
      best = static_cast<int>(t);
  }
  bool within = best >= 0;
  if (best < 0) {
    double least_gap = kInf;
    for (std::size_t t = 0; t < iterates.size(); ++t) {
      if (iterates[t].max_gap < least_gap) {
        least_gap = iterates[t].max_gap;
        best = static_cast<int>(t);
      }
    }
  }
  if (best < 0) throw std::runtime_error("run_iterative: no iterate produced");
  ProductionModel out = std::move(iterates[best].model);
  out.provenance.within_tolerance = within;
  return out;
}

ProductionModel run_homothetic(const data::Dataset& ds, const InitConfig& cfg) {
  cfg.check();
  ds.check();
  if (ds.d() < 2) throw std::invalid_argument("run_homothetic: need d >= 2");
  if (ds.n() < ds.d() + 2)
    throw std::invalid_argument("run_homothetic: need n >= d+2");

  const Eigen::VectorXd pilot = cfg.use_pilot ? pilot_values(ds) : ds.y;
  auto [levels, rays_unused] = initialize(ds, cfg, pilot);
  (void)rays_unused;
  const isoquants::LevelAssignment assignment =
      isoquants::assign_levels(pilot, levels);

  std::vector<int> kept;
  std::vector<isoquants::IsoquantEstimate> fitted =
      fit_level_isoquants(ds, assignment, cfg, &kept);
  if (fitted.empty())
    throw std::runtime_error("run_homothetic: isoquant estimation failed");
  Eigen::VectorXd kept_levels(kept.size());
  std::vector<int> kept_index(ds.n());
  {
    // re-map assignments onto the surviving levels
    std::vector<int> map(levels.size(), -1);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      map[kept[i]] = static_cast<int>(i);
      kept_levels[i] = levels[kept[i]];
    }
    for (int j = 0; j < ds.n(); ++j) {
      int idx = map[assignment.index[j]];
      if (idx < 0) {
        // nearest surviving level
        double best_gap = kInf;
        for (std::size_t i = 0; i < kept.size(); ++i) {
          const double gap = std::abs(pilot[j] - kept_levels[i]);
          if (gap < best_gap) {
            best_gap = gap;
            idx = static_cast<int>(i);
          }
        }
      }
      kept_index[j] = idx;
    }
  }
  isoquants::LevelAssignment surviving;
  surviving.levels = kept_levels;
  surviving.index = kept_index;

  const isoquants::HomotheticFamily family =
      isoquants::homothetic_isoquant(ds.X, surviving, fitted, cfg.trim);

  // homothetic projection of every observation onto the unit ray
  const int d = ds.d();
  const geometry::Ray unit_ray =
      geometry::Ray::through(Eigen::VectorXd::Ones(d));
  auto unit_scale = [&](const Eigen::VectorXd& x) {
    auto gap = [&](double s) {
      return x[d - 1] / s - family.unit.eval(x.head(d - 1) / s);
    };
    double lo = 1e-12, hi = 1.0;
    int expand = 0;
    while (gap(hi) > 0.0) {
      hi *= 2.0;
      if (++expand > 60)
        throw std::runtime_error("run_homothetic: projection failed");
    }
    expand = 0;
    while (gap(lo) < 0.0) {
      lo /= 2.0;
      if (++expand > 60)
        throw std::runtime_error("run_homothetic: projection failed");
    }
    while (hi - lo > 1e-12 * std::max(1.0, hi)) {
      const double mid = 0.5 * (lo + hi);
      (gap(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };

  Eigen::VectorXd radii(ds.n());
  for (int j = 0; j < ds.n(); ++j)
    radii[j] = unit_scale(ds.X.row(j)) * std::sqrt(static_cast<double>(d));

  Eigen::MatrixXd angles(ds.n(), d - 1);
  for (int j = 0; j < ds.n(); ++j) angles.row(j) = unit_ray.theta.transpose();

  sshape::SShapeCurve curve =
      fit_ray(pilot, radii, angles, unit_ray, cfg.grid_points, 1.0);

  ProductionModel model;
  model.homothetic = true;
  model.rays = {unit_ray};
  model.curves = {std::move(curve)};
  model.levels = kept_levels;
  model.isoquant_estimates = family.per_level;
  model.unit_isoquant = family.unit;
  model.provenance.estimator = "homothetic";
  model.provenance.omega = 1.0;
  Iterate it = evaluate_model(std::move(model), ds);
  it.model.provenance.max_rel_gap = 0.0;  // zero by construction
  it.model.provenance.within_tolerance = true;
  return it.model;
}

double predict(const ProductionModel& model, const Eigen::VectorXd& x) {
  if ((x.array() <= 0.0).any())
    throw std::invalid_argument("predict: x must be positive");
  if (!model.homothetic) return geometry::interpolate(x, model);

  const int d = static_cast<int>(x.size());
  const isoquants::IsoquantEstimate& unit = *model.unit_isoquant;
  auto gap = [&](double s) { return x[d - 1] / s - unit.eval(x.head(d - 1) / s); };
  double lo = 1e-12, hi = 1.0;
  int expand = 0;
  while (gap(hi) > 0.0) {
    hi *= 2.0;
    if (++expand > 60) throw std::runtime_error("predict: projection failed");
  }
  expand = 0;
  while (gap(lo) < 0.0) {
    lo /= 2.0;
    if (++expand > 60) throw std::runtime_error("predict: projection failed");
  }
  while (hi - lo > 1e-12 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    (gap(mid) > 0.0 ? lo : hi) = mid;
  }
  const double radius = 0.5 * (lo + hi) * std::sqrt(static_cast<double>(d));
  return model.curves.front().eval(radius);
}

namespace {

nlohmann::json vec_json(const Eigen::VectorXd& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Eigen::VectorXd vec_from(const nlohmann::json& arr) {
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[i] = arr[i].get<double>();
  return v;
}

nlohmann::json mat_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) rows.push_back(vec_json(m.row(i)));
  return rows;
}

Eigen::MatrixXd mat_from(const nlohmann::json& rows, int cols_hint) {
  const int r = static_cast<int>(rows.size());
  if (r == 0) return Eigen::MatrixXd(0, cols_hint);
  const int c = static_cast<int>(rows[0].size());
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rows[i][j].get<double>();
  return m;
}

nlohmann::json isoquant_json(const isoquants::IsoquantEstimate& iso) {
  return {{"level", iso.level},
          {"support", mat_json(iso.support)},
          {"intercepts", vec_json(iso.intercepts)},
          {"slopes", mat_json(iso.slopes)}};
}

isoquants::IsoquantEstimate isoquant_from(const nlohmann::json& j) {
  isoquants::IsoquantEstimate iso;
  iso.level = j.at("level").get<double>();
  iso.intercepts = vec_from(j.at("intercepts"));
  iso.slopes = mat_from(j.at("slopes"), 1);
  iso.support = mat_from(j.at("support"), iso.slopes.cols());
  return iso;
}

}  // namespace

nlohmann::json to_json(const ProductionModel& model) {
  nlohmann::json j;
  j["format"] = "production-model";
  j["homothetic"] = model.homothetic;
  j["levels"] = vec_json(model.levels);
  nlohmann::json rays = nlohmann::json::array();
  for (const auto& ray : model.rays) rays.push_back(vec_json(ray.theta));
  j["rays"] = rays;
  nlohmann::json curves = nlohmann::json::array();
  for (const auto& curve : model.curves) {
    curves.push_back({{"grid", vec_json(curve.grid)},
                      {"values", vec_json(curve.values)},
                      {"slopes", vec_json(curve.slopes)},
                      {"inflection", curve.inflection},
                      {"omega", curve.omega},
                      {"h", curve.h}});
  }
  j["curves"] = curves;
  nlohmann::json isoq = nlohmann::json::array();
  for (const auto& iso : model.isoquant_estimates) isoq.push_back(isoquant_json(iso));
  j["isoquants"] = isoq;
  if (model.unit_isoquant) j["unit_isoquant"] = isoquant_json(*model.unit_isoquant);
  j["provenance"] = {{"estimator", model.provenance.estimator},
                     {"omega", model.provenance.omega},
                     {"iteration", model.provenance.iteration},
                     {"mse", model.provenance.mse},
                     {"max_rel_gap", model.provenance.max_rel_gap},
                     {"within_tolerance", model.provenance.within_tolerance}};
  return j;
}

ProductionModel model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "production-model")
    throw std::runtime_error("model_from_json: not a production-model document");
  ProductionModel model;
  model.homothetic = j.at("homothetic").get<bool>();
  model.levels = vec_from(j.at("levels"));
  for (const auto& theta : j.at("rays"))
    model.rays.push_back(geometry::Ray::from_angles(vec_from(theta)));
  for (const auto& cj : j.at("curves")) {
    sshape::SShapeCurve curve;
    curve.grid = vec_from(cj.at("grid"));
    curve.values = vec_from(cj.at("values"));
    curve.slopes = vec_from(cj.at("slopes"));
    curve.inflection = cj.at("inflection").get<int>();
    curve.omega = cj.at("omega").get<double>();
    curve.h = cj.at("h").get<double>();
    model.curves.push_back(std::move(curve));
  }
  for (std::size_t r = 0; r < model.curves.size() && r < model.rays.size(); ++r)
    model.curves[r].ray = model.rays[r];
  for (const auto& ij : j.at("isoquants"))
    model.isoquant_estimates.push_back(isoquant_from(ij));
  if (j.contains("unit_isoquant"))
    model.unit_isoquant = isoquant_from(j.at("unit_isoquant"));
  const auto& p = j.at("provenance");
  model.provenance.estimator = p.at("estimator").get<std::string>();
  model.provenance.omega = p.at("omega").get<double>();
  model.provenance.iteration = p.at("iteration").get<int>();
  model.provenance.mse = p.at("mse").get<double>();
  model.provenance.max_rel_gap = p.at("max_rel_gap").get<double>();
  model.provenance.within_tolerance = p.at("within_tolerance").get<bool>();
  return model;
}

}  // namespace prodest::pipeline
