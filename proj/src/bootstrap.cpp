#include "prodest/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "prodest/parallel.hpp"
#include "prodest/rng.hpp"
#include "prodest/smoothing.hpp"

namespace prodest::bootstrap {

namespace {

//! y_k = y + u .* residuals with Rademacher signs u.
data::Dataset flipped(const data::Dataset& ds, const Eigen::VectorXd& residuals,
                      rng::Rng& gen) {
  data::Dataset out = ds;
  out.outputs_positive = false;
  for (int j = 0; j < ds.n(); ++j) out.y[j] = ds.y[j] + gen.sign() * residuals[j];
  return out;
}

Eigen::VectorXd ll_residuals(const data::Dataset& ds) {
  const auto grid = smoothing::default_bandwidth_grid(ds.X);
  const smoothing::Bandwidth bw = smoothing::loocv_bandwidth(ds.X, ds.y, grid);
  Eigen::VectorXd resid(ds.n());
  for (int j = 0; j < ds.n(); ++j)
    resid[j] = ds.y[j] -
               smoothing::local_linear_fit_adaptive(ds.X, ds.y, bw, ds.X.row(j));
  return resid;
}

}  // namespace

BootstrapResult wild_bootstrap_ci(const data::Dataset& ds, const Fitter& fitter,
                                  const Eigen::MatrixXd& eval_points, int B,
                                  double alpha, std::uint64_t seed, int threads) {
  if (B < 2) throw std::invalid_argument("wild_bootstrap_ci: need B >= 2");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("wild_bootstrap_ci: alpha must be in (0,1)");
  const int points = static_cast<int>(eval_points.rows());

  BootstrapResult result;
  result.replications = B;
  if (B < 20)
    result.warnings.push_back(
        "percentile interval from " + std::to_string(B) +
        " replications is degenerate (endpoints are sample extremes)");

  const Eigen::VectorXd residuals = ll_residuals(ds);

  result.point.resize(points);
  {
    const auto fit = fitter(ds);
    for (int p = 0; p < points; ++p) result.point[p] = fit(eval_points.row(p));
  }

  Eigen::MatrixXd draws(B, points);
  std::vector<char> ok(B, 0);
  par::parallel_for(B, threads, [&](int k) {
    rng::Rng gen = rng::Rng::substream(seed, static_cast<std::uint64_t>(k));
    const data::Dataset sample = flipped(ds, residuals, gen);
    try {
      const auto fit = fitter(sample);
      for (int p = 0; p < points; ++p) draws(k, p) = fit(eval_points.row(p));
      ok[k] = 1;
    } catch (const std::exception&) {
      ok[k] = 0;
    }
  });

  int successes = 0;
  for (int k = 0; k < B; ++k)
    if (ok[k]) ++successes;
  if (successes < static_cast<int>(std::ceil(0.8 * B)))
    throw std::runtime_error("wild_bootstrap_ci: more than 20% of refits failed");
  result.successes = successes;
  result.samples.resize(successes, points);
  int row = 0;
  for (int k = 0; k < B; ++k)
    if (ok[k]) result.samples.row(row++) = draws.row(k);

  result.lower.resize(points);
  result.upper.resize(points);
  for (int p = 0; p < points; ++p) {
    result.lower[p] = data::percentile(result.samples.col(p), 100.0 * alpha / 2.0);
    result.upper[p] =
        data::percentile(result.samples.col(p), 100.0 * (1.0 - alpha / 2.0));
  }
  return result;
}

ShapeTest shape_test_statistic(const data::Dataset& ds, const Fitter& constrained,
                               const Fitter& unconstrained, int B,
                               std::uint64_t seed, int threads) {
  if (B < 1) throw std::invalid_argument("shape_test_statistic: need B >= 1");
  const int n = ds.n();

  auto statistic_on = [&](const data::Dataset& sample) {
    const auto fit_con = constrained(sample);
    const auto fit_unc = unconstrained(sample);
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
      const double diff = fit_con(sample.X.row(j)) - fit_unc(sample.X.row(j));
      acc += diff * diff;
    }
    return acc / n;
  };

  ShapeTest out;
  out.statistic = statistic_on(ds);

  // residuals under the null (constrained fit)
  const auto fit_con = constrained(ds);
  Eigen::VectorXd fitted(n), residuals(n);
  for (int j = 0; j < n; ++j) {
    fitted[j] = fit_con(ds.X.row(j));
    residuals[j] = ds.y[j] - fitted[j];
  }

  Eigen::VectorXd stats(B);
  std::vector<char> ok(B, 0);
  par::parallel_for(B, threads, [&](int k) {
    rng::Rng gen = rng::Rng::substream(seed, static_cast<std::uint64_t>(k));
    data::Dataset sample = ds;
    sample.outputs_positive = false;
    for (int j = 0; j < n; ++j)
      sample.y[j] = fitted[j] + gen.sign() * residuals[j];
    try {
      stats[k] = statistic_on(sample);
      ok[k] = 1;
    } catch (const std::exception&) {
      ok[k] = 0;
    }
  });

  std::vector<double> kept;
  for (int k = 0; k < B; ++k)
    if (ok[k]) kept.push_back(stats[k]);
  if (kept.empty())
    throw std::runtime_error("shape_test_statistic: every bootstrap refit failed");
  out.bootstrap_statistics.resize(static_cast<int>(kept.size()));
  int at_least = 0;
  for (std::size_t k = 0; k < kept.size(); ++k) {
    out.bootstrap_statistics[k] = kept[k];
    if (kept[k] >= out.statistic) ++at_least;
  }
  out.p_value = static_cast<double>(at_least) / static_cast<double>(kept.size());
  return out;
}

}  // namespace prodest::bootstrap
