#include "prodest/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "prodest/dataset.hpp"

namespace prodest::smoothing {

double epanechnikov(double u) {
  const double a = std::abs(u);
  return a <= 1.0 ? 0.75 * (1.0 - a * a) : 0.0;
}

void Bandwidth::check() const {
  if (h.size() == 0 || (h.array() <= 0.0).any())
    throw std::invalid_argument("bandwidth: entries must be positive");
}

namespace {

//! Weighted affine fit at the origin of centered coordinates; returns the
//! intercept. Weighted points must either span an affine frame or coincide
//! with the query point.
double weighted_affine_intercept(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& w, const Eigen::VectorXd& x) {
  const int d = static_cast<int>(X.cols());
  std::vector<int> idx;
  for (int j = 0; j < X.rows(); ++j)
    if (w[j] > 0.0) idx.push_back(j);
  // all mass on the query point itself: the intercept is the weighted mean
  {
    double spread = 0.0, wsum = 0.0, wy = 0.0;
    for (int j : idx) {
      spread = std::max(spread, (X.row(j).transpose() - x).cwiseAbs().maxCoeff());
      wsum += w[j];
      wy += w[j] * y[j];
    }
    if (!idx.empty() && spread <= 1e-12 * std::max(1.0, x.cwiseAbs().maxCoeff()))
      return wy / wsum;
  }
  if (static_cast<int>(idx.size()) < d + 1)
    throw RankDeficient("local_linear: fewer than d+1 weighted observations");
  const int m = static_cast<int>(idx.size());
  Eigen::MatrixXd Z(m, d + 1);
  Eigen::VectorXd rhs(m);
  for (int row = 0; row < m; ++row) {
    const int j = idx[row];
    const double sw = std::sqrt(w[j]);
    Z(row, 0) = sw;
    Z.row(row).tail(d) = sw * (X.row(j) - x.transpose());
    rhs[row] = sw * y[j];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
  qr.setThreshold(1e-10);
  if (qr.rank() < d + 1)
    throw RankDeficient("local_linear: rank-deficient local design");
  return qr.solve(rhs)[0];
}

}  // namespace

double local_linear_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const Bandwidth& h, const Eigen::VectorXd& x) {
  h.check();
  if (h.h.size() != X.cols())
    throw std::invalid_argument("local_linear: bandwidth dimension mismatch");
  const int n = static_cast<int>(X.rows());
  Eigen::VectorXd w(n);
  for (int j = 0; j < n; ++j) {
    const double u = ((X.row(j).transpose() - x).array() / h.h.array())
                         .matrix()
                         .norm();
    w[j] = epanechnikov(u);
  }
  return weighted_affine_intercept(X, y, w, x);
}

double local_linear_fit_adaptive(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 const Bandwidth& h, const Eigen::VectorXd& x) {
  Bandwidth widened = h;
  for (int attempt = 0;; ++attempt) {
    try {
      return local_linear_fit(X, y, widened, x);
    } catch (const RankDeficient&) {
      if (attempt >= 10) throw;
      widened.h *= 2.0;
    }
  }
}

Bandwidth rule_of_thumb_bandwidth(const Eigen::MatrixXd& X) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  if (n < 2) throw std::invalid_argument("rule_of_thumb_bandwidth: need n >= 2");
  Bandwidth bw;
  bw.h.resize(d);
  const double rate = std::pow(static_cast<double>(n), -1.0 / (d + 4.0));
  for (int k = 0; k < d; ++k) {
    const double sd = data::sample_sd(X.col(k));
    bw.h[k] = 1.06 * (sd > 0.0 ? sd : 1.0) * rate;
  }
  return bw;
}

std::vector<Bandwidth> default_bandwidth_grid(const Eigen::MatrixXd& X) {
  const Bandwidth rot = rule_of_thumb_bandwidth(X);
  std::vector<Bandwidth> grid;
  for (int k = 0; k < 10; ++k) {
    const double mult = 0.25 * std::pow(16.0, k / 9.0);
    Bandwidth b;
    b.h = mult * rot.h;
    grid.push_back(std::move(b));
  }
  return grid;
}

Bandwidth loocv_bandwidth(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const std::vector<Bandwidth>& grid) {
  const int n = static_cast<int>(X.rows());
  if (grid.empty()) throw std::invalid_argument("loocv_bandwidth: empty grid");
  if (n < X.cols() + 2) throw std::invalid_argument("loocv_bandwidth: need n >= d+2");

  std::vector<double> scores(grid.size(), std::numeric_limits<double>::quiet_NaN());
  Eigen::MatrixXd X_rest(n - 1, X.cols());
  Eigen::VectorXd y_rest(n - 1);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double score = 0.0;
    bool ok = true;
    for (int j = 0; j < n && ok; ++j) {
      X_rest.topRows(j) = X.topRows(j);
      X_rest.bottomRows(n - 1 - j) = X.bottomRows(n - 1 - j);
      y_rest.head(j) = y.head(j);
      y_rest.tail(n - 1 - j) = y.tail(n - 1 - j);
      try {
        const double fit = local_linear_fit(X_rest, y_rest, grid[g], X.row(j));
        score += (y[j] - fit) * (y[j] - fit);
      } catch (const RankDeficient&) {
        ok = false;
      }
    }
    if (ok) scores[g] = score;
  }
  double min_score = std::numeric_limits<double>::infinity();
  for (double s : scores)
    if (!std::isnan(s)) min_score = std::min(min_score, s);
  if (!std::isfinite(min_score))
    throw std::runtime_error("loocv_bandwidth: every grid point failed rank conditions");
  // ties go to the larger bandwidth: last grid entry within tolerance wins
  const double tie = min_score * (1.0 + 1e-9) + 1e-18;
  int best = -1;
  for (std::size_t g = 0; g < grid.size(); ++g)
    if (!std::isnan(scores[g]) && scores[g] <= tie) best = static_cast<int>(g);
  return grid[best];
}

double local_linear_fit_1d(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& weights, double h, double xq) {
  const int n = static_cast<int>(x.size());
  Eigen::MatrixXd X(n, 1);
  X.col(0) = x;
  Eigen::VectorXd w(n);
  for (int j = 0; j < n; ++j)
    w[j] = weights[j] * epanechnikov((x[j] - xq) / h);
  Eigen::VectorXd q(1);
  q[0] = xq;
  return weighted_affine_intercept(X, y, w, q);
}

double loocv_bandwidth_1d(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& weights,
                          const std::vector<double>& grid) {
  const int n = static_cast<int>(x.size());
  if (grid.empty()) throw std::invalid_argument("loocv_bandwidth_1d: empty grid");
  std::vector<double> scores(grid.size(), std::numeric_limits<double>::quiet_NaN());
  Eigen::VectorXd x_rest(n - 1), y_rest(n - 1), w_rest(n - 1);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double score = 0.0;
    bool ok = true;
    for (int j = 0; j < n && ok; ++j) {
      if (weights[j] <= 0.0) continue;
      x_rest.head(j) = x.head(j);
      x_rest.tail(n - 1 - j) = x.tail(n - 1 - j);
      y_rest.head(j) = y.head(j);
      y_rest.tail(n - 1 - j) = y.tail(n - 1 - j);
      w_rest.head(j) = weights.head(j);
      w_rest.tail(n - 1 - j) = weights.tail(n - 1 - j);
      try {
        const double fit = local_linear_fit_1d(x_rest, y_rest, w_rest, grid[g], x[j]);
        score += weights[j] * (y[j] - fit) * (y[j] - fit);
      } catch (const RankDeficient&) {
        ok = false;
      }
    }
    if (ok) scores[g] = score;
  }
  double min_score = std::numeric_limits<double>::infinity();
  for (double s : scores)
    if (!std::isnan(s)) min_score = std::min(min_score, s);
  if (!std::isfinite(min_score))
    throw std::runtime_error("loocv_bandwidth_1d: every grid point failed");
  const double tie = min_score * (1.0 + 1e-9) + 1e-18;
  int best = -1;
  for (std::size_t g = 0; g < grid.size(); ++g)
    if (!std::isnan(scores[g]) && scores[g] <= tie) best = static_cast<int>(g);
  return grid[best];
}

}  // namespace prodest::smoothing
