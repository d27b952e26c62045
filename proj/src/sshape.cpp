#include "prodest/sshape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "prodest/smoothing.hpp"

namespace prodest::sshape {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_grid(const Eigen::VectorXd& grid) {
  if (grid.size() < 2) throw std::invalid_argument("sshape: grid needs >= 2 points");
  for (int g = 1; g < grid.size(); ++g)
    if (!(grid[g] > grid[g - 1]))
      throw std::invalid_argument("sshape: grid must be strictly increasing");
}

double segment_slope(const Eigen::VectorXd& grid, const Eigen::VectorXd& values,
                     int seg) {
  return (values[seg + 1] - values[seg]) / (grid[seg + 1] - grid[seg]);
}

//! Block-consistent supporting slopes for a piecewise-linear S-curve given by
//! values only: inside the convex regime the largest in-block secant at each
//! knot, inside the concave regime the smallest.
Eigen::VectorXd derive_slopes(const Eigen::VectorXd& grid,
                              const Eigen::VectorXd& values, int inflection) {
  const int G = static_cast<int>(grid.size());
  Eigen::VectorXd b(G);
  const int k = inflection;
  for (int g = 0; g < G; ++g) {
    double s;
    if (g <= k - 2) {
      s = segment_slope(grid, values, g);
    } else if (g == k - 1) {
      s = g > 0 ? segment_slope(grid, values, g - 1)
                : segment_slope(grid, values, 0);
    } else if (g == k) {
      s = k < G - 1 ? segment_slope(grid, values, k)
                    : std::max(0.0, segment_slope(grid, values, k - 1));
    } else {
      s = segment_slope(grid, values, g - 1);
    }
    b[g] = std::max(0.0, s);
  }
  return b;
}

}  // namespace

double SShapeCurve::eval(double r) const {
  const int G = size();
  if (G == 0) throw std::runtime_error("sshape: empty curve");
  if (G == 1) return std::max(0.0, values[0]);
  if (r <= grid[0]) {
    const double s = segment_slope(grid, values, 0);
    return std::max(0.0, values[0] - s * (grid[0] - r));
  }
  if (r >= grid[G - 1]) {
    const double s = std::max(0.0, segment_slope(grid, values, G - 2));
    return values[G - 1] + s * (r - grid[G - 1]);
  }
  const int seg = static_cast<int>(
      std::upper_bound(grid.data(), grid.data() + G, r) - grid.data() - 1);
  return values[seg] + segment_slope(grid, values, seg) * (r - grid[seg]);
}

double SShapeCurve::interpolant_slope(double r) const {
  const int G = size();
  if (G < 2) return 0.0;
  if (r >= grid[G - 1]) return segment_slope(grid, values, G - 2);
  if (r <= grid[0]) return segment_slope(grid, values, 0);
  const int seg = static_cast<int>(
      std::upper_bound(grid.data(), grid.data() + G, r) - grid.data() - 1);
  return segment_slope(grid, values, seg);
}

void SShapeCurve::validate(double tol) const {
  const int G = size();
  check_grid(grid);
  if (values.size() != G || slopes.size() != G)
    throw std::runtime_error("sshape: curve field sizes disagree");
  if (inflection < 0 || inflection >= G)
    throw std::runtime_error("sshape: inflection index out of range");
  const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
  for (int g = 0; g < G; ++g)
    if (slopes[g] < -tol)
      throw std::runtime_error("sshape: negative slope estimate");
  for (int g = 0; g + 1 < G; ++g)
    if (values[g + 1] < values[g] - tol * scale)
      throw std::runtime_error("sshape: interpolant not nondecreasing");
  const int k = inflection;
  for (int g = 0; g < k; ++g) {
    for (int l = 0; l < k; ++l) {
      if (values[g] - values[l] > slopes[g] * (grid[g] - grid[l]) + tol * scale)
        throw std::runtime_error("sshape: convex-regime Afriat violation");
    }
  }
  for (int g = k; g < G; ++g) {
    for (int l = k; l < G; ++l) {
      if (values[g] - values[l] < slopes[g] * (grid[g] - grid[l]) - tol * scale)
        throw std::runtime_error("sshape: concave-regime Afriat violation");
    }
  }
}

namespace {

//! Constraint rows for the (values, slopes) form on a grid of size G.
//! Row layout: for every interval t, rows (a_{t+1}-a_t-b_t dt) and
//! (a_{t+1}-a_t-b_{t+1} dt), then monotone rows a_{t+1}-a_t, then b_g.
//! The matrix is independent of the inflection candidate; only bounds flip.
Eigen::MatrixXd sckls_constraints(const Eigen::VectorXd& grid) {
  const int G = static_cast<int>(grid.size());
  const int rows = 3 * (G - 1) + G;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, 2 * G);
  int r = 0;
  for (int t = 0; t + 1 < G; ++t, ++r) {
    const double dt = grid[t + 1] - grid[t];
    A(r, t + 1) = 1.0;
    A(r, t) = -1.0;
    A(r, G + t) = -dt;
  }
  for (int t = 0; t + 1 < G; ++t, ++r) {
    const double dt = grid[t + 1] - grid[t];
    A(r, t + 1) = 1.0;
    A(r, t) = -1.0;
    A(r, G + t + 1) = -dt;
  }
  for (int t = 0; t + 1 < G; ++t, ++r) {
    A(r, t + 1) = 1.0;
    A(r, t) = -1.0;
  }
  for (int g = 0; g < G; ++g, ++r) A(r, G + g) = 1.0;
  return A;
}

//! Bounds for a given 0-based inflection index (first concave knot).
void sckls_bounds(const Eigen::VectorXd& grid, int k, Eigen::VectorXd& lo,
                  Eigen::VectorXd& up) {
  const int G = static_cast<int>(grid.size());
  const int intervals = G - 1;
  lo.setConstant(3 * intervals + G, -kInf);
  up.setConstant(3 * intervals + G, kInf);
  for (int t = 0; t < intervals; ++t) {
    const bool convex = t <= k - 2;     // both ends in the convex block
    const bool concave = t >= k;        // both ends in the concave block
    if (convex) {
      lo[t] = 0.0;                      // a_{t+1}-a_t >= b_t dt
      up[intervals + t] = 0.0;          // a_{t+1}-a_t <= b_{t+1} dt
    } else if (concave) {
      up[t] = 0.0;
      lo[intervals + t] = 0.0;
    }
    lo[2 * intervals + t] = 0.0;        // monotone across the inflection
  }
  for (int g = 0; g < G; ++g) lo[3 * intervals + g] = 0.0;  // b_g >= 0
}

}  // namespace

SShapeCurve sckls_fit(const Eigen::VectorXd& responses, const Eigen::VectorXd& radii,
                      const Eigen::MatrixXd& angles, const geometry::Ray& ray,
                      const Eigen::VectorXd& grid, double omega, double h,
                      const qp::Settings& qp_settings) {
  check_grid(grid);
  const int n = static_cast<int>(responses.size());
  const int G = static_cast<int>(grid.size());
  if (radii.size() != n || angles.rows() != n)
    throw std::invalid_argument("sckls: observation arrays disagree");
  if (!(omega > 0.0) || !(h > 0.0))
    throw std::invalid_argument("sckls: bandwidths must be positive");

  Eigen::VectorXd angle_weight(n);
  for (int j = 0; j < n; ++j) {
    const double dist =
        geometry::angle_distance(angles.row(j), ray.theta);
    angle_weight[j] = smoothing::epanechnikov(dist / omega);
  }

  // per-grid-point weighted moments
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(2 * G, 2 * G);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(2 * G);
  for (int g = 0; g < G; ++g) {
    double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
    int effective = 0;
    for (int j = 0; j < n; ++j) {
      if (angle_weight[j] <= 0.0) continue;
      const double dr = radii[j] - grid[g];
      const double w = angle_weight[j] * smoothing::epanechnikov(dr / h);
      if (w <= 0.0) continue;
      ++effective;
      s0 += w;
      s1 += w * dr;
      s2 += w * dr * dr;
      t0 += w * responses[j];
      t1 += w * responses[j] * dr;
    }
    if (effective < 2)
      throw std::runtime_error(
          "sckls: empty effective sample at a grid point (omega or h too small)");
    Q(g, g) = 2.0 * s0;
    Q(g, G + g) = Q(G + g, g) = 2.0 * s1;
    Q(G + g, G + g) = 2.0 * s2;
    c[g] = -2.0 * t0;
    c[G + g] = -2.0 * t1;
  }

  qp::BoxSolver solver(Q, sckls_constraints(grid));
  Eigen::VectorXd lo, up;

  // warm start from the unconstrained per-point weighted fits
  Eigen::VectorXd warm(2 * G);
  for (int g = 0; g < G; ++g) {
    const double s0 = Q(g, g) / 2.0, s1 = Q(g, G + g) / 2.0,
                 s2 = Q(G + g, G + g) / 2.0;
    const double t0 = -c[g] / 2.0, t1 = -c[G + g] / 2.0;
    const double det = s0 * s2 - s1 * s1;
    if (det > 1e-12 * std::max(1.0, s0 * s2)) {
      warm[g] = (s2 * t0 - s1 * t1) / det;
      warm[G + g] = (s0 * t1 - s1 * t0) / det;
    } else {
      warm[g] = t0 / s0;
      warm[G + g] = 0.0;
    }
  }

  double best_obj = kInf;
  int best_k = -1;
  Eigen::VectorXd best_x;
  Eigen::VectorXd x_prev = warm;
  for (int k = 0; k < G; ++k) {
    sckls_bounds(grid, k, lo, up);
    qp::BoxSolver::Result res = solver.solve(c, lo, up, qp_settings, &x_prev);
    if (res.status == qp::Status::Infeasible)
      throw std::runtime_error("sckls: candidate subproblem infeasible");
    x_prev = res.x;
    if (res.status == qp::Status::MaxIterations) continue;
    const bool better =
        best_k < 0 ||
        res.objective < best_obj - 1e-8 * (1.0 + std::abs(best_obj));
    if (better) {
      best_obj = res.objective;
      best_k = k;
      best_x = res.x;
    }
  }
  if (best_k < 0) throw std::runtime_error("sckls: no candidate converged");

  SShapeCurve curve;
  curve.ray = ray;
  curve.grid = grid;
  curve.values = best_x.head(G);
  curve.slopes = best_x.tail(G).cwiseMax(0.0);
  curve.inflection = best_k;
  curve.omega = omega;
  curve.h = h;
  curve.validate();
  return curve;
}

double SCurve::eval(double zq) const {
  const int G = static_cast<int>(z.size());
  if (G == 1) return values[0];
  if (zq <= z[0]) {
    const double s = segment_slope(z, values, 0);
    return std::max(0.0, values[0] - s * (z[0] - zq));
  }
  if (zq >= z[G - 1]) {
    const double s = std::max(0.0, segment_slope(z, values, G - 2));
    return values[G - 1] + s * (zq - z[G - 1]);
  }
  const int seg = static_cast<int>(
      std::upper_bound(z.data(), z.data() + G, zq) - z.data() - 1);
  return values[seg] + segment_slope(z, values, seg) * (zq - z[seg]);
}

namespace {

//! Secant-form constraint rows on fitted values: monotone rows then curvature
//! rows (difference of consecutive secant slopes). Independent of the
//! inflection candidate.
Eigen::MatrixXd value_constraints(const Eigen::VectorXd& z) {
  const int G = static_cast<int>(z.size());
  const int rows = (G - 1) + (G - 2);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, G);
  int r = 0;
  for (int t = 0; t + 1 < G; ++t, ++r) {
    A(r, t + 1) = 1.0;
    A(r, t) = -1.0;
  }
  for (int t = 0; t + 2 < G; ++t, ++r) {
    const double d0 = z[t + 1] - z[t];
    const double d1 = z[t + 2] - z[t + 1];
    A(r, t) = 1.0 / d0;
    A(r, t + 1) = -1.0 / d0 - 1.0 / d1;
    A(r, t + 2) = 1.0 / d1;
  }
  return A;
}

//! Curvature-sign bounds for first-concave-knot k: nonnegative curvature for
//! triples inside the convex block, nonpositive inside the concave block,
//! triples touching the inflection segment free.
void value_bounds(int G, int k, Eigen::VectorXd& lo, Eigen::VectorXd& up) {
  const int mono = G - 1;
  const int curv = G - 2;
  lo.setConstant(mono + curv, -kInf);
  up.setConstant(mono + curv, kInf);
  for (int t = 0; t < mono; ++t) lo[t] = 0.0;
  for (int t = 0; t < curv; ++t) {
    if (t + 2 <= k - 1) lo[mono + t] = 0.0;  // convex region triples
    if (t >= k) up[mono + t] = 0.0;          // concave region triples
  }
}

struct Grouped {
  Eigen::VectorXd z;
  Eigen::VectorXd mean;
  Eigen::VectorXd weight;
  double within_sse = 0.0;
};

Grouped group_duplicates(const Eigen::VectorXd& z, const Eigen::VectorXd& y) {
  std::vector<int> order(z.size());
  for (int i = 0; i < z.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return z[a] < z[b]; });
  std::vector<double> zz, sum, count;
  for (int idx : order) {
    if (!zz.empty() && z[idx] == zz.back()) {
      sum.back() += y[idx];
      count.back() += 1.0;
    } else {
      zz.push_back(z[idx]);
      sum.push_back(y[idx]);
      count.push_back(1.0);
    }
  }
  Grouped g;
  const int m = static_cast<int>(zz.size());
  g.z.resize(m);
  g.mean.resize(m);
  g.weight.resize(m);
  for (int i = 0; i < m; ++i) {
    g.z[i] = zz[i];
    g.weight[i] = count[i];
    g.mean[i] = sum[i] / count[i];
  }
  for (int i = 0; i < z.size(); ++i) {
    const int pos = static_cast<int>(
        std::lower_bound(g.z.data(), g.z.data() + m, z[i]) - g.z.data());
    g.within_sse += (y[i] - g.mean[pos]) * (y[i] - g.mean[pos]);
  }
  return g;
}

}  // namespace

SCurve sshaped_univariate_fit(const Eigen::VectorXd& z, const Eigen::VectorXd& y,
                              int candidate_stride) {
  if (z.size() != y.size())
    throw std::invalid_argument("sshaped_univariate_fit: size mismatch");
  if (z.size() < 3)
    throw std::invalid_argument("sshaped_univariate_fit: need n >= 3");
  const Grouped g = group_duplicates(z, y);
  const int G = static_cast<int>(g.z.size());
  if (G < 3)
    throw std::invalid_argument("sshaped_univariate_fit: need >= 3 distinct z");

  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(G, G);
  Eigen::VectorXd c(G);
  for (int i = 0; i < G; ++i) {
    Q(i, i) = 2.0 * g.weight[i];
    c[i] = -2.0 * g.weight[i] * g.mean[i];
  }
  qp::BoxSolver solver(Q, value_constraints(g.z));
  Eigen::VectorXd lo, up;

  std::vector<int> candidates;
  const int stride = std::max(1, candidate_stride);
  for (int k = 0; k < G; k += stride) candidates.push_back(k);
  if (candidates.back() != G - 1) candidates.push_back(G - 1);

  double best_obj = kInf;
  int best_k = -1;
  Eigen::VectorXd best_f;
  Eigen::VectorXd x_prev = g.mean;
  for (int k : candidates) {
    value_bounds(G, k, lo, up);
    qp::BoxSolver::Result res = solver.solve(c, lo, up, {}, &x_prev);
    if (res.status == qp::Status::Infeasible)
      throw std::runtime_error("sshaped_univariate_fit: infeasible candidate");
    x_prev = res.x;
    if (res.status == qp::Status::MaxIterations) continue;
    const bool better =
        best_k < 0 ||
        res.objective < best_obj - 1e-8 * (1.0 + std::abs(best_obj));
    if (better) {
      best_obj = res.objective;
      best_k = k;
      best_f = res.x;
    }
  }
  if (best_k < 0)
    throw std::runtime_error("sshaped_univariate_fit: no candidate converged");

  SCurve out;
  out.z = g.z;
  out.values = best_f;
  out.inflection = best_k;
  out.sse = g.within_sse +
            (g.weight.array() * (g.mean - best_f).array().square()).sum();
  out.sse = std::max(0.0, out.sse);
  return out;
}

std::vector<SShapeCurve> minimize_gap(
    const std::vector<SShapeCurve>& curves,
    const std::vector<std::vector<double>>& intersection_radii,
    const Eigen::VectorXd& levels, double weight_sshape, double weight_isoquant,
    const qp::Settings& qp_settings) {
  if (std::abs(weight_sshape + weight_isoquant - 1.0) > 1e-12 ||
      weight_sshape < 0.0 || weight_isoquant < 0.0)
    throw std::invalid_argument("minimize_gap: weights must be in [0,1] and sum to 1");
  const int R = static_cast<int>(curves.size());
  const int I = static_cast<int>(levels.size());
  for (const auto& per_level : intersection_radii)
    if (static_cast<int>(per_level.size()) != R)
      throw std::invalid_argument("minimize_gap: radii shape mismatch");
  if (static_cast<int>(intersection_radii.size()) != I)
    throw std::invalid_argument("minimize_gap: one radius row per level expected");

  std::vector<SShapeCurve> revised;
  revised.reserve(R);
  for (int r = 0; r < R; ++r) {
    const SShapeCurve& curve = curves[r];
    const int G = curve.size();

    // augmented knots: original grid plus the cut radii, merged within tolerance
    struct Knot {
      double radius;
      int grid_index = -1;   // >= 0 for original grid points
      std::vector<int> cut_levels;
    };
    std::vector<Knot> knots;
    for (int gdx = 0; gdx < G; ++gdx)
      knots.push_back({curve.grid[gdx], gdx, {}});
    for (int i = 0; i < I; ++i) {
      const double radius = intersection_radii[i][r];
      if (std::isnan(radius)) continue;
      bool merged = false;
      for (auto& knot : knots) {
        if (std::abs(knot.radius - radius) <=
            1e-9 * std::max(1.0, std::abs(knot.radius))) {
          knot.cut_levels.push_back(i);
          merged = true;
          break;
        }
      }
      if (!merged) knots.push_back({radius, -1, {i}});
    }
    std::sort(knots.begin(), knots.end(),
              [](const Knot& a, const Knot& b) { return a.radius < b.radius; });

    const int M = static_cast<int>(knots.size());
    Eigen::VectorXd aug(M);
    for (int m = 0; m < M; ++m) aug[m] = knots[m].radius;

    // inflection carried over to the augmented index of the same radius
    int k_aug = 0;
    for (int m = 0; m < M; ++m)
      if (knots[m].grid_index == curve.inflection) k_aug = m;

    const double w_s = weight_sshape / std::max(1, R * G);
    const double w_i = weight_isoquant / std::max(1, R * I);
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(M, M);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(M);
    for (int m = 0; m < M; ++m) {
      if (knots[m].grid_index >= 0) {
        Q(m, m) += 2.0 * w_s;
        c[m] -= 2.0 * w_s * curve.values[knots[m].grid_index];
      }
      for (int level : knots[m].cut_levels) {
        Q(m, m) += 2.0 * w_i;
        c[m] -= 2.0 * w_i * levels[level];
      }
    }

    qp::BoxSolver solver(Q, value_constraints(aug));
    Eigen::VectorXd lo, up;
    value_bounds(M, k_aug, lo, up);
    Eigen::VectorXd warm(M);
    for (int m = 0; m < M; ++m) warm[m] = curve.eval(aug[m]);
    qp::BoxSolver::Result res = solver.solve(c, lo, up, qp_settings, &warm);
    if (res.status == qp::Status::Infeasible)
      throw std::runtime_error("minimize_gap: revision subproblem infeasible");

    SShapeCurve rev;
    rev.ray = curve.ray;
    rev.grid = aug;
    rev.values = res.x;
    // clean up eps-level monotonicity noise before deriving slopes
    for (int m = 1; m < M; ++m)
      rev.values[m] = std::max(rev.values[m], rev.values[m - 1]);
    rev.slopes = derive_slopes(aug, rev.values, k_aug);
    rev.inflection = k_aug;
    rev.omega = curve.omega;
    rev.h = curve.h;
    rev.validate();
    revised.push_back(std::move(rev));
  }
  return revised;
}

double elasticity_of_scale(const SShapeCurve& curve, double r) {
  const int G = curve.size();
  if (G < 2) throw std::invalid_argument("elasticity_of_scale: curve too small");
  if (r < curve.grid[0] - 1e-12 || r > curve.grid[G - 1] + 1e-12)
    throw std::invalid_argument("elasticity_of_scale: radius outside grid span");
  const double a = curve.eval(r);
  if (!(a > 0.0))
    throw std::invalid_argument("elasticity_of_scale: nonpositive curve value");
  return curve.interpolant_slope(r) * r / a;
}

MpssPoint mpss(const SShapeCurve& curve) {
  const int G = curve.size();
  if ((curve.values.array() <= 0.0).any())
    throw std::invalid_argument("mpss: curve must be positive on the grid");
  int best = 0;
  double best_ap = -kInf;
  for (int g = 0; g < G; ++g) {
    if (curve.grid[g] <= 0.0) continue;
    const double ap = curve.values[g] / curve.grid[g];
    if (ap > best_ap) {
      best_ap = ap;
      best = g;
    }
  }
  // golden-section refinement on the interpolant within the bracketing cell
  double lo = curve.grid[std::max(0, best - 1)];
  double hi = curve.grid[std::min(G - 1, best + 1)];
  lo = std::max(lo, 1e-12);
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - phi * (hi - lo), b = lo + phi * (hi - lo);
  auto ap = [&](double r) { return curve.eval(r) / r; };
  double fa = ap(a), fb = ap(b);
  for (int it = 0; it < 80 && hi - lo > 1e-12 * std::max(1.0, hi); ++it) {
    if (fa < fb) {
      lo = a;
      a = b;
      fa = fb;
      b = lo + phi * (hi - lo);
      fb = ap(b);
    } else {
      hi = b;
      b = a;
      fb = fa;
      a = hi - phi * (hi - lo);
      fa = ap(a);
    }
  }
  double radius = 0.5 * (lo + hi);
  if (best_ap > ap(radius)) radius = curve.grid[best];
  MpssPoint point;
  point.radius = radius;
  point.aggregate_output = curve.eval(radius);
  point.average_product = point.aggregate_output / radius;
  return point;
}

}  // namespace prodest::sshape
