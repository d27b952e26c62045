#include "prodest/isoquants.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "prodest/dataset.hpp"

namespace prodest::isoquants {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double IsoquantEstimate::eval(const Eigen::VectorXd& x_rest) const {
  if (x_rest.size() != dim_rest())
    throw std::invalid_argument("isoquant: query dimension mismatch");
  return (intercepts + slopes * x_rest).maxCoeff();
}

Eigen::VectorXd IsoquantEstimate::subgradient(const Eigen::VectorXd& x_rest) const {
  Eigen::Index arg;
  (intercepts + slopes * x_rest).maxCoeff(&arg);
  return slopes.row(arg);
}

void IsoquantEstimate::validate(double tol) const {
  if (planes() == 0) throw std::runtime_error("isoquant: no hyperplanes");
  if (support.rows() != planes() || support.cols() != dim_rest())
    throw std::runtime_error("isoquant: support shape mismatch");
  if ((slopes.array() > tol).any())
    throw std::runtime_error("isoquant: positive slope (monotonicity violated)");
  // Afriat system: the own plane attains the envelope at each support point
  const Eigen::MatrixXd values =
      (slopes * support.transpose()).colwise() + intercepts;  // (l, j)
  const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
  for (int j = 0; j < planes(); ++j) {
    const double own = values(j, j);
    if (values.col(j).maxCoeff() > own + tol * scale)
      throw std::runtime_error("isoquant: Afriat system violated at a support point");
  }
}

LevelAssignment assign_levels(const Eigen::VectorXd& pilot_values,
                              const Eigen::VectorXd& levels) {
  const int count = static_cast<int>(levels.size());
  if (count == 0) throw std::invalid_argument("assign_levels: empty levels");
  for (int i = 1; i < count; ++i)
    if (!(levels[i] > levels[i - 1]))
      throw std::invalid_argument("assign_levels: levels must be strictly increasing");
  LevelAssignment out;
  out.levels = levels;
  out.index.resize(pilot_values.size());
  for (int j = 0; j < pilot_values.size(); ++j) {
    int best = 0;
    double best_gap = std::abs(pilot_values[j] - levels[0]);
    for (int i = 1; i < count; ++i) {
      const double gap = std::abs(pilot_values[j] - levels[i]);
      if (gap < best_gap) {  // ties keep the lower index
        best_gap = gap;
        best = i;
      }
    }
    out.index[j] = best;
  }
  return out;
}

namespace {

//! Shared constraint-generation driver for the CNLS-family programs. The
//! Afriat system has n^2 rows but only a thin active slice matters; start
//! from nearest-neighbour pairs and add the worst violated row per point
//! until the full system holds.
//!
//! plane_value(j, l) must return the l-th plane evaluated at point j;
//! fitted(j) the j-th plane at its own point.
struct AfriatRowBuilder {
  //! Fill one Afriat row "plane_l(X_j) - plane_j(X_j) <= 0" into A(row, :).
  virtual void fill_row(int j, int l, Eigen::MatrixXd& A, int row) const = 0;
  virtual ~AfriatRowBuilder() = default;
};

struct GenerationResult {
  Eigen::VectorXd x;
  int rounds = 0;
};

GenerationResult solve_with_generation(
    const Eigen::MatrixXd& Q, const Eigen::VectorXd& c,
    const Eigen::MatrixXd& A_fixed, const Eigen::VectorXd& b_fixed,
    const Eigen::MatrixXd& A_eq, const Eigen::VectorXd& b_eq, int n_points,
    const Eigen::MatrixXd& rest, const AfriatRowBuilder& builder,
    const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& plane_values,
    const qp::Settings& settings) {
  const int vars = static_cast<int>(c.size());

  // nearest neighbours in regressor space seed the pair set
  std::vector<std::pair<int, int>> pairs;
  const int k_init = std::min(n_points - 1, std::max(2, static_cast<int>(rest.cols())));
  for (int j = 0; j < n_points; ++j) {
    std::vector<std::pair<double, int>> dist;
    dist.reserve(n_points - 1);
    for (int l = 0; l < n_points; ++l) {
      if (l == j) continue;
      dist.emplace_back((rest.row(j) - rest.row(l)).squaredNorm(), l);
    }
    std::partial_sort(dist.begin(), dist.begin() + k_init, dist.end());
    for (int t = 0; t < k_init; ++t) {
      pairs.emplace_back(j, dist[t].second);
      pairs.emplace_back(dist[t].second, j);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  qp::Settings local = settings;
  Eigen::VectorXd x_prev;
  GenerationResult out;
  for (int round = 0; round < 60; ++round) {
    out.rounds = round + 1;
    const int m_pairs = static_cast<int>(pairs.size());
    const int m_fixed = static_cast<int>(b_fixed.size());
    qp::Problem problem;
    problem.Q = Q;
    problem.c = c;
    problem.A_ineq.setZero(m_fixed + m_pairs, vars);
    problem.b_ineq.setZero(m_fixed + m_pairs);
    if (m_fixed > 0) {
      problem.A_ineq.topRows(m_fixed) = A_fixed;
      problem.b_ineq.head(m_fixed) = b_fixed;
    }
    for (int t = 0; t < m_pairs; ++t)
      builder.fill_row(pairs[t].first, pairs[t].second, problem.A_ineq,
                       m_fixed + t);
    problem.A_eq = A_eq;
    problem.b_eq = b_eq;
    if (x_prev.size() == vars) local.x0 = x_prev;

    qp::Solution sol = qp::solve(problem, local);
    if (sol.status == qp::Status::Infeasible)
      throw std::runtime_error("cnls: quadratic program reported infeasible");
    if (sol.status == qp::Status::MaxIterations)
      throw std::runtime_error("cnls: quadratic program failed to converge");
    x_prev = sol.x;

    // worst violated Afriat row per point
    const Eigen::MatrixXd values = plane_values(sol.x);  // (j, l)
    const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
    bool added = false;
    std::vector<std::pair<int, int>> extra;
    for (int j = 0; j < n_points; ++j) {
      const double own = values(j, j);
      int arg = -1;
      double worst = 1e-9 * scale;
      for (int l = 0; l < n_points; ++l) {
        const double gap = values(j, l) - own;
        if (gap > worst) {
          worst = gap;
          arg = l;
        }
      }
      if (arg >= 0) {
        extra.emplace_back(j, arg);
        added = true;
      }
    }
    if (!added) {
      out.x = sol.x;
      return out;
    }
    pairs.insert(pairs.end(), extra.begin(), extra.end());
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  }
  throw std::runtime_error("cnls: constraint generation did not settle");
}

//! Swap each support point's plane for the envelope argmax so the stored
//! Afriat system holds exactly.
void canonicalize(IsoquantEstimate& iso) {
  const Eigen::MatrixXd values =
      (iso.slopes * iso.support.transpose()).colwise() + iso.intercepts;  // (l, j)
  Eigen::VectorXd new_intercepts(iso.planes());
  Eigen::MatrixXd new_slopes(iso.planes(), iso.dim_rest());
  for (int j = 0; j < iso.planes(); ++j) {
    Eigen::Index arg;
    values.col(j).maxCoeff(&arg);
    new_intercepts[j] = iso.intercepts[arg];
    new_slopes.row(j) = iso.slopes.row(arg);
  }
  iso.intercepts = std::move(new_intercepts);
  iso.slopes = std::move(new_slopes);
}

void split_points(const Eigen::MatrixXd& points, Eigen::MatrixXd& rest,
                  Eigen::VectorXd& response) {
  const int d = static_cast<int>(points.cols());
  if (d < 2) throw std::invalid_argument("cnls: points need d >= 2");
  rest = points.leftCols(d - 1);
  response = points.col(d - 1);
}

}  // namespace

IsoquantEstimate cnls_isoquant(const Eigen::MatrixXd& points, double level,
                               const qp::Settings& qp_settings) {
  const int n = static_cast<int>(points.rows());
  if (n < 2) throw std::invalid_argument("cnls: need at least 2 points");
  Eigen::MatrixXd rest;
  Eigen::VectorXd response;
  split_points(points, rest, response);
  const int dr = static_cast<int>(rest.cols());
  const int vars = n * (1 + dr);
  // layout: alpha_j at j, beta_j at n + j*dr ... n + j*dr + dr - 1

  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(vars, vars);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(vars);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd z(1 + dr);
    z[0] = 1.0;
    z.tail(dr) = rest.row(j);
    std::vector<int> idx(1 + dr);
    idx[0] = j;
    for (int k = 0; k < dr; ++k) idx[k + 1] = n + j * dr + k;
    for (int a = 0; a <= dr; ++a) {
      c[idx[a]] -= 2.0 * response[j] * z[a];
      for (int b = 0; b <= dr; ++b) Q(idx[a], idx[b]) += 2.0 * z[a] * z[b];
    }
  }

  // beta <= 0 sign rows
  Eigen::MatrixXd A_sign = Eigen::MatrixXd::Zero(n * dr, vars);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < dr; ++k) A_sign(j * dr + k, n + j * dr + k) = 1.0;
  Eigen::VectorXd b_sign = Eigen::VectorXd::Zero(n * dr);

  struct Rows : AfriatRowBuilder {
    const Eigen::MatrixXd* rest;
    int n, dr;
    void fill_row(int j, int l, Eigen::MatrixXd& A, int row) const override {
      A(row, l) += 1.0;
      A(row, j) -= 1.0;
      for (int k = 0; k < dr; ++k) {
        A(row, n + l * dr + k) += (*rest)(j, k);
        A(row, n + j * dr + k) -= (*rest)(j, k);
      }
    }
  } rows;
  rows.rest = &rest;
  rows.n = n;
  rows.dr = dr;

  auto plane_values = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd alpha = x.head(n);
    Eigen::MatrixXd beta(n, dr);
    for (int j = 0; j < n; ++j)
      beta.row(j) = x.segment(n + j * dr, dr).transpose();
    Eigen::MatrixXd values = rest * beta.transpose();  // (j, l)
    values.rowwise() += alpha.transpose();
    return values;
  };

  const GenerationResult gen =
      solve_with_generation(Q, c, A_sign, b_sign, Eigen::MatrixXd(0, vars),
                            Eigen::VectorXd(0), n, rest, rows, plane_values,
                            qp_settings);

  IsoquantEstimate iso;
  iso.level = level;
  iso.support = rest;
  iso.intercepts = gen.x.head(n);
  iso.slopes.resize(n, dr);
  for (int j = 0; j < n; ++j)
    iso.slopes.row(j) = gen.x.segment(n + j * dr, dr).transpose().cwiseMin(0.0);
  canonicalize(iso);
  iso.validate();
  return iso;
}

IsoquantEstimate directional_cnls_isoquant(const Eigen::MatrixXd& points,
                                           double level,
                                           const Eigen::VectorXd& direction,
                                           const qp::Settings& qp_settings) {
  const int n = static_cast<int>(points.rows());
  const int d = static_cast<int>(points.cols());
  if (n < 2) throw std::invalid_argument("dcnls: need at least 2 points");
  if (direction.size() != d)
    throw std::invalid_argument("dcnls: direction must have d entries");
  if ((direction.array() < 0.0).any() || direction.norm() == 0.0)
    throw std::invalid_argument("dcnls: direction must be nonzero and nonnegative");

  // unit-variance scaling of all inputs; the direction transforms the same way
  Eigen::VectorXd sd(d);
  Eigen::MatrixXd scaled = points;
  for (int k = 0; k < d; ++k) {
    sd[k] = data::sample_sd(points.col(k));
    if (sd[k] <= 0.0) sd[k] = 1.0;
    scaled.col(k) /= sd[k];
  }
  Eigen::VectorXd dir_scaled = direction.array() / sd.array();

  Eigen::MatrixXd rest;
  Eigen::VectorXd response;
  split_points(scaled, rest, response);
  const int dr = d - 1;
  const int vars = n * (1 + dr + 1);
  // layout: alpha_j at j, beta_j at n + j*dr .., gamma_j at n + n*dr + j
  const int gamma0 = n + n * dr;

  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(vars, vars);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(vars);
  for (int j = 0; j < n; ++j) {
    // residual = gamma_j X_d - alpha_j - beta_j'X_rest
    Eigen::VectorXd z(2 + dr);
    z[0] = -1.0;
    z.segment(1, dr) = -rest.row(j).transpose();
    z[1 + dr] = response[j];
    std::vector<int> idx(2 + dr);
    idx[0] = j;
    for (int k = 0; k < dr; ++k) idx[k + 1] = n + j * dr + k;
    idx[1 + dr] = gamma0 + j;
    for (int a = 0; a < 2 + dr; ++a)
      for (int b = 0; b < 2 + dr; ++b) Q(idx[a], idx[b]) += 2.0 * z[a] * z[b];
  }

  // beta <= 0 and -gamma <= 0
  Eigen::MatrixXd A_sign = Eigen::MatrixXd::Zero(n * dr + n, vars);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < dr; ++k) A_sign(j * dr + k, n + j * dr + k) = 1.0;
    A_sign(n * dr + j, gamma0 + j) = -1.0;
  }
  Eigen::VectorXd b_sign = Eigen::VectorXd::Zero(n * dr + n);

  // translation-property normalization per point
  Eigen::MatrixXd A_eq = Eigen::MatrixXd::Zero(n, vars);
  Eigen::VectorXd b_eq = Eigen::VectorXd::Ones(n);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < dr; ++k) A_eq(j, n + j * dr + k) = dir_scaled[k];
    A_eq(j, gamma0 + j) = dir_scaled[d - 1];
  }

  struct Rows : AfriatRowBuilder {
    const Eigen::MatrixXd* rest;
    const Eigen::VectorXd* response;
    int n, dr, gamma0;
    void fill_row(int j, int l, Eigen::MatrixXd& A, int row) const override {
      A(row, l) += 1.0;
      A(row, j) -= 1.0;
      for (int k = 0; k < dr; ++k) {
        A(row, n + l * dr + k) += (*rest)(j, k);
        A(row, n + j * dr + k) -= (*rest)(j, k);
      }
      A(row, gamma0 + l) -= (*response)[j];
      A(row, gamma0 + j) += (*response)[j];
    }
  } rows;
  rows.rest = &rest;
  rows.response = &response;
  rows.n = n;
  rows.dr = dr;
  rows.gamma0 = gamma0;

  auto plane_values = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd alpha = x.head(n);
    Eigen::MatrixXd beta(n, dr);
    for (int j = 0; j < n; ++j)
      beta.row(j) = x.segment(n + j * dr, dr).transpose();
    Eigen::VectorXd gamma = x.segment(gamma0, n);
    Eigen::MatrixXd values = rest * beta.transpose();  // (j, l)
    values.rowwise() += alpha.transpose();
    values.noalias() -= response * gamma.transpose();
    return values;
  };

  const GenerationResult gen =
      solve_with_generation(Q, c, A_sign, b_sign, A_eq, b_eq, n, rest, rows,
                            plane_values, qp_settings);

  // convert surviving planes back to the X_d = f(X_rest) envelope
  std::vector<int> kept;
  for (int j = 0; j < n; ++j)
    if (gen.x[gamma0 + j] > 1e-8) kept.push_back(j);
  if (kept.empty())
    throw std::runtime_error("dcnls: all planes degenerate (gamma ~ 0)");

  const int m = static_cast<int>(kept.size());
  IsoquantEstimate iso;
  iso.level = level;
  iso.support.resize(m, dr);
  iso.intercepts.resize(m);
  iso.slopes.resize(m, dr);
  const double sd_last = sd[d - 1];
  for (int t = 0; t < m; ++t) {
    const int j = kept[t];
    const double gamma = gen.x[gamma0 + j];
    iso.support.row(t) = points.row(j).head(dr);
    iso.intercepts[t] = sd_last * gen.x[j] / gamma;
    for (int k = 0; k < dr; ++k)
      iso.slopes(t, k) =
          std::min(0.0, sd_last * gen.x[n + j * dr + k] / (gamma * sd[k]));
  }
  canonicalize(iso);
  iso.validate();
  return iso;
}

namespace {

//! Error directions at equally spaced percentiles of the per-coordinate
//! ratios to the response input.
Eigen::MatrixXd percentile_directions(const Eigen::MatrixXd& points, int count) {
  const int d = static_cast<int>(points.cols());
  Eigen::MatrixXd dirs(count, d);
  for (int m = 0; m < count; ++m) {
    const double p = 100.0 * (m + 0.5) / count;
    Eigen::VectorXd g(d);
    for (int k = 0; k + 1 < d; ++k) {
      Eigen::VectorXd ratio = points.col(k).array() / points.col(d - 1).array();
      g[k] = data::percentile(ratio, p);
    }
    g[d - 1] = 1.0;
    dirs.row(m) = g / g.norm();
  }
  return dirs;
}

}  // namespace

IsoquantEstimate averaging_directional_cnls(const Eigen::MatrixXd& points,
                                            double level, int directions,
                                            const qp::Settings& qp_settings) {
  if (directions < 1)
    throw std::invalid_argument("adcnls: need at least one direction");
  const Eigen::MatrixXd dirs = percentile_directions(points, directions);
  std::vector<IsoquantEstimate> fits;
  std::string last_error;
  for (int m = 0; m < directions; ++m) {
    try {
      fits.push_back(
          directional_cnls_isoquant(points, level, dirs.row(m), qp_settings));
    } catch (const std::exception& e) {
      last_error = e.what();
    }
  }
  if (fits.empty())
    throw std::runtime_error("adcnls: every direction failed: " + last_error);
  if (fits.size() == 1) return fits.front();

  // pointwise average of the directional envelopes, stored through its
  // supporting hyperplanes at the data points
  const int n = static_cast<int>(points.rows());
  const int dr = static_cast<int>(points.cols()) - 1;
  IsoquantEstimate iso;
  iso.level = level;
  iso.support = points.leftCols(dr);
  iso.intercepts.resize(n);
  iso.slopes.resize(n, dr);
  const double inv = 1.0 / static_cast<double>(fits.size());
  for (int j = 0; j < n; ++j) {
    const Eigen::VectorXd x = iso.support.row(j);
    double value = 0.0;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(dr);
    for (const auto& fit : fits) {
      value += fit.eval(x);
      grad += fit.subgradient(x);
    }
    value *= inv;
    grad *= inv;
    iso.intercepts[j] = value - grad.dot(x);
    iso.slopes.row(j) = grad;
  }
  iso.validate();
  return iso;
}

HomotheticFamily homothetic_isoquant(const Eigen::MatrixXd& X,
                                     const LevelAssignment& assignment,
                                     const std::vector<IsoquantEstimate>& fitted,
                                     double trim,
                                     const qp::Settings& qp_settings) {
  if (!(trim > 0.0 && trim < 0.5))
    throw std::invalid_argument("homothetic_isoquant: trim must be in (0, 1/2)");
  const int count = static_cast<int>(fitted.size());
  if (count == 0 || static_cast<int>(assignment.levels.size()) != count)
    throw std::invalid_argument("homothetic_isoquant: per-level isoquants required");
  const int d = static_cast<int>(X.cols());

  // unit-ray scaling factor per level: lambda with lambda*(1,...,1) on the surface
  auto unit_ray_lambda = [&](const IsoquantEstimate& iso) {
    auto gap = [&](double lambda) {
      return lambda - iso.eval(Eigen::VectorXd::Constant(d - 1, lambda));
    };
    if (gap(0.0) >= 0.0)
      throw std::runtime_error("homothetic_isoquant: isoquant misses the unit ray");
    double lo = 0.0, hi = 1.0;
    int expand = 0;
    while (gap(hi) < 0.0) {
      hi *= 2.0;
      if (++expand > 60)
        throw std::runtime_error("homothetic_isoquant: isoquant misses the unit ray");
    }
    while (hi - lo > 1e-12 * std::max(1.0, hi)) {
      const double mid = 0.5 * (lo + hi);
      (gap(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };

  HomotheticFamily family;
  family.lambda.resize(count);
  for (int i = 0; i < count; ++i) family.lambda[i] = unit_ray_lambda(fitted[i]);

  // pool the rescaled observations over the middle levels (1-based window)
  const int lo1 = std::max(1, static_cast<int>(std::ceil(trim * count - 1e-9)));
  const int hi1 =
      std::min(count, static_cast<int>(std::floor((1.0 - trim) * count + 1e-9)));
  if (lo1 > hi1)
    throw std::invalid_argument("homothetic_isoquant: trim removes every level");

  std::vector<int> rows;
  for (int j = 0; j < static_cast<int>(assignment.index.size()); ++j) {
    const int i = assignment.index[j];
    if (i + 1 >= lo1 && i + 1 <= hi1) rows.push_back(j);
  }
  if (static_cast<int>(rows.size()) < 2)
    throw std::runtime_error("homothetic_isoquant: too few pooled observations");
  Eigen::MatrixXd pooled(static_cast<int>(rows.size()), d);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    const int j = rows[t];
    pooled.row(t) = X.row(j) / family.lambda[assignment.index[j]];
  }

  family.unit = cnls_isoquant(pooled, 1.0, qp_settings);

  // rederive each level as a radial scaling of the pooled curve
  family.per_level.reserve(count);
  for (int i = 0; i < count; ++i) {
    IsoquantEstimate iso;
    iso.level = assignment.levels[i];
    iso.support = family.lambda[i] * family.unit.support;
    iso.intercepts = family.lambda[i] * family.unit.intercepts;
    iso.slopes = family.unit.slopes;
    iso.validate();
    family.per_level.push_back(std::move(iso));
  }
  return family;
}

double ParametricIsoquantFit::index(const Eigen::VectorXd& x) const {
  if (family == ParametricFamily::Linear) return beta.dot(x);
  return std::exp((x.array().log() * beta.array()).sum());
}

namespace {

//! Enumerate the mesh points of the unit simplex with the given step.
void simplex_grid(int dims, double mesh, const Eigen::VectorXd& center,
                  double radius, std::vector<Eigen::VectorXd>& out) {
  const int steps = static_cast<int>(std::round(1.0 / mesh));
  Eigen::VectorXd beta(dims);
  std::function<void(int, int)> recurse = [&](int coord, int used) {
    if (coord == dims - 1) {
      beta[coord] = static_cast<double>(steps - used) / steps;
      if (radius > 0.0 && (beta - center).cwiseAbs().maxCoeff() > radius + 1e-12)
        return;
      out.push_back(beta);
      return;
    }
    for (int s = 0; s + used <= steps; ++s) {
      beta[coord] = static_cast<double>(s) / steps;
      if (radius > 0.0 && std::abs(beta[coord] - center[coord]) > radius + 1e-12)
        continue;
      recurse(coord + 1, used + s);
    }
  };
  recurse(0, 0);
}

}  // namespace

ParametricIsoquantFit fit_parametric_isoquant(const Eigen::MatrixXd& X,
                                              const Eigen::VectorXd& y,
                                              ParametricFamily family) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  if (n < 3) throw std::invalid_argument("fit_parametric_isoquant: need n >= 3");
  if (family == ParametricFamily::Power && (X.array() <= 0.0).any())
    throw std::invalid_argument("fit_parametric_isoquant: power family needs X > 0");

  auto index_of = [&](const Eigen::VectorXd& beta, int j) {
    if (family == ParametricFamily::Linear) return beta.dot(X.row(j));
    return std::exp((X.row(j).transpose().array().log() * beta.array()).sum());
  };

  // coarse candidate scan: the inner S-fit ranks candidates, so a strided
  // inflection search is enough until the final refit
  auto profile_sse = [&](const Eigen::VectorXd& beta, int stride) {
    Eigen::VectorXd z(n);
    for (int j = 0; j < n; ++j) z[j] = index_of(beta, j);
    try {
      return sshape::sshaped_univariate_fit(z, y, stride).sse;
    } catch (const std::exception&) {
      return kInf;
    }
  };

  const int stride = std::max(1, n / 25);
  std::vector<Eigen::VectorXd> candidates;
  simplex_grid(d, 0.02, Eigen::VectorXd::Zero(d), -1.0, candidates);
  Eigen::VectorXd best_beta = candidates.front();
  double best_sse = kInf;
  for (const auto& beta : candidates) {
    const double sse = profile_sse(beta, stride);
    if (sse < best_sse) {
      best_sse = sse;
      best_beta = beta;
    }
  }
  candidates.clear();
  simplex_grid(d, 0.002, best_beta, 0.02, candidates);
  for (const auto& beta : candidates) {
    const double sse = profile_sse(beta, stride);
    if (sse < best_sse) {
      best_sse = sse;
      best_beta = beta;
    }
  }

  ParametricIsoquantFit fit;
  fit.family = family;
  fit.beta = best_beta;
  Eigen::VectorXd z(n);
  for (int j = 0; j < n; ++j) z[j] = index_of(best_beta, j);
  fit.link = sshape::sshaped_univariate_fit(z, y);
  fit.sse = fit.link.sse;
  return fit;
}

}  // namespace prodest::isoquants
