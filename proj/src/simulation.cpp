#include "prodest/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "prodest/parallel.hpp"
#include "prodest/rng.hpp"
#include "prodest/smoothing.hpp"

namespace prodest::simulation {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
}

void DgpSpec::check() const {
  if (n < 1) throw std::invalid_argument("dgp: n must be >= 1");
  if (sigma_v < 0.0) throw std::invalid_argument("dgp: sigma_v must be >= 0");
  if (!(beta > 0.0 && beta < 1.0))
    throw std::invalid_argument("dgp: beta must be in (0,1)");
  if (!(sigma > 1.0)) throw std::invalid_argument("dgp: sigma must exceed 1");
  if (!(a > 0.0)) throw std::invalid_argument("dgp: a must be positive");
}

DgpSpec default_spec(DgpKind kind, int n, double sigma_v, std::uint64_t seed) {
  DgpSpec spec;
  spec.kind = kind;
  spec.n = n;
  spec.sigma_v = sigma_v;
  spec.seed = seed;
  spec.beta = kind == DgpKind::CesHomothetic ? 0.45 : 0.50;
  return spec;
}

double scale_function(double z) {
  if (z <= 0.0) return 0.0;
  return 15.0 / (1.0 + std::pow(z, -5.0));
}

double scale_elasticity(double z) { return 5.0 / (1.0 + std::pow(z, 5.0)); }

double cobb_douglas_core(double x1, double x2, double beta) {
  return std::pow(x1, beta) * std::pow(x2, 1.0 - beta);
}

double ces_core(double x1, double x2, double beta, double sigma) {
  const double rho = (sigma - 1.0) / sigma;
  return std::pow(beta * std::pow(x1, rho) + (1.0 - beta) * std::pow(x2, rho),
                  1.0 / rho);
}

double nonhomothetic_output(double x1, double x2, double sigma) {
  auto beta_of = [](double y) { return 0.25 + 0.30 * y / 15.0; };
  auto gap = [&](double y) {
    return scale_function(ces_core(x1, x2, beta_of(y), sigma)) - y;
  };
  double lo = 0.0, hi = 15.0;
  if (gap(lo) < 0.0) return 0.0;
  int guard = 0;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    (gap(mid) >= 0.0 ? lo : hi) = mid;
    if (++guard > 200)
      throw std::runtime_error("nonhomothetic_output: fixed point did not converge");
  }
  return 0.5 * (lo + hi);
}

namespace {

Eigen::MatrixXd radial_inputs(int n, rng::Rng& gen) {
  Eigen::MatrixXd X(n, 2);
  for (int j = 0; j < n; ++j) {
    double modulus = gen.uniform(0.0, 2.5);
    while (modulus <= 1e-9) modulus = gen.uniform(0.0, 2.5);
    const double angle = gen.uniform(0.05, M_PI / 2.0 - 0.05);
    X(j, 0) = modulus * std::cos(angle);
    X(j, 1) = modulus * std::sin(angle);
  }
  return X;
}

}  // namespace

Generated generate(const DgpSpec& spec) {
  spec.check();
  if (spec.kind == DgpKind::IsoquantOrthogonal)
    throw std::invalid_argument("generate: use generate_isoquant_points for the isoquant DGP");
  rng::Rng gen = rng::Rng::substream(spec.seed, 0);
  const Eigen::MatrixXd X = radial_inputs(spec.n, gen);

  std::function<double(const Eigen::VectorXd&)> truth;
  switch (spec.kind) {
    case DgpKind::ParametricHomothetic: {
      const double beta = spec.beta;
      truth = [beta](const Eigen::VectorXd& x) {
        return scale_function(cobb_douglas_core(x[0], x[1], beta));
      };
      break;
    }
    case DgpKind::CesHomothetic: {
      const double beta = spec.beta;
      const double sigma = spec.sigma;
      truth = [beta, sigma](const Eigen::VectorXd& x) {
        return scale_function(ces_core(x[0], x[1], beta, sigma));
      };
      break;
    }
    case DgpKind::CesNonHomothetic: {
      const double sigma = spec.sigma;
      truth = [sigma](const Eigen::VectorXd& x) {
        return nonhomothetic_output(x[0], x[1], sigma);
      };
      break;
    }
    default:
      throw std::invalid_argument("generate: unsupported kind");
  }

  Eigen::VectorXd y(spec.n);
  for (int j = 0; j < spec.n; ++j)
    y[j] = truth(X.row(j)) + (spec.sigma_v > 0.0 ? gen.normal(0.0, spec.sigma_v) : 0.0);

  Generated out;
  out.ds = data::make_dataset(X, y, {"x1", "x2"}, /*require_positive_output=*/false);
  out.truth = std::move(truth);
  return out;
}

IsoquantSample generate_isoquant_points(double a, double sigma_v, int n,
                                        std::uint64_t seed) {
  if (!(a > 0.0)) throw std::invalid_argument("generate_isoquant_points: a > 0");
  rng::Rng gen = rng::Rng::substream(seed, 0);
  IsoquantSample sample;
  sample.noisy.resize(n, 2);
  sample.clean.resize(n, 2);
  for (int j = 0; j < n; ++j) {
    const double eta = gen.uniform(0.05, M_PI / 2.0 - 0.05);
    const double x1 = std::sqrt(a / std::tan(eta));
    const double x2 = std::sqrt(a * std::tan(eta));
    sample.clean(j, 0) = x1;
    sample.clean(j, 1) = x2;
    const double normal_angle = std::atan(x1 * x1 / a);
    const double eps = sigma_v > 0.0 ? gen.normal(0.0, sigma_v) : 0.0;
    sample.noisy(j, 0) = x1 + eps * std::cos(normal_angle);
    sample.noisy(j, 1) = x2 + eps * std::sin(normal_angle);
  }
  return sample;
}

double rmse_vs_truth(const std::function<double(const Eigen::VectorXd&)>& estimator,
                     const std::function<double(const Eigen::VectorXd&)>& truth,
                     const Eigen::MatrixXd& test_points) {
  double sse = 0.0;
  for (int j = 0; j < test_points.rows(); ++j) {
    const Eigen::VectorXd x = test_points.row(j);
    const double diff = estimator(x) - truth(x);
    sse += diff * diff;
  }
  return std::sqrt(sse / test_points.rows());
}

double orthogonal_rmse(const isoquants::IsoquantEstimate& estimate, double a,
                       const Eigen::MatrixXd& curve_points) {
  double sse = 0.0;
  for (int j = 0; j < curve_points.rows(); ++j) {
    const double x1 = curve_points(j, 0);
    const double x2 = curve_points(j, 1);
    const double angle = std::atan(x1 * x1 / a);
    const double nx = std::cos(angle), ny = std::sin(angle);
    auto gap = [&](double t) {
      Eigen::VectorXd rest(1);
      rest[0] = x1 + t * nx;
      return (x2 + t * ny) - estimate.eval(rest);
    };
    double lo = -1.0, hi = 1.0;
    int guard = 0;
    while (gap(lo) > 0.0) {
      lo *= 2.0;
      if (++guard > 60) throw std::runtime_error("orthogonal_rmse: no crossing");
    }
    guard = 0;
    while (gap(hi) < 0.0) {
      hi *= 2.0;
      if (++guard > 60) throw std::runtime_error("orthogonal_rmse: no crossing");
    }
    while (hi - lo > 1e-10 * std::max(1.0, std::abs(hi))) {
      const double mid = 0.5 * (lo + hi);
      (gap(mid) < 0.0 ? lo : hi) = mid;
    }
    const double t = 0.5 * (lo + hi);
    sse += t * t;
  }
  return std::sqrt(sse / curve_points.rows());
}

BoxStats box_stats(std::vector<double> values) {
  BoxStats stats;
  stats.count = static_cast<int>(values.size());
  if (values.empty()) return stats;
  Eigen::VectorXd v(stats.count);
  for (int i = 0; i < stats.count; ++i) v[i] = values[i];
  stats.q1 = data::percentile(v, 25);
  stats.median = data::percentile(v, 50);
  stats.q3 = data::percentile(v, 75);
  const double iqr = stats.q3 - stats.q1;
  stats.lo_whisker = stats.q1 - 1.5 * iqr;
  stats.hi_whisker = stats.q3 + 1.5 * iqr;
  return stats;
}

namespace {

using Evaluator = std::function<double(const Eigen::VectorXd&)>;

Evaluator fit_production_estimator(const std::string& name,
                                   const data::Dataset& train,
                                   const Generated& generated,
                                   const pipeline::InitConfig& init) {
  if (name == "oracle") return generated.truth;
  if (name == "ll") {
    const auto grid = smoothing::default_bandwidth_grid(train.X);
    const smoothing::Bandwidth bw = smoothing::loocv_bandwidth(train.X, train.y, grid);
    const Eigen::MatrixXd X = train.X;
    const Eigen::VectorXd y = train.y;
    return [X, y, bw](const Eigen::VectorXd& x) {
      return smoothing::local_linear_fit_adaptive(X, y, bw, x);
    };
  }
  if (name == "parametric-power" || name == "parametric-linear") {
    const auto family = name == "parametric-power"
                            ? isoquants::ParametricFamily::Power
                            : isoquants::ParametricFamily::Linear;
    const auto fit = isoquants::fit_parametric_isoquant(train.X, train.y, family);
    return [fit](const Eigen::VectorXd& x) { return fit.predict(x); };
  }
  pipeline::ProductionModel model;
  if (name == "homothetic") {
    model = pipeline::run_homothetic(train, init);
  } else if (name == "iterative") {
    model = pipeline::run_iterative(train, init);
  } else if (name == "basic") {
    model = pipeline::run_basic(train, init);
  } else {
    throw std::invalid_argument("run_experiment: unknown estimator '" + name + "'");
  }
  auto shared = std::make_shared<pipeline::ProductionModel>(std::move(model));
  return [shared](const Eigen::VectorXd& x) { return pipeline::predict(*shared, x); };
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  if (config.replications < 1)
    throw std::invalid_argument("run_experiment: replications must be >= 1");
  if (config.scenarios.empty() || config.estimators.empty())
    throw std::invalid_argument("run_experiment: scenarios and estimators required");

  ExperimentResult result;
  result.scenarios = config.scenarios;
  const int cells = static_cast<int>(config.scenarios.size()) * config.replications;
  std::vector<std::vector<ResultRow>> slots(cells);

  par::parallel_for(cells, config.threads, [&](int cell) {
    const int s = cell / config.replications;
    const int rep = cell % config.replications;
    const Scenario& scenario = config.scenarios[s];
    const std::uint64_t stream =
        (static_cast<std::uint64_t>(s) << 32) + static_cast<std::uint64_t>(rep);
    std::vector<ResultRow> rows;

    if (scenario.kind == DgpKind::IsoquantOrthogonal) {
      const double a = 10.0;
      const IsoquantSample train = generate_isoquant_points(
          a, scenario.sigma_v, scenario.n,
          rng::Rng::substream(config.seed, stream).next_u64());
      const IsoquantSample test = generate_isoquant_points(
          a, 0.0, config.test_size,
          rng::Rng::substream(config.seed ^ 0x5eedULL, stream).next_u64());
      for (const std::string& name : config.estimators) {
        ResultRow row;
        row.scenario = s;
        row.estimator = name;
        row.replication = rep;
        try {
          isoquants::IsoquantEstimate estimate;
          if (name == "cnls") {
            estimate = isoquants::cnls_isoquant(train.noisy, a);
          } else if (name == "dcnls") {
            estimate = isoquants::averaging_directional_cnls(train.noisy, a, 1);
          } else if (name == "adcnls") {
            estimate = isoquants::averaging_directional_cnls(train.noisy, a,
                                                             config.init.directions);
          } else {
            throw std::invalid_argument("unknown isoquant estimator '" + name + "'");
          }
          row.rmse = orthogonal_rmse(estimate, a, test.clean);
        } catch (const std::exception&) {
          row.ok = false;
          row.rmse = kNan;
        }
        rows.push_back(std::move(row));
      }
    } else {
      DgpSpec spec = default_spec(scenario.kind, scenario.n, scenario.sigma_v,
                                  rng::Rng::substream(config.seed, stream).next_u64());
      const Generated train = generate(spec);
      DgpSpec test_spec = default_spec(
          scenario.kind, config.test_size, 0.0,
          rng::Rng::substream(config.seed ^ 0x5eedULL, stream).next_u64());
      const Generated test = generate(test_spec);
      for (const std::string& name : config.estimators) {
        ResultRow row;
        row.scenario = s;
        row.estimator = name;
        row.replication = rep;
        try {
          const Evaluator estimator =
              fit_production_estimator(name, train.ds, train, config.init);
          row.rmse = rmse_vs_truth(estimator, train.truth, test.ds.X);
        } catch (const std::exception&) {
          row.ok = false;
          row.rmse = kNan;
        }
        rows.push_back(std::move(row));
      }
    }
    slots[cell] = std::move(rows);
  });

  for (auto& cell_rows : slots)
    for (auto& row : cell_rows) result.rows.push_back(std::move(row));

  std::map<std::pair<int, std::string>, std::vector<double>> grouped;
  for (const auto& row : result.rows)
    if (row.ok) grouped[{row.scenario, row.estimator}].push_back(row.rmse);
  for (auto& [key, values] : grouped) result.summary[key] = box_stats(values);
  return result;
}

void write_rows_csv(const ExperimentResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_rows_csv: cannot open " + path);
  out << "scenario,kind,n,sigma_v,estimator,replication,rmse\n";
  auto kind_name = [](DgpKind kind) {
    switch (kind) {
      case DgpKind::ParametricHomothetic: return "parametric-homothetic";
      case DgpKind::CesHomothetic: return "ces-homothetic";
      case DgpKind::CesNonHomothetic: return "ces-nonhomothetic";
      case DgpKind::IsoquantOrthogonal: return "isoquant-orthogonal";
    }
    return "unknown";
  };
  char buf[40];
  for (const auto& row : result.rows) {
    const Scenario& scenario = result.scenarios[row.scenario];
    out << row.scenario << "," << kind_name(scenario.kind) << "," << scenario.n
        << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", scenario.sigma_v);
    out << buf << "," << row.estimator << "," << row.replication << ",";
    if (row.ok) {
      std::snprintf(buf, sizeof(buf), "%.17g", row.rmse);
      out << buf;
    }
    out << "\n";
  }
}

nlohmann::json summary_json(const ExperimentResult& result) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& [key, stats] : result.summary) {
    const Scenario& scenario = result.scenarios[key.first];
    cells.push_back({{"scenario", key.first},
                     {"n", scenario.n},
                     {"sigma_v", scenario.sigma_v},
                     {"estimator", key.second},
                     {"q1", stats.q1},
                     {"median", stats.median},
                     {"q3", stats.q3},
                     {"lo_whisker", stats.lo_whisker},
                     {"hi_whisker", stats.hi_whisker},
                     {"count", stats.count}});
  }
  return nlohmann::json{{"cells", cells}};
}

}  // namespace prodest::simulation
