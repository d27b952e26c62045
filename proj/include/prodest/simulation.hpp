#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "prodest/dataset.hpp"
#include "prodest/isoquants.hpp"
#include "prodest/pipeline.hpp"

namespace prodest::simulation {

enum class DgpKind {
  ParametricHomothetic,  // Cobb-Douglas core, beta = 0.50
  CesHomothetic,         // CES core, sigma = 1.51, beta = 0.45
  CesNonHomothetic,      // CES core with output-dependent intensity
  IsoquantOrthogonal     // hyperbola isoquant with orthogonal noise
};

struct DgpSpec {
  DgpKind kind = DgpKind::ParametricHomothetic;
  double beta = 0.50;    // first-input intensity (CES homothetic uses 0.45)
  double sigma = 1.51;   // elasticity of substitution (CES cores)
  double sigma_v = 1.0;  // noise standard deviation
  double a = 10.0;       // isoquant shape (orthogonal DGP)
  int n = 100;
  std::uint64_t seed = 1;

  void check() const;
};

DgpSpec default_spec(DgpKind kind, int n, double sigma_v, std::uint64_t seed);

//! Scale function 15 / (1 + z^-5) and helpers.
double scale_function(double z);
double scale_elasticity(double z);  // 5 / (1 + z^5)

//! Core aggregators.
double cobb_douglas_core(double x1, double x2, double beta);
double ces_core(double x1, double x2, double beta, double sigma);

//! Output level of the non-homothetic CES technology at (x1, x2): the fixed
//! point of y = F(H(x; y)) solved by bisection on [0, 15].
double nonhomothetic_output(double x1, double x2, double sigma);

struct Generated {
  data::Dataset ds;
  std::function<double(const Eigen::VectorXd&)> truth;
};

//! Radially generated inputs with additive output noise (production DGPs).
Generated generate(const DgpSpec& spec);

struct IsoquantSample {
  Eigen::MatrixXd noisy;  // n x 2 observed points
  Eigen::MatrixXd clean;  // n x 2 points on the true curve
};

//! Points on the hyperbola x1 x2 = a displaced along the local unit normal.
IsoquantSample generate_isoquant_points(double a, double sigma_v, int n,
                                        std::uint64_t seed);

//! Root mean squared deviation of an estimator from the truth at test points.
double rmse_vs_truth(const std::function<double(const Eigen::VectorXd&)>& estimator,
                     const std::function<double(const Eigen::VectorXd&)>& truth,
                     const Eigen::MatrixXd& test_points);

//! RMSE of an isoquant estimate measured orthogonally to the true curve
//! x1 x2 = a at test points on the curve.
double orthogonal_rmse(const isoquants::IsoquantEstimate& estimate, double a,
                       const Eigen::MatrixXd& curve_points);

struct Scenario {
  DgpKind kind = DgpKind::ParametricHomothetic;
  int n = 100;
  double sigma_v = 1.0;
};

struct ResultRow {
  int scenario = 0;
  std::string estimator;
  int replication = 0;
  double rmse = 0.0;
  bool ok = true;
};

struct BoxStats {
  double q1 = 0, median = 0, q3 = 0;
  double lo_whisker = 0, hi_whisker = 0;
  int count = 0;
};

struct ExperimentResult {
  std::vector<Scenario> scenarios;
  std::vector<ResultRow> rows;
  std::map<std::pair<int, std::string>, BoxStats> summary;
};

struct ExperimentConfig {
  std::vector<Scenario> scenarios;
  std::vector<std::string> estimators;
  int replications = 20;
  int test_size = 1000;
  std::uint64_t seed = 1;
  int threads = 1;
  pipeline::InitConfig init;  // used by the pipeline-backed estimators
};

//! Names understood by the harness. Production DGPs: "ll", "oracle",
//! "parametric-power", "parametric-linear", "homothetic", "iterative",
//! "basic". Isoquant DGP: "cnls", "dcnls", "adcnls".
ExperimentResult run_experiment(const ExperimentConfig& config);

void write_rows_csv(const ExperimentResult& result, const std::string& path);
nlohmann::json summary_json(const ExperimentResult& result);

BoxStats box_stats(std::vector<double> values);

}  // namespace prodest::simulation
