#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace prodest::data {

//! Observation panel: n rows of positive inputs X (n x d) and positive
//! output y, with optional firm / period identifiers. Immutable once built;
//! transforms return new datasets.
struct Dataset {
  Eigen::MatrixXd X;  // n x d, all entries > 0
  Eigen::VectorXd y;  // n, all entries > 0
  std::vector<std::string> input_labels;
  std::string output_label = "y";
  std::vector<std::string> firm_ids;  // empty or size n
  std::vector<int> periods;           // empty or size n
  // cumulative per-variable scale factors applied by normalize()
  Eigen::VectorXd input_scale;  // size d, defaults to ones
  double output_scale = 1.0;
  // ingested panels require positive outputs; simulated panels with additive
  // noise may carry nonpositive draws
  bool outputs_positive = true;

  int n() const { return static_cast<int>(y.size()); }
  int d() const { return static_cast<int>(X.cols()); }
  void check() const;  // positivity + consistent sizes
};

Dataset make_dataset(Eigen::MatrixXd X, Eigen::VectorXd y,
                     std::vector<std::string> input_labels = {},
                     bool require_positive_output = true);

struct ColumnMap {
  std::vector<std::string> inputs;
  std::string output;
  std::string firm_id;  // optional, empty = absent
  std::string period;   // optional
};

struct LoadReport {
  int rows_read = 0;
  int rows_dropped = 0;
  std::vector<std::string> warnings;
};

//! Read a header-first CSV; rows whose mapped cells are not finite positive
//! reals are dropped and counted. Unmapped columns are ignored.
//! Throws std::runtime_error on missing columns, unparseable cells (with the
//! row index) or an empty result.
Dataset load_csv(const std::string& path, const ColumnMap& columns,
                 LoadReport* report = nullptr);

//! Emit with the same header conventions load_csv expects; numeric payload
//! round-trips exactly at 17 significant digits.
void write_csv(const Dataset& ds, const std::string& path);

//! Divide every input column and the output by its sample standard deviation
//! (n-1 denominator), recording the factors.
Dataset normalize(const Dataset& ds);

//! Sum establishment rows that share (firm_id, period) into firm-level rows.
Dataset aggregate_firms(const Dataset& ds);

struct VariableStats {
  std::string label;
  double mean = 0, skewness = 0;
  double p10 = 0, p25 = 0, p50 = 0, p75 = 0, p90 = 0;
};

//! Per-variable summary (inputs then output). Percentiles use linear
//! interpolation between order statistics (type 7); skewness is the adjusted
//! Fisher-Pearson coefficient.
std::vector<VariableStats> summary_stats(const Dataset& ds);

//! Type-7 percentile of a sample, p in [0, 100].
double percentile(Eigen::VectorXd values, double p);

double sample_sd(const Eigen::VectorXd& values);

}  // namespace prodest::data
