#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "prodest/dataset.hpp"

namespace prodest::productivity {

using Evaluator = std::function<double(const Eigen::VectorXd&)>;

struct TfpResult {
  Eigen::VectorXd tfp;              // per kept observation
  std::vector<int> kept;            // original row indices
  int excluded = 0;                 // rows with nonpositive predictions
  std::map<int, double> period_median;
};

//! Observed output over predicted output, grouped by period.
TfpResult tfp(const data::Dataset& ds, const Evaluator& model);

struct CobbDouglasCrs {
  double beta0 = 0.0;  // intercept in logs
  double beta_l = 0.0;
  double beta_k = 0.0;  // 1 - beta_l

  double operator()(const Eigen::VectorXd& x) const {
    return std::exp(beta0) * std::pow(x[0], beta_l) * std::pow(x[1], beta_k);
  }
};

//! ln y = b0 + bL ln L + bK ln K with bL + bK = 1, solved by the substituted
//! univariate regression. Inputs are (L, K) in columns 0 and 1.
CobbDouglasCrs cobb_douglas_crs_fit(const data::Dataset& ds);

struct DecompositionRow {
  std::string firm_id;
  int period = 0;
  int group = -1;
  double tfp_crs = 0.0;
  double scale_factor = 0.0;
  double mix_factor = 0.0;
  double residual_factor = 0.0;
};

struct Decomposition {
  std::vector<DecompositionRow> rows;
  std::map<int, double> group_median_scale;
  std::map<int, double> group_median_mix;
  std::map<int, double> group_median_residual;
};

//! tfp_crs = scale * mix * residual with scale = g_h/g_crs, mix = g_nh/g_h,
//! residual computed as tfp_crs / (scale * mix) so the identity is exact.
Decomposition decompose(const data::Dataset& ds, const Evaluator& g_crs,
                        const Evaluator& g_h, const Evaluator& g_nh,
                        const std::vector<int>& groups = {});

void write_decomposition_csv(const Decomposition& d, const std::string& path);

struct Shares {
  bool per_row = false;
  double alpha_l = 0.5;  // industry-level shares
  double alpha_k = 0.5;
  Eigen::VectorXd row_alpha_l;  // per-row labor shares when per_row
};

//! Growth-accounting TFP y / (L^aL K^aK), normalized by its median.
Eigen::VectorXd growth_accounting_tfp(const data::Dataset& ds, const Shares& shares);

//! percentile(hi) / percentile(lo), type-7 percentiles.
double dispersion_ratio(const Eigen::VectorXd& tfp, double hi = 90, double lo = 10);

}  // namespace prodest::productivity
