#include "prodest/productivity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace prodest::productivity {

TfpResult tfp(const data::Dataset& ds, const Evaluator& model) {
  TfpResult out;
  std::vector<double> kept_values;
  std::map<int, std::vector<double>> by_period;
  for (int j = 0; j < ds.n(); ++j) {
    const double fit = model(ds.X.row(j));
    if (!(fit > 0.0)) {
      ++out.excluded;
      continue;
    }
    const double ratio = ds.y[j] / fit;
    out.kept.push_back(j);
    kept_values.push_back(ratio);
    const int period = ds.periods.empty() ? 0 : ds.periods[j];
    by_period[period].push_back(ratio);
  }
  out.tfp.resize(static_cast<int>(kept_values.size()));
  for (std::size_t i = 0; i < kept_values.size(); ++i) out.tfp[i] = kept_values[i];
  for (auto& [period, values] : by_period) {
    Eigen::VectorXd v(static_cast<int>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) v[i] = values[i];
    out.period_median[period] = data::percentile(v, 50);
  }
  return out;
}

CobbDouglasCrs cobb_douglas_crs_fit(const data::Dataset& ds) {
  if (ds.d() != 2)
    throw std::invalid_argument("cobb_douglas_crs_fit: expects two inputs (L, K)");
  ds.check();
  if ((ds.y.array() <= 0.0).any())
    throw std::invalid_argument("cobb_douglas_crs_fit: outputs must be positive");
  const int n = ds.n();
  // ln y - ln K = b0 + bL (ln L - ln K)
  Eigen::VectorXd lhs(n), reg(n);
  for (int j = 0; j < n; ++j) {
    lhs[j] = std::log(ds.y[j]) - std::log(ds.X(j, 1));
    reg[j] = std::log(ds.X(j, 0)) - std::log(ds.X(j, 1));
  }
  const double reg_mean = reg.mean();
  const double lhs_mean = lhs.mean();
  const double var = (reg.array() - reg_mean).square().sum();
  if (var <= 1e-12 * n)
    throw std::invalid_argument("cobb_douglas_crs_fit: collinear logs (constant L/K)");
  CobbDouglasCrs fit;
  fit.beta_l = ((reg.array() - reg_mean) * (lhs.array() - lhs_mean)).sum() / var;
  fit.beta0 = lhs_mean - fit.beta_l * reg_mean;
  fit.beta_k = 1.0 - fit.beta_l;
  return fit;
}

Decomposition decompose(const data::Dataset& ds, const Evaluator& g_crs,
                        const Evaluator& g_h, const Evaluator& g_nh,
                        const std::vector<int>& groups) {
  if (!groups.empty() && static_cast<int>(groups.size()) != ds.n())
    throw std::invalid_argument("decompose: group vector size mismatch");
  Decomposition out;
  std::map<int, std::vector<double>> scale_by_group, mix_by_group, resid_by_group;
  for (int j = 0; j < ds.n(); ++j) {
    const Eigen::VectorXd x = ds.X.row(j);
    const double crs = g_crs(x);
    const double hom = g_h(x);
    const double nonhom = g_nh(x);
    if (!(crs > 0.0 && hom > 0.0 && nonhom > 0.0))
      throw std::runtime_error("decompose: evaluator returned a nonpositive value");
    DecompositionRow row;
    row.firm_id = ds.firm_ids.empty() ? std::to_string(j) : ds.firm_ids[j];
    row.period = ds.periods.empty() ? 0 : ds.periods[j];
    row.group = groups.empty() ? 0 : groups[j];
    row.tfp_crs = ds.y[j] / crs;
    row.scale_factor = hom / crs;
    row.mix_factor = nonhom / hom;
    row.residual_factor = row.tfp_crs / (row.scale_factor * row.mix_factor);
    scale_by_group[row.group].push_back(row.scale_factor);
    mix_by_group[row.group].push_back(row.mix_factor);
    resid_by_group[row.group].push_back(row.residual_factor);
    out.rows.push_back(std::move(row));
  }
  auto medians = [](std::map<int, std::vector<double>>& by_group) {
    std::map<int, double> out_map;
    for (auto& [group, values] : by_group) {
      Eigen::VectorXd v(static_cast<int>(values.size()));
      for (std::size_t i = 0; i < values.size(); ++i) v[i] = values[i];
      out_map[group] = data::percentile(v, 50);
    }
    return out_map;
  };
  out.group_median_scale = medians(scale_by_group);
  out.group_median_mix = medians(mix_by_group);
  out.group_median_residual = medians(resid_by_group);
  return out;
}

void write_decomposition_csv(const Decomposition& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_decomposition_csv: cannot open " + path);
  out << "firm_id,period,group,tfp_crs,scale,mix,residual\n";
  char buf[40];
  auto emit = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
  };
  for (const auto& row : d.rows) {
    out << row.firm_id << "," << row.period << "," << row.group << ",";
    emit(row.tfp_crs);
    out << ",";
    emit(row.scale_factor);
    out << ",";
    emit(row.mix_factor);
    out << ",";
    emit(row.residual_factor);
    out << "\n";
  }
}

Eigen::VectorXd growth_accounting_tfp(const data::Dataset& ds, const Shares& shares) {
  if (ds.d() != 2)
    throw std::invalid_argument("growth_accounting_tfp: expects two inputs (L, K)");
  const int n = ds.n();
  if (shares.per_row && shares.row_alpha_l.size() != n)
    throw std::invalid_argument("growth_accounting_tfp: per-row shares size mismatch");
  Eigen::VectorXd raw(n);
  for (int j = 0; j < n; ++j) {
    const double al = shares.per_row ? shares.row_alpha_l[j] : shares.alpha_l;
    const double ak = 1.0 - al;
    if (!(al >= 0.0) || !(ak >= 0.0))
      throw std::invalid_argument("growth_accounting_tfp: shares must lie in [0,1]");
    raw[j] = ds.y[j] / (std::pow(ds.X(j, 0), al) * std::pow(ds.X(j, 1), ak));
  }
  const double median = data::percentile(raw, 50);
  if (!(median > 0.0))
    throw std::runtime_error("growth_accounting_tfp: nonpositive median");
  return raw / median;
}

double dispersion_ratio(const Eigen::VectorXd& tfp, double hi, double lo) {
  if (tfp.size() < 2) throw std::invalid_argument("dispersion_ratio: need n >= 2");
  if ((tfp.array() <= 0.0).any())
    throw std::invalid_argument("dispersion_ratio: values must be positive");
  const double denom = data::percentile(tfp, lo);
  if (!(denom > 0.0)) throw std::runtime_error("dispersion_ratio: zero low percentile");
  return data::percentile(tfp, hi) / denom;
}

}  // namespace prodest::productivity
