#include "prodest/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace prodest::data {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // trim whitespace and a possible trailing CR
    const auto begin = cell.find_first_not_of(" \t\r");
    const auto end = cell.find_last_not_of(" \t\r");
    cells.push_back(begin == std::string::npos ? ""
                                               : cell.substr(begin, end - begin + 1));
  }
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void Dataset::check() const {
  if (X.rows() != y.size()) throw std::invalid_argument("dataset: X/y row mismatch");
  if (!firm_ids.empty() && static_cast<int>(firm_ids.size()) != n())
    throw std::invalid_argument("dataset: firm_ids size mismatch");
  if (!periods.empty() && static_cast<int>(periods.size()) != n())
    throw std::invalid_argument("dataset: periods size mismatch");
  if ((X.array() <= 0.0).any())
    throw std::invalid_argument("dataset: inputs must be positive");
  if (outputs_positive && (y.array() <= 0.0).any())
    throw std::invalid_argument("dataset: outputs must be positive");
}

Dataset make_dataset(Eigen::MatrixXd X, Eigen::VectorXd y,
                     std::vector<std::string> input_labels,
                     bool require_positive_output) {
  Dataset ds;
  ds.X = std::move(X);
  ds.y = std::move(y);
  ds.outputs_positive = require_positive_output;
  const int d = ds.d();
  if (input_labels.empty()) {
    for (int k = 0; k < d; ++k) input_labels.push_back("x" + std::to_string(k + 1));
  }
  if (static_cast<int>(input_labels.size()) != d)
    throw std::invalid_argument("dataset: label count mismatch");
  ds.input_labels = std::move(input_labels);
  ds.input_scale = Eigen::VectorXd::Ones(d);
  ds.check();
  return ds;
}

Dataset load_csv(const std::string& path, const ColumnMap& columns,
                 LoadReport* report) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file " + path);
  const std::vector<std::string> header = split_line(line);

  auto column_of = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw std::runtime_error("load_csv: missing column '" + name + "'");
    return static_cast<int>(it - header.begin());
  };

  if (columns.inputs.empty() || columns.output.empty())
    throw std::runtime_error("load_csv: column mapping needs inputs and output");
  std::vector<int> input_cols;
  for (const auto& name : columns.inputs) input_cols.push_back(column_of(name));
  const int output_col = column_of(columns.output);
  const int firm_col = columns.firm_id.empty() ? -1 : column_of(columns.firm_id);
  const int period_col = columns.period.empty() ? -1 : column_of(columns.period);

  const int d = static_cast<int>(input_cols.size());
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> outputs;
  std::vector<std::string> firms;
  std::vector<int> periods;
  LoadReport local;
  int row_index = 0;
  while (std::getline(in, line)) {
    ++row_index;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::vector<std::string> cells = split_line(line);
    ++local.rows_read;
    auto parse_cell = [&](int col) {
      if (col >= static_cast<int>(cells.size()))
        throw std::runtime_error("load_csv: row " + std::to_string(row_index) +
                                 " has too few cells");
      const std::string& text = cells[col];
      char* end = nullptr;
      const double v = std::strtod(text.c_str(), &end);
      if (end == text.c_str() || *end != '\0' || !std::isfinite(v))
        throw std::runtime_error("load_csv: row " + std::to_string(row_index) +
                                 ": cannot parse '" + text + "'");
      return v;
    };
    Eigen::VectorXd x(d);
    bool positive = true;
    for (int k = 0; k < d; ++k) {
      x[k] = parse_cell(input_cols[k]);
      positive = positive && x[k] > 0.0;
    }
    const double out = parse_cell(output_col);
    positive = positive && out > 0.0;
    if (!positive) {
      ++local.rows_dropped;
      local.warnings.push_back("row " + std::to_string(row_index) +
                               " dropped: nonpositive value");
      continue;
    }
    rows.push_back(std::move(x));
    outputs.push_back(out);
    if (firm_col >= 0) firms.push_back(cells[firm_col]);
    if (period_col >= 0)
      periods.push_back(static_cast<int>(std::lround(parse_cell(period_col))));
  }
  if (rows.empty()) throw std::runtime_error("load_csv: no usable rows in " + path);

  Eigen::MatrixXd X(static_cast<int>(rows.size()), d);
  Eigen::VectorXd y(static_cast<int>(rows.size()));
  for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
    X.row(i) = rows[i];
    y[i] = outputs[i];
  }
  Dataset ds = make_dataset(std::move(X), std::move(y), columns.inputs);
  ds.output_label = columns.output;
  ds.firm_ids = std::move(firms);
  ds.periods = std::move(periods);
  if (report) *report = local;
  return ds;
}

void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path);
  const bool has_firm = !ds.firm_ids.empty();
  const bool has_period = !ds.periods.empty();
  if (has_firm) out << "firm_id,";
  if (has_period) out << "period,";
  for (const auto& label : ds.input_labels) out << label << ",";
  out << ds.output_label << "\n";
  for (int i = 0; i < ds.n(); ++i) {
    if (has_firm) out << ds.firm_ids[i] << ",";
    if (has_period) out << ds.periods[i] << ",";
    for (int k = 0; k < ds.d(); ++k) out << format_double(ds.X(i, k)) << ",";
    out << format_double(ds.y[i]) << "\n";
  }
}

double sample_sd(const Eigen::VectorXd& values) {
  const int n = static_cast<int>(values.size());
  if (n < 2) throw std::invalid_argument("sample_sd: need n >= 2");
  const double mean = values.mean();
  const double ss = (values.array() - mean).square().sum();
  return std::sqrt(ss / (n - 1));
}

Dataset normalize(const Dataset& ds) {
  if (ds.n() < 2) throw std::invalid_argument("normalize: need n >= 2");
  Dataset out = ds;
  for (int k = 0; k < ds.d(); ++k) {
    const double sd = sample_sd(ds.X.col(k));
    if (sd <= 0.0)
      throw std::invalid_argument("normalize: zero-variance input column " +
                                  ds.input_labels[k]);
    out.X.col(k) /= sd;
    out.input_scale[k] = ds.input_scale[k] * sd;
  }
  const double sd_y = sample_sd(ds.y);
  if (sd_y <= 0.0) throw std::invalid_argument("normalize: zero-variance output");
  out.y /= sd_y;
  out.output_scale = ds.output_scale * sd_y;
  return out;
}

Dataset aggregate_firms(const Dataset& ds) {
  if (ds.firm_ids.empty())
    throw std::invalid_argument("aggregate_firms: dataset has no firm ids");
  std::map<std::pair<std::string, int>, int> slots;
  std::vector<Eigen::VectorXd> sums;
  std::vector<double> ysums;
  std::vector<std::pair<std::string, int>> keys;
  for (int i = 0; i < ds.n(); ++i) {
    const int period = ds.periods.empty() ? 0 : ds.periods[i];
    const std::pair<std::string, int> key{ds.firm_ids[i], period};
    auto it = slots.find(key);
    if (it == slots.end()) {
      slots.emplace(key, static_cast<int>(sums.size()));
      sums.push_back(ds.X.row(i));
      ysums.push_back(ds.y[i]);
      keys.push_back(key);
    } else {
      sums[it->second] += ds.X.row(i);
      ysums[it->second] += ds.y[i];
    }
  }
  Eigen::MatrixXd X(static_cast<int>(sums.size()), ds.d());
  Eigen::VectorXd y(static_cast<int>(sums.size()));
  for (int i = 0; i < static_cast<int>(sums.size()); ++i) {
    X.row(i) = sums[i];
    y[i] = ysums[i];
  }
  Dataset out = make_dataset(std::move(X), std::move(y), ds.input_labels);
  out.output_label = ds.output_label;
  out.input_scale = ds.input_scale;
  out.output_scale = ds.output_scale;
  for (const auto& [firm, period] : keys) {
    out.firm_ids.push_back(firm);
    if (!ds.periods.empty()) out.periods.push_back(period);
  }
  return out;
}

double percentile(Eigen::VectorXd values, double p) {
  const int n = static_cast<int>(values.size());
  if (n == 0) throw std::invalid_argument("percentile: empty sample");
  std::sort(values.data(), values.data() + n);
  if (n == 1) return values[0];
  const double h = (n - 1) * p / 100.0;
  const int lo = std::clamp(static_cast<int>(std::floor(h)), 0, n - 1);
  const int hi = std::min(lo + 1, n - 1);
  const double frac = h - lo;
  return values[lo] + frac * (values[hi] - values[lo]);
}

namespace {

VariableStats stats_for(const std::string& label, const Eigen::VectorXd& v) {
  VariableStats s;
  s.label = label;
  const int n = static_cast<int>(v.size());
  s.mean = v.mean();
  const double m2 = (v.array() - s.mean).square().sum() / n;
  const double m3 = (v.array() - s.mean).cube().sum() / n;
  if (n > 2 && m2 > 0.0) {
    const double g1 = m3 / std::pow(m2, 1.5);
    s.skewness = g1 * std::sqrt(static_cast<double>(n) * (n - 1)) / (n - 2);
  }
  s.p10 = percentile(v, 10);
  s.p25 = percentile(v, 25);
  s.p50 = percentile(v, 50);
  s.p75 = percentile(v, 75);
  s.p90 = percentile(v, 90);
  return s;
}

}  // namespace

std::vector<VariableStats> summary_stats(const Dataset& ds) {
  if (ds.n() < 2) throw std::invalid_argument("summary_stats: need n >= 2");
  std::vector<VariableStats> out;
  for (int k = 0; k < ds.d(); ++k)
    out.push_back(stats_for(ds.input_labels[k], ds.X.col(k)));
  out.push_back(stats_for(ds.output_label, ds.y));
  return out;
}

}  // namespace prodest::data
