#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "prodest/dataset.hpp"
#include "prodest/geometry.hpp"
#include "prodest/isoquants.hpp"
#include "prodest/sshape.hpp"

#include "json.hpp"

namespace prodest::pipeline {

enum class Placement { EvenGrid, PercentileGrid, KMeansCentroids };
enum class IsoquantMethod { Cnls, Dcnls, Adcnls };

struct InitConfig {
  int levels = 5;  // I
  int rays = 5;    // R
  Placement placement = Placement::PercentileGrid;
  double omega1 = 0.20;
  double delta_omega = 0.25;
  int iterations = 20;
  double gap_tolerance = 0.01;    // delta
  int violation_limit = 10;       // consecutive iterations before deletion
  double weight_sshape = 0.1;     // w_S
  double weight_isoquant = 0.9;   // w_I
  IsoquantMethod isoquant_method = IsoquantMethod::Adcnls;
  int directions = 10;            // M for the averaging estimator
  int grid_points = 30;           // evaluation points per ray
  bool use_pilot = true;          // pilot responses in the ray fits
  double trim = 0.2;              // homothetic pooling trim fraction
  std::uint64_t seed = 1;         // k-means restarts
  int threads = 1;

  void check() const;
};

struct Provenance {
  std::string estimator;
  double omega = 0.0;
  int iteration = 0;
  double mse = 0.0;
  double max_rel_gap = 0.0;
  bool within_tolerance = true;
};

//! Rays with fitted curves plus level isoquants; evaluable anywhere in the
//! positive orthant through predict(). Immutable once returned.
struct ProductionModel {
  std::vector<geometry::Ray> rays;
  std::vector<sshape::SShapeCurve> curves;
  Eigen::VectorXd levels;
  std::vector<isoquants::IsoquantEstimate> isoquant_estimates;
  bool homothetic = false;
  std::optional<isoquants::IsoquantEstimate> unit_isoquant;  // homothetic only
  Provenance provenance;
};

//! Level and ray initialization from the pilot values and the data geometry.
std::pair<Eigen::VectorXd, std::vector<geometry::Ray>> initialize(
    const data::Dataset& ds, const InitConfig& cfg,
    const Eigen::VectorXd& pilot_values);

struct KMeansResult {
  int k = 0;
  Eigen::MatrixXd centroids;
  std::vector<int> labels;
  double bic = 0.0;
};

//! Best K over k_range by BIC under a spherical Gaussian score; 10 seeded
//! restarts per K.
KMeansResult kmeans_bic(const Eigen::MatrixXd& points,
                        const std::vector<int>& k_range, std::uint64_t seed);

//! Single pass: isoquants at assigned levels, projection, one ray fit per
//! angle-bandwidth grid value, minimum-MSE pick.
ProductionModel run_basic(const data::Dataset& ds, const InitConfig& cfg);

//! Iterative estimation: alternate ray fits, isoquant re-estimation and gap
//! minimization over an increasing angle bandwidth, with deletion rules, and
//! return the minimum-MSE iterate among those within the gap tolerance.
ProductionModel run_iterative(const data::Dataset& ds, const InitConfig& cfg);

//! Homothetic variant: pooled isoquant, projection to the unit ray, single
//! curve; gaps vanish by construction.
ProductionModel run_homothetic(const data::Dataset& ds, const InitConfig& cfg);

double predict(const ProductionModel& model, const Eigen::VectorXd& x);

//! Pilot values used by the pipelines (local linear with the rule-of-thumb
//! bandwidth, adaptive at rank-deficient points).
Eigen::VectorXd pilot_values(const data::Dataset& ds);

nlohmann::json to_json(const ProductionModel& model);
ProductionModel model_from_json(const nlohmann::json& j);

}  // namespace prodest::pipeline
