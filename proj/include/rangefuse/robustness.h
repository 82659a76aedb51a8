#pragma once

// Camera dropout, calibration drift and domain-shift evaluations.

#include <Eigen/Core>
#include <json.hpp>

#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rangefuse/degradations.h"
#include "rangefuse/panoptic.h"
#include "rangefuse/pipeline.h"

namespace rangefuse {

/// Right-multiplies the rotation by a rotation of `theta_deg` about an axis
/// drawn uniformly from the sphere. Translation is unchanged. Throws
/// ParameterError on a negative angle.
Eigen::Matrix4d perturb_extrinsics(const Eigen::Matrix4d& extrinsics, double theta_deg, std::mt19937_64& rng);

/// Mean RV pixel distance between the cells two maps assign to the same
/// camera pixel, over pixels mapped by both. Columns wrap around.
double mean_rv_displacement(const CamToRvMap& a, const CamToRvMap& b);

struct ConditionResult {
  std::string name;        // clean, dropout, drift, domain
  double parameter = 0.0;  // drift angle in degrees
  MetricReport report;
  double delta_pq = 0.0;  // PQ - PQ(clean)
  double mean_uncertainty = 0.0;
  double displacement = 0.0;  // drift only

  /// File stem, e.g. "drift_2.5".
  std::string label() const;
};

struct RobustnessReport {
  std::string kind;
  std::vector<ConditionResult> conditions;  // first entry is the clean run
  nlohmann::json metadata = nlohmann::json::object();
};

struct DropoutOptions {
  bool force_full_uncertainty = false;
};

/// Camera images replaced by zeros.
RobustnessReport run_dropout_eval(const Pipeline& pipeline, const std::vector<Frame>& frames,
                                  const DropoutOptions& options = {});

/// `angles` must be sorted ascending and start at 0. Each camera gets its own
/// seeded axis, shared across angles.
RobustnessReport run_drift_eval(const Pipeline& pipeline, const std::vector<Frame>& frames,
                                const std::vector<double>& angles);

/// Camera m of each frame is histogram-matched to pool image m mod |pool|.
/// Throws ParameterError on an empty pool.
RobustnessReport run_domain_shift_eval(const Pipeline& pipeline, const std::vector<Frame>& frames,
                                       const ReferencePool& pool);

/// Evaluates one condition over all frames.
ConditionResult evaluate_condition(const Pipeline& pipeline, const std::vector<Frame>& frames, const std::string& name,
                                   const std::function<FrameResult(const Frame&)>& run);

nlohmann::json robustness_json(const RobustnessReport& report);

/// report.json, one <label>_classes.csv per condition and, for drift,
/// drift_curve.csv.
void write_robustness_report(const std::filesystem::path& dir, const RobustnessReport& report,
                             const ClassSplit& split);

/// Writes `value` with round-trip precision.
std::string format_double(double value);

}  // namespace rangefuse
