#pragma once

// Panoptic inference from query logits and PQ-family evaluation.

#include <Eigen/Core>
#include <json.hpp>

#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "rangefuse/labels.h"

namespace rangefuse {

inline constexpr double kDefaultConfidenceThreshold = 0.25;

struct InferenceConfig {
  double confidence_threshold = kDefaultConfidenceThreshold;
  int min_points = 0;
};

/// Each query takes its arg-max class over the full softmax (no-object
/// included). Queries predicting no-object or below the threshold are dropped.
/// Every point goes to the kept query maximizing confidence * sigmoid(mask
/// logit); lower query index wins ties, and points see void when no query is
/// kept. Stuff queries of one class merge; thing queries get distinct
/// instance ids; thing segments under min_points become void.
PanopticLabels panoptic_inference(const Eigen::MatrixXd& class_logits, const Eigen::MatrixXd& mask_logits,
                                  const ClassSplit& split, const InferenceConfig& config = {});

/// Thing instances with fewer than `threshold` points become void.
PanopticLabels min_points_filter(std::span<const std::uint32_t> labels, int threshold, const ClassSplit& split);

struct ClassStats {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  double iou_sum = 0.0;
  /// Semantic overlap of stuff classes, for PQ-dagger.
  double stuff_intersection = 0.0;
  double stuff_union = 0.0;

  bool present() const { return tp + fp + fn > 0; }
  double pq() const;
  double sq() const;
  double rq() const;
  double semantic_iou() const { return stuff_union > 0.0 ? stuff_intersection / stuff_union : 0.0; }
};

struct ClassMetrics {
  int class_id = 0;
  bool thing = false;
  ClassStats stats;
  double pq = 0.0;
  double sq = 0.0;
  double rq = 0.0;
  double pq_dagger = 0.0;
};

/// Aggregates are unweighted means over classes with TP + FP + FN > 0.
struct MetricReport {
  std::vector<ClassMetrics> classes;
  double pq = 0.0;
  double sq = 0.0;
  double rq = 0.0;
  double pq_dagger = 0.0;
  double pq_things = 0.0;
  double pq_stuff = 0.0;
  int frames = 0;

  const ClassMetrics* find(int class_id) const;
};

/// Per-class TP/FP/FN/IoU sums; merging frames is summation.
class PqAccumulator {
 public:
  explicit PqAccumulator(ClassSplit split) : split_(std::move(split)) {}

  /// Throws ShapeError on length mismatch.
  void add(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> gt);
  void merge(const PqAccumulator& other);

  const std::map<int, ClassStats>& stats() const { return stats_; }
  MetricReport report() const;

 private:
  ClassSplit split_;
  std::map<int, ClassStats> stats_;
  int frames_ = 0;
};

MetricReport pq_metrics(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> gt, const ClassSplit& split);

inline constexpr int kReportSchemaVersion = 1;

/// One row per class: class_id,name,kind,pq,sq,rq,pq_dagger,tp,fp,fn,iou_sum,
/// numbers in shortest round-trip form.
void write_class_csv(const std::filesystem::path& path, const MetricReport& report, const ClassSplit& split);
nlohmann::json report_json(const MetricReport& report);

}  // namespace rangefuse
