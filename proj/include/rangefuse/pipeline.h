#pragma once

// Desk-scale end-to-end pipeline: hand-built encoders and heads around the
// view transform, uncertainty, fusion and decoder modules.

#include <Eigen/Core>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rangefuse/decoder3d.h"
#include "rangefuse/fusion.h"
#include "rangefuse/geometry_rv.h"
#include "rangefuse/image.h"
#include "rangefuse/labels.h"
#include "rangefuse/panoptic.h"
#include "rangefuse/synthetic_scene.h"
#include "rangefuse/uncertainty.h"
#include "rangefuse/view_transform.h"

namespace rangefuse {

/// Channel layout of the desk-scale features.
namespace channel {
inline constexpr int kObject = 0;
inline constexpr int kGround = 1;
inline constexpr int kX = 2;
inline constexpr int kY = 3;
inline constexpr int kRadiusSq = 4;
inline constexpr int kOne = 5;
inline constexpr int kRed = 6;
inline constexpr int kGreen = 7;
inline constexpr int kBlue = 8;
inline constexpr int kGray = 9;
inline constexpr int kRoadTag = 10;
inline constexpr int kTerrainTag = 11;
inline constexpr int kCount = 12;
}  // namespace channel

/// Metric coordinates are divided by this before entering features.
inline constexpr double kCoordinateScale = 10.0;
/// Points above this height are object points.
inline constexpr double kObjectHeight = synthetic::kGroundZ + 0.2;

struct PipelineConfig {
  std::string fov_preset = "nuscenes";
  int rv_height = 64;
  int rv_width = 1024;
  std::string camera_rig;  // calibration JSON; empty uses the synthetic rig
  std::vector<int> scales = {4};
  LossWeights loss_weights = LossWeights::nuscenes();
  double uncertainty_weight = 1.0;
  int sampled_points = 12544;
  int min_points = 15;
  std::uint64_t scene_seed = 1;
  std::uint64_t train_seed = 7;
  std::uint64_t drift_seed = 11;
  int frames = 2;
  int train_steps = 300;
  int augmentations_per_image = 6;
  double learning_rate = kDefaultLearningRate;
  double confidence_threshold = kDefaultConfidenceThreshold;
  std::string uncertainty_checkpoint;  // optional directory
  std::string fusion_checkpoint;       // optional directory
  bool uninformative_camera = false;

  /// Throws ConfigurationError on non-positive dims, unknown presets or
  /// referenced paths that do not exist.
  void validate() const;
  FovConfig fov() const;
  int stride() const { return scales.front(); }
};

nlohmann::json config_to_json(const PipelineConfig& config);
PipelineConfig config_from_json(const nlohmann::json& doc);
PipelineConfig load_config(const std::filesystem::path& path);

/// Stride-1 features: geometry of the nearest point per valid pixel, camera
/// channels zero, invalid pixels all zero.
FeatureMap encode_lidar(const RangeImage& rv, const RvMapping& mapping, const PointCloud& cloud);

/// Averages `features` over the occupied pixels (kOne > 0) of each cell.
FeatureMap pool_features(const FeatureMap& features, int stride);

/// Chroma (channel minus the larger other channel, floored at zero) and
/// gray (channel minimum) per pixel in unit range, averaged per cell.
FeatureMap encode_camera(const Image& image, int stride);

/// Range-connected object points in the RV grid.
struct ObjectCluster {
  std::vector<int> points;
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();  // meters
  double radius = 0.0;                                 // meters, max point distance
  std::vector<PixelCoord> cells;                       // stride-s cells touched
};

inline constexpr double kClusterRangeGap = 0.8;
inline constexpr int kClusterMinPoints = 15;

/// 8-connected union of object pixels whose ranges differ by less than
/// kClusterRangeGap; clusters under kClusterMinPoints are dropped.
std::vector<ObjectCluster> cluster_objects(const RangeImage& rv, const RvMapping& mapping, const PointCloud& cloud,
                                           int stride);

inline constexpr double kStuffGain = 20.0;
inline constexpr double kObjectGain = 20.0;
inline constexpr double kDistanceGain = 100.0;  // per scaled unit squared, i.e. 1 per square meter
inline constexpr double kRadiusMargin = 0.5;    // meters

/// Two stuff queries (road, terrain) followed by one query per cluster.
/// Thing query camera channels average the fused features over the cluster
/// cells.
Eigen::MatrixXd build_queries(const std::vector<ObjectCluster>& clusters, const FeatureMap& fused);

/// Hand-set heads: neighbor averaging, mask embedding that keeps geometry
/// channels and drops camera channels, and a class head reading stuff tags,
/// object evidence and color.
DecoderHeads make_heads(const ClassSplit& split, int neighbors = kDefaultNeighbors);

struct Frame {
  PointCloud cloud;
  PanopticLabels labels;
  std::vector<CameraModel> cameras;
  std::vector<Image> images;
};

Frame frame_from_scene(const synthetic::Scene& scene);

/// Per-run switches applied on top of the configuration.
struct RunOptions {
  bool force_full_uncertainty = false;  // U = 1 everywhere
  bool uninformative_camera = false;    // camera features forced to zero
};

struct FrameResult {
  FeatureMap lidar;  // stride s
  FeatureMap camera;  // warped, stride s
  PixelMask covered;
  ScalarField uncertainty;
  FeatureMap fused;
  PanopticPrediction prediction;
  PanopticLabels labels;
  double mean_uncertainty = 0.0;  // over covered cells
};

class Pipeline {
 public:
  Pipeline(PipelineConfig config, ClassSplit split, UncertaintyHead head, FusionParams fusion);

  const PipelineConfig& config() const { return config_; }
  const ClassSplit& split() const { return split_; }
  const UncertaintyHead& uncertainty_head() const { return head_; }

  /// Runs one frame. `images` replace the frame's own images when given; the
  /// view map must belong to the frame's calibration (or a perturbed one).
  FrameResult run(const Frame& frame, const CamToRvMap& view_map, const std::vector<Image>& images,
                  const RunOptions& options = {}) const;
  FrameResult run(const Frame& frame, const RunOptions& options = {}) const;

  CamToRvMap view_map(const Frame& frame) const;

 private:
  PipelineConfig config_;
  ClassSplit split_;
  UncertaintyHead head_;
  FusionParams fusion_;
  DecoderHeads heads_;
};

/// Instability training data from degraded copies of every camera image.
InstabilityBatch uncertainty_training_batch(const std::vector<Frame>& frames, int stride, int augmentations,
                                            std::uint64_t seed);

struct TrainingLog {
  std::vector<double> losses;
};

/// Trains a fresh head with plain gradient descent.
UncertaintyHead train_uncertainty_head(const InstabilityBatch& batch, int stride, int steps, double lr,
                                       std::uint64_t seed, TrainingLog* log = nullptr);

/// Synthetic frames for seeds scene_seed, scene_seed + 1, ...
std::vector<Frame> synthetic_frames(const PipelineConfig& config);

/// Loads checkpoints when configured, otherwise trains the head on `frames`
/// and uses the default fusion parameters.
Pipeline build_pipeline(const PipelineConfig& config, const std::vector<Frame>& frames);

/// Ground truth after the split's min-point filter.
PanopticLabels evaluation_labels(const Frame& frame, const ClassSplit& split);

}  // namespace rangefuse
