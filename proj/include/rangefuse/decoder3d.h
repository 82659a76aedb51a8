#pragma once

// 3D-aware mask head, class head, point sampling, matching and set loss.

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "rangefuse/common.h"
#include "rangefuse/feature_map.h"
#include "rangefuse/geometry_rv.h"
#include "rangefuse/hungarian.h"
#include "rangefuse/labels.h"
#include "rangefuse/point_cloud.h"

namespace rangefuse {

inline constexpr int kDefaultNeighbors = 5;
inline constexpr int kMaskStride = 4;
inline constexpr int kMaskChannels = 256;
inline constexpr int kDefaultQueries = 300;

/// The `k` pixels of the k x k window around `px` whose range is closest to
/// `r_true`, ascending by |dr| with row-major window order breaking ties.
/// Invalid pixels are never chosen; when fewer than k valid pixels exist the
/// chosen ones repeat cyclically, and with none at all `px` itself fills
/// every slot.
std::vector<PixelCoord> select_3d_neighbors(const RangeImage& rv, PixelCoord px, double r_true,
                                            int k = kDefaultNeighbors);

/// K*D -> 2D (rectifier) -> D.
struct NeighborMlp {
  RowMatrixXd w1;  // K*D x 2D
  Eigen::RowVectorXd b1;
  RowMatrixXd w2;  // 2D x D
  Eigen::RowVectorXd b2;

  int neighbors() const { return int(w1.rows() / w2.cols()); }
  int channels() const { return int(w2.cols()); }
};

NeighborMlp init_neighbor_mlp(int k, int channels, std::uint64_t seed);

/// Concatenates the mask features under each neighbor (full-resolution
/// coordinates floor-divided by the map stride) and applies the MLP.
Eigen::RowVectorXd aggregate_point_feature(const FeatureMap& mask_features, std::span<const PixelCoord> neighbors,
                                           const NeighborMlp& mlp);

/// D x |indices| point features; out-of-view points aggregate a zero input.
/// Empty `indices` means every point.
Eigen::MatrixXd point_features(const FeatureMap& mask_features, const RangeImage& rv, const RvMapping& mapping,
                               const PointCloud& cloud, const NeighborMlp& mlp,
                               std::span<const int> indices = {});

struct ClassHead {
  RowMatrixXd weight;  // D x (classes + 1)
  Eigen::RowVectorXd bias;
};

Eigen::MatrixXd class_logits(const Eigen::MatrixXd& queries, const ClassHead& head);

/// D -> D -> D -> D, rectifiers after the first two layers.
struct MaskEmbedMlp {
  RowMatrixXd w1, w2, w3;
  Eigen::RowVectorXd b1, b2, b3;
};

MaskEmbedMlp init_mask_embed(int channels, std::uint64_t seed);
Eigen::MatrixXd mask_embed(const Eigen::MatrixXd& queries, const MaskEmbedMlp& mlp);

/// E_mask * F_point (N_q x N).
Eigen::MatrixXd mask_logits(const Eigen::MatrixXd& embeddings, const Eigen::MatrixXd& point_features);
/// Logits against every mask-map cell (N_q x cells).
Eigen::MatrixXd mask_logits_2d(const Eigen::MatrixXd& embeddings, const FeatureMap& mask_features);

/// ceil(ratio * count) columns with the smallest min-over-queries |logit|
/// (lower index on ties), then the rest uniformly without replacement.
/// Throws ParameterError when count exceeds the number of columns or the
/// ratio is outside [0, 1].
std::vector<int> sample_points(const Eigen::MatrixXd& mask_logits, int count, double importance_ratio,
                               std::mt19937_64& rng);

struct LossWeights {
  double cls = 1.0;
  double mask = 1.0;
  double dice = 1.0;

  static LossWeights nuscenes() { return {5.0, 100.0, 5.0}; }
  static LossWeights waymo() { return {2.0, 50.0, 5.0}; }
  static LossWeights semantic_kitti() { return waymo(); }
};

struct GtSegment {
  int class_id = 0;
  std::uint16_t instance_id = 0;
  std::vector<int> points;
};

/// Stuff classes form one segment each; thing classes one per nonzero
/// instance. Void points and thing points without an instance are skipped.
struct GroundTruth {
  std::vector<GtSegment> segments;
  std::vector<int> segment_of_point;  // -1 when unassigned
};

GroundTruth extract_segments(std::span<const std::uint32_t> labels, const ClassSplit& split);

/// Row-wise softmax.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

/// Numerically stable binary cross-entropy of one logit.
double bce_with_logit(double logit, double target);

/// N_gt x N_q costs. `columns` maps mask-logit columns to point indices;
/// empty means the identity.
Eigen::MatrixXd match_costs(const Eigen::MatrixXd& class_logits, const Eigen::MatrixXd& mask_logits,
                            const GroundTruth& gt, const ClassSplit& split, const LossWeights& weights,
                            std::span<const int> columns = {});

struct LossBreakdown {
  double cls = 0.0;
  double mask = 0.0;
  double dice = 0.0;
  double total = 0.0;
};

LossBreakdown panoptic_loss(const Eigen::MatrixXd& class_logits, const Eigen::MatrixXd& mask_logits,
                            const GroundTruth& gt, const MatchResult& match, const ClassSplit& split,
                            const LossWeights& weights, std::span<const int> columns = {});

struct PanopticPrediction {
  Eigen::MatrixXd class_logits;  // N_q x (classes + 1)
  Eigen::MatrixXd mask_logits;   // N_q x N
};

struct DecoderHeads {
  NeighborMlp neighbor;
  MaskEmbedMlp mask_embed;
  ClassHead class_head;
};

PanopticPrediction decode(const DecoderHeads& heads, const Eigen::MatrixXd& queries, const FeatureMap& mask_features,
                          const RangeImage& rv, const RvMapping& mapping, const PointCloud& cloud);

}  // namespace rangefuse
