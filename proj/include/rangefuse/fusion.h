#pragma once

// Uncertainty-modulated deformable attention from LiDAR queries into
// RV-aligned camera features.

#include <Eigen/Core>

#include <filesystem>
#include <map>
#include <optional>

#include "rangefuse/common.h"
#include "rangefuse/feature_map.h"

namespace rangefuse {

inline constexpr int kAttentionLevels = 1;
inline constexpr int kSamplingPoints = 4;

/// Projections of one scale. Offsets are interleaved (du_0, dv_0, du_1, ...),
/// with u along columns and v along rows, in cells.
template <typename Scalar>
struct DeformableParamsT {
  RowMatrix<Scalar> offset_weight;  // D x 2P
  Eigen::Matrix<Scalar, 1, 2 * kSamplingPoints> offset_bias;
  RowMatrix<Scalar> attention_weight;  // D x P
  Eigen::Matrix<Scalar, 1, kSamplingPoints> attention_bias;
  RowMatrix<Scalar> value_weight;  // D x D, applied as x * W, no bias

  int channels() const { return int(value_weight.rows()); }
};

using DeformableParams = DeformableParamsT<double>;

/// Zero offset and attention projections, unit star offset bias
/// ((1,0), (0,1), (-1,0), (0,-1)), zero attention bias, identity values.
DeformableParams init_deformable(int channels);

/// Throws ShapeError unless every projection matches `channels`.
void check_shapes(const DeformableParams& params, int channels);

/// (1 - U) * F_C, U broadcast over channels.
FeatureMap modulate(const FeatureMap& camera, const ScalarField& uncertainty);

/// Bilinear interpolation with cell centers at integer (u, v). Corners off
/// the grid or not covered contribute zero.
Eigen::RowVectorXd bilinear_sample(const FeatureMap& features, double u, double v,
                                   const PixelMask* coverage = nullptr);

/// Softmax over the P logits.
Eigen::Matrix<double, 1, kSamplingPoints> attention_weights(
    const Eigen::Matrix<double, 1, kSamplingPoints>& logits);

/// Offsets (P x 2, columns du, dv) for one query feature.
Eigen::Matrix<double, kSamplingPoints, 2> sampling_offsets(const DeformableParams& params,
                                                           const Eigen::RowVectorXd& query);

/// F_A. Offsets and weights depend on F_L only.
FeatureMap deformable_attend(const FeatureMap& lidar, const FeatureMap& camera_modulated,
                             const DeformableParams& params, const PixelMask* coverage = nullptr);

/// F_L + F_A.
FeatureMap fuse(const FeatureMap& lidar, const FeatureMap& attended);

/// modulate -> attend -> fuse for one scale.
FeatureMap fuse_scale(const FeatureMap& lidar, const FeatureMap& camera, const ScalarField& uncertainty,
                      const DeformableParams& params, const PixelMask* coverage = nullptr);

struct FusionParams {
  std::map<int, DeformableParams> scales;

  const DeformableParams& at(int stride) const;
};

void save_fusion_params(const std::filesystem::path& dir, const FusionParams& params);
FusionParams load_fusion_params(const std::filesystem::path& dir);

}  // namespace rangefuse
