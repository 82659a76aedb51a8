#pragma once

// Per-pixel aleatoric uncertainty of camera features, learned as feature
// instability under degradations.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "rangefuse/common.h"
#include "rangefuse/errors.h"
#include "rangefuse/feature_map.h"

namespace rangefuse {

/// D -> 2D -> 2D -> 1 perceptron with rectifiers after the first two layers.
template <typename Scalar>
struct MlpParamsT {
  RowMatrix<Scalar> w1;  // D x 2D
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> b1;
  RowMatrix<Scalar> w2;  // 2D x 2D
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> b2;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> w3;  // 2D
  Scalar b3 = Scalar(0);

  MlpParamsT() = default;
  explicit MlpParamsT(int input_dim)
      : w1(RowMatrix<Scalar>::Zero(input_dim, 2 * input_dim)),
        b1(Eigen::Matrix<Scalar, 1, Eigen::Dynamic>::Zero(2 * input_dim)),
        w2(RowMatrix<Scalar>::Zero(2 * input_dim, 2 * input_dim)),
        b2(Eigen::Matrix<Scalar, 1, Eigen::Dynamic>::Zero(2 * input_dim)),
        w3(Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(2 * input_dim)) {}

  int input_dim() const { return int(w1.rows()); }
  Eigen::Index parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + 1; }

  bool all_finite() const {
    return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite() && w3.allFinite() &&
           std::isfinite(b3);
  }
};

using MlpParams = MlpParamsT<double>;

/// Throws ShapeError unless the layer shapes chain for input width D.
void check_shapes(const MlpParams& params);

/// Xavier-uniform weights, zero biases.
MlpParams init_mlp(int input_dim, std::uint64_t seed);

/// One output per row of `x` (N x D).
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mlp_forward(const MlpParamsT<Scalar>& p,
                                                     const Eigen::MatrixBase<Derived>& x) {
  if (x.cols() != p.w1.rows()) throw ShapeError("feature width does not match the uncertainty head");
  const RowMatrix<Scalar> h1 = ((x * p.w1).rowwise() + p.b1).cwiseMax(Scalar(0));
  const RowMatrix<Scalar> h2 = ((h1 * p.w2).rowwise() + p.b2).cwiseMax(Scalar(0));
  return (h2 * p.w3).array() + p.b3;
}

/// d_pred per pixel of a feature map.
ScalarField mlp_forward(const MlpParams& params, const FeatureMap& features);

/// Per-pixel L2 distance between clean and corrupted features.
ScalarField instability_target(const FeatureMap& original, const FeatureMap& augmented);

inline constexpr double kHuberDelta = 1.0;

double huber(double residual, double delta = kHuberDelta);
/// d huber / d residual.
double huber_derivative(double residual, double delta = kHuberDelta);

/// 1 - exp(-max(d, 0)).
double uncertainty_score(double d);
ScalarField uncertainty_score(const ScalarField& d_pred);

/// Training samples: one feature row and target instability per row.
struct InstabilityBatch {
  RowMatrixXd features;  // N x D
  Eigen::VectorXd target;

  Eigen::Index size() const { return features.rows(); }
};

/// Rows of the covered cells only.
InstabilityBatch make_batch(const FeatureMap& augmented, const ScalarField& target,
                            const std::optional<PixelMask>& covered = std::nullopt);
InstabilityBatch concat(std::span<const InstabilityBatch> batches);

/// Mean Huber loss over the batch.
double mean_huber_loss(const MlpParams& params, const InstabilityBatch& batch, double delta = kHuberDelta);

struct LossGradient {
  double loss = 0.0;
  MlpParams gradient;
};

/// Analytic gradient of the mean Huber loss.
LossGradient loss_and_gradient(const MlpParams& params, const InstabilityBatch& batch,
                               double delta = kHuberDelta);

/// w1, b1, w2, b2, w3, b3 in row-major order.
Eigen::VectorXd flatten(const MlpParams& params);
MlpParams unflatten(const Eigen::VectorXd& flat, int input_dim);

/// Decoupled-weight-decay adaptive moments.
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8, double weight_decay = 1e-2)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  void step(MlpParams& params, const MlpParams& gradient, double lr);

 private:
  double beta1_;
  double beta2_;
  double eps_;
  double weight_decay_;
  long steps_ = 0;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
};

/// One update. Returns the loss before the update. Plain gradient descent
/// unless `adamw` is given. Throws TrainingDivergedError on non-finite loss or
/// gradient, ParameterError on a non-positive rate or empty batch.
double train_step(MlpParams& params, const InstabilityBatch& batch, double lr, AdamW* adamw = nullptr,
                  double delta = kHuberDelta);

/// Independent heads keyed by stride.
struct UncertaintyHead {
  std::map<int, MlpParams> scales;

  static UncertaintyHead create(std::span<const std::pair<int, int>> stride_channels, std::uint64_t seed);

  const MlpParams& at(int stride) const;
  ScalarField predict(const FeatureMap& features) const;
  ScalarField score(const FeatureMap& features) const { return uncertainty_score(predict(features)); }
};

/// Steps every scale present in `batches` and returns the summed pre-update
/// loss.
double train_step(UncertaintyHead& head, const std::map<int, InstabilityBatch>& batches, double lr,
                  std::map<int, AdamW>* adamw = nullptr);

/// One tensor file per matrix plus manifest.json.
void save_checkpoint(const std::filesystem::path& dir, const UncertaintyHead& head);
UncertaintyHead load_checkpoint(const std::filesystem::path& dir);

/// Rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

/// Feature rows f + n with f ~ N(0, base_std^2) and n ~ N(0, sigma^2) per
/// severity; target = |n|. `samples_per_level` rows per severity.
InstabilityBatch synthetic_instability_batch(int dim, std::span<const double> severities,
                                             int samples_per_level, std::uint64_t seed,
                                             double base_std = 0.25);

/// Default noise levels of the synthetic task.
std::vector<double> synthetic_severities();

inline constexpr double kDefaultLearningRate = 0.05;

}  // namespace rangefuse
