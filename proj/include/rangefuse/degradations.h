#pragma once

// Non-spatial camera corruptions used to synthesize unreliable inputs.

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rangefuse/common.h"
#include "rangefuse/image.h"

namespace rangefuse {

enum class DegradationKind {
  kBrightness,
  kContrast,
  kSaturation,
  kHue,
  kGamma,
  kColorJitter,
  kGaussianNoise,
  kPoissonNoise,
  kSpeckleNoise,
  kJpeg,
  kGaussianBlur,
  kMotionBlur,
  kExposure,
  kIsoNoise,
  kFog,
  kRain,
  kShadows,
  kColorTemperature,
  kVignette,
  kWhiteBalance,
  kHistogramMatch,
  kDropout,
  kBloom,
};

inline constexpr int kDegradationKindCount = 23;

std::string_view kind_name(DegradationKind kind);
/// Throws ParameterError for unknown names.
DegradationKind kind_from_name(std::string_view name);
std::span<const DegradationKind> all_kinds();

/// Closed sampling interval of one parameter. `integral` parameters are drawn
/// as integers; `choices` (when non-empty) replaces the interval.
struct ParamRange {
  std::string_view name;
  double lo = 0.0;
  double hi = 0.0;
  bool integral = false;
  std::vector<double> choices;

  ParamRange(std::string_view n, double l, double h, bool is_integral = false,
             std::vector<double> options = {})
      : name(n), lo(l), hi(h), integral(is_integral), choices(std::move(options)) {}
};

/// Parameter ranges of a kind. The first entry is the severity parameter.
const std::vector<ParamRange>& param_ranges(DegradationKind kind);

using DegradationParams = std::map<std::string, double>;

struct DegradationSpec {
  DegradationKind kind = DegradationKind::kBrightness;
  DegradationParams params;
  std::uint64_t seed = 0;
  /// Histogram matching target and its pool name.
  std::optional<Image> reference;
  std::string reference_name;

  double param(const std::string& name) const;
};

/// Throws ParameterError when a parameter is missing, unknown or outside its
/// range, or when histogram matching lacks a usable reference.
void validate(const DegradationSpec& spec);

/// Named histogram-matching targets.
struct ReferencePool {
  std::vector<std::string> names;
  std::vector<Image> images;

  bool empty() const { return images.empty(); }
  const Image& get(std::string_view name) const;
};

/// Three generated stand-ins: "dark", "urban", "colorful".
const ReferencePool& builtin_reference_pool();
/// Every .ppm under `dir`, named by file stem, sorted by name.
ReferencePool load_reference_pool(const std::filesystem::path& dir);

/// Parameters drawn uniformly from the kind's ranges.
DegradationParams sample_params(DegradationKind kind, std::mt19937_64& rng);

/// With probability 0.5 returns nullopt; otherwise a uniformly chosen kind
/// with sampled parameters and seed.
std::optional<DegradationSpec> sample_spec(std::mt19937_64& rng,
                                           const ReferencePool& pool = builtin_reference_pool());

/// Midpoint of every range; used to fill parameters not set explicitly.
DegradationParams default_params(DegradationKind kind);

Image apply(const Image& image, const DegradationSpec& spec);

/// One output per parameter set, all with the same seed and reference.
std::vector<Image> severity_sweep(const Image& image, DegradationKind kind,
                                  std::span<const DegradationParams> levels, std::uint64_t seed,
                                  const std::optional<Image>& reference = std::nullopt);
/// Sweeps the severity parameter; other parameters take their defaults.
std::vector<Image> severity_sweep(const Image& image, DegradationKind kind,
                                  std::span<const double> levels, std::uint64_t seed,
                                  const std::optional<Image>& reference = std::nullopt);

/// Per-channel rank-based histogram specification. Ties are ordered by a
/// hash of (seed, pixel index).
Image histogram_match(const Image& image, const Image& reference, std::uint64_t seed = 0);

/// Sidecar document: kind, params, seed and reference name.
nlohmann::json spec_to_json(const DegradationSpec& spec);
DegradationSpec spec_from_json(const nlohmann::json& doc, const ReferencePool& pool = builtin_reference_pool());

namespace kernels {

/// OpenCV's default sigma for a Gaussian of the given odd size.
double gaussian_sigma_for_size(int ksize);
Eigen::ArrayXXd gaussian_kernel(int ksize, double sigma);
/// Normalized line of `length` taps through the center at `angle_deg`.
Eigen::ArrayXXd motion_kernel(int length, double angle_deg);
/// 2D correlation with reflect-101 borders, applied per channel.
Image filter2d(const Image& image, const Eigen::ArrayXXd& kernel);
/// IJG-scaled luminance (chroma = false) or chrominance quantization table.
Eigen::Matrix<double, 8, 8> jpeg_quant_table(int quality, bool chroma);
Image jpeg_roundtrip(const Image& image, int quality);

}  // namespace kernels

}  // namespace rangefuse
