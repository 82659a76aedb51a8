#pragma once

// Classical morphological depth completion: invert, diamond dilation, hole
// closing, full-kernel hole fill, median and Gaussian smoothing, invert back.
// Empty pixels carry 0 throughout.

#include <Eigen/Core>

namespace rangefuse::depth_completion {

using Grid = Eigen::ArrayXXd;
using Kernel = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Depths are inverted against this ceiling (raised above the largest depth
/// present when needed) so that dilation favours near surfaces.
inline constexpr double kMaxDepth = 100.0;
inline constexpr int kDiamondSize = 5;
inline constexpr int kClosingSize = 5;
inline constexpr int kHoleFillSize = 7;
inline constexpr int kMedianSize = 5;
inline constexpr int kGaussianSize = 5;
inline constexpr double kGaussianSigma = 1.1;

Kernel full_kernel(int size);
/// |dr| + |dc| <= size / 2.
Kernel diamond_kernel(int size);

/// Grayscale max over the kernel footprint; off-grid taps are skipped.
Grid dilate(const Grid& grid, const Kernel& kernel);
/// Grayscale min over the kernel footprint; off-grid taps are skipped.
Grid erode(const Grid& grid, const Kernel& kernel);
Grid close(const Grid& grid, const Kernel& kernel);

/// Median of the non-empty pixels in a size x size window, applied only at
/// non-empty pixels.
Grid masked_median(const Grid& grid, int size);
/// Gaussian average renormalised over non-empty pixels, applied only at
/// non-empty pixels.
Grid masked_gaussian(const Grid& grid, int size, double sigma);

/// Full schedule on a depth grid (0 = missing). Returns a grid in meters.
Grid complete(const Grid& sparse_depth);

}  // namespace rangefuse::depth_completion
