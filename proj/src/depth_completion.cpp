#include "rangefuse/depth_completion.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace rangefuse::depth_completion {
namespace {

template <typename Reduce>
Grid morph(const Grid& grid, const Kernel& kernel, double init, Reduce reduce) {
  const Eigen::Index kr = kernel.rows() / 2;
  const Eigen::Index kc = kernel.cols() / 2;
  Grid out(grid.rows(), grid.cols());
  for (Eigen::Index c = 0; c < grid.cols(); ++c) {
    for (Eigen::Index r = 0; r < grid.rows(); ++r) {
      double acc = init;
      for (Eigen::Index dc = 0; dc < kernel.cols(); ++dc) {
        const Eigen::Index cc = c + dc - kc;
        if (cc < 0 || cc >= grid.cols()) continue;
        for (Eigen::Index dr = 0; dr < kernel.rows(); ++dr) {
          const Eigen::Index rr = r + dr - kr;
          if (rr < 0 || rr >= grid.rows() || !kernel(dr, dc)) continue;
          acc = reduce(acc, grid(rr, cc));
        }
      }
      out(r, c) = acc;
    }
  }
  return out;
}

}  // namespace

Kernel full_kernel(int size) { return Kernel::Constant(size, size, true); }

Kernel diamond_kernel(int size) {
  Kernel k(size, size);
  const int half = size / 2;
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) k(r, c) = std::abs(r - half) + std::abs(c - half) <= half;
  }
  return k;
}

Grid dilate(const Grid& grid, const Kernel& kernel) {
  return morph(grid, kernel, -std::numeric_limits<double>::infinity(),
               [](double a, double b) { return std::max(a, b); });
}

Grid erode(const Grid& grid, const Kernel& kernel) {
  return morph(grid, kernel, std::numeric_limits<double>::infinity(),
               [](double a, double b) { return std::min(a, b); });
}

Grid close(const Grid& grid, const Kernel& kernel) { return erode(dilate(grid, kernel), kernel); }

Grid masked_median(const Grid& grid, int size) {
  const int half = size / 2;
  Grid out = grid;
  std::vector<double> window;
  window.reserve(std::size_t(size) * std::size_t(size));
  for (Eigen::Index c = 0; c < grid.cols(); ++c) {
    for (Eigen::Index r = 0; r < grid.rows(); ++r) {
      if (grid(r, c) <= 0.0) continue;
      window.clear();
      for (Eigen::Index cc = std::max<Eigen::Index>(0, c - half);
           cc <= std::min<Eigen::Index>(grid.cols() - 1, c + half); ++cc) {
        for (Eigen::Index rr = std::max<Eigen::Index>(0, r - half);
             rr <= std::min<Eigen::Index>(grid.rows() - 1, r + half); ++rr) {
          if (grid(rr, cc) > 0.0) window.push_back(grid(rr, cc));
        }
      }
      const auto mid = window.begin() + std::ptrdiff_t(window.size() / 2);
      std::nth_element(window.begin(), mid, window.end());
      if (window.size() % 2 == 1) {
        out(r, c) = *mid;
      } else {
        const double upper = *mid;
        const double lower = *std::max_element(window.begin(), mid);
        out(r, c) = 0.5 * (lower + upper);
      }
    }
  }
  return out;
}

Grid masked_gaussian(const Grid& grid, int size, double sigma) {
  const int half = size / 2;
  Eigen::ArrayXd taps(size);
  for (int i = 0; i < size; ++i) taps(i) = std::exp(-0.5 * double((i - half) * (i - half)) / (sigma * sigma));
  Grid out = grid;
  for (Eigen::Index c = 0; c < grid.cols(); ++c) {
    for (Eigen::Index r = 0; r < grid.rows(); ++r) {
      if (grid(r, c) <= 0.0) continue;
      double num = 0.0;
      double den = 0.0;
      for (int dc = -half; dc <= half; ++dc) {
        const Eigen::Index cc = c + dc;
        if (cc < 0 || cc >= grid.cols()) continue;
        for (int dr = -half; dr <= half; ++dr) {
          const Eigen::Index rr = r + dr;
          if (rr < 0 || rr >= grid.rows() || grid(rr, cc) <= 0.0) continue;
          const double w = taps(dr + half) * taps(dc + half);
          num += w * grid(rr, cc);
          den += w;
        }
      }
      out(r, c) = num / den;
    }
  }
  return out;
}

Grid complete(const Grid& sparse_depth) {
  const auto valid = sparse_depth > 0.0;
  if (!valid.any()) return Grid::Zero(sparse_depth.rows(), sparse_depth.cols());

  const double ceiling = std::max(kMaxDepth, valid.select(sparse_depth, 0.0).maxCoeff() + 1.0);
  Grid g = valid.select(ceiling - sparse_depth, 0.0);

  g = dilate(g, diamond_kernel(kDiamondSize));
  g = close(g, full_kernel(kClosingSize));

  const Grid filled = dilate(g, full_kernel(kHoleFillSize));
  g = (g > 0.0).select(g, filled);

  g = masked_median(g, kMedianSize);
  g = masked_gaussian(g, kGaussianSize, kGaussianSigma);

  return (g > 0.0).select(ceiling - g, 0.0);
}

}  // namespace rangefuse::depth_completion
