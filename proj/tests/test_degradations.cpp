#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <map>
#include <random>

#include "rangefuse/degradations.h"
#include "rangefuse/errors.h"

namespace rf = rangefuse;

namespace {

rf::Image test_image(int h = 24, int w = 32, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> v(0, 255);
  rf::Image img(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = (r * 9 + c * 5 + ch * 60 + v(rng) % 40) % 256;
  return img;
}

rf::DegradationSpec spec_of(rf::DegradationKind kind, rf::DegradationParams params, std::uint64_t seed = 5) {
  rf::DegradationSpec s;
  s.kind = kind;
  s.params = rf::default_params(kind);
  for (const auto& [k, v] : params) s.params[k] = v;
  s.seed = seed;
  return s;
}

/// Empirical CDF of one channel over the 256 byte levels.
std::array<double, 256> channel_cdf(const rf::Image& img, int ch) {
  std::array<double, 256> cdf{};
  for (Eigen::Index i = 0; i < img.pixel_count(); ++i) cdf[std::size_t(img.pixels(i, ch))] += 1.0;
  double acc = 0.0;
  for (auto& c : cdf) {
    acc += c;
    c = acc / double(img.pixel_count());
  }
  return cdf;
}

}  // namespace

TEST(Degradations, CatalogNamesRoundTrip) {
  EXPECT_EQ(rf::all_kinds().size(), std::size_t(rf::kDegradationKindCount));
  for (auto kind : rf::all_kinds()) EXPECT_EQ(rf::kind_from_name(rf::kind_name(kind)), kind);
  EXPECT_THROW(rf::kind_from_name("sharpen"), rf::ParameterError);
}

TEST(Degradations, IdentityParameters) {
  const auto img = test_image();
  EXPECT_EQ(rf::apply(img, spec_of(rf::DegradationKind::kBrightness, {{"factor", 1.0}})), img);
  EXPECT_EQ(rf::apply(img, spec_of(rf::DegradationKind::kGamma, {{"gamma", 1.0}})), img);
}

TEST(Degradations, DropoutZeroes) {
  const auto out = rf::apply(test_image(), spec_of(rf::DegradationKind::kDropout, {}));
  EXPECT_TRUE((out.pixels == 0.0).all());
}

TEST(Degradations, HistogramSelfMatchIsIdentity) {
  const auto img = test_image();
  EXPECT_EQ(rf::histogram_match(img, img, 3), img);
  auto spec = spec_of(rf::DegradationKind::kHistogramMatch, {});
  spec.reference = img;
  EXPECT_EQ(rf::apply(img, spec), img);
}

TEST(Degradations, HistogramMatchCdfWithinOneLevel) {
  const auto img = test_image(40, 50, 2);
  for (const auto& ref : rf::builtin_reference_pool().images) {
    const auto out = rf::histogram_match(img, ref, 1);
    for (int ch = 0; ch < 3; ++ch) {
      const auto a = channel_cdf(out, ch);
      const auto b = channel_cdf(ref, ch);
      double sup = 0.0;
      for (int k = 0; k < 256; ++k) sup = std::max(sup, std::abs(a[std::size_t(k)] - b[std::size_t(k)]));
      EXPECT_LE(sup, 1.0 / 256.0 + 1e-12);
    }
  }
}

TEST(Degradations, HistogramMatchNeedsReference) {
  EXPECT_THROW(rf::apply(test_image(), spec_of(rf::DegradationKind::kHistogramMatch, {})), rf::ParameterError);
  auto spec = spec_of(rf::DegradationKind::kHistogramMatch, {});
  spec.reference = rf::Image(0, 0);
  EXPECT_THROW(rf::apply(test_image(), spec), rf::ParameterError);
}

TEST(Degradations, ParameterValidation) {
  EXPECT_THROW(rf::apply(test_image(), spec_of(rf::DegradationKind::kGaussianNoise, {{"sigma", 40.0}})),
               rf::ParameterError);
  EXPECT_THROW(rf::apply(test_image(), spec_of(rf::DegradationKind::kJpeg, {{"quality", 50.5}})), rf::ParameterError);
  EXPECT_THROW(rf::apply(test_image(), spec_of(rf::DegradationKind::kBrightness, {{"bogus", 1.0}})),
               rf::ParameterError);
}

TEST(Degradations, EveryKindIsPureRangeSafeAndShapePreserving) {
  const auto img = test_image();
  std::mt19937_64 rng(17);
  for (auto kind : rf::all_kinds()) {
    for (int draw = 0; draw < 4; ++draw) {
      rf::DegradationSpec spec;
      spec.kind = kind;
      spec.params = rf::sample_params(kind, rng);
      spec.seed = rng();
      if (kind == rf::DegradationKind::kHistogramMatch) spec.reference = rf::builtin_reference_pool().images[0];
      const auto a = rf::apply(img, spec);
      const auto b = rf::apply(img, spec);
      EXPECT_EQ(a, b) << rf::kind_name(kind);
      EXPECT_EQ(a.height, img.height);
      EXPECT_EQ(a.width, img.width);
      EXPECT_TRUE((a.pixels >= 0.0).all() && (a.pixels <= 255.0).all()) << rf::kind_name(kind);
      EXPECT_TRUE((a.pixels == a.pixels.round()).all()) << rf::kind_name(kind);
    }
  }
}

TEST(Degradations, UnitRangeImagesStayInUnitRange) {
  const auto img = test_image().to_unit();
  std::mt19937_64 rng(2);
  for (auto kind : rf::all_kinds()) {
    rf::DegradationSpec spec;
    spec.kind = kind;
    spec.params = rf::sample_params(kind, rng);
    if (kind == rf::DegradationKind::kHistogramMatch) spec.reference = rf::builtin_reference_pool().images[1];
    const auto out = rf::apply(img, spec);
    EXPECT_EQ(out.range, rf::PixelRange::kUnit);
    EXPECT_TRUE((out.pixels >= 0.0).all() && (out.pixels <= 1.0).all()) << rf::kind_name(kind);
  }
}

TEST(Degradations, BrightnessCommutesWithCropping) {
  const auto img = test_image();
  const auto spec = spec_of(rf::DegradationKind::kBrightness, {{"factor", 1.2}});
  const auto full = rf::apply(img, spec);
  rf::Image crop(10, 12);
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c < 12; ++c)
      for (int ch = 0; ch < 3; ++ch) crop.at(r, c, ch) = img.at(r + 5, c + 7, ch);
  const auto cropped = rf::apply(crop, spec);
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c < 12; ++c)
      for (int ch = 0; ch < 3; ++ch) EXPECT_EQ(cropped.at(r, c, ch), full.at(r + 5, c + 7, ch));
}

TEST(Degradations, SampleSpecIsSeedDeterministic) {
  std::mt19937_64 a(99), b(99);
  for (int i = 0; i < 50; ++i) {
    const auto x = rf::sample_spec(a);
    const auto y = rf::sample_spec(b);
    ASSERT_EQ(bool(x), bool(y));
    if (!x) continue;
    EXPECT_EQ(x->kind, y->kind);
    EXPECT_EQ(x->params, y->params);
    EXPECT_EQ(x->seed, y->seed);
  }
}

TEST(Degradations, SampleSpecFrequencies) {
  std::mt19937_64 rng(12345);
  const int n = 100000;
  int none = 0;
  for (int i = 0; i < n; ++i) none += !rf::sample_spec(rng);
  EXPECT_NEAR(double(none) / n, 0.5, 0.01);

  std::map<rf::DegradationKind, int> counts;
  int drawn = 0;
  while (drawn < n) {
    if (auto s = rf::sample_spec(rng)) {
      ++counts[s->kind];
      ++drawn;
    }
  }
  const double p = 1.0 / rf::kDegradationKindCount;
  const double sigma = std::sqrt(n * p * (1 - p));
  for (auto kind : rf::all_kinds()) EXPECT_NEAR(counts[kind], n * p, 3 * sigma) << rf::kind_name(kind);
}

TEST(Degradations, SeveritySweeps) {
  const auto img = test_image();
  const std::vector<double> bright = {1.0, 1.15, 1.3};
  const auto b = rf::severity_sweep(img, rf::DegradationKind::kBrightness, bright, 3);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[0], img);

  // Mid-gray keeps clamping out of the noise RMS.
  rf::Image gray(32, 32);
  gray.pixels.setConstant(128.0);
  const std::vector<double> sigmas = {5, 15, 25};
  const auto n = rf::severity_sweep(gray, rf::DegradationKind::kGaussianNoise, sigmas, 3);
  double prev = 0.0;
  for (const auto& out : n) {
    const double rms = std::sqrt((out.pixels - gray.pixels).square().mean());
    EXPECT_GT(rms, prev);
    prev = rms;
  }

  const std::vector<rf::DegradationParams> drops(2);
  for (const auto& out : rf::severity_sweep(img, rf::DegradationKind::kDropout, drops, 1)) {
    EXPECT_TRUE((out.pixels == 0.0).all());
  }
}

TEST(Degradations, SidecarJsonRoundTrip) {
  auto spec = spec_of(rf::DegradationKind::kHistogramMatch, {}, 77);
  spec.reference = rf::builtin_reference_pool().get("urban");
  spec.reference_name = "urban";
  const auto back = rf::spec_from_json(rf::spec_to_json(spec));
  EXPECT_EQ(back.kind, spec.kind);
  EXPECT_EQ(back.seed, 77u);
  ASSERT_TRUE(back.reference);
  EXPECT_EQ(*back.reference, *spec.reference);
}

TEST(DegradationKernels, GaussianAndMotionKernelsNormalized) {
  EXPECT_NEAR(rf::kernels::gaussian_kernel(5, rf::kernels::gaussian_sigma_for_size(5)).sum(), 1.0, 1e-12);
  EXPECT_NEAR(rf::kernels::gaussian_sigma_for_size(3), 0.8, 1e-12);
  for (int len : {5, 9, 15}) {
    for (double angle : {0.0, 37.0, 90.0, 180.0}) {
      const auto k = rf::kernels::motion_kernel(len, angle);
      EXPECT_NEAR(k.sum(), 1.0, 1e-12);
      EXPECT_TRUE((k >= 0.0).all());
    }
  }
}

TEST(DegradationKernels, JpegQuantTableScaling) {
  // Quality 50 leaves the standard tables unchanged.
  EXPECT_EQ(rf::kernels::jpeg_quant_table(50, false)(0, 0), 16.0);
  EXPECT_EQ(rf::kernels::jpeg_quant_table(50, true)(0, 0), 17.0);
  EXPECT_EQ(rf::kernels::jpeg_quant_table(100, false).maxCoeff(), 1.0);
  // A constant block survives the DCT round trip exactly.
  rf::Image flat(16, 16);
  flat.pixels.setConstant(128.0);
  EXPECT_EQ(rf::kernels::jpeg_roundtrip(flat, 60), flat);
}
