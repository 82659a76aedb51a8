#include "rangefuse/degradations.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

#include "rangefuse/errors.h"

namespace rangefuse {
namespace {

struct KindInfo {
  DegradationKind kind;
  std::string_view name;
};

constexpr std::array<KindInfo, kDegradationKindCount> kKinds{{
    {DegradationKind::kBrightness, "brightness"},
    {DegradationKind::kContrast, "contrast"},
    {DegradationKind::kSaturation, "saturation"},
    {DegradationKind::kHue, "hue"},
    {DegradationKind::kGamma, "gamma"},
    {DegradationKind::kColorJitter, "color_jitter"},
    {DegradationKind::kGaussianNoise, "gaussian_noise"},
    {DegradationKind::kPoissonNoise, "poisson_noise"},
    {DegradationKind::kSpeckleNoise, "speckle_noise"},
    {DegradationKind::kJpeg, "jpeg"},
    {DegradationKind::kGaussianBlur, "gaussian_blur"},
    {DegradationKind::kMotionBlur, "motion_blur"},
    {DegradationKind::kExposure, "exposure"},
    {DegradationKind::kIsoNoise, "iso_noise"},
    {DegradationKind::kFog, "fog"},
    {DegradationKind::kRain, "rain"},
    {DegradationKind::kShadows, "shadows"},
    {DegradationKind::kColorTemperature, "color_temperature"},
    {DegradationKind::kVignette, "vignette"},
    {DegradationKind::kWhiteBalance, "white_balance"},
    {DegradationKind::kHistogramMatch, "histogram_match"},
    {DegradationKind::kDropout, "dropout"},
    {DegradationKind::kBloom, "bloom"},
}};

constexpr std::array<DegradationKind, kDegradationKindCount> kAllKinds = [] {
  std::array<DegradationKind, kDegradationKindCount> out{};
  for (std::size_t i = 0; i < kKinds.size(); ++i) out[i] = kKinds[i].kind;
  return out;
}();

// Byte-unit constants.
constexpr double kFogLevel = 240.0;
constexpr double kRainLevel = 200.0;
constexpr double kRainOpacity = 0.6;
constexpr double kRainMinLength = 5.0;
constexpr double kRainMaxLength = 20.0;
constexpr double kBloomThreshold = 200.0;
constexpr double kBloomSoftness = 55.0;
constexpr double kDisplayGamma = 2.2;
constexpr double kJitterColorProb = 0.8;
constexpr double kJitterHueProb = 0.5;
constexpr double kPoissonNormalAbove = 30.0;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// ---- colour helpers (values in [0, max]) -----------------------------------

Eigen::Array3d rgb_to_hsv(const Eigen::Array3d& rgb) {
  const double mx = rgb.maxCoeff();
  const double mn = rgb.minCoeff();
  const double delta = mx - mn;
  double h = 0.0;
  if (delta > 0.0) {
    if (mx == rgb(0)) {
      h = 60.0 * std::fmod((rgb(1) - rgb(2)) / delta, 6.0);
    } else if (mx == rgb(1)) {
      h = 60.0 * ((rgb(2) - rgb(0)) / delta + 2.0);
    } else {
      h = 60.0 * ((rgb(0) - rgb(1)) / delta + 4.0);
    }
  }
  if (h < 0.0) h += 360.0;
  const double s = mx > 0.0 ? delta / mx : 0.0;
  return {h, s, mx};
}

Eigen::Array3d hsv_to_rgb(const Eigen::Array3d& hsv) {
  const double h = std::fmod(std::fmod(hsv(0), 360.0) + 360.0, 360.0);
  const double s = hsv(1);
  const double v = hsv(2);
  const double c = v * s;
  const double x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0));
  const double m = v - c;
  Eigen::Array3d rgb;
  switch (int(h / 60.0) % 6) {
    case 0: rgb << c, x, 0; break;
    case 1: rgb << x, c, 0; break;
    case 2: rgb << 0, c, x; break;
    case 3: rgb << 0, x, c; break;
    case 4: rgb << x, 0, c; break;
    default: rgb << c, 0, x; break;
  }
  return rgb + m;
}

template <typename Fn>
void map_hsv(Image& img, Fn fn) {
  for (Eigen::Index i = 0; i < img.pixel_count(); ++i) {
    Eigen::Array3d hsv = rgb_to_hsv(img.pixels.row(i).transpose());
    fn(hsv);
    img.pixels.row(i) = hsv_to_rgb(hsv).transpose();
  }
}

void clamp_to_range(Image& img) { img.pixels = img.pixels.cwiseMax(0.0).cwiseMin(img.max_value()); }

// ---- individual corruptions -------------------------------------------------

void adjust_brightness(Image& img, double f) { img.pixels *= f; }

void adjust_contrast(Image& img, double f) {
  const double mean = luminance(img).mean();
  img.pixels = mean + f * (img.pixels - mean);
}

void adjust_saturation(Image& img, double f) {
  map_hsv(img, [f](Eigen::Array3d& hsv) { hsv(1) = std::clamp(hsv(1) * f, 0.0, 1.0); });
}

void shift_hue(Image& img, double deg) {
  map_hsv(img, [deg](Eigen::Array3d& hsv) { hsv(0) += deg; });
}

void adjust_gamma(Image& img, double gamma) {
  const double mx = img.max_value();
  img.pixels = mx * (img.pixels.cwiseMax(0.0) / mx).pow(gamma);
}

double sample_poisson(double lambda, std::mt19937_64& rng) {
  if (!(lambda > 0.0)) return 0.0;
  if (lambda >= kPoissonNormalAbove) {
    std::normal_distribution<double> normal(lambda, std::sqrt(lambda));
    return std::max(0.0, std::round(normal(rng)));
  }
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double u = uni(rng);
  double p = std::exp(-lambda);
  double cdf = p;
  int k = 0;
  while (u > cdf && k < 1000) {
    ++k;
    p *= lambda / k;
    cdf += p;
  }
  return double(k);
}

void draw_rain(Image& img, int count, double angle_deg, std::mt19937_64& rng) {
  const double s = img.max_value() / 255.0;
  std::uniform_real_distribution<double> ux(0.0, img.width);
  std::uniform_real_distribution<double> uy(0.0, img.height);
  std::uniform_real_distribution<double> ulen(kRainMinLength, kRainMaxLength);
  const double a = deg2rad(angle_deg);
  std::vector<char> hit(std::size_t(img.pixel_count()));
  for (int k = 0; k < count; ++k) {
    const double x0 = ux(rng);
    const double y0 = uy(rng);
    const double len = ulen(rng);
    const double x1 = x0 + std::sin(a) * len;
    const double y1 = y0 + std::cos(a) * len;
    std::fill(hit.begin(), hit.end(), 0);
    const int steps = int(std::ceil(len * 2.0));
    for (int t = 0; t <= steps; ++t) {
      const double f = double(t) / steps;
      const int col = int(std::floor(x0 + f * (x1 - x0)));
      const int row = int(std::floor(y0 + f * (y1 - y0)));
      if (row < 0 || row >= img.height || col < 0 || col >= img.width) continue;
      const auto i = img.index(row, col);
      if (hit[std::size_t(i)]) continue;
      hit[std::size_t(i)] = 1;
      img.pixels.row(i) = (1.0 - kRainOpacity) * img.pixels.row(i) + kRainOpacity * kRainLevel * s;
    }
  }
}

bool inside_polygon(double x, double y, const std::vector<Eigen::Vector2d>& poly) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y() > y) != (b.y() > y) && x < (b.x() - a.x()) * (y - a.y()) / (b.y() - a.y()) + a.x()) {
      inside = !inside;
    }
  }
  return inside;
}

void draw_shadows(Image& img, int count, double intensity, std::mt19937_64& rng) {
  const double extent = std::min(img.height, img.width);
  std::uniform_real_distribution<double> ux(0.0, img.width);
  std::uniform_real_distribution<double> uy(0.0, img.height);
  std::uniform_real_distribution<double> uradius(0.15 * extent, 0.45 * extent);
  std::uniform_real_distribution<double> uangle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> ujitter(0.5, 1.0);
  std::uniform_int_distribution<int> uverts(3, 6);
  for (int k = 0; k < count; ++k) {
    const Eigen::Vector2d center(ux(rng), uy(rng));
    const double radius = uradius(rng);
    std::vector<double> angles(std::size_t(uverts(rng)));
    for (auto& a : angles) a = uangle(rng);
    std::sort(angles.begin(), angles.end());
    std::vector<Eigen::Vector2d> poly;
    for (double a : angles) {
      const double r = radius * ujitter(rng);
      poly.push_back(center + r * Eigen::Vector2d(std::cos(a), std::sin(a)));
    }
    for (int row = 0; row < img.height; ++row) {
      for (int col = 0; col < img.width; ++col) {
        if (inside_polygon(col + 0.5, row + 0.5, poly)) img.pixels.row(img.index(row, col)) *= intensity;
      }
    }
  }
}

void apply_vignette(Image& img, double k) {
  const double cy = 0.5 * (img.height - 1);
  const double cx = 0.5 * (img.width - 1);
  const double rmax2 = cx * cx + cy * cy;
  for (int row = 0; row < img.height; ++row) {
    for (int col = 0; col < img.width; ++col) {
      const double r2 = (row - cy) * (row - cy) + (col - cx) * (col - cx);
      const double f = rmax2 > 0.0 ? 1.0 - k * r2 / rmax2 : 1.0;
      img.pixels.row(img.index(row, col)) *= f;
    }
  }
}

void apply_bloom(Image& img, int kernel, double intensity) {
  const double s = img.max_value() / 255.0;
  const Eigen::ArrayXd lum = luminance(img) / s;
  Image mask(img.height, img.width, PixelRange::kUnit);
  const Eigen::ArrayXd m = ((lum - kBloomThreshold) / kBloomSoftness).cwiseMax(0.0).cwiseMin(1.0);
  for (int c = 0; c < 3; ++c) mask.pixels.col(c) = m;
  const int ksize = kernel | 1;
  const Image glow =
      kernels::filter2d(mask, kernels::gaussian_kernel(ksize, kernels::gaussian_sigma_for_size(ksize)));
  img.pixels += intensity * s * glow.pixels;
}

}  // namespace

// ---- catalogue ----------------------------------------------------------------

std::string_view kind_name(DegradationKind kind) {
  for (const auto& k : kKinds) {
    if (k.kind == kind) return k.name;
  }
  throw ParameterError("unknown degradation kind");
}

DegradationKind kind_from_name(std::string_view name) {
  for (const auto& k : kKinds) {
    if (k.name == name) return k.kind;
  }
  throw ParameterError("unknown degradation kind '" + std::string(name) + "'");
}

std::span<const DegradationKind> all_kinds() { return kAllKinds; }

const std::vector<ParamRange>& param_ranges(DegradationKind kind) {
  static const std::map<DegradationKind, std::vector<ParamRange>> table = {
      {DegradationKind::kBrightness, {{"factor", 0.7, 1.3}}},
      {DegradationKind::kContrast, {{"factor", 0.7, 1.3}}},
      {DegradationKind::kSaturation, {{"factor", 0.7, 1.3}}},
      {DegradationKind::kHue, {{"shift_deg", -18.0, 18.0}}},
      {DegradationKind::kGamma, {{"gamma", 0.7, 1.3}}},
      {DegradationKind::kColorJitter,
       {{"brightness", 0.6, 1.4},
        {"contrast", 0.6, 1.4},
        {"saturation", 0.6, 1.4},
        {"hue_deg", -18.0, 18.0},
        {"apply_brightness", 0, 1, true, {0.0, 1.0}},
        {"apply_contrast", 0, 1, true, {0.0, 1.0}},
        {"apply_saturation", 0, 1, true, {0.0, 1.0}},
        {"apply_hue", 0, 1, true, {0.0, 1.0}}}},
      {DegradationKind::kGaussianNoise, {{"sigma", 5.0, 25.0}}},
      {DegradationKind::kPoissonNoise, {}},
      {DegradationKind::kSpeckleNoise, {{"scale", 0.1, 0.3}}},
      {DegradationKind::kJpeg, {{"quality", 40, 95, true}}},
      {DegradationKind::kGaussianBlur, {{"ksize", 3, 7, true, {3.0, 5.0, 7.0}}}},
      {DegradationKind::kMotionBlur, {{"length", 5, 15, true}, {"angle_deg", 0.0, 180.0}}},
      {DegradationKind::kExposure, {{"factor", 0.5, 1.8}}},
      {DegradationKind::kIsoNoise, {{"gain", 1.0, 2.5}, {"std", 10.0, 30.0}}},
      {DegradationKind::kFog, {{"alpha", 0.3, 0.7}}},
      {DegradationKind::kRain, {{"count", 100, 300, true}, {"angle_deg", -15.0, 15.0}}},
      {DegradationKind::kShadows, {{"count", 1, 4, true}, {"intensity", 0.3, 0.7}}},
      {DegradationKind::kColorTemperature, {{"delta", -50.0, 50.0}}},
      {DegradationKind::kVignette, {{"intensity", 0.3, 0.7}}},
      {DegradationKind::kWhiteBalance, {{"r", 0.8, 1.2}, {"g", 0.8, 1.2}, {"b", 0.8, 1.2}}},
      {DegradationKind::kHistogramMatch, {}},
      {DegradationKind::kDropout, {}},
      {DegradationKind::kBloom, {{"kernel", 15, 40, true}, {"intensity", 30.0, 80.0}}},
  };
  return table.at(kind);
}

double DegradationSpec::param(const std::string& name) const {
  const auto it = params.find(name);
  if (it == params.end()) {
    throw ParameterError(std::string(kind_name(kind)) + ": missing parameter '" + name + "'");
  }
  return it->second;
}

void validate(const DegradationSpec& spec) {
  const auto& ranges = param_ranges(spec.kind);
  const std::string kname(kind_name(spec.kind));
  for (const auto& [name, value] : spec.params) {
    if (std::none_of(ranges.begin(), ranges.end(), [&](const ParamRange& r) { return r.name == name; })) {
      throw ParameterError(kname + ": unknown parameter '" + name + "'");
    }
  }
  for (const auto& r : ranges) {
    const double v = spec.param(std::string(r.name));
    const std::string what = kname + "." + std::string(r.name) + " = " + std::to_string(v);
    if (!std::isfinite(v)) throw ParameterError(what + " is not finite");
    if (!r.choices.empty()) {
      if (std::find(r.choices.begin(), r.choices.end(), v) == r.choices.end()) {
        throw ParameterError(what + " is not an allowed choice");
      }
    } else if (v < r.lo || v > r.hi) {
      throw ParameterError(what + " outside [" + std::to_string(r.lo) + ", " + std::to_string(r.hi) + "]");
    }
    if (r.integral && v != std::round(v)) throw ParameterError(what + " must be an integer");
  }
  if (spec.kind == DegradationKind::kHistogramMatch) {
    if (!spec.reference) throw ParameterError("histogram_match requires a reference image");
    const Image& ref = *spec.reference;
    if (ref.pixel_count() == 0 || ref.pixels.rows() != Eigen::Index(ref.height) * ref.width ||
        !ref.pixels.allFinite()) {
      throw ParameterError("histogram_match reference image is malformed");
    }
  }
}

// ---- reference pool ---------------------------------------------------------

const Image& ReferencePool::get(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return images[i];
  }
  throw ParameterError("unknown reference image '" + std::string(name) + "'");
}

const ReferencePool& builtin_reference_pool() {
  static const ReferencePool pool = [] {
    constexpr int n = 64;
    ReferencePool p;
    Image dark(n, n);
    Image urban(n, n);
    Image colorful(n, n);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        const double fx = double(c) / (n - 1);
        const double fy = double(r) / (n - 1);
        const double texture = double((c * 7 + r * 13) % 32) / 31.0;
        dark.pixels.row(dark.index(r, c)) << 8 + 30 * fx * texture, 10 + 28 * fy, 22 + 45 * (fx + fy) / 2;
        const double g = 70 + 110 * texture * (0.5 + 0.5 * fy);
        urban.pixels.row(urban.index(r, c)) << g, g + 6, g + 14;
        colorful.pixels.row(colorful.index(r, c)) << 255 * fx, 255 * fy, 255 * double((r + c) % n) / (n - 1);
      }
    }
    for (Image* img : {&dark, &urban, &colorful}) img->finalize();
    p.names = {"dark", "urban", "colorful"};
    p.images = {dark, urban, colorful};
    return p;
  }();
  return pool;
}

ReferencePool load_reference_pool(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("reference pool is not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  ReferencePool pool;
  for (const auto& f : files) {
    pool.names.push_back(f.stem().string());
    pool.images.push_back(read_ppm(f));
  }
  return pool;
}

// ---- sampling -----------------------------------------------------------------

DegradationParams sample_params(DegradationKind kind, std::mt19937_64& rng) {
  DegradationParams params;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (const auto& r : param_ranges(kind)) {
    const std::string name(r.name);
    if (kind == DegradationKind::kColorJitter && name.starts_with("apply_")) {
      const double p = name == "apply_hue" ? kJitterHueProb : kJitterColorProb;
      params[name] = uni(rng) < p ? 1.0 : 0.0;
    } else if (!r.choices.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, r.choices.size() - 1);
      params[name] = r.choices[pick(rng)];
    } else if (r.integral) {
      std::uniform_int_distribution<int> pick(int(r.lo), int(r.hi));
      params[name] = pick(rng);
    } else {
      params[name] = std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
    }
  }
  return params;
}

DegradationParams default_params(DegradationKind kind) {
  DegradationParams params;
  for (const auto& r : param_ranges(kind)) {
    double v = r.choices.empty() ? 0.5 * (r.lo + r.hi) : r.choices.back();
    if (r.integral && r.choices.empty()) v = std::round(v);
    params[std::string(r.name)] = v;
  }
  return params;
}

std::optional<DegradationSpec> sample_spec(std::mt19937_64& rng, const ReferencePool& pool) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  if (uni(rng) < 0.5) return std::nullopt;
  std::uniform_int_distribution<int> pick(0, kDegradationKindCount - 1);
  DegradationSpec spec;
  spec.kind = kAllKinds[std::size_t(pick(rng))];
  spec.params = sample_params(spec.kind, rng);
  spec.seed = rng();
  if (spec.kind == DegradationKind::kHistogramMatch) {
    if (pool.empty()) throw ParameterError("histogram_match sampled with an empty reference pool");
    std::uniform_int_distribution<std::size_t> ref(0, pool.images.size() - 1);
    const std::size_t i = ref(rng);
    spec.reference = pool.images[i];
    spec.reference_name = pool.names[i];
  }
  return spec;
}

// ---- application ----------------------------------------------------------------

Image histogram_match(const Image& image, const Image& reference, std::uint64_t seed) {
  if (reference.pixel_count() == 0) throw ParameterError("histogram_match reference is empty");
  const Eigen::Index n = image.pixel_count();
  const Eigen::Index nr = reference.pixel_count();
  const double rescale = image.max_value() / reference.max_value();

  std::vector<std::uint64_t> tie(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) tie[std::size_t(i)] = splitmix64(seed ^ splitmix64(std::uint64_t(i)));

  Image out = image;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::vector<double> ref(static_cast<std::size_t>(nr));
  for (int c = 0; c < 3; ++c) {
    for (Eigen::Index i = 0; i < nr; ++i) ref[std::size_t(i)] = reference.pixels(i, c) * rescale;
    std::sort(ref.begin(), ref.end());
    std::iota(order.begin(), order.end(), Eigen::Index(0));
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      const double va = image.pixels(a, c);
      const double vb = image.pixels(b, c);
      if (va != vb) return va < vb;
      if (tie[std::size_t(a)] != tie[std::size_t(b)]) return tie[std::size_t(a)] < tie[std::size_t(b)];
      return a < b;
    });
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto q = std::min<Eigen::Index>(nr - 1, Eigen::Index(std::floor((double(k) + 0.5) * double(nr) / double(n))));
      out.pixels(order[std::size_t(k)], c) = ref[std::size_t(q)];
    }
  }
  out.finalize();
  return out;
}

Image apply(const Image& image, const DegradationSpec& spec) {
  validate(spec);
  Image img = image;
  const double mx = img.max_value();
  const double s = mx / 255.0;
  std::mt19937_64 rng(spec.seed);

  switch (spec.kind) {
    case DegradationKind::kBrightness:
      adjust_brightness(img, spec.param("factor"));
      break;
    case DegradationKind::kContrast:
      adjust_contrast(img, spec.param("factor"));
      break;
    case DegradationKind::kSaturation:
      adjust_saturation(img, spec.param("factor"));
      break;
    case DegradationKind::kHue:
      shift_hue(img, spec.param("shift_deg"));
      break;
    case DegradationKind::kGamma:
      adjust_gamma(img, spec.param("gamma"));
      break;
    case DegradationKind::kColorJitter:
      if (spec.param("apply_brightness") != 0.0) {
        adjust_brightness(img, spec.param("brightness"));
        clamp_to_range(img);
      }
      if (spec.param("apply_contrast") != 0.0) {
        adjust_contrast(img, spec.param("contrast"));
        clamp_to_range(img);
      }
      if (spec.param("apply_saturation") != 0.0) {
        adjust_saturation(img, spec.param("saturation"));
        clamp_to_range(img);
      }
      if (spec.param("apply_hue") != 0.0) shift_hue(img, spec.param("hue_deg"));
      break;
    case DegradationKind::kGaussianNoise: {
      std::normal_distribution<double> noise(0.0, spec.param("sigma") * s);
      img.pixels = img.pixels.unaryExpr([&](double v) { return v + noise(rng); });
      break;
    }
    case DegradationKind::kPoissonNoise:
      img.pixels = img.pixels.unaryExpr([&](double v) { return sample_poisson(v / s, rng) * s; });
      break;
    case DegradationKind::kSpeckleNoise: {
      std::normal_distribution<double> noise(0.0, spec.param("scale"));
      img.pixels = img.pixels.unaryExpr([&](double v) { return v * (1.0 + noise(rng)); });
      break;
    }
    case DegradationKind::kJpeg:
      img = kernels::jpeg_roundtrip(img, int(spec.param("quality")));
      break;
    case DegradationKind::kGaussianBlur: {
      const int k = int(spec.param("ksize"));
      img = kernels::filter2d(img, kernels::gaussian_kernel(k, kernels::gaussian_sigma_for_size(k)));
      break;
    }
    case DegradationKind::kMotionBlur:
      img = kernels::filter2d(img, kernels::motion_kernel(int(spec.param("length")), spec.param("angle_deg")));
      break;
    case DegradationKind::kExposure: {
      const double f = spec.param("factor");
      img.pixels = mx * (f * (img.pixels.cwiseMax(0.0) / mx).pow(kDisplayGamma)).pow(1.0 / kDisplayGamma);
      break;
    }
    case DegradationKind::kIsoNoise: {
      std::normal_distribution<double> noise(0.0, spec.param("std") * spec.param("gain") * s);
      img.pixels = img.pixels.unaryExpr([&](double v) { return v + noise(rng); });
      break;
    }
    case DegradationKind::kFog: {
      const double a = spec.param("alpha");
      img.pixels = (1.0 - a) * img.pixels + a * kFogLevel * s;
      break;
    }
    case DegradationKind::kRain:
      draw_rain(img, int(spec.param("count")), spec.param("angle_deg"), rng);
      break;
    case DegradationKind::kShadows:
      draw_shadows(img, int(spec.param("count")), spec.param("intensity"), rng);
      break;
    case DegradationKind::kColorTemperature: {
      const double d = spec.param("delta") * s;
      img.pixels.col(0) += d;
      img.pixels.col(2) -= d;
      break;
    }
    case DegradationKind::kVignette:
      apply_vignette(img, spec.param("intensity"));
      break;
    case DegradationKind::kWhiteBalance:
      img.pixels.col(0) *= spec.param("r");
      img.pixels.col(1) *= spec.param("g");
      img.pixels.col(2) *= spec.param("b");
      break;
    case DegradationKind::kHistogramMatch:
      img = histogram_match(img, *spec.reference, spec.seed);
      break;
    case DegradationKind::kDropout:
      img.pixels.setZero();
      break;
    case DegradationKind::kBloom:
      apply_bloom(img, int(spec.param("kernel")), spec.param("intensity"));
      break;
  }
  img.finalize();
  return img;
}

std::vector<Image> severity_sweep(const Image& image, DegradationKind kind,
                                  std::span<const DegradationParams> levels, std::uint64_t seed,
                                  const std::optional<Image>& reference) {
  std::vector<Image> out;
  out.reserve(levels.size());
  for (const auto& params : levels) {
    DegradationSpec spec{kind, params, seed, reference, {}};
    out.push_back(apply(image, spec));
  }
  return out;
}

std::vector<Image> severity_sweep(const Image& image, DegradationKind kind, std::span<const double> levels,
                                  std::uint64_t seed, const std::optional<Image>& reference) {
  const auto& ranges = param_ranges(kind);
  std::vector<DegradationParams> sets;
  for (double level : levels) {
    DegradationParams p = default_params(kind);
    if (!ranges.empty()) p[std::string(ranges.front().name)] = level;
    sets.push_back(std::move(p));
  }
  return severity_sweep(image, kind, std::span<const DegradationParams>(sets), seed, reference);
}

// ---- sidecar ----------------------------------------------------------------

nlohmann::json spec_to_json(const DegradationSpec& spec) {
  nlohmann::json doc{{"kind", kind_name(spec.kind)}, {"params", spec.params}, {"seed", spec.seed}};
  if (spec.kind == DegradationKind::kHistogramMatch) doc["reference"] = spec.reference_name;
  return doc;
}

DegradationSpec spec_from_json(const nlohmann::json& doc, const ReferencePool& pool) {
  DegradationSpec spec;
  try {
    spec.kind = kind_from_name(doc.at("kind").get<std::string>());
    if (doc.contains("params")) spec.params = doc.at("params").get<DegradationParams>();
    spec.seed = doc.value("seed", std::uint64_t{0});
    if (doc.contains("reference")) {
      spec.reference_name = doc.at("reference").get<std::string>();
      spec.reference = pool.get(spec.reference_name);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError("malformed degradation spec: " + std::string(e.what()));
  }
  return spec;
}

// ---- kernels ------------------------------------------------------------------

namespace kernels {

double gaussian_sigma_for_size(int ksize) { return 0.3 * ((ksize - 1) * 0.5 - 1.0) + 0.8; }

Eigen::ArrayXXd gaussian_kernel(int ksize, double sigma) {
  Eigen::ArrayXd taps(ksize);
  const int half = ksize / 2;
  for (int i = 0; i < ksize; ++i) taps(i) = std::exp(-0.5 * double((i - half) * (i - half)) / (sigma * sigma));
  taps /= taps.sum();
  return (taps.matrix() * taps.matrix().transpose()).array();
}

Eigen::ArrayXXd motion_kernel(int length, double angle_deg) {
  const int size = length | 1;
  const double center = 0.5 * (size - 1);
  const double a = deg2rad(angle_deg);
  Eigen::ArrayXXd k = Eigen::ArrayXXd::Zero(size, size);
  for (int i = 0; i < length; ++i) {
    const double t = i - 0.5 * (length - 1);
    const int col = std::clamp(int(std::lround(center + t * std::cos(a))), 0, size - 1);
    const int row = std::clamp(int(std::lround(center - t * std::sin(a))), 0, size - 1);
    k(row, col) = 1.0;
  }
  return k / k.sum();
}

namespace {
int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * n - 2 - i;
  return i;
}
}  // namespace

Image filter2d(const Image& image, const Eigen::ArrayXXd& kernel) {
  Image out(image.height, image.width, image.range);
  const int kr = int(kernel.rows()) / 2;
  const int kc = int(kernel.cols()) / 2;
  for (int row = 0; row < image.height; ++row) {
    for (int col = 0; col < image.width; ++col) {
      Eigen::Array<double, 1, 3> acc = Eigen::Array<double, 1, 3>::Zero();
      for (int dr = 0; dr < kernel.rows(); ++dr) {
        const int rr = reflect101(row + dr - kr, image.height);
        for (int dc = 0; dc < kernel.cols(); ++dc) {
          const double w = kernel(dr, dc);
          if (w == 0.0) continue;
          acc += w * image.pixels.row(image.index(rr, reflect101(col + dc - kc, image.width)));
        }
      }
      out.pixels.row(out.index(row, col)) = acc;
    }
  }
  return out;
}

Eigen::Matrix<double, 8, 8> jpeg_quant_table(int quality, bool chroma) {
  static constexpr int kLuma[64] = {16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
                                    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
                                    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
                                    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
  static constexpr int kChroma[64] = {17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
                                      24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
                                      99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
                                      99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};
  quality = std::clamp(quality, 1, 100);
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  const int* base = chroma ? kChroma : kLuma;
  Eigen::Matrix<double, 8, 8> q;
  for (int i = 0; i < 64; ++i) q(i / 8, i % 8) = std::clamp((base[i] * scale + 50) / 100, 1, 255);
  return q;
}

Image jpeg_roundtrip(const Image& image, int quality) {
  Eigen::Matrix<double, 8, 8> dct;
  for (int u = 0; u < 8; ++u) {
    const double alpha = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
    for (int x = 0; x < 8; ++x) dct(u, x) = alpha * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
  }
  const Eigen::Matrix<double, 8, 8> q_luma = jpeg_quant_table(quality, false);
  const Eigen::Matrix<double, 8, 8> q_chroma = jpeg_quant_table(quality, true);

  const double s = 255.0 / image.max_value();
  const int h = image.height;
  const int w = image.width;
  // Planes in YCbCr, byte scale, level-shifted.
  std::array<Eigen::ArrayXXd, 3> planes;
  for (auto& p : planes) p.resize(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const auto px = image.pixels.row(image.index(r, c)) * s;
      planes[0](r, c) = 0.299 * px(0) + 0.587 * px(1) + 0.114 * px(2) - 128.0;
      planes[1](r, c) = -0.168736 * px(0) - 0.331264 * px(1) + 0.5 * px(2);
      planes[2](r, c) = 0.5 * px(0) - 0.418688 * px(1) - 0.081312 * px(2);
    }
  }
  for (int ch = 0; ch < 3; ++ch) {
    const auto& q = ch == 0 ? q_luma : q_chroma;
    for (int br = 0; br < h; br += 8) {
      for (int bc = 0; bc < w; bc += 8) {
        Eigen::Matrix<double, 8, 8> block;
        for (int i = 0; i < 8; ++i) {
          for (int j = 0; j < 8; ++j) block(i, j) = planes[ch](std::min(br + i, h - 1), std::min(bc + j, w - 1));
        }
        Eigen::Matrix<double, 8, 8> coef = dct * block * dct.transpose();
        coef = (coef.array() / q.array()).round() * q.array();
        block = dct.transpose() * coef * dct;
        for (int i = 0; i < 8 && br + i < h; ++i) {
          for (int j = 0; j < 8 && bc + j < w; ++j) planes[ch](br + i, bc + j) = block(i, j);
        }
      }
    }
  }
  Image out(h, w, image.range);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double y = planes[0](r, c) + 128.0;
      const double cb = planes[1](r, c);
      const double cr = planes[2](r, c);
      out.pixels.row(out.index(r, c)) << y + 1.402 * cr, y - 0.344136 * cb - 0.714136 * cr, y + 1.772 * cb;
    }
  }
  out.pixels /= s;
  out.finalize();
  return out;
}

}  // namespace kernels

}  // namespace rangefuse
