#include "rangefuse/pipeline.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "rangefuse/degradations.h"
#include "rangefuse/errors.h"

namespace rangefuse {
namespace {

constexpr double kShift = 1e4;
constexpr double kStuffLogit = 30.0;
constexpr double kObjectLogit = 0.4;
constexpr double kColorLogit = 20.0;
constexpr double kNoObjectBias = 2.0;
constexpr double kRoadIntensity = 0.4;
constexpr Eigen::Index kMaxTrainingRows = 8192;

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t i) {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

void require_path(const std::string& path, const char* what) {
  if (!path.empty() && !std::filesystem::exists(path)) {
    throw ConfigurationError(std::string(what) + " path does not exist: " + path);
  }
}

}  // namespace

void PipelineConfig::validate() const {
  fov().validate();
  if (rv_height <= 0 || rv_width <= 0) throw ConfigurationError("range-view dimensions must be positive");
  if (scales.empty()) throw ConfigurationError("at least one scale is required");
  for (int s : scales) {
    if (s <= 0) throw ConfigurationError("scales must be positive");
  }
  if (sampled_points <= 0) throw ConfigurationError("sampled_points must be positive");
  if (min_points < 0) throw ConfigurationError("min_points must be >= 0");
  if (frames <= 0) throw ConfigurationError("frames must be positive");
  if (train_steps < 0 || augmentations_per_image <= 0) throw ConfigurationError("training counts must be positive");
  if (!(learning_rate > 0.0)) throw ConfigurationError("learning_rate must be positive");
  require_path(camera_rig, "camera rig");
  require_path(uncertainty_checkpoint, "uncertainty checkpoint");
  require_path(fusion_checkpoint, "fusion checkpoint");
}

FovConfig PipelineConfig::fov() const {
  try {
    return rangefuse::fov_preset(fov_preset);
  } catch (const Error& e) {
    throw ConfigurationError(e.what());
  }
}

nlohmann::json config_to_json(const PipelineConfig& c) {
  return {{"fov_preset", c.fov_preset},
          {"rv_height", c.rv_height},
          {"rv_width", c.rv_width},
          {"camera_rig", c.camera_rig},
          {"scales", c.scales},
          {"loss_weights", {{"cls", c.loss_weights.cls}, {"mask", c.loss_weights.mask}, {"dice", c.loss_weights.dice},
                            {"unc", c.uncertainty_weight}}},
          {"sampled_points", c.sampled_points},
          {"min_points", c.min_points},
          {"seeds", {{"scene", c.scene_seed}, {"train", c.train_seed}, {"drift", c.drift_seed}}},
          {"frames", c.frames},
          {"train_steps", c.train_steps},
          {"augmentations_per_image", c.augmentations_per_image},
          {"learning_rate", c.learning_rate},
          {"confidence_threshold", c.confidence_threshold},
          {"uncertainty_checkpoint", c.uncertainty_checkpoint},
          {"fusion_checkpoint", c.fusion_checkpoint},
          {"uninformative_camera", c.uninformative_camera}};
}

PipelineConfig config_from_json(const nlohmann::json& doc) {
  PipelineConfig c;
  try {
    c.fov_preset = doc.value("fov_preset", c.fov_preset);
    c.rv_height = doc.value("rv_height", c.rv_height);
    c.rv_width = doc.value("rv_width", c.rv_width);
    c.camera_rig = doc.value("camera_rig", c.camera_rig);
    c.scales = doc.value("scales", c.scales);
    if (doc.contains("dataset")) {
      const auto name = doc.at("dataset").get<std::string>();
      c.loss_weights = name == "nuscenes" ? LossWeights::nuscenes() : LossWeights::waymo();
      c.sampled_points = name == "nuscenes" ? 12544 : 25088;
      c.fov_preset = name;
    }
    if (doc.contains("loss_weights")) {
      const auto& w = doc.at("loss_weights");
      c.loss_weights.cls = w.value("cls", c.loss_weights.cls);
      c.loss_weights.mask = w.value("mask", c.loss_weights.mask);
      c.loss_weights.dice = w.value("dice", c.loss_weights.dice);
      c.uncertainty_weight = w.value("unc", c.uncertainty_weight);
    }
    c.sampled_points = doc.value("sampled_points", c.sampled_points);
    c.min_points = doc.value("min_points", c.min_points);
    if (!doc.contains("seeds")) throw ConfigurationError("config must set seeds explicitly");
    const auto& seeds = doc.at("seeds");
    c.scene_seed = seeds.at("scene").get<std::uint64_t>();
    c.train_seed = seeds.at("train").get<std::uint64_t>();
    c.drift_seed = seeds.at("drift").get<std::uint64_t>();
    c.frames = doc.value("frames", c.frames);
    c.train_steps = doc.value("train_steps", c.train_steps);
    c.augmentations_per_image = doc.value("augmentations_per_image", c.augmentations_per_image);
    c.learning_rate = doc.value("learning_rate", c.learning_rate);
    c.confidence_threshold = doc.value("confidence_threshold", c.confidence_threshold);
    c.uncertainty_checkpoint = doc.value("uncertainty_checkpoint", c.uncertainty_checkpoint);
    c.fusion_checkpoint = doc.value("fusion_checkpoint", c.fusion_checkpoint);
    c.uninformative_camera = doc.value("uninformative_camera", c.uninformative_camera);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError(std::string("malformed pipeline config: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  // Relative paths resolve against the config's directory.
  for (const char* key : {"camera_rig", "uncertainty_checkpoint", "fusion_checkpoint"}) {
    if (doc.contains(key) && doc[key].is_string() && !doc[key].get<std::string>().empty()) {
      const std::filesystem::path p = doc[key].get<std::string>();
      if (p.is_relative()) doc[key] = (path.parent_path() / p).string();
    }
  }
  return config_from_json(doc);
}

FeatureMap encode_lidar(const RangeImage& rv, const RvMapping& mapping, const PointCloud& cloud) {
  FeatureMap f(rv.height, rv.width, channel::kCount, 1);
  for (int r = 0; r < rv.height; ++r) {
    for (int c = 0; c < rv.width; ++c) {
      const int j = mapping.nearest({r, c});
      if (j < 0) continue;
      const Eigen::Vector3d p = cloud.xyz(j);
      auto px = f.pixel(r, c);
      const bool object = p.z() > kObjectHeight;
      const double x = p.x() / kCoordinateScale;
      const double y = p.y() / kCoordinateScale;
      px(channel::kObject) = object ? 1.0 : 0.0;
      px(channel::kGround) = object ? 0.0 : 1.0;
      px(channel::kX) = x;
      px(channel::kY) = y;
      px(channel::kRadiusSq) = x * x + y * y;
      px(channel::kOne) = 1.0;
      if (!object) {
        const bool road = cloud.intensity(j) < kRoadIntensity;
        px(road ? channel::kRoadTag : channel::kTerrainTag) = 1.0;
      }
    }
  }
  return f;
}

FeatureMap pool_features(const FeatureMap& features, int stride) {
  if (stride <= 0) throw ParameterError("stride must be positive");
  const int h = strided_extent(features.height, stride);
  const int w = strided_extent(features.width, stride);
  FeatureMap out(h, w, int(features.channels()), features.stride * stride);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(Eigen::Index(h) * w);
  for (int r = 0; r < features.height; ++r) {
    for (int c = 0; c < features.width; ++c) {
      if (!(features.pixel(r, c)(channel::kOne) > 0.0)) continue;
      const auto cell = out.index(r / stride, c / stride);
      out.data.row(cell) += features.pixel(r, c);
      count(cell) += 1.0;
    }
  }
  for (Eigen::Index i = 0; i < out.pixel_count(); ++i) {
    if (count(i) > 0.0) out.data.row(i) /= count(i);
  }
  return out;
}

FeatureMap encode_camera(const Image& image, int stride) {
  if (stride <= 0) throw ParameterError("stride must be positive");
  const Image unit = image.range == PixelRange::kUnit ? image : image.to_unit();
  const int h = strided_extent(image.height, stride);
  const int w = strided_extent(image.width, stride);
  FeatureMap out(h, w, channel::kCount, stride);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(Eigen::Index(h) * w);
  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) {
      const double red = unit.at(r, c, 0);
      const double green = unit.at(r, c, 1);
      const double blue = unit.at(r, c, 2);
      const auto cell = out.index(r / stride, c / stride);
      out.data(cell, channel::kRed) += std::max(0.0, red - std::max(green, blue));
      out.data(cell, channel::kGreen) += std::max(0.0, green - std::max(red, blue));
      out.data(cell, channel::kBlue) += std::max(0.0, blue - std::max(red, green));
      out.data(cell, channel::kGray) += std::min({red, green, blue});
      count(cell) += 1.0;
    }
  }
  for (Eigen::Index i = 0; i < out.pixel_count(); ++i) out.data.row(i) /= count(i);
  return out;
}

std::vector<ObjectCluster> cluster_objects(const RangeImage& rv, const RvMapping& mapping, const PointCloud& cloud,
                                           int stride) {
  const int h = rv.height;
  const int w = rv.width;
  auto flat = [w](int r, int c) { return std::size_t(r) * std::size_t(w) + std::size_t(c); };
  auto is_object = [&](int r, int c) { return rv.valid(r, c) && rv.z(r, c) > kObjectHeight; };
  DisjointSets sets(std::size_t(h) * std::size_t(w));
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!is_object(r, c)) continue;
      for (const auto& [dr, dc] : {std::pair{0, 1}, std::pair{1, -1}, std::pair{1, 0}, std::pair{1, 1}}) {
        const int rr = r + dr;
        const int cc = (c + dc + w) % w;  // azimuth wraps
        if (rr >= h || !is_object(rr, cc)) continue;
        if (std::abs(rv.range(r, c) - rv.range(rr, cc)) < kClusterRangeGap) sets.unite(flat(r, c), flat(rr, cc));
      }
    }
  }

  std::map<std::size_t, std::vector<PixelCoord>> groups;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (is_object(r, c)) groups[sets.find(flat(r, c))].push_back({r, c});
    }
  }
  std::vector<ObjectCluster> clusters;
  for (const auto& [root, pixels] : groups) {
    ObjectCluster cl;
    std::vector<Eigen::Vector2d> xy;
    std::set<std::pair<int, int>> cells;
    for (const auto& px : pixels) {
      for (int j : mapping.points_at(px)) cl.points.push_back(j);
      xy.push_back(cloud.xyz(mapping.nearest(px)).head<2>());
      cells.insert({px.row / stride, px.col / stride});
    }
    if (int(cl.points.size()) < kClusterMinPoints) continue;
    for (const auto& p : xy) cl.centroid += p;
    cl.centroid /= double(xy.size());
    for (const auto& p : xy) cl.radius = std::max(cl.radius, (p - cl.centroid).norm());
    for (const auto& [r, c] : cells) cl.cells.push_back({r, c});
    std::sort(cl.points.begin(), cl.points.end());
    clusters.push_back(std::move(cl));
  }
  return clusters;
}

Eigen::MatrixXd build_queries(const std::vector<ObjectCluster>& clusters, const FeatureMap& fused) {
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(Eigen::Index(clusters.size()) + 2, channel::kCount);
  q(0, channel::kRoadTag) = kStuffGain;
  q(0, channel::kOne) = -0.5 * kStuffGain;
  q(1, channel::kTerrainTag) = kStuffGain;
  q(1, channel::kOne) = -0.5 * kStuffGain;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    const auto& cl = clusters[i];
    auto row = q.row(Eigen::Index(i) + 2);
    const Eigen::Vector2d c = cl.centroid / kCoordinateScale;
    const double rho = (cl.radius + kRadiusMargin) / kCoordinateScale;
    row(channel::kObject) = kObjectGain;
    row(channel::kX) = 2.0 * kDistanceGain * c.x();
    row(channel::kY) = 2.0 * kDistanceGain * c.y();
    row(channel::kRadiusSq) = -kDistanceGain;
    row(channel::kOne) = kDistanceGain * (rho * rho - c.squaredNorm()) - 0.5 * kObjectGain;
    Eigen::RowVectorXd color = Eigen::RowVectorXd::Zero(channel::kCount);
    for (const auto& cell : cl.cells) color += fused.pixel(cell.row, cell.col);
    if (!cl.cells.empty()) color /= double(cl.cells.size());
    row.segment(channel::kRed, 4) = color.segment(channel::kRed, 4);
  }
  return q;
}

DecoderHeads make_heads(const ClassSplit& split, int neighbors) {
  constexpr int d = channel::kCount;
  DecoderHeads heads;

  NeighborMlp& nb = heads.neighbor;
  nb.w1 = RowMatrixXd::Zero(Eigen::Index(neighbors) * d, 2 * d);
  for (int k = 0; k < neighbors; ++k) {
    nb.w1.block(Eigen::Index(k) * d, 0, d, d) = RowMatrixXd::Identity(d, d) / double(neighbors);
  }
  nb.b1 = Eigen::RowVectorXd::Zero(2 * d);
  nb.b1.head(d).setConstant(kShift);
  nb.w2 = RowMatrixXd::Zero(2 * d, d);
  nb.w2.topRows(d) = RowMatrixXd::Identity(d, d);
  nb.b2 = Eigen::RowVectorXd::Constant(d, -kShift);

  Eigen::RowVectorXd keep = Eigen::RowVectorXd::Ones(d);
  keep.segment(channel::kRed, 4).setZero();
  MaskEmbedMlp& me = heads.mask_embed;
  me.w1 = RowMatrixXd::Identity(d, d);
  me.b1 = Eigen::RowVectorXd::Constant(d, kShift);
  me.w2 = RowMatrixXd::Identity(d, d);
  me.b2 = Eigen::RowVectorXd::Zero(d);
  me.w3 = keep.asDiagonal();
  me.b3 = -kShift * keep;

  ClassHead& ch = heads.class_head;
  ch.weight = RowMatrixXd::Zero(d, split.class_count() + 1);
  ch.bias = Eigen::RowVectorXd::Zero(split.class_count() + 1);
  const int road = split.column_of(synthetic::kRoad);
  const int terrain = split.column_of(synthetic::kTerrain);
  const int car = split.column_of(synthetic::kCar);
  const int truck = split.column_of(synthetic::kTruck);
  if (road < 0 || terrain < 0 || car < 0 || truck < 0) {
    throw ConfigurationError("class split lacks the synthetic scene classes");
  }
  ch.weight(channel::kRoadTag, road) = kStuffLogit / kStuffGain;
  ch.weight(channel::kTerrainTag, terrain) = kStuffLogit / kStuffGain;
  ch.weight(channel::kObject, car) = kObjectLogit / kObjectGain;
  ch.weight(channel::kRed, car) = kColorLogit;
  ch.weight(channel::kBlue, car) = -kColorLogit;
  ch.weight(channel::kObject, truck) = kObjectLogit / kObjectGain;
  ch.weight(channel::kBlue, truck) = kColorLogit;
  ch.weight(channel::kRed, truck) = -kColorLogit;
  ch.bias(split.no_object_column()) = kNoObjectBias;
  return heads;
}

Frame frame_from_scene(const synthetic::Scene& scene) {
  return {scene.cloud, scene.labels, scene.cameras, scene.images};
}

Pipeline::Pipeline(PipelineConfig config, ClassSplit split, UncertaintyHead head, FusionParams fusion)
    : config_(std::move(config)),
      split_(std::move(split)),
      head_(std::move(head)),
      fusion_(std::move(fusion)),
      heads_(make_heads(split_)) {
  config_.validate();
  check_shapes(head_.at(config_.stride()));
  check_shapes(fusion_.at(config_.stride()), channel::kCount);
}

CamToRvMap Pipeline::view_map(const Frame& frame) const {
  return build_view_map(frame.cloud, frame.cameras, config_.fov(), config_.rv_height, config_.rv_width);
}

FrameResult Pipeline::run(const Frame& frame, const RunOptions& options) const {
  return run(frame, view_map(frame), frame.images, options);
}

FrameResult Pipeline::run(const Frame& frame, const CamToRvMap& view_map, const std::vector<Image>& images,
                          const RunOptions& options) const {
  const int s = config_.stride();
  if (images.size() != frame.cameras.size()) throw ShapeError("one image per camera is required");
  const auto [rv, mapping] = rasterize(frame.cloud, config_.fov(), config_.rv_height, config_.rv_width);

  FrameResult out;
  const FeatureMap lidar_full = encode_lidar(rv, mapping, frame.cloud);
  out.lidar = pool_features(lidar_full, s);

  const bool blank = options.uninformative_camera || config_.uninformative_camera;
  std::vector<FeatureMap> camera;
  for (const auto& img : images) {
    camera.push_back(blank ? FeatureMap(strided_extent(img.height, s), strided_extent(img.width, s), channel::kCount, s)
                           : encode_camera(img, s));
  }
  WarpedFeatures warped = warp_features(camera, view_map, s);
  out.camera = std::move(warped.features);
  out.camera.stride = s;
  out.covered = std::move(warped.covered);

  out.uncertainty = options.force_full_uncertainty ? ScalarField(out.camera.height, out.camera.width, 1.0)
                                                   : head_.score(out.camera);
  const FeatureMap modulated = modulate(out.camera, out.uncertainty);
  const FeatureMap attended = deformable_attend(out.lidar, modulated, fusion_.at(s), &out.covered);
  out.fused = fuse(out.lidar, attended);

  FeatureMap mask_features = lidar_full;
  for (int r = 0; r < mask_features.height; ++r) {
    for (int c = 0; c < mask_features.width; ++c) mask_features.pixel(r, c) += attended.pixel(r / s, c / s);
  }

  const auto clusters = cluster_objects(rv, mapping, frame.cloud, s);
  const Eigen::MatrixXd queries = build_queries(clusters, out.fused);
  out.prediction = decode(heads_, queries, mask_features, rv, mapping, frame.cloud);
  out.labels = panoptic_inference(out.prediction.class_logits, out.prediction.mask_logits, split_,
                                  {config_.confidence_threshold, split_.min_points});

  const auto covered = out.covered.count();
  if (covered > 0) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < out.covered.size(); ++i) {
      if (out.covered(i)) sum += out.uncertainty.values(i);
    }
    out.mean_uncertainty = sum / double(covered);
  }
  return out;
}

InstabilityBatch uncertainty_training_batch(const std::vector<Frame>& frames, int stride, int augmentations,
                                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<InstabilityBatch> parts;
  for (const auto& frame : frames) {
    for (const auto& img : frame.images) {
      const FeatureMap clean = encode_camera(img, stride);
      for (int a = 0; a < augmentations; ++a) {
        const auto spec = sample_spec(rng);
        const FeatureMap aug = spec ? encode_camera(apply(img, *spec), stride) : clean;
        parts.push_back(make_batch(aug, instability_target(clean, aug)));
      }
    }
  }
  InstabilityBatch all = concat(parts);
  if (all.size() <= kMaxTrainingRows) return all;
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(all.size()));
  std::iota(rows.begin(), rows.end(), Eigen::Index(0));
  std::shuffle(rows.begin(), rows.end(), rng);
  rows.resize(std::size_t(kMaxTrainingRows));
  std::sort(rows.begin(), rows.end());
  InstabilityBatch sub;
  sub.features = all.features(rows, Eigen::all);
  sub.target = all.target(rows);
  return sub;
}

UncertaintyHead train_uncertainty_head(const InstabilityBatch& batch, int stride, int steps, double lr,
                                       std::uint64_t seed, TrainingLog* log) {
  const std::pair<int, int> scale{stride, int(batch.features.cols())};
  UncertaintyHead head = UncertaintyHead::create(std::span(&scale, 1), seed);
  MlpParams& params = head.scales.at(stride);
  for (int step = 0; step < steps; ++step) {
    const double loss = train_step(params, batch, lr);
    if (log) log->losses.push_back(loss);
  }
  if (log) log->losses.push_back(mean_huber_loss(params, batch));
  return head;
}

std::vector<Frame> synthetic_frames(const PipelineConfig& config) {
  config.validate();
  std::vector<Frame> frames;
  synthetic::SceneConfig sc;
  sc.fov = config.fov();
  sc.lidar_height = config.rv_height;
  sc.lidar_width = config.rv_width;
  if (!config.camera_rig.empty()) sc.cameras = read_calibration(config.camera_rig);
  for (int i = 0; i < config.frames; ++i) {
    sc.seed = config.scene_seed + std::uint64_t(i);
    frames.push_back(frame_from_scene(synthetic::generate_scene(sc)));
  }
  return frames;
}

Pipeline build_pipeline(const PipelineConfig& config, const std::vector<Frame>& frames) {
  config.validate();
  const int s = config.stride();
  UncertaintyHead head;
  if (!config.uncertainty_checkpoint.empty()) {
    head = load_checkpoint(config.uncertainty_checkpoint);
  } else {
    const InstabilityBatch batch = uncertainty_training_batch(frames, s, config.augmentations_per_image, config.train_seed);
    head = train_uncertainty_head(batch, s, config.train_steps, config.learning_rate, config.train_seed);
  }
  FusionParams fusion;
  if (!config.fusion_checkpoint.empty()) {
    fusion = load_fusion_params(config.fusion_checkpoint);
  } else {
    fusion.scales.emplace(s, init_deformable(channel::kCount));
  }
  return Pipeline(config, synthetic::scene_class_split(config.min_points), std::move(head), std::move(fusion));
}

PanopticLabels evaluation_labels(const Frame& frame, const ClassSplit& split) {
  return min_points_filter(frame.labels, split.min_points, split);
}

}  // namespace rangefuse
