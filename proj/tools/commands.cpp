#include "commands.h"

#include <json.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "rangefuse/decoder3d.h"
#include "rangefuse/degradations.h"
#include "rangefuse/feature_map.h"
#include "rangefuse/fusion.h"
#include "rangefuse/geometry_rv.h"
#include "rangefuse/hungarian.h"
#include "rangefuse/labels.h"
#include "rangefuse/parallel.h"
#include "rangefuse/panoptic.h"
#include "rangefuse/pipeline.h"
#include "rangefuse/robustness.h"
#include "rangefuse/synthetic_scene.h"
#include "rangefuse/tensor_io.h"
#include "rangefuse/uncertainty.h"
#include "rangefuse/view_transform.h"
#include "rangefuse/waymo_labels.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace rangefuse::cli {
namespace {

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

Eigen::MatrixXd read_matrix(const fs::path& path) {
  const Tensor t = read_tensor(path);
  if (t.rank() != 2) throw ShapeError(path.string() + ": expected a rank-2 tensor");
  const auto v = t.values<double>();
  return Eigen::Map<const RowMatrixXd>(v.data(), Eigen::Index(t.dims()[0]), Eigen::Index(t.dims()[1]));
}

// --- project --------------------------------------------------------------

void add_project(CLI::App& app) {
  auto* cmd = app.add_subcommand("project", "Rasterize a point cloud into a range image");
  struct Opts {
    std::string cloud, out, fov = "nuscenes";
    int height = 64, width = 1024;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--cloud", o->cloud, "Point cloud .bin (float32 x, y, z, intensity)")->required();
  cmd->add_option("--fov", o->fov, "FOV preset: nuscenes, kitti, waymo");
  cmd->add_option("--height", o->height, "Range image rows");
  cmd->add_option("--width", o->width, "Range image columns");
  cmd->add_option("--out", o->out, "Output directory")->required();
  cmd->callback([o] {
    const PointCloud cloud = read_point_cloud_bin(o->cloud);
    const auto [rv, mapping] = rasterize(cloud, fov_preset(o->fov), o->height, o->width);
    fs::create_directories(o->out);
    write_tensor(fs::path(o->out) / "range_image.rft", range_image_tensor(rv));
    write_tensor(fs::path(o->out) / "forward.rft", forward_mapping_tensor(mapping));
    write_tensor(fs::path(o->out) / "nearest.rft", nearest_index_tensor(mapping));
    const json summary{{"schema_version", kReportSchemaVersion},
                       {"points", cloud.size()},
                       {"out_of_fov", mapping.out_of_fov_count()},
                       {"valid_pixels", rv.valid.count()},
                       {"height", o->height},
                       {"width", o->width},
                       {"fov", o->fov}};
    write_json(fs::path(o->out) / "summary.json", summary);
    std::cout << summary.dump() << '\n';
  });
}

// --- viewmap --------------------------------------------------------------

void add_viewmap(CLI::App& app) {
  auto* cmd = app.add_subcommand("viewmap", "Build the camera-pixel to range-view lookup");
  struct Opts {
    std::string cloud, calib, out, fov = "nuscenes";
    int height = 64, width = 1024;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--cloud", o->cloud, "Point cloud .bin")->required();
  cmd->add_option("--calib", o->calib, "Calibration JSON")->required();
  cmd->add_option("--fov", o->fov, "FOV preset");
  cmd->add_option("--height", o->height, "Range image rows");
  cmd->add_option("--width", o->width, "Range image columns");
  cmd->add_option("--out", o->out, "Output directory")->required();
  cmd->callback([o] {
    const PointCloud cloud = read_point_cloud_bin(o->cloud);
    const auto cams = read_calibration(o->calib);
    const auto map = build_view_map(cloud, cams, fov_preset(o->fov), o->height, o->width);
    fs::create_directories(o->out);
    json summary{{"schema_version", kReportSchemaVersion}, {"cameras", json::array()}};
    for (int m = 0; m < map.camera_count(); ++m) {
      const int h = map.camera_height(m);
      const int w = map.camera_width(m);
      std::vector<std::int32_t> cells(std::size_t(h) * std::size_t(w) * 2, -1);
      for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
          if (const auto px = map.at(m, r, c)) {
            const std::size_t i = (std::size_t(r) * std::size_t(w) + std::size_t(c)) * 2;
            cells[i] = px->row;
            cells[i + 1] = px->col;
          }
        }
      }
      write_tensor(fs::path(o->out) / ("viewmap_cam" + std::to_string(m) + ".rft"),
                   Tensor::from<std::int32_t>({std::uint64_t(h), std::uint64_t(w), 2}, cells));
      summary["cameras"].push_back({{"height", h}, {"width", w}, {"mapped", map.mapped_count(m)}});
    }
    write_json(fs::path(o->out) / "summary.json", summary);
    std::cout << summary.dump() << '\n';
  });
}

// --- augment --------------------------------------------------------------

void add_augment(CLI::App& app) {
  auto* cmd = app.add_subcommand("augment", "Apply a photometric degradation to a PPM image");
  struct Opts {
    std::string input, output, kind, params, reference, pool;
    std::uint64_t seed = 0;
    bool random = false;
    bool list = false;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--input", o->input, "Input PPM (P6)");
  cmd->add_option("--output", o->output, "Output PPM; the spec is written next to it as <output>.json");
  cmd->add_option("--kind", o->kind, "Degradation name");
  cmd->add_option("--params", o->params, "JSON object of parameters; missing ones take range midpoints");
  cmd->add_option("--seed", o->seed, "Random seed");
  cmd->add_option("--reference", o->reference, "Reference PPM or built-in name (dark, urban, colorful)");
  cmd->add_option("--pool", o->pool, "Directory of reference PPMs for --random");
  cmd->add_flag("--random", o->random, "Draw the kind and parameters from the augmentation protocol");
  cmd->add_flag("--list", o->list, "Print every kind with its parameter ranges");
  cmd->callback([o] {
    if (o->list) {
      json kinds = json::array();
      for (auto kind : all_kinds()) {
        json params = json::array();
        for (const auto& r : param_ranges(kind)) {
          params.push_back({{"name", r.name}, {"lo", r.lo}, {"hi", r.hi}, {"integral", r.integral}});
        }
        kinds.push_back({{"kind", kind_name(kind)}, {"params", params}});
      }
      std::cout << kinds.dump(2) << '\n';
      return;
    }
    if (o->input.empty() || o->output.empty()) throw ParameterError("--input and --output are required");
    const Image image = read_ppm(o->input);
    const ReferencePool pool = o->pool.empty() ? builtin_reference_pool() : load_reference_pool(o->pool);
    DegradationSpec spec;
    bool identity = false;
    if (o->random) {
      std::mt19937_64 rng(o->seed);
      const auto drawn = sample_spec(rng, pool);
      identity = !drawn;
      if (drawn) spec = *drawn;
    } else {
      if (o->kind.empty()) throw ParameterError("--kind is required unless --random is given");
      spec.kind = kind_from_name(o->kind);
      spec.params = default_params(spec.kind);
      if (!o->params.empty()) {
        const json p = json::parse(o->params);
        for (const auto& [k, v] : p.items()) spec.params[k] = v.get<double>();
      }
      spec.seed = o->seed;
      if (spec.kind == DegradationKind::kHistogramMatch) {
        if (o->reference.empty()) throw ParameterError("histogram_match needs --reference");
        if (fs::exists(o->reference)) {
          spec.reference = read_ppm(o->reference);
          spec.reference_name = fs::path(o->reference).stem().string();
        } else {
          spec.reference = builtin_reference_pool().get(o->reference);
          spec.reference_name = o->reference;
        }
      }
    }
    const Image out = identity ? image : apply(image, spec);
    write_ppm(o->output, out);
    const json sidecar = identity ? json{{"kind", nullptr}, {"seed", o->seed}} : spec_to_json(spec);
    write_json(o->output + ".json", sidecar);
    std::cout << sidecar.dump() << '\n';
  });
}

// --- train-uncertainty ----------------------------------------------------

InstabilityBatch batch_from_dir(const fs::path& dir) {
  std::vector<InstabilityBatch> parts;
  std::vector<fs::path> clean_files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 10 && name.ends_with("_clean.rft")) clean_files.push_back(entry.path());
  }
  std::sort(clean_files.begin(), clean_files.end());
  for (const auto& clean_path : clean_files) {
    const std::string stem = clean_path.filename().string().substr(0, clean_path.filename().string().size() - 10);
    const FeatureMap clean = feature_map_from_tensor(read_tensor(clean_path), 1);
    for (int k = 0;; ++k) {
      const fs::path aug_path = dir / (stem + "_aug" + std::to_string(k) + ".rft");
      if (!fs::exists(aug_path)) break;
      const FeatureMap aug = feature_map_from_tensor(read_tensor(aug_path), 1);
      std::optional<PixelMask> covered;
      const fs::path mask_path = dir / (stem + "_covered.rft");
      if (fs::exists(mask_path)) covered = mask_from_tensor(read_tensor(mask_path));
      parts.push_back(make_batch(aug, instability_target(clean, aug), covered));
    }
  }
  if (parts.empty()) throw IoError("no <name>_clean.rft / <name>_aug<k>.rft pairs in " + dir.string());
  return concat(parts);
}

void add_train_uncertainty(CLI::App& app) {
  auto* cmd = app.add_subcommand("train-uncertainty", "Train the feature-instability head");
  struct Opts {
    std::string features_dir, config, out;
    int epochs = 500, synthetic_dim = 0, per_level = 200, stride = 4;
    double lr = kDefaultLearningRate;
    std::uint64_t seed = 0;
    bool adamw = false;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--features-dir", o->features_dir,
                  "Directory of <name>_clean.rft with <name>_aug<k>.rft (and optional <name>_covered.rft)");
  cmd->add_option("--config", o->config, "Pipeline config; trains on its synthetic scenes");
  cmd->add_option("--synthetic-dim", o->synthetic_dim, "Train on the synthetic noise task with this width");
  cmd->add_option("--per-level", o->per_level, "Synthetic samples per severity");
  cmd->add_option("--stride", o->stride, "Scale key stored in the checkpoint");
  cmd->add_option("--epochs", o->epochs, "Full-batch steps");
  cmd->add_option("--lr", o->lr, "Learning rate");
  cmd->add_option("--seed", o->seed, "Initialization seed");
  cmd->add_flag("--adamw", o->adamw, "Use AdamW instead of gradient descent");
  cmd->add_option("--out", o->out, "Checkpoint directory")->required();
  cmd->callback([o] {
    InstabilityBatch batch;
    std::optional<InstabilityBatch> held_out;
    int stride = o->stride;
    if (o->synthetic_dim > 0) {
      const auto sev = synthetic_severities();
      batch = synthetic_instability_batch(o->synthetic_dim, sev, o->per_level, o->seed);
      held_out = synthetic_instability_batch(o->synthetic_dim, sev, o->per_level, o->seed + 1);
    } else if (!o->config.empty()) {
      const PipelineConfig config = load_config(o->config);
      stride = config.stride();
      batch = uncertainty_training_batch(synthetic_frames(config), stride, config.augmentations_per_image, o->seed);
    } else if (!o->features_dir.empty()) {
      batch = batch_from_dir(o->features_dir);
    } else {
      throw ParameterError("give --features-dir, --config or --synthetic-dim");
    }
    const std::pair<int, int> scale{stride, int(batch.features.cols())};
    UncertaintyHead head = UncertaintyHead::create(std::span(&scale, 1), o->seed);
    MlpParams& params = head.scales.at(stride);
    AdamW opt;
    fs::create_directories(o->out);
    std::ofstream curve(fs::path(o->out) / "loss_curve.csv");
    curve << "step,loss\n";
    for (int step = 0; step < o->epochs; ++step) {
      curve << step << ',' << format_double(train_step(params, batch, o->lr, o->adamw ? &opt : nullptr)) << '\n';
    }
    const double final_loss = mean_huber_loss(params, batch);
    curve << o->epochs << ',' << format_double(final_loss) << '\n';
    save_checkpoint(o->out, head);
    json summary{{"schema_version", kReportSchemaVersion},
                 {"samples", batch.size()},
                 {"epochs", o->epochs},
                 {"final_loss", final_loss}};
    if (held_out) {
      const Eigen::VectorXd pred = mlp_forward(params, held_out->features);
      summary["held_out_spearman"] =
          spearman(std::span(pred.data(), std::size_t(pred.size())),
                   std::span(held_out->target.data(), std::size_t(held_out->target.size())));
    }
    write_json(fs::path(o->out) / "training.json", summary);
    std::cout << summary.dump() << '\n';
  });
}

// --- fuse -----------------------------------------------------------------

void add_fuse(CLI::App& app) {
  auto* cmd = app.add_subcommand("fuse", "Uncertainty-modulated deformable fusion of one scale");
  struct Opts {
    std::string lidar, camera, uncertainty, checkpoint, params, covered, out;
    int stride = 4;
    bool full_uncertainty = false;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--lidar-feat", o->lidar, "LiDAR features (H, W, D)")->required();
  cmd->add_option("--cam-feat", o->camera, "RV-aligned camera features (H, W, D)")->required();
  cmd->add_option("--uncertainty", o->uncertainty, "Uncertainty field (H, W)");
  cmd->add_option("--uncertainty-checkpoint", o->checkpoint, "Predict the uncertainty with this head instead");
  cmd->add_flag("--full-uncertainty", o->full_uncertainty, "Force U = 1 everywhere");
  cmd->add_option("--covered", o->covered, "Camera coverage mask (H, W)");
  cmd->add_option("--params", o->params, "Fusion parameter directory; defaults to the initial parameters");
  cmd->add_option("--stride", o->stride, "Scale of the inputs");
  cmd->add_option("--out", o->out, "Fused features output")->required();
  cmd->callback([o] {
    const FeatureMap lidar = feature_map_from_tensor(read_tensor(o->lidar), o->stride);
    const FeatureMap camera = feature_map_from_tensor(read_tensor(o->camera), o->stride);
    require_same_shape(lidar, camera, "fuse");
    ScalarField u(lidar.height, lidar.width, 0.0);
    if (o->full_uncertainty) {
      u = ScalarField(lidar.height, lidar.width, 1.0);
    } else if (!o->uncertainty.empty()) {
      u = scalar_field_from_tensor(read_tensor(o->uncertainty));
    } else if (!o->checkpoint.empty()) {
      FeatureMap keyed = camera;
      u = load_checkpoint(o->checkpoint).score(keyed);
    } else {
      throw ParameterError("give --uncertainty, --uncertainty-checkpoint or --full-uncertainty");
    }
    const DeformableParams params =
        o->params.empty() ? init_deformable(int(lidar.channels())) : load_fusion_params(o->params).at(o->stride);
    std::optional<PixelMask> covered;
    if (!o->covered.empty()) covered = mask_from_tensor(read_tensor(o->covered));
    const FeatureMap fused = fuse_scale(lidar, camera, u, params, covered ? &*covered : nullptr);
    write_tensor(o->out, to_tensor(fused));
  });
}

// --- eval-loss ------------------------------------------------------------

LossWeights dataset_weights(const std::string& name) {
  if (name == "nuscenes") return LossWeights::nuscenes();
  if (name == "waymo") return LossWeights::waymo();
  if (name == "kitti" || name == "semantic_kitti") return LossWeights::semantic_kitti();
  throw ParameterError("unknown dataset preset " + name);
}

void add_eval_loss(CLI::App& app) {
  auto* cmd = app.add_subcommand("eval-loss", "Matched set loss of predicted logits against labels");
  struct Opts {
    std::string class_logits, mask_logits, labels, classes, dataset = "nuscenes", out;
    int points = 0;
    double importance = 0.75;
    std::uint64_t seed = 0;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--class-logits", o->class_logits, "(N_q, classes + 1) tensor")->required();
  cmd->add_option("--mask-logits", o->mask_logits, "(N_q, N) tensor")->required();
  cmd->add_option("--labels", o->labels, "Packed u32 label file")->required();
  cmd->add_option("--classes", o->classes, "Class-split JSON")->required();
  cmd->add_option("--dataset", o->dataset, "Loss-weight preset: nuscenes, waymo, kitti");
  cmd->add_option("--points", o->points, "Sampled points N_p; 0 uses every point");
  cmd->add_option("--importance-ratio", o->importance, "Fraction of importance-sampled points");
  cmd->add_option("--seed", o->seed, "Sampling seed");
  cmd->add_option("--out", o->out, "Optional JSON output");
  cmd->callback([o] {
    const Eigen::MatrixXd cls = read_matrix(o->class_logits);
    Eigen::MatrixXd masks = read_matrix(o->mask_logits);
    const PanopticLabels labels = read_labels(o->labels);
    const ClassSplit split = read_class_split(o->classes);
    if (Eigen::Index(labels.size()) != masks.cols()) throw ShapeError("label count differs from mask logit columns");
    const GroundTruth gt = extract_segments(labels, split);
    std::vector<int> columns;
    if (o->points > 0 && o->points < masks.cols()) {
      std::mt19937_64 rng(o->seed);
      columns = sample_points(masks, o->points, o->importance, rng);
      masks = Eigen::MatrixXd(masks(Eigen::all, columns));
    }
    const LossWeights w = dataset_weights(o->dataset);
    const MatchResult match = hungarian(match_costs(cls, masks, gt, split, w, columns));
    const LossBreakdown loss = panoptic_loss(cls, masks, gt, match, split, w, columns);
    const json doc{{"schema_version", kReportSchemaVersion},
                   {"cls", loss.cls},
                   {"mask", loss.mask},
                   {"dice", loss.dice},
                   {"total", loss.total},
                   {"weights", {{"cls", w.cls}, {"mask", w.mask}, {"dice", w.dice}}},
                   {"segments", gt.segments.size()},
                   {"sampled_points", columns.empty() ? masks.cols() : Eigen::Index(columns.size())},
                   {"query_of_segment", match.query_of_gt}};
    if (!o->out.empty()) write_json(o->out, doc);
    std::cout << doc.dump() << '\n';
  });
}

// --- eval-pq --------------------------------------------------------------

void add_eval_pq(CLI::App& app) {
  auto* cmd = app.add_subcommand("eval-pq", "Panoptic quality of predicted labels");
  struct Opts {
    std::vector<std::string> pred, gt;
    std::string classes, out;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--pred", o->pred, "Predicted label files, one per frame")->required();
  cmd->add_option("--gt", o->gt, "Ground-truth label files in the same order")->required();
  cmd->add_option("--classes", o->classes, "Class-split JSON")->required();
  cmd->add_option("--out", o->out, "Output directory for classes.csv and report.json")->required();
  cmd->callback([o] {
    if (o->pred.size() != o->gt.size()) throw ParameterError("--pred and --gt need the same number of files");
    const ClassSplit split = read_class_split(o->classes);
    PqAccumulator acc(split);
    for (std::size_t i = 0; i < o->pred.size(); ++i) {
      const auto gt = min_points_filter(read_labels(o->gt[i]), split.min_points, split);
      const auto pred = min_points_filter(read_labels(o->pred[i]), split.min_points, split);
      acc.add(pred, gt);
    }
    const MetricReport report = acc.report();
    fs::create_directories(o->out);
    write_class_csv(fs::path(o->out) / "classes.csv", report, split);
    const json doc = report_json(report);
    write_json(fs::path(o->out) / "report.json", doc);
    std::cout << json{{"pq", report.pq}, {"sq", report.sq}, {"rq", report.rq}, {"pq_dagger", report.pq_dagger}}.dump()
              << '\n';
  });
}

// --- gen-labels -----------------------------------------------------------

std::vector<std::uint16_t> read_semantics(const fs::path& path, std::size_t n) {
  const auto size = fs::file_size(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open semantics " + path.string());
  std::vector<std::uint16_t> out(n);
  if (size == n * 2) {
    in.read(reinterpret_cast<char*>(out.data()), std::streamsize(n * 2));
    return out;
  }
  if (size == n * 4 || (size >= 4 && n > 0)) {
    const PanopticLabels packed = read_labels(path);
    if (packed.size() != n) throw ShapeError("semantics length differs from the point count");
    for (std::size_t j = 0; j < n; ++j) out[j] = label_class(packed[j]);
    return out;
  }
  throw ShapeError("semantics file is neither u16 nor u32 per point");
}

void add_gen_labels(CLI::App& app) {
  auto* cmd = app.add_subcommand("gen-labels", "Panoptic labels from semantics and oriented boxes");
  struct Opts {
    std::string points, semantics, boxes, classmap, out;
    int min_points = 50;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--points", o->points, "Point cloud .bin")->required();
  cmd->add_option("--semantics", o->semantics, "Per-point classes: u16, or packed u32")->required();
  cmd->add_option("--boxes", o->boxes, "Boxes, JSON lines")->required();
  cmd->add_option("--classmap", o->classmap, "Box-class to semantic-class JSON; defaults to the Waymo map");
  cmd->add_option("--min-points", o->min_points, "Instances below this lose their id");
  cmd->add_option("--out", o->out, "Packed u32 label output")->required();
  cmd->callback([o] {
    const PointCloud cloud = read_point_cloud_bin(o->points);
    const auto semantics = read_semantics(o->semantics, std::size_t(cloud.size()));
    const auto boxes = read_boxes_jsonl(o->boxes);
    const ClassMap map = o->classmap.empty() ? ClassMap::waymo_default() : read_class_map(o->classmap);
    const PanopticLabels labels = generate_panoptic(cloud, semantics, boxes, map, o->min_points);
    write_labels(o->out, labels);
    std::set<std::uint16_t> instances;
    for (auto l : labels) {
      if (label_instance(l)) instances.insert(label_instance(l));
    }
    std::cout << json{{"points", labels.size()}, {"boxes", boxes.size()}, {"instances", instances.size()}}.dump()
              << '\n';
  });
}

// --- robustness -----------------------------------------------------------

std::vector<double> parse_angles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

void add_robustness(CLI::App& app) {
  auto* cmd = app.add_subcommand("robustness", "Dropout, calibration drift and domain-shift evaluation");
  cmd->require_subcommand(1);
  struct Opts {
    std::string config, out, angles = "0,1,2,3,4,5", pool;
    bool full_uncertainty = false;
  };
  auto o = std::make_shared<Opts>();
  auto common = [o](CLI::App* sub) {
    sub->add_option("--config", o->config, "Pipeline config JSON")->required();
    sub->add_option("--out", o->out, "Report directory")->required();
  };
  auto* dropout = cmd->add_subcommand("dropout", "Camera images replaced by zeros");
  common(dropout);
  dropout->add_flag("--full-uncertainty", o->full_uncertainty, "Force U = 1 in the dropout condition");
  auto* drift = cmd->add_subcommand("drift", "Rotational extrinsic perturbations");
  common(drift);
  drift->add_option("--angles", o->angles, "Comma-separated degrees, ascending from 0");
  auto* domain = cmd->add_subcommand("domain", "Histogram-matched camera inputs");
  common(domain);
  domain->add_option("--pool", o->pool, "Directory of reference PPMs; defaults to the built-in dark reference");

  auto run = [o](const std::string& kind) {
    const PipelineConfig config = load_config(o->config);
    const auto frames = synthetic_frames(config);
    const Pipeline pipeline = build_pipeline(config, frames);
    RobustnessReport report;
    if (kind == "dropout") {
      report = run_dropout_eval(pipeline, frames, {o->full_uncertainty});
    } else if (kind == "drift") {
      report = run_drift_eval(pipeline, frames, parse_angles(o->angles));
    } else {
      ReferencePool pool;
      if (o->pool.empty()) {
        pool.names = {"dark"};
        pool.images = {builtin_reference_pool().get("dark")};
      } else {
        pool = load_reference_pool(o->pool);
      }
      report = run_domain_shift_eval(pipeline, frames, pool);
    }
    write_robustness_report(o->out, report, pipeline.split());
    for (const auto& c : report.conditions) {
      std::cout << c.label() << " pq=" << format_double(c.report.pq) << " delta_pq=" << format_double(c.delta_pq)
                << " mean_u=" << format_double(c.mean_uncertainty) << '\n';
    }
  };
  dropout->callback([run] { run("dropout"); });
  drift->callback([run] { run("drift"); });
  domain->callback([run] { run("domain"); });
}

// --- synth ----------------------------------------------------------------

void add_synth(CLI::App& app) {
  auto* cmd = app.add_subcommand("synth", "Write a synthetic frame (cloud, labels, calibration, images, boxes)");
  struct Opts {
    std::string out;
    std::uint64_t seed = 1;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--seed", o->seed, "Scene seed");
  cmd->add_option("--out", o->out, "Output directory")->required();
  cmd->callback([o] {
    synthetic::SceneConfig sc;
    sc.seed = o->seed;
    const synthetic::Scene scene = synthetic::generate_scene(sc);
    const fs::path dir = o->out;
    fs::create_directories(dir);
    write_point_cloud_bin(dir / "cloud.bin", scene.cloud);
    write_labels(dir / "labels.bin", scene.labels);
    write_calibration(dir / "calib.json", scene.cameras);
    write_boxes_jsonl(dir / "boxes.jsonl", scene.boxes);
    write_class_split(dir / "classes.json", synthetic::scene_class_split());
    for (std::size_t m = 0; m < scene.images.size(); ++m) {
      write_ppm(dir / ("cam" + std::to_string(m) + ".ppm"), scene.images[m]);
    }
    std::cout << json{{"points", scene.cloud.size()}, {"boxes", scene.boxes.size()}}.dump() << '\n';
  });
}

// --- bench ----------------------------------------------------------------

void add_bench(CLI::App& app) {
  auto* cmd = app.add_subcommand("bench", "Uncalibrated wall-clock timings of the pipeline stages");
  struct Opts {
    std::string config;
    int repeats = 3;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--config", o->config, "Pipeline config JSON; defaults to the built-in synthetic setup");
  cmd->add_option("--repeats", o->repeats, "Frames timed per stage");
  cmd->callback([o] {
    PipelineConfig config;
    if (!o->config.empty()) config = load_config(o->config);
    config.frames = 1;
    using clock = std::chrono::steady_clock;
    auto time_ms = [&](auto&& fn) {
      const auto t0 = clock::now();
      for (int i = 0; i < o->repeats; ++i) fn();
      return std::chrono::duration<double, std::milli>(clock::now() - t0).count() / o->repeats;
    };
    const auto frames = synthetic_frames(config);
    const Frame& f = frames.front();
    json doc{{"schema_version", kReportSchemaVersion}, {"threads", worker_count()}, {"points", f.cloud.size()}};
    doc["rasterize_ms"] = time_ms([&] { (void)rasterize(f.cloud, config.fov(), config.rv_height, config.rv_width); });
    CamToRvMap map;
    doc["view_map_ms"] = time_ms([&] { map = build_view_map(f.cloud, f.cameras, config.fov(), config.rv_height, config.rv_width); });
    const Pipeline pipeline = build_pipeline(config, frames);
    doc["frame_ms"] = time_ms([&] { (void)pipeline.run(f, map, f.images); });
    doc["frames_per_second"] = 1000.0 / doc["frame_ms"].get<double>();
    std::cout << doc.dump(2) << '\n';
  });
}

}  // namespace

void register_commands(CLI::App& app) {
  add_project(app);
  add_viewmap(app);
  add_augment(app);
  add_train_uncertainty(app);
  add_fuse(app);
  add_eval_loss(app);
  add_eval_pq(app);
  add_gen_labels(app);
  add_robustness(app);
  add_synth(app);
  add_bench(app);
}

}  // namespace rangefuse::cli
