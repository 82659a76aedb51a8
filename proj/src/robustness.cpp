#include "rangefuse/robustness.h"

#include <Eigen/Geometry>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "rangefuse/errors.h"

namespace rangefuse {

Eigen::Matrix4d perturb_extrinsics(const Eigen::Matrix4d& extrinsics, double theta_deg, std::mt19937_64& rng) {
  if (!(theta_deg >= 0.0)) throw ParameterError("drift angle must be >= 0");
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Vector3d axis;
  do {
    axis = Eigen::Vector3d(normal(rng), normal(rng), normal(rng));
  } while (axis.norm() < 1e-12);
  axis.normalize();
  Eigen::Matrix4d out = extrinsics;
  out.topLeftCorner<3, 3>() =
      extrinsics.topLeftCorner<3, 3>() * Eigen::AngleAxisd(deg2rad(theta_deg), axis).toRotationMatrix();
  return out;
}

double mean_rv_displacement(const CamToRvMap& a, const CamToRvMap& b) {
  if (a.camera_count() != b.camera_count() || a.rv_height() != b.rv_height() || a.rv_width() != b.rv_width()) {
    throw ShapeError("view maps cover different rigs");
  }
  const int w = a.rv_width();
  double sum = 0.0;
  long count = 0;
  for (int m = 0; m < a.camera_count(); ++m) {
    if (a.camera_height(m) != b.camera_height(m) || a.camera_width(m) != b.camera_width(m)) {
      throw ShapeError("view maps disagree on camera size");
    }
    for (int r = 0; r < a.camera_height(m); ++r) {
      for (int c = 0; c < a.camera_width(m); ++c) {
        const auto pa = a.at(m, r, c);
        const auto pb = b.at(m, r, c);
        if (!pa || !pb) continue;
        const double dr = pa->row - pb->row;
        const int raw = std::abs(pa->col - pb->col);
        const double dc = std::min(raw, w - raw);
        sum += std::sqrt(dr * dr + dc * dc);
        ++count;
      }
    }
  }
  return count > 0 ? sum / double(count) : 0.0;
}

std::string format_double(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string ConditionResult::label() const {
  return name == "drift" ? name + "_" + format_double(parameter) : name;
}

ConditionResult evaluate_condition(const Pipeline& pipeline, const std::vector<Frame>& frames, const std::string& name,
                                   const std::function<FrameResult(const Frame&)>& run) {
  PqAccumulator acc(pipeline.split());
  ConditionResult result;
  result.name = name;
  double u = 0.0;
  for (const auto& frame : frames) {
    const FrameResult fr = run(frame);
    acc.add(fr.labels, evaluation_labels(frame, pipeline.split()));
    u += fr.mean_uncertainty;
  }
  result.report = acc.report();
  result.mean_uncertainty = frames.empty() ? 0.0 : u / double(frames.size());
  return result;
}

namespace {

RobustnessReport with_clean(const Pipeline& pipeline, const std::vector<Frame>& frames, std::string kind) {
  RobustnessReport report;
  report.kind = std::move(kind);
  report.conditions.push_back(
      evaluate_condition(pipeline, frames, "clean", [&](const Frame& f) { return pipeline.run(f); }));
  report.metadata["frames"] = frames.size();
  report.metadata["config"] = config_to_json(pipeline.config());
  return report;
}

void finish(RobustnessReport& report) {
  const double clean = report.conditions.front().report.pq;
  for (auto& c : report.conditions) c.delta_pq = c.report.pq - clean;
}

}  // namespace

RobustnessReport run_dropout_eval(const Pipeline& pipeline, const std::vector<Frame>& frames,
                                  const DropoutOptions& options) {
  RobustnessReport report = with_clean(pipeline, frames, "dropout");
  report.metadata["force_full_uncertainty"] = options.force_full_uncertainty;
  DegradationSpec spec;
  spec.kind = DegradationKind::kDropout;
  RunOptions run_options;
  run_options.force_full_uncertainty = options.force_full_uncertainty;
  report.conditions.push_back(evaluate_condition(pipeline, frames, "dropout", [&](const Frame& f) {
    std::vector<Image> blank;
    for (const auto& img : f.images) blank.push_back(apply(img, spec));
    return pipeline.run(f, pipeline.view_map(f), blank, run_options);
  }));
  finish(report);
  return report;
}

RobustnessReport run_drift_eval(const Pipeline& pipeline, const std::vector<Frame>& frames,
                                const std::vector<double>& angles) {
  if (angles.empty() || angles.front() != 0.0 || !std::is_sorted(angles.begin(), angles.end())) {
    throw ParameterError("drift angles must be sorted ascending and start at 0");
  }
  RobustnessReport report = with_clean(pipeline, frames, "drift");
  report.metadata["axis"] = "independent per camera";
  report.metadata["drift_seed"] = pipeline.config().drift_seed;

  std::vector<CamToRvMap> clean_maps;
  for (const auto& f : frames) clean_maps.push_back(pipeline.view_map(f));

  for (double angle : angles) {
    double displacement = 0.0;
    std::size_t index = 0;
    ConditionResult c = evaluate_condition(pipeline, frames, "drift", [&](const Frame& f) {
      Frame drifted = f;
      for (std::size_t m = 0; m < drifted.cameras.size(); ++m) {
        std::mt19937_64 rng(pipeline.config().drift_seed + 1000003ULL * index + m);
        drifted.cameras[m].extrinsics = perturb_extrinsics(f.cameras[m].extrinsics, angle, rng);
      }
      const CamToRvMap map = pipeline.view_map(drifted);
      displacement += mean_rv_displacement(clean_maps[index], map);
      ++index;
      return pipeline.run(f, map, f.images);
    });
    c.parameter = angle;
    c.displacement = frames.empty() ? 0.0 : displacement / double(frames.size());
    report.conditions.push_back(std::move(c));
  }
  finish(report);
  return report;
}

RobustnessReport run_domain_shift_eval(const Pipeline& pipeline, const std::vector<Frame>& frames,
                                       const ReferencePool& pool) {
  if (pool.images.empty()) throw ParameterError("domain-shift reference pool is empty");
  RobustnessReport report = with_clean(pipeline, frames, "domain");
  report.metadata["references"] = pool.names;
  report.conditions.push_back(evaluate_condition(pipeline, frames, "domain", [&](const Frame& f) {
    std::vector<Image> shifted;
    for (std::size_t m = 0; m < f.images.size(); ++m) {
      shifted.push_back(histogram_match(f.images[m], pool.images[m % pool.images.size()], m));
    }
    return pipeline.run(f, pipeline.view_map(f), shifted);
  }));
  finish(report);
  return report;
}

nlohmann::json robustness_json(const RobustnessReport& report) {
  nlohmann::json conditions = nlohmann::json::array();
  for (const auto& c : report.conditions) {
    nlohmann::json entry = report_json(c.report);
    entry.erase("schema_version");
    entry["name"] = c.name;
    entry["label"] = c.label();
    entry["parameter"] = c.parameter;
    entry["delta_pq"] = c.delta_pq;
    entry["mean_uncertainty"] = c.mean_uncertainty;
    if (c.name == "drift") entry["mean_rv_displacement"] = c.displacement;
    conditions.push_back(std::move(entry));
  }
  return {{"schema_version", kReportSchemaVersion},
          {"kind", report.kind},
          {"metadata", report.metadata},
          {"conditions", conditions}};
}

void write_robustness_report(const std::filesystem::path& dir, const RobustnessReport& report,
                             const ClassSplit& split) {
  std::filesystem::create_directories(dir);
  for (const auto& c : report.conditions) write_class_csv(dir / (c.label() + "_classes.csv"), c.report, split);
  {
    std::ofstream out(dir / "report.json");
    if (!out) throw IoError("cannot write " + (dir / "report.json").string());
    out << robustness_json(report).dump(2) << '\n';
  }
  if (report.kind == "drift") {
    std::ofstream out(dir / "drift_curve.csv");
    if (!out) throw IoError("cannot write " + (dir / "drift_curve.csv").string());
    out << "angle_deg,pq,delta_pq,mean_rv_displacement,mean_uncertainty\n";
    for (const auto& c : report.conditions) {
      if (c.name != "drift") continue;
      out << format_double(c.parameter) << ',' << format_double(c.report.pq) << ',' << format_double(c.delta_pq)
          << ',' << format_double(c.displacement) << ',' << format_double(c.mean_uncertainty) << '\n';
    }
  }
}

}  // namespace rangefuse
