#include "rangefuse/panoptic.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "rangefuse/decoder3d.h"
#include "rangefuse/errors.h"

namespace rangefuse {

PanopticLabels panoptic_inference(const Eigen::MatrixXd& class_logits, const Eigen::MatrixXd& mask_logits,
                                  const ClassSplit& split, const InferenceConfig& config) {
  const auto nq = class_logits.rows();
  const auto n = mask_logits.cols();
  if (mask_logits.rows() != nq) throw ShapeError("class and mask logits disagree on query count");
  if (class_logits.cols() != split.class_count() + 1) throw ShapeError("class logits width does not match the class split");

  const Eigen::MatrixXd prob = softmax_rows(class_logits);
  std::vector<Eigen::Index> kept;
  std::vector<double> confidence;
  std::vector<int> query_class;
  for (Eigen::Index q = 0; q < nq; ++q) {
    Eigen::Index col = 0;
    const double conf = prob.row(q).maxCoeff(&col);
    if (col == split.no_object_column() || conf < config.confidence_threshold) continue;
    kept.push_back(q);
    confidence.push_back(conf);
    query_class.push_back(split.class_of_column(int(col)));
  }

  PanopticLabels labels(static_cast<std::size_t>(n), pack_label(std::uint16_t(split.void_id), 0));
  if (kept.empty()) return labels;

  std::vector<int> owner(static_cast<std::size_t>(n), -1);
  for (Eigen::Index j = 0; j < n; ++j) {
    double best = -1.0;
    for (std::size_t k = 0; k < kept.size(); ++k) {
      const double x = mask_logits(kept[k], j);
      const double sig = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      const double score = confidence[k] * sig;
      if (score > best) {
        best = score;
        owner[std::size_t(j)] = int(k);
      }
    }
  }

  std::vector<std::uint16_t> instance_of(kept.size(), 0);
  std::vector<long> size_of(kept.size(), 0);
  for (int o : owner) ++size_of[std::size_t(o)];
  std::uint16_t next_instance = 1;
  for (std::size_t k = 0; k < kept.size(); ++k) {
    if (split.is_thing(query_class[k]) && size_of[k] > 0) instance_of[k] = next_instance++;
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto k = std::size_t(owner[std::size_t(j)]);
    labels[std::size_t(j)] = pack_label(std::uint16_t(query_class[k]), instance_of[k]);
  }
  return config.min_points > 0 ? min_points_filter(labels, config.min_points, split) : labels;
}

PanopticLabels min_points_filter(std::span<const std::uint32_t> labels, int threshold, const ClassSplit& split) {
  if (threshold < 0) throw ParameterError("min-point threshold must be >= 0");
  std::map<std::uint32_t, long> counts;
  for (std::uint32_t l : labels) {
    if (split.is_thing(label_class(l)) && label_instance(l) != 0) ++counts[l];
  }
  PanopticLabels out(labels.begin(), labels.end());
  for (auto& l : out) {
    const auto it = counts.find(l);
    if (it != counts.end() && it->second < threshold) l = pack_label(std::uint16_t(split.void_id), 0);
  }
  return out;
}

double ClassStats::pq() const {
  const double denom = double(tp) + 0.5 * double(fp) + 0.5 * double(fn);
  return denom > 0.0 ? iou_sum / denom : 0.0;
}

double ClassStats::sq() const { return tp > 0 ? iou_sum / double(tp) : 0.0; }

double ClassStats::rq() const {
  const double denom = double(tp) + 0.5 * double(fp) + 0.5 * double(fn);
  return denom > 0.0 ? double(tp) / denom : 0.0;
}

const ClassMetrics* MetricReport::find(int class_id) const {
  for (const auto& c : classes) {
    if (c.class_id == class_id) return &c;
  }
  return nullptr;
}

namespace {

std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct Segment {
  long area = 0;
  long void_overlap = 0;
};

// Segment key with stuff instances collapsed; class -1 marks void/unknown.
std::uint32_t segment_key(std::uint32_t label, const ClassSplit& split) {
  const int cls = label_class(label);
  if (split.is_stuff(cls)) return pack_label(std::uint16_t(cls), 0);
  if (split.is_thing(cls)) return label;
  return 0xFFFFFFFFu;
}

}  // namespace

void PqAccumulator::add(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> gt) {
  if (pred.size() != gt.size()) throw ShapeError("prediction and ground truth lengths differ");
  constexpr std::uint32_t kNone = 0xFFFFFFFFu;

  std::map<std::uint32_t, Segment> pred_segments;
  std::map<std::uint32_t, long> gt_segments;
  std::map<std::pair<std::uint32_t, std::uint32_t>, long> overlaps;
  for (std::size_t j = 0; j < pred.size(); ++j) {
    const std::uint32_t g = segment_key(gt[j], split_);
    const std::uint32_t p = segment_key(pred[j], split_);
    if (g != kNone) ++gt_segments[g];
    if (p == kNone) continue;
    Segment& seg = pred_segments[p];
    ++seg.area;
    if (g == kNone) {
      ++seg.void_overlap;
    } else if (label_class(g) == label_class(p)) {
      ++overlaps[{p, g}];
    }
  }

  std::map<std::uint32_t, std::uint32_t> matched_gt;  // gt -> pred
  std::map<std::uint32_t, bool> matched_pred;
  // Matched IoUs per class, summed in sorted order so the total does not
  // depend on instance ids.
  std::map<int, std::vector<double>> matched_iou;
  for (const auto& [pair, inter] : overlaps) {
    const auto& [p, g] = pair;
    const double uni = double(pred_segments[p].area - pred_segments[p].void_overlap + gt_segments[g] - inter);
    const double iou = double(inter) / uni;
    if (split_.is_stuff(label_class(g))) {
      ClassStats& s = stats_[label_class(g)];
      s.stuff_intersection += double(inter);
    }
    if (iou > 0.5) {
      if (matched_gt.count(g) || matched_pred.count(p)) throw std::logic_error("PQ matching produced a duplicate match");
      matched_gt[g] = p;
      matched_pred[p] = true;
      ++stats_[label_class(g)].tp;
      matched_iou[label_class(g)].push_back(iou);
    }
  }
  for (auto& [cls, ious] : matched_iou) {
    std::sort(ious.begin(), ious.end());
    double sum = 0.0;
    for (double v : ious) sum += v;
    stats_[cls].iou_sum += sum;
  }
  for (const auto& [g, area] : gt_segments) {
    if (!matched_gt.count(g)) ++stats_[label_class(g)].fn;
  }
  for (const auto& [p, seg] : pred_segments) {
    if (matched_pred.count(p)) continue;
    if (double(seg.void_overlap) / double(seg.area) > 0.5) continue;
    ++stats_[label_class(p)].fp;
  }

  // Semantic union per stuff class: non-void prediction plus ground truth
  // minus intersection.
  std::map<int, long> stuff_pred;
  std::map<int, long> stuff_gt;
  for (const auto& [p, seg] : pred_segments) {
    if (split_.is_stuff(label_class(p))) stuff_pred[label_class(p)] += seg.area - seg.void_overlap;
  }
  for (const auto& [g, area] : gt_segments) {
    if (split_.is_stuff(label_class(g))) stuff_gt[label_class(g)] += area;
  }
  for (int cls : split_.stuff_ids) {
    const long pa = stuff_pred.count(cls) ? stuff_pred[cls] : 0;
    const long ga = stuff_gt.count(cls) ? stuff_gt[cls] : 0;
    if (pa == 0 && ga == 0) continue;
    long inter = 0;
    const auto key = pack_label(std::uint16_t(cls), 0);
    if (const auto it = overlaps.find({key, key}); it != overlaps.end()) inter = it->second;
    stats_[cls].stuff_union += double(pa + ga - inter);
  }
  ++frames_;
}

void PqAccumulator::merge(const PqAccumulator& other) {
  for (const auto& [cls, s] : other.stats_) {
    ClassStats& d = stats_[cls];
    d.tp += s.tp;
    d.fp += s.fp;
    d.fn += s.fn;
    d.iou_sum += s.iou_sum;
    d.stuff_intersection += s.stuff_intersection;
    d.stuff_union += s.stuff_union;
  }
  frames_ += other.frames_;
}

MetricReport PqAccumulator::report() const {
  MetricReport r;
  r.frames = frames_;
  int n = 0;
  int n_th = 0;
  int n_st = 0;
  for (const auto& [cls, s] : stats_) {
    if (!s.present()) continue;
    ClassMetrics m;
    m.class_id = cls;
    m.thing = split_.is_thing(cls);
    m.stats = s;
    m.pq = s.pq();
    m.sq = s.sq();
    m.rq = s.rq();
    m.pq_dagger = m.thing ? m.pq : s.semantic_iou();
    r.classes.push_back(m);
    r.pq += m.pq;
    r.sq += m.sq;
    r.rq += m.rq;
    r.pq_dagger += m.pq_dagger;
    ++n;
    if (m.thing) {
      r.pq_things += m.pq;
      ++n_th;
    } else {
      r.pq_stuff += m.pq;
      ++n_st;
    }
  }
  if (n > 0) {
    r.pq /= n;
    r.sq /= n;
    r.rq /= n;
    r.pq_dagger /= n;
  }
  if (n_th > 0) r.pq_things /= n_th;
  if (n_st > 0) r.pq_stuff /= n_st;
  return r;
}

MetricReport pq_metrics(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> gt, const ClassSplit& split) {
  PqAccumulator acc(split);
  acc.add(pred, gt);
  return acc.report();
}

void write_class_csv(const std::filesystem::path& path, const MetricReport& report, const ClassSplit& split) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "class_id,name,kind,pq,sq,rq,pq_dagger,tp,fp,fn,iou_sum\n";
  for (const auto& c : report.classes) {
    out << c.class_id << ',' << split.name_of(c.class_id) << ',' << (c.thing ? "thing" : "stuff") << ',' << num(c.pq)
        << ',' << num(c.sq) << ',' << num(c.rq) << ',' << num(c.pq_dagger) << ',' << c.stats.tp << ',' << c.stats.fp
        << ',' << c.stats.fn << ',' << num(c.stats.iou_sum) << '\n';
  }
}

nlohmann::json report_json(const MetricReport& report) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : report.classes) {
    classes.push_back({{"class_id", c.class_id},
                       {"kind", c.thing ? "thing" : "stuff"},
                       {"pq", c.pq},
                       {"sq", c.sq},
                       {"rq", c.rq},
                       {"pq_dagger", c.pq_dagger},
                       {"tp", c.stats.tp},
                       {"fp", c.stats.fp},
                       {"fn", c.stats.fn}});
  }
  return {{"schema_version", kReportSchemaVersion},
          {"frames", report.frames},
          {"pq", report.pq},
          {"sq", report.sq},
          {"rq", report.rq},
          {"pq_dagger", report.pq_dagger},
          {"pq_things", report.pq_things},
          {"pq_stuff", report.pq_stuff},
          {"classes", classes}};
}

}  // namespace rangefuse
