#include "rangefuse/decoder3d.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "rangefuse/errors.h"
#include "rangefuse/parallel.h"

namespace rangefuse {
namespace {

template <typename M>
void xavier_fill(M& m, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / double(m.rows() + m.cols()));
  std::uniform_real_distribution<double> uni(-bound, bound);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = uni(rng);
  }
}

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

std::vector<int> column_points(std::span<const int> columns, Eigen::Index n) {
  if (!columns.empty()) {
    if (Eigen::Index(columns.size()) != n) throw ShapeError("column index list does not match mask logits");
    return {columns.begin(), columns.end()};
  }
  std::vector<int> out(static_cast<std::size_t>(n));
  std::iota(out.begin(), out.end(), 0);
  return out;
}

struct MaskTerms {
  double bce = 0.0;
  double dice = 0.0;
};

MaskTerms mask_terms(const Eigen::MatrixXd& mask_logits, Eigen::Index q, const GroundTruth& gt, int segment,
                     const std::vector<int>& points) {
  double bce = 0.0;
  double inter = 0.0;
  double sum_p = 0.0;
  double sum_m = 0.0;
  for (std::size_t c = 0; c < points.size(); ++c) {
    const double x = mask_logits(q, Eigen::Index(c));
    const double m = gt.segment_of_point[std::size_t(points[c])] == segment ? 1.0 : 0.0;
    const double p = sigmoid(x);
    bce += bce_with_logit(x, m);
    inter += p * m;
    sum_p += p;
    sum_m += m;
  }
  const double n = std::max<double>(1.0, double(points.size()));
  return {bce / n, 1.0 - (2.0 * inter + 1.0) / (sum_p + sum_m + 1.0)};
}

}  // namespace

std::vector<PixelCoord> select_3d_neighbors(const RangeImage& rv, PixelCoord px, double r_true, int k) {
  if (k < 1) throw ParameterError("neighbor count must be >= 1");
  if (!rv.contains(px)) throw ShapeError("neighbor search pixel outside the range image");
  const int half = k / 2;
  struct Candidate {
    double diff;
    PixelCoord px;
  };
  std::vector<Candidate> candidates;
  for (int r = std::max(0, px.row - half); r <= std::min(rv.height - 1, px.row + half); ++r) {
    for (int c = std::max(0, px.col - half); c <= std::min(rv.width - 1, px.col + half); ++c) {
      if (rv.valid(r, c)) candidates.push_back({std::abs(r_true - rv.range(r, c)), {r, c}});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.diff < b.diff; });

  std::vector<PixelCoord> out;
  out.reserve(std::size_t(k));
  if (candidates.empty()) {
    out.assign(std::size_t(k), px);
    return out;
  }
  const std::size_t chosen = std::min<std::size_t>(std::size_t(k), candidates.size());
  for (int i = 0; i < k; ++i) out.push_back(candidates[std::size_t(i) % chosen].px);
  return out;
}

NeighborMlp init_neighbor_mlp(int k, int channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  NeighborMlp mlp;
  mlp.w1.resize(Eigen::Index(k) * channels, 2 * channels);
  mlp.w2.resize(2 * channels, channels);
  xavier_fill(mlp.w1, rng);
  xavier_fill(mlp.w2, rng);
  mlp.b1 = Eigen::RowVectorXd::Zero(2 * channels);
  mlp.b2 = Eigen::RowVectorXd::Zero(channels);
  return mlp;
}

Eigen::RowVectorXd aggregate_point_feature(const FeatureMap& f, std::span<const PixelCoord> neighbors,
                                           const NeighborMlp& mlp) {
  const Eigen::Index d = f.channels();
  if (mlp.w1.rows() != Eigen::Index(neighbors.size()) * d || mlp.w2.cols() != d || mlp.w1.cols() != mlp.w2.rows() ||
      mlp.b1.size() != mlp.w1.cols() || mlp.b2.size() != d) {
    throw ShapeError("neighbor MLP does not match K * D inputs");
  }
  Eigen::RowVectorXd concat(mlp.w1.rows());
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    const int row = neighbors[i].row / f.stride;
    const int col = neighbors[i].col / f.stride;
    if (row < 0 || row >= f.height || col < 0 || col >= f.width) throw ShapeError("neighbor outside the mask feature grid");
    concat.segment(Eigen::Index(i) * d, d) = f.pixel(row, col);
  }
  const Eigen::RowVectorXd hidden = (concat * mlp.w1 + mlp.b1).cwiseMax(0.0);
  return hidden * mlp.w2 + mlp.b2;
}

Eigen::MatrixXd point_features(const FeatureMap& mask_features, const RangeImage& rv, const RvMapping& mapping,
                               const PointCloud& cloud, const NeighborMlp& mlp, std::span<const int> indices) {
  const std::vector<int> points = column_points(indices, cloud.size());
  if (mapping.point_count() != std::size_t(cloud.size())) throw ShapeError("mapping and cloud sizes differ");
  const int k = mlp.neighbors();
  const Eigen::Index d = mask_features.channels();
  Eigen::MatrixXd out(d, Eigen::Index(points.size()));
  const Eigen::RowVectorXd empty_feature =
      (mlp.b1).cwiseMax(0.0) * mlp.w2 + mlp.b2;  // zero concat input
  parallel_for(points.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      const int j = points[c];
      const auto& px = mapping.forward(std::size_t(j));
      if (!px) {
        out.col(Eigen::Index(c)) = empty_feature.transpose();
        continue;
      }
      const auto neighbors = select_3d_neighbors(rv, *px, cloud.xyz(j).norm(), k);
      out.col(Eigen::Index(c)) = aggregate_point_feature(mask_features, neighbors, mlp).transpose();
    }
  });
  return out;
}

Eigen::MatrixXd class_logits(const Eigen::MatrixXd& queries, const ClassHead& head) {
  if (queries.cols() != head.weight.rows() || head.bias.size() != head.weight.cols()) {
    throw ShapeError("class head does not match query width");
  }
  return (queries * head.weight).rowwise() + head.bias;
}

MaskEmbedMlp init_mask_embed(int channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  MaskEmbedMlp mlp;
  for (RowMatrixXd* w : {&mlp.w1, &mlp.w2, &mlp.w3}) {
    w->resize(channels, channels);
    xavier_fill(*w, rng);
  }
  for (Eigen::RowVectorXd* b : {&mlp.b1, &mlp.b2, &mlp.b3}) *b = Eigen::RowVectorXd::Zero(channels);
  return mlp;
}

Eigen::MatrixXd mask_embed(const Eigen::MatrixXd& queries, const MaskEmbedMlp& mlp) {
  if (queries.cols() != mlp.w1.rows()) throw ShapeError("mask embedding MLP does not match query width");
  const Eigen::MatrixXd h1 = ((queries * mlp.w1).rowwise() + mlp.b1).cwiseMax(0.0);
  const Eigen::MatrixXd h2 = ((h1 * mlp.w2).rowwise() + mlp.b2).cwiseMax(0.0);
  return (h2 * mlp.w3).rowwise() + mlp.b3;
}

Eigen::MatrixXd mask_logits(const Eigen::MatrixXd& embeddings, const Eigen::MatrixXd& point_features) {
  if (embeddings.cols() != point_features.rows()) throw ShapeError("mask embedding and point feature widths differ");
  return embeddings * point_features;
}

Eigen::MatrixXd mask_logits_2d(const Eigen::MatrixXd& embeddings, const FeatureMap& mask_features) {
  if (embeddings.cols() != mask_features.channels()) throw ShapeError("mask embedding and mask feature widths differ");
  return embeddings * mask_features.data.transpose();
}

std::vector<int> sample_points(const Eigen::MatrixXd& logits, int count, double importance_ratio,
                               std::mt19937_64& rng) {
  const auto n = int(logits.cols());
  if (count < 0 || count > n) {
    throw ParameterError("cannot sample " + std::to_string(count) + " of " + std::to_string(n) + " points");
  }
  if (!(importance_ratio >= 0.0 && importance_ratio <= 1.0)) throw ParameterError("importance ratio must be in [0, 1]");
  const int important = std::min(count, int(std::ceil(importance_ratio * count)));

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> out;
  out.reserve(std::size_t(count));
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  if (important > 0) {
    const Eigen::RowVectorXd certainty = logits.cwiseAbs().colwise().minCoeff();
    std::partial_sort(order.begin(), order.begin() + important, order.end(), [&](int a, int b) {
      if (certainty(a) != certainty(b)) return certainty(a) < certainty(b);
      return a < b;
    });
    for (int i = 0; i < important; ++i) {
      out.push_back(order[std::size_t(i)]);
      taken[std::size_t(order[std::size_t(i)])] = 1;
    }
  }
  std::vector<int> rest;
  rest.reserve(static_cast<std::size_t>(n - important));
  for (int j = 0; j < n; ++j) {
    if (!taken[std::size_t(j)]) rest.push_back(j);
  }
  std::sample(rest.begin(), rest.end(), std::back_inserter(out), count - important, rng);
  return out;
}

GroundTruth extract_segments(std::span<const std::uint32_t> labels, const ClassSplit& split) {
  GroundTruth gt;
  gt.segment_of_point.assign(labels.size(), -1);
  std::map<std::pair<int, int>, int> index;  // (class, instance) -> segment
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const int cls = label_class(labels[j]);
    const int inst = label_instance(labels[j]);
    std::pair<int, int> key;
    if (split.is_stuff(cls)) {
      key = {cls, 0};
    } else if (split.is_thing(cls) && inst != 0) {
      key = {cls, inst};
    } else {
      continue;
    }
    auto [it, inserted] = index.try_emplace(key, int(gt.segments.size()));
    if (inserted) gt.segments.push_back({cls, std::uint16_t(key.second), {}});
    gt.segments[std::size_t(it->second)].points.push_back(int(j));
    gt.segment_of_point[j] = it->second;
  }
  return gt;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out = logits.colwise() - logits.rowwise().maxCoeff();
  out = out.array().exp();
  return out.array().colwise() / out.rowwise().sum().array();
}

double bce_with_logit(double x, double m) { return std::max(x, 0.0) - x * m + std::log1p(std::exp(-std::abs(x))); }

Eigen::MatrixXd match_costs(const Eigen::MatrixXd& class_logits, const Eigen::MatrixXd& mask_logits,
                            const GroundTruth& gt, const ClassSplit& split, const LossWeights& w,
                            std::span<const int> columns) {
  const auto nq = class_logits.rows();
  if (mask_logits.rows() != nq) throw ShapeError("class and mask logits disagree on query count");
  if (class_logits.cols() != split.class_count() + 1) throw ShapeError("class logits width does not match the class split");
  const std::vector<int> points = column_points(columns, mask_logits.cols());
  const Eigen::MatrixXd prob = softmax_rows(class_logits);

  Eigen::MatrixXd cost(Eigen::Index(gt.segments.size()), nq);
  for (std::size_t g = 0; g < gt.segments.size(); ++g) {
    const int col = split.column_of(gt.segments[g].class_id);
    for (Eigen::Index q = 0; q < nq; ++q) {
      const MaskTerms t = mask_terms(mask_logits, q, gt, int(g), points);
      cost(Eigen::Index(g), q) = w.cls * -prob(q, col) + w.mask * t.bce + w.dice * t.dice;
    }
  }
  return cost;
}

LossBreakdown panoptic_loss(const Eigen::MatrixXd& class_logits, const Eigen::MatrixXd& mask_logits,
                            const GroundTruth& gt, const MatchResult& match, const ClassSplit& split,
                            const LossWeights& w, std::span<const int> columns) {
  const auto nq = class_logits.rows();
  if (class_logits.cols() != split.class_count() + 1) throw ShapeError("class logits width does not match the class split");
  if (match.size() != gt.segments.size()) throw ShapeError("match does not cover every ground-truth segment");
  const std::vector<int> points = column_points(columns, mask_logits.cols());

  std::vector<int> target(static_cast<std::size_t>(nq), split.no_object_column());
  for (std::size_t g = 0; g < match.size(); ++g) {
    target[std::size_t(match.query_of_gt[g])] = split.column_of(gt.segments[g].class_id);
  }

  LossBreakdown out;
  for (Eigen::Index q = 0; q < nq; ++q) {
    const double mx = class_logits.row(q).maxCoeff();
    const double lse = mx + std::log((class_logits.row(q).array() - mx).exp().sum());
    out.cls += lse - class_logits(q, target[std::size_t(q)]);
  }
  if (nq > 0) out.cls /= double(nq);

  for (std::size_t g = 0; g < match.size(); ++g) {
    const MaskTerms t = mask_terms(mask_logits, match.query_of_gt[g], gt, int(g), points);
    out.mask += t.bce;
    out.dice += t.dice;
  }
  if (match.size() > 0) {
    out.mask /= double(match.size());
    out.dice /= double(match.size());
  }
  out.total = w.cls * out.cls + w.mask * out.mask + w.dice * out.dice;
  return out;
}

PanopticPrediction decode(const DecoderHeads& heads, const Eigen::MatrixXd& queries, const FeatureMap& mask_features,
                          const RangeImage& rv, const RvMapping& mapping, const PointCloud& cloud) {
  PanopticPrediction pred;
  pred.class_logits = class_logits(queries, heads.class_head);
  const Eigen::MatrixXd embeddings = mask_embed(queries, heads.mask_embed);
  pred.mask_logits = mask_logits(embeddings, point_features(mask_features, rv, mapping, cloud, heads.neighbor));
  return pred;
}

}  // namespace rangefuse
