#include "rangefuse/uncertainty.h"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "rangefuse/tensor_io.h"

namespace rangefuse {

void check_shapes(const MlpParams& p) {
  const Eigen::Index d = p.w1.rows();
  const Eigen::Index h = 2 * d;
  if (d <= 0 || p.w1.cols() != h || p.b1.size() != h || p.w2.rows() != h || p.w2.cols() != h ||
      p.b2.size() != h || p.w3.size() != h) {
    throw ShapeError("uncertainty head layer shapes do not chain");
  }
}

MlpParams init_mlp(int input_dim, std::uint64_t seed) {
  if (input_dim <= 0) throw ShapeError("uncertainty head input width must be positive");
  std::mt19937_64 rng(seed);
  auto xavier = [&rng](auto& m, Eigen::Index fan_in, Eigen::Index fan_out) {
    const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
    std::uniform_real_distribution<double> uni(-bound, bound);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = uni(rng);
    }
  };
  MlpParams p(input_dim);
  const int h = 2 * input_dim;
  xavier(p.w1, input_dim, h);
  xavier(p.w2, h, h);
  xavier(p.w3, h, 1);
  return p;
}

ScalarField mlp_forward(const MlpParams& params, const FeatureMap& features) {
  ScalarField out(features.height, features.width);
  out.values = mlp_forward(params, features.data).array();
  return out;
}

ScalarField instability_target(const FeatureMap& original, const FeatureMap& augmented) {
  require_same_shape(original, augmented, "instability_target");
  ScalarField out(original.height, original.width);
  out.values = (original.data - augmented.data).rowwise().norm().array();
  return out;
}

double huber(double a, double delta) {
  const double abs_a = std::abs(a);
  return abs_a <= delta ? 0.5 * a * a : delta * (abs_a - 0.5 * delta);
}

double huber_derivative(double a, double delta) { return std::clamp(a, -delta, delta); }

double uncertainty_score(double d) { return 1.0 - std::exp(-std::max(d, 0.0)); }

ScalarField uncertainty_score(const ScalarField& d_pred) {
  ScalarField out(d_pred.height, d_pred.width);
  out.values = 1.0 - (-d_pred.values.cwiseMax(0.0)).exp();
  return out;
}

InstabilityBatch make_batch(const FeatureMap& augmented, const ScalarField& target,
                            const std::optional<PixelMask>& covered) {
  require_grid(target, augmented, "make_batch");
  if (covered && covered->size() != augmented.pixel_count()) throw ShapeError("coverage mask size mismatch");
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < augmented.pixel_count(); ++i) {
    if (!covered || (*covered)(i)) rows.push_back(i);
  }
  InstabilityBatch batch;
  batch.features.resize(Eigen::Index(rows.size()), augmented.channels());
  batch.target.resize(Eigen::Index(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    batch.features.row(Eigen::Index(k)) = augmented.data.row(rows[k]);
    batch.target(Eigen::Index(k)) = target.values(rows[k]);
  }
  return batch;
}

InstabilityBatch concat(std::span<const InstabilityBatch> batches) {
  InstabilityBatch out;
  Eigen::Index n = 0;
  Eigen::Index d = batches.empty() ? 0 : batches.front().features.cols();
  for (const auto& b : batches) {
    if (b.features.cols() != d) throw ShapeError("cannot concatenate batches of different widths");
    n += b.size();
  }
  out.features.resize(n, d);
  out.target.resize(n);
  Eigen::Index at = 0;
  for (const auto& b : batches) {
    out.features.middleRows(at, b.size()) = b.features;
    out.target.segment(at, b.size()) = b.target;
    at += b.size();
  }
  return out;
}

double mean_huber_loss(const MlpParams& params, const InstabilityBatch& batch, double delta) {
  const Eigen::VectorXd r = mlp_forward(params, batch.features) - batch.target;
  return r.unaryExpr([delta](double a) { return huber(a, delta); }).mean();
}

LossGradient loss_and_gradient(const MlpParams& p, const InstabilityBatch& batch, double delta) {
  check_shapes(p);
  if (batch.features.cols() != p.input_dim()) throw ShapeError("batch width does not match the uncertainty head");
  const double n = double(batch.size());

  const RowMatrixXd z1 = (batch.features * p.w1).rowwise() + p.b1;
  const RowMatrixXd h1 = z1.cwiseMax(0.0);
  const RowMatrixXd z2 = (h1 * p.w2).rowwise() + p.b2;
  const RowMatrixXd h2 = z2.cwiseMax(0.0);
  const Eigen::VectorXd y = (h2 * p.w3).array() + p.b3;
  const Eigen::VectorXd r = y - batch.target;

  LossGradient out;
  out.loss = r.unaryExpr([delta](double a) { return huber(a, delta); }).mean();

  const Eigen::VectorXd g = r.unaryExpr([delta](double a) { return huber_derivative(a, delta); }) / n;
  MlpParams& d = out.gradient;
  d.w3 = h2.transpose() * g;
  d.b3 = g.sum();
  const RowMatrixXd dz2 = ((g * p.w3.transpose()).array() * (z2.array() > 0.0).cast<double>()).matrix();
  d.w2 = h1.transpose() * dz2;
  d.b2 = dz2.colwise().sum();
  const RowMatrixXd dz1 = ((dz2 * p.w2.transpose()).array() * (z1.array() > 0.0).cast<double>()).matrix();
  d.w1 = batch.features.transpose() * dz1;
  d.b1 = dz1.colwise().sum();
  return out;
}

Eigen::VectorXd flatten(const MlpParams& p) {
  Eigen::VectorXd flat(p.parameter_count());
  Eigen::Index at = 0;
  auto put = [&](const auto& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) flat(at++) = m(i, j);
    }
  };
  put(p.w1);
  put(p.b1);
  put(p.w2);
  put(p.b2);
  put(p.w3);
  flat(at) = p.b3;
  return flat;
}

MlpParams unflatten(const Eigen::VectorXd& flat, int input_dim) {
  MlpParams p(input_dim);
  if (flat.size() != p.parameter_count()) throw ShapeError("flat parameter vector has the wrong length");
  Eigen::Index at = 0;
  auto take = [&](auto& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = flat(at++);
    }
  };
  take(p.w1);
  take(p.b1);
  take(p.w2);
  take(p.b2);
  take(p.w3);
  p.b3 = flat(at);
  return p;
}

void AdamW::step(MlpParams& params, const MlpParams& gradient, double lr) {
  Eigen::VectorXd theta = flatten(params);
  const Eigen::VectorXd g = flatten(gradient);
  if (m_.size() != g.size()) {
    m_ = Eigen::VectorXd::Zero(g.size());
    v_ = Eigen::VectorXd::Zero(g.size());
    steps_ = 0;
  }
  ++steps_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * g;
  v_ = beta2_ * v_ + (1.0 - beta2_) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(beta1_, double(steps_));
  const double c2 = 1.0 - std::pow(beta2_, double(steps_));
  theta *= 1.0 - lr * weight_decay_;
  theta -= lr * ((m_ / c1).array() / ((v_ / c2).array().sqrt() + eps_)).matrix();
  params = unflatten(theta, params.input_dim());
}

double train_step(MlpParams& params, const InstabilityBatch& batch, double lr, AdamW* adamw, double delta) {
  if (!(lr > 0.0)) throw ParameterError("learning rate must be positive");
  if (batch.size() == 0) throw ParameterError("training batch is empty");
  LossGradient lg = loss_and_gradient(params, batch, delta);
  if (!std::isfinite(lg.loss) || !lg.gradient.all_finite()) {
    throw TrainingDivergedError("non-finite loss or gradient in uncertainty training");
  }
  if (adamw) {
    adamw->step(params, lg.gradient, lr);
  } else {
    params.w1 -= lr * lg.gradient.w1;
    params.b1 -= lr * lg.gradient.b1;
    params.w2 -= lr * lg.gradient.w2;
    params.b2 -= lr * lg.gradient.b2;
    params.w3 -= lr * lg.gradient.w3;
    params.b3 -= lr * lg.gradient.b3;
  }
  if (!params.all_finite()) throw TrainingDivergedError("uncertainty head parameters became non-finite");
  return lg.loss;
}

UncertaintyHead UncertaintyHead::create(std::span<const std::pair<int, int>> stride_channels, std::uint64_t seed) {
  UncertaintyHead head;
  for (const auto& [stride, channels] : stride_channels) {
    head.scales[stride] = init_mlp(channels, seed + std::uint64_t(stride));
  }
  return head;
}

const MlpParams& UncertaintyHead::at(int stride) const {
  const auto it = scales.find(stride);
  if (it == scales.end()) throw ShapeError("no uncertainty head for stride " + std::to_string(stride));
  return it->second;
}

ScalarField UncertaintyHead::predict(const FeatureMap& features) const {
  return mlp_forward(at(features.stride), features);
}

double train_step(UncertaintyHead& head, const std::map<int, InstabilityBatch>& batches, double lr,
                  std::map<int, AdamW>* adamw) {
  double total = 0.0;
  for (const auto& [stride, batch] : batches) {
    auto it = head.scales.find(stride);
    if (it == head.scales.end()) throw ShapeError("no uncertainty head for stride " + std::to_string(stride));
    AdamW* opt = adamw ? &(*adamw)[stride] : nullptr;
    total += train_step(it->second, batch, lr, opt);
  }
  return total;
}

namespace {

template <typename Derived>
Tensor matrix_tensor(const Eigen::MatrixBase<Derived>& m) {
  const RowMatrixXd dense = m;
  return Tensor::from<double>({std::uint64_t(dense.rows()), std::uint64_t(dense.cols())},
                              std::span<const double>(dense.data(), std::size_t(dense.size())));
}

RowMatrixXd tensor_matrix(const Tensor& t, Eigen::Index rows, Eigen::Index cols) {
  if (t.rank() != 2 || t.dims()[0] != std::uint64_t(rows) || t.dims()[1] != std::uint64_t(cols)) {
    throw ShapeError("checkpoint tensor has unexpected shape");
  }
  const auto v = t.values<double>();
  return Eigen::Map<const RowMatrixXd>(v.data(), rows, cols);
}

constexpr int kCheckpointSchema = 1;

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const UncertaintyHead& head) {
  std::filesystem::create_directories(dir);
  nlohmann::json scales = nlohmann::json::array();
  for (const auto& [stride, p] : head.scales) {
    check_shapes(p);
    const std::string prefix = "s" + std::to_string(stride) + "_";
    nlohmann::json files;
    const std::pair<const char*, Tensor> tensors[] = {
        {"w1", matrix_tensor(p.w1)},
        {"b1", matrix_tensor(p.b1)},
        {"w2", matrix_tensor(p.w2)},
        {"b2", matrix_tensor(p.b2)},
        {"w3", matrix_tensor(p.w3)},
        {"b3", matrix_tensor(Eigen::Matrix<double, 1, 1>::Constant(p.b3))},
    };
    for (const auto& [name, tensor] : tensors) {
      const std::string file = prefix + name + ".rft";
      write_tensor(dir / file, tensor);
      files[name] = file;
    }
    scales.push_back({{"stride", stride}, {"channels", p.input_dim()}, {"hidden", 2 * p.input_dim()}, {"tensors", files}});
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write checkpoint manifest in " + dir.string());
  out << nlohmann::json{{"schema_version", kCheckpointSchema}, {"kind", "uncertainty_head"}, {"scales", scales}}.dump(2)
      << '\n';
}

UncertaintyHead load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("missing checkpoint manifest in " + dir.string());
  UncertaintyHead head;
  try {
    const auto manifest = nlohmann::json::parse(in);
    if (manifest.at("schema_version").get<int>() != kCheckpointSchema) {
      throw IoError("unsupported checkpoint schema_version");
    }
    for (const auto& s : manifest.at("scales")) {
      const int stride = s.at("stride").get<int>();
      const int d = s.at("channels").get<int>();
      const auto& files = s.at("tensors");
      auto load = [&](const char* name, Eigen::Index rows, Eigen::Index cols) {
        return tensor_matrix(read_tensor(dir / files.at(name).get<std::string>()), rows, cols);
      };
      MlpParams p(d);
      p.w1 = load("w1", d, 2 * d);
      p.b1 = load("b1", 1, 2 * d);
      p.w2 = load("w2", 2 * d, 2 * d);
      p.b2 = load("b2", 1, 2 * d);
      p.w3 = load("w3", 2 * d, 1);
      p.b3 = load("b3", 1, 1)(0, 0);
      head.scales[stride] = std::move(p);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  return head;
}

namespace {

Eigen::VectorXd average_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  Eigen::VectorXd ranks(static_cast<Eigen::Index>(n));
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks(Eigen::Index(order[k])) = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw ShapeError("spearman needs two equal-length samples");
  const Eigen::VectorXd ra = average_ranks(a);
  const Eigen::VectorXd rb = average_ranks(b);
  const Eigen::VectorXd ca = ra.array() - ra.mean();
  const Eigen::VectorXd cb = rb.array() - rb.mean();
  const double denom = ca.norm() * cb.norm();
  return denom > 0.0 ? ca.dot(cb) / denom : 0.0;
}

std::vector<double> synthetic_severities() { return {0.0, 0.25, 0.5, 0.75, 1.0}; }

InstabilityBatch synthetic_instability_batch(int dim, std::span<const double> severities, int samples_per_level,
                                             std::uint64_t seed, double base_std) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index n = Eigen::Index(severities.size()) * samples_per_level;
  InstabilityBatch batch{RowMatrixXd(n, dim), Eigen::VectorXd(n)};
  Eigen::Index row = 0;
  for (double sigma : severities) {
    for (int k = 0; k < samples_per_level; ++k, ++row) {
      Eigen::VectorXd noise(dim);
      for (int j = 0; j < dim; ++j) {
        const double clean = base_std * normal(rng);
        noise(j) = sigma * normal(rng);
        batch.features(row, j) = clean + noise(j);
      }
      batch.target(row) = noise.norm();
    }
  }
  return batch;
}

}  // namespace rangefuse
