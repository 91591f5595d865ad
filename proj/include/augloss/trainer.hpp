// Copyright 2026 The AugLoss Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "augloss/augment.hpp"
#include "augloss/data_io.hpp"
#include "augloss/error.hpp"
#include "augloss/image.hpp"
#include "augloss/loss.hpp"
#include "augloss/model.hpp"
#include "augloss/random.hpp"

namespace augloss {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr0 = 0.1;
  double lr_min = 1e-6;
  double momentum = 0.9;  // Nesterov
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  double flip_prob = 0.5;
  bool standardize_inputs = true;
  std::vector<std::size_t> hidden{256};

  void validate() const {
    detail::require(epochs > 0 && batch_size > 0, "epochs and batch size must be positive");
    detail::require(lr_min >= 0.0 && lr_min <= lr0, "need 0 <= lr_min <= lr0");
    detail::require(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
    detail::require(weight_decay >= 0.0, "weight decay must be >= 0");
    detail::require(flip_prob >= 0.0 && flip_prob <= 1.0, "flip probability must lie in [0, 1]");
  }
};

/// Momentum buffers shaped like the model plus step counters.
struct OptimizerState {
  std::vector<Matrix> weight_velocity;
  std::vector<RowVector> bias_velocity;
  std::size_t epoch = 0;
  std::size_t step = 0;

  static OptimizerState for_model(const ModelParams& params) {
    OptimizerState s;
    for (const auto& l : params.layers) {
      s.weight_velocity.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
      s.bias_velocity.push_back(RowVector::Zero(l.bias.size()));
    }
    return s;
  }
};

inline double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr0, double lr_min) {
  detail::require(total_epochs > 0 && epoch <= total_epochs, "epoch outside [0, total_epochs]");
  if (epoch == 0) return lr0;
  if (epoch == total_epochs) return lr_min;
  const double t = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

inline ImageTensor hflip(const ImageTensor& x) {
  ImageTensor out = x;
  for (std::size_t r = 0; r < x.height(); ++r)
    for (std::size_t c = 0; c < x.width(); ++c)
      for (std::size_t k = 0; k < x.channels(); ++k) out(r, x.width() - 1 - c, k) = x(r, c, k);
  return out;
}

inline std::vector<ImageTensor> random_horizontal_flip(std::span<const ImageTensor> batch, double prob, std::uint64_t seed) {
  detail::require(prob >= 0.0 && prob <= 1.0, "flip probability must lie in [0, 1]");
  Rng rng = make_rng(seed);
  std::vector<ImageTensor> out;
  out.reserve(batch.size());
  for (const auto& x : batch) out.push_back(uniform01(rng) < prob ? hflip(x) : x);
  return out;
}

/// Per-channel statistics of the clean training images.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;

  static ChannelStats identity(std::size_t channels) { return {std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)}; }
};

/// A channel with no spread (up to rounding) gets std 1.
inline ChannelStats compute_channel_stats(std::span<const ImageTensor> images) {
  detail::require(!images.empty(), "channel statistics need at least one image");
  const std::size_t ch = images.front().channels();
  std::vector<double> sum(ch, 0.0);
  std::vector<double> sq(ch, 0.0);
  double count = 0.0;
  for (const auto& im : images) {
    for (std::size_t i = 0; i < im.size(); ++i) sum[i % ch] += im.data()[i];
    count += static_cast<double>(im.size() / ch);
  }
  ChannelStats s{std::vector<double>(ch), std::vector<double>(ch)};
  for (std::size_t k = 0; k < ch; ++k) s.mean[k] = sum[k] / count;
  for (const auto& im : images)
    for (std::size_t i = 0; i < im.size(); ++i) {
      const double d = im.data()[i] - s.mean[i % ch];
      sq[i % ch] += d * d;
    }
  for (std::size_t k = 0; k < ch; ++k) {
    const double sd = std::sqrt(sq[k] / count);
    s.std[k] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

/// (pixel - mean) / std per channel; one feature row per image.
inline Matrix standardize(const ChannelStats& stats, std::span<const ImageTensor> batch) {
  Matrix x = flatten(batch);
  if (batch.empty()) return x;
  const std::size_t ch = batch.front().channels();
  detail::require(stats.mean.size() == ch, "channel statistics do not match image channels");
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
      const std::size_t k = static_cast<std::size_t>(i) % ch;
      x(r, i) = (x(r, i) - stats.mean[k]) / stats.std[k];
    }
  return x;
}

/// Rewrites the first layer so the model consumes raw [0, 1] pixels while
/// computing exactly what it computed on standardized features.
inline ModelParams fold_standardization(const ModelParams& params, const ChannelStats& stats) {
  ModelParams out = params;
  auto& first = out.layers.front();
  const std::size_t ch = stats.mean.size();
  for (Eigen::Index i = 0; i < first.weights.rows(); ++i) {
    const std::size_t k = static_cast<std::size_t>(i) % ch;
    first.weights.row(i) /= stats.std[k];
    first.bias -= stats.mean[k] * first.weights.row(i);
  }
  return out;
}

/// Feature matrices for one batch: views[0] holds original images, further
/// entries the augmented views, all with rows aligned to `labels`.
struct TrainBatch {
  std::vector<Matrix> views;
  std::vector<std::size_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

/// Builds a batch from augmented tuples. A tuple whose three members are
/// identical contributes no consistency gradient, so `noaug` batches may be
/// built with `single_view` to skip the redundant rows.
inline TrainBatch make_batch(std::span<const AugmentedTuple> tuples, std::span<const std::size_t> labels,
                             const ChannelStats& stats, bool single_view = false) {
  detail::require(tuples.size() == labels.size(), "tuple and label counts differ");
  std::vector<ImageTensor> o, a1, a2;
  for (const auto& t : tuples) {
    o.push_back(t.orig);
    a1.push_back(t.aug1);
    a2.push_back(t.aug2);
  }
  TrainBatch b;
  b.views.push_back(standardize(stats, o));
  if (!single_view) {
    b.views.push_back(standardize(stats, a1));
    b.views.push_back(standardize(stats, a2));
  }
  b.labels.assign(labels.begin(), labels.end());
  return b;
}

/// Gradient of the batch-mean objective, shaped like the model.
struct Gradients {
  std::vector<Matrix> weights;
  std::vector<RowVector> bias;
};

/// Batch-mean objective and its gradient (no weight decay).
inline double compute_gradients(const ModelParams& params, const TrainBatch& batch, const LossSpec& spec, Gradients& grads) {
  spec.validate();
  const std::size_t n_views = batch.views.size();
  const std::size_t b = batch.size();
  const std::size_t nl = params.layers.size();
  grads.weights.resize(nl);
  grads.bias.resize(nl);
  for (std::size_t i = 0; i < nl; ++i) {
    grads.weights[i].setZero(params.layers[i].weights.rows(), params.layers[i].weights.cols());
    grads.bias[i].setZero(params.layers[i].bias.size());
  }
  if (b == 0) return 0.0;
  detail::require(n_views >= 1, "batch has no views");

  // Stack views: row v*b + i holds view v of example i.
  const auto d = static_cast<Eigen::Index>(params.input_dim());
  Matrix x(static_cast<Eigen::Index>(n_views * b), d);
  for (std::size_t v = 0; v < n_views; ++v) {
    detail::require(static_cast<std::size_t>(batch.views[v].rows()) == b && batch.views[v].cols() == d,
                    "batch view shape does not match the model");
    x.middleRows(static_cast<Eigen::Index>(v * b), static_cast<Eigen::Index>(b)) = batch.views[v];
  }

  std::vector<Matrix> acts{x};
  for (std::size_t i = 0; i < nl; ++i) {
    Matrix z = acts.back() * params.layers[i].weights;
    z.rowwise() += params.layers[i].bias;
    if (i + 1 < nl) z = z.cwiseMax(0.0);
    acts.push_back(std::move(z));
  }
  const Matrix& out = acts.back();
  const std::size_t k = params.classes();

  Matrix delta(out.rows(), out.cols());
  std::vector<double> z(n_views * k), g(n_views * k), scratch(n_views * k);
  double total = 0.0;
  const double inv_b = 1.0 / static_cast<double>(b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t v = 0; v < n_views; ++v)
      for (std::size_t c = 0; c < k; ++c) z[v * k + c] = out(static_cast<Eigen::Index>(v * b + i), static_cast<Eigen::Index>(c));
    detail::check_index(batch.labels[i], k);
    total += detail::objective_and_gradient(spec, z, n_views, k, batch.labels[i], g, scratch);
    for (std::size_t v = 0; v < n_views; ++v)
      for (std::size_t c = 0; c < k; ++c)
        delta(static_cast<Eigen::Index>(v * b + i), static_cast<Eigen::Index>(c)) = g[v * k + c] * inv_b;
  }

  for (std::size_t li = nl; li-- > 0;) {
    grads.weights[li].noalias() = acts[li].transpose() * delta;
    grads.bias[li] = delta.colwise().sum();
    if (li == 0) break;
    Matrix back = delta * params.layers[li].weights.transpose();
    delta = back.cwiseProduct((acts[li].array() > 0.0).cast<double>().matrix());
  }
  return total * inv_b;
}

/// One SGD step with Nesterov momentum. Weight decay is added to the weight
/// gradients only; biases are not decayed. Returns the batch-mean objective
/// measured before the update.
inline double train_step(ModelParams& params, OptimizerState& opt, const TrainBatch& batch, const LossSpec& spec, double lr,
                         const TrainConfig& config) {
  Gradients grads;
  const double loss = compute_gradients(params, batch, spec, grads);
  if (!std::isfinite(loss)) throw TrainingError("non-finite loss", opt.step);
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    if (!grads.weights[i].allFinite() || !grads.bias[i].allFinite()) throw TrainingError("non-finite gradient", opt.step);
  }
  const double mu = config.momentum;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    auto& layer = params.layers[i];
    Matrix gw = grads.weights[i] + config.weight_decay * layer.weights;
    opt.weight_velocity[i] = mu * opt.weight_velocity[i] + gw;
    layer.weights -= lr * (gw + mu * opt.weight_velocity[i]);

    const RowVector& gb = grads.bias[i];
    opt.bias_velocity[i] = mu * opt.bias_velocity[i] + gb;
    layer.bias -= lr * (gb + mu * opt.bias_velocity[i]);
  }
  ++opt.step;
  return loss;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double val_error = std::numeric_limits<double>::quiet_NaN();
  double lr = 0.0;
};

struct TrainResult {
  ModelParams params;  // consumes raw [0, 1] pixels (standardization folded in)
  ChannelStats stats;
  std::vector<EpochRecord> history;
};

inline double error_rate(std::span<const std::size_t> predicted, const LabelSet& truth) {
  detail::require(predicted.size() == truth.size() && !predicted.empty(), "prediction count mismatch or empty set");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) wrong += predicted[i] != truth[i];
  return static_cast<double>(wrong) / static_cast<double>(predicted.size());
}

/// Full training run: per epoch a seeded shuffle, cosine learning rate,
/// horizontal flips, online augmentation (if `policy` is set), standardization
/// with frozen training statistics, then minibatch steps.
inline TrainResult train(const LabeledImageDataset& train_set, const TrainConfig& config, const LossSpec& spec,
                         const std::optional<AugmentPolicy>& policy, const LabeledImageDataset* validation = nullptr) {
  config.validate();
  spec.validate();
  if (policy) policy->validate();
  detail::require(train_set.size() > 0, "training set is empty");

  TrainResult result;
  result.stats = config.standardize_inputs ? compute_channel_stats(train_set.images)
                                           : ChannelStats::identity(train_set.images.front().channels());
  ModelParams params = init_mlp(train_set.feature_dim(), config.hidden, train_set.classes(), derive_seed(config.seed, {0x1417}));
  OptimizerState opt = OptimizerState::for_model(params);

  const std::size_t n = train_set.size();
  std::vector<std::size_t> order(n);
  const std::size_t schedule_span = std::max<std::size_t>(config.epochs - 1, 1);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    opt.epoch = epoch;
    const double lr = cosine_lr(std::min(epoch, schedule_span), schedule_span, config.lr0, config.lr_min);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = make_rng(derive_seed(config.seed, {0x5487, epoch}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0, batch_no = 0; start < n; start += config.batch_size, ++batch_no) {
      const std::size_t end = std::min(n, start + config.batch_size);
      std::vector<ImageTensor> images;
      std::vector<std::size_t> labels;
      for (std::size_t j = start; j < end; ++j) {
        images.push_back(train_set.images[order[j]]);
        labels.push_back(train_set.labels[order[j]]);
      }
      images = random_horizontal_flip(images, config.flip_prob, derive_seed(config.seed, {0xF11B, epoch, batch_no}));

      TrainBatch batch;
      if (policy) {
        std::vector<AugmentedTuple> tuples;
        tuples.reserve(images.size());
        for (std::size_t j = 0; j < images.size(); ++j)
          tuples.push_back(augment_tuple(images[j], *policy, derive_seed(config.seed, {0xA065, epoch, order[start + j]})));
        batch = make_batch(tuples, labels, result.stats);
      } else {
        batch.views.push_back(standardize(result.stats, images));
        batch.labels = std::move(labels);
      }
      loss_sum += train_step(params, opt, batch, spec, lr, config) * static_cast<double>(batch.size());
    }

    EpochRecord rec{epoch, loss_sum / static_cast<double>(n), std::numeric_limits<double>::quiet_NaN(), lr};
    if (validation != nullptr && validation->size() > 0) {
      const ModelParams folded = fold_standardization(params, result.stats);
      rec.val_error = error_rate(predict(folded, validation->images), validation->labels);
    }
    result.history.push_back(rec);
  }
  result.params = fold_standardization(params, result.stats);
  return result;
}

/// CSV `epoch,mean_loss,val_error,lr`.
inline void write_history_csv(std::ostream& os, const std::vector<EpochRecord>& history) {
  os << "epoch,mean_loss,val_error,lr\n";
  os.precision(10);
  for (const auto& r : history) os << r.epoch << ',' << r.mean_loss << ',' << r.val_error << ',' << r.lr << '\n';
}

}  // namespace augloss
