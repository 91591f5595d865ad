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

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "augloss/error.hpp"
#include "augloss/image.hpp"
#include "augloss/loss.hpp"
#include "augloss/random.hpp"

namespace augloss {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

/// Fully connected layer computing x * weights + bias (weights are fan_in x fan_out).
struct DenseLayer {
  Matrix weights;
  RowVector bias;

  std::size_t fan_in() const { return static_cast<std::size_t>(weights.rows()); }
  std::size_t fan_out() const { return static_cast<std::size_t>(weights.cols()); }
};

/// ReLU perceptron; the final layer produces logits and softmax gives the posterior.
struct ModelParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.front().fan_in(); }
  std::size_t classes() const { return layers.back().fan_out(); }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
  }

  void validate() const {
    detail::require(!layers.empty(), "model has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      detail::require(l.fan_in() > 0 && l.fan_out() > 0, "layer with empty dimension");
      detail::require(static_cast<std::size_t>(l.bias.size()) == l.fan_out(), "bias length != fan_out");
      if (i > 0) detail::require(layers[i - 1].fan_out() == l.fan_in(), "layer dimensions do not chain");
      detail::require(l.weights.allFinite() && l.bias.allFinite(), "non-finite model parameter");
    }
    detail::require(classes() >= 2, "output layer needs >= 2 classes");
  }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i)
      if (a.layers[i].weights != b.layers[i].weights || a.layers[i].bias != b.layers[i].bias) return false;
    return true;
  }
};

/// He-initialized MLP: weights ~ N(0, 2 / fan_in), zero biases.
inline ModelParams init_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t classes,
                            std::uint64_t seed) {
  detail::require(input_dim > 0 && classes >= 2, "MLP needs input_dim > 0 and >= 2 classes");
  Rng rng = make_rng(seed);
  ModelParams m;
  std::size_t fan_in = input_dim;
  auto add = [&](std::size_t fan_out) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    DenseLayer l{Matrix(fan_in, fan_out), RowVector::Zero(static_cast<Eigen::Index>(fan_out))};
    for (Eigen::Index i = 0; i < l.weights.size(); ++i) l.weights.data()[i] = dist(rng);
    m.layers.push_back(std::move(l));
    fan_in = fan_out;
  };
  for (std::size_t h : hidden) {
    detail::require(h > 0, "hidden layer width must be positive");
    add(h);
  }
  add(classes);
  return m;
}

/// One row per image, HWC order.
inline Matrix flatten(std::span<const ImageTensor> images) {
  if (images.empty()) return Matrix(0, 0);
  Matrix x(static_cast<Eigen::Index>(images.size()), static_cast<Eigen::Index>(images.front().size()));
  for (std::size_t i = 0; i < images.size(); ++i) {
    detail::require(images[i].same_shape(images.front()), "batch images differ in shape");
    std::copy(images[i].data().begin(), images[i].data().end(), x.row(static_cast<Eigen::Index>(i)).data());
  }
  return x;
}

inline Matrix logits(const ModelParams& params, const Matrix& x) {
  detail::require(static_cast<std::size_t>(x.cols()) == params.input_dim(), "input dimension does not match fan_in");
  Matrix a = x;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    Matrix z = a * l.weights;
    z.rowwise() += l.bias;
    if (i + 1 < params.layers.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

/// Softmax posteriors for a batch of images.
inline std::vector<Posterior> forward(const ModelParams& params, std::span<const ImageTensor> batch) {
  std::vector<Posterior> out;
  if (batch.empty()) return out;
  detail::require(batch.front().size() == params.input_dim(), "flattened image size does not match fan_in");
  const Matrix z = logits(params, flatten(batch));
  out.reserve(batch.size());
  for (Eigen::Index r = 0; r < z.rows(); ++r) out.push_back(softmax(std::span<const double>(z.row(r).data(), z.cols())));
  return out;
}

/// Argmax per row; ties resolve to the lowest class index.
inline std::vector<std::size_t> argmax_rows(const Matrix& z) {
  std::vector<std::size_t> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < z.cols(); ++c)
      if (z(r, c) > z(r, best)) best = c;
    out[static_cast<std::size_t>(r)] = static_cast<std::size_t>(best);
  }
  return out;
}

/// Predicted classes, evaluated in chunks to bound memory.
inline std::vector<std::size_t> predict(const ModelParams& params, std::span<const ImageTensor> images,
                                        std::size_t chunk = 512) {
  std::vector<std::size_t> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += chunk) {
    const auto part = images.subspan(start, std::min(chunk, images.size() - start));
    const auto pred = argmax_rows(logits(params, flatten(part)));
    out.insert(out.end(), pred.begin(), pred.end());
  }
  return out;
}

// --- checkpoint ------------------------------------------------------------
// Layout (little-endian): "AGLS", u32 version, u32 layer count, then per
// layer u32 fan_in, u32 fan_out, fan_in*fan_out f64 weights (row-major),
// fan_out f64 biases.

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void put_le(std::vector<unsigned char>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  auto bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::span<const unsigned char> in, std::size_t& pos) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  if (pos + sizeof(U) > in.size()) throw ParseError("checkpoint truncated at byte offset " + std::to_string(pos), pos);
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(in[pos + i]) << (8 * i);
  pos += sizeof(U);
  return std::bit_cast<T>(bits);
}

}  // namespace detail

inline std::vector<unsigned char> encode_checkpoint(const ModelParams& params) {
  params.validate();
  std::vector<unsigned char> out{'A', 'G', 'L', 'S'};
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.layers.size()));
  for (const auto& l : params.layers) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.fan_in()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.fan_out()));
    for (Eigen::Index i = 0; i < l.weights.size(); ++i) detail::put_le<double>(out, l.weights.data()[i]);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) detail::put_le<double>(out, l.bias[i]);
  }
  return out;
}

inline ModelParams decode_checkpoint(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "AGLS", 4) != 0) throw ParseError("checkpoint magic is not AGLS", 0);
  std::size_t pos = 4;
  const auto version = detail::get_le<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version), 4);
  const auto count = detail::get_le<std::uint32_t>(bytes, pos);
  ModelParams m;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto fan_in = detail::get_le<std::uint32_t>(bytes, pos);
    const auto fan_out = detail::get_le<std::uint32_t>(bytes, pos);
    if (static_cast<std::uint64_t>(fan_in) * fan_out * 8 > bytes.size())
      throw ParseError("layer dimensions exceed checkpoint size", pos);
    DenseLayer l{Matrix(fan_in, fan_out), RowVector(static_cast<Eigen::Index>(fan_out))};
    for (Eigen::Index k = 0; k < l.weights.size(); ++k) l.weights.data()[k] = detail::get_le<double>(bytes, pos);
    for (Eigen::Index k = 0; k < l.bias.size(); ++k) l.bias[k] = detail::get_le<double>(bytes, pos);
    m.layers.push_back(std::move(l));
  }
  if (pos != bytes.size()) throw ParseError("trailing bytes after checkpoint", pos);
  try {
    m.validate();
  } catch (const ArgumentError& e) {
    throw ParseError(std::string("invalid checkpoint: ") + e.what(), pos);
  }
  return m;
}

/// Writes to a sibling temporary file, then renames into place.
inline void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(params);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  std::filesystem::rename(tmp, path);
}

inline ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path.string(), 0);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace augloss
