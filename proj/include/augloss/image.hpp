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
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "augloss/error.hpp"

namespace augloss {

/// H x W x C raster (C = 1 or 3), row-major HWC, values in [0, 1].
class ImageTensor {
 public:
  ImageTensor() = default;

  ImageTensor(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0)
      : ImageTensor(height, width, channels, std::vector<double>(height * width * channels, fill)) {}

  ImageTensor(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> data)
      : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    detail::require(height_ > 0 && width_ > 0, "image must have positive extent");
    detail::require(channels_ == 1 || channels_ == 3, "image must have 1 or 3 channels");
    detail::require(data_.size() == height_ * width_ * channels_, "image data length != H*W*C");
    for (double v : data_) detail::require(v >= 0.0 && v <= 1.0, "image value outside [0, 1]");
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return data_.size(); }

  double operator()(std::size_t r, std::size_t c, std::size_t ch) const { return data_[(r * width_ + c) * channels_ + ch]; }
  double& operator()(std::size_t r, std::size_t c, std::size_t ch) { return data_[(r * width_ + c) * channels_ + ch]; }

  const std::vector<double>& data() const noexcept { return data_; }
  /// Mutable access; callers must keep values in [0, 1].
  std::vector<double>& mutable_data() noexcept { return data_; }

  bool same_shape(const ImageTensor& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }

  void clip() {
    for (double& v : data_) v = std::clamp(v, 0.0, 1.0);
  }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> data_;
};

inline double max_abs_diff(const ImageTensor& a, const ImageTensor& b) {
  detail::require(a.same_shape(b), "image shapes differ");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

inline double mean_abs_diff(const ImageTensor& a, const ImageTensor& b) {
  detail::require(a.same_shape(b), "image shapes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a.data()[i] - b.data()[i]);
  return s / static_cast<double>(a.size());
}

inline double pixel_mean(const ImageTensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return s / static_cast<double>(x.size());
}

inline std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

/// Binary PPM (P6, 8-bit). Single-channel images are replicated to RGB.
inline void write_ppm(const std::filesystem::path& path, const ImageTensor& x) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "P6\n" << x.width() << ' ' << x.height() << "\n255\n";
  std::vector<char> buf;
  buf.reserve(x.height() * x.width() * 3);
  for (std::size_t r = 0; r < x.height(); ++r)
    for (std::size_t c = 0; c < x.width(); ++c)
      for (std::size_t ch = 0; ch < 3; ++ch)
        buf.push_back(static_cast<char>(to_byte(x(r, c, x.channels() == 3 ? ch : 0))));
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

/// Reads binary P6 (RGB) or P5 (gray) with maxval 255.
inline ImageTensor read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  std::string magic;
  in >> magic;
  if (magic != "P6" && magic != "P5") throw ParseError("unsupported image magic '" + magic + "'", 0);
  auto next_int = [&]() {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
      in >> std::ws;
    }
    long v = -1;
    in >> v;
    return v;
  };
  const long w = next_int();
  const long h = next_int();
  const long maxval = next_int();
  if (w <= 0 || h <= 0 || maxval != 255) throw ParseError("bad image header in " + path.string(), 0);
  in.get();
  const std::size_t channels = magic == "P6" ? 3 : 1;
  const std::size_t offset = static_cast<std::size_t>(in.tellg());
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w * h) * channels);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size())
    throw ParseError("truncated pixel data in " + path.string(), offset + static_cast<std::size_t>(in.gcount()));
  std::vector<double> data(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) data[i] = bytes[i] / 255.0;
  return ImageTensor(static_cast<std::size_t>(h), static_cast<std::size_t>(w), channels, std::move(data));
}

}  // namespace augloss
