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

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <limits>

#include "augloss/data_io.hpp"
#include "test_support.hpp"

namespace {

using namespace augloss;
using augloss::testing::TempDir;

std::vector<unsigned char> record(unsigned char label, unsigned char fill) {
  std::vector<unsigned char> r(kCifarRecord, fill);
  r[0] = label;
  return r;
}

void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream os(p, std::ios::binary);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

TEST(Cifar10, HandCraftedRecord) {
  TempDir dir("cifar");
  write_bytes(dir.path() / "one.bin", record(7, 255));
  const auto ds = load_cifar10_binary({dir.path() / "one.bin"});
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.labels[0], 7u);
  EXPECT_EQ(ds.class_names[7], "horse");
  EXPECT_EQ(ds.images[0].height(), 32u);
  for (double v : ds.images[0].data()) EXPECT_EQ(v, 1.0);
}

TEST(Cifar10, PlanarChannelOrder) {
  auto r = record(1, 0);
  r[1 + 5] = 255;                     // R plane, pixel 5
  r[1 + kCifarPlane + 5] = 51;        // G plane
  r[1 + 2 * kCifarPlane + 6] = 102;   // B plane, pixel 6
  std::vector<ImageTensor> imgs;
  std::vector<std::size_t> labels;
  parse_cifar10_binary(r, imgs, labels);
  EXPECT_EQ(imgs[0](0, 5, 0), 1.0);
  EXPECT_EQ(imgs[0](0, 5, 1), 0.2);
  EXPECT_EQ(imgs[0](0, 6, 2), 0.4);
}

TEST(Cifar10, TruncatedFileFailsAtOffsetZero) {
  TempDir dir("cifar");
  write_bytes(dir.path() / "short.bin", std::vector<unsigned char>(3072, 0));
  try {
    load_cifar10_binary({dir.path() / "short.bin"});
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.location(), 0u);
  }
}

TEST(Cifar10, BadLabelReportsRecordOffset) {
  auto bytes = record(3, 10);
  const auto second = record(12, 10);
  bytes.insert(bytes.end(), second.begin(), second.end());
  std::vector<ImageTensor> imgs;
  std::vector<std::size_t> labels;
  try {
    parse_cifar10_binary(bytes, imgs, labels);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.location(), kCifarRecord);
  }
}

TEST(Cifar10, FilesConcatenateInOrderAndReserializeIdentically) {
  TempDir dir("cifar");
  std::vector<unsigned char> a, b;
  for (unsigned char i = 0; i < 2; ++i) {
    auto r = record(i, static_cast<unsigned char>(40 * i));
    for (std::size_t j = 1; j < r.size(); ++j) r[j] = static_cast<unsigned char>((j * 7 + i) % 256);
    a.insert(a.end(), r.begin(), r.end());
    auto s = record(static_cast<unsigned char>(8 + i), 0);
    for (std::size_t j = 1; j < s.size(); ++j) s[j] = static_cast<unsigned char>((j * 13 + i) % 256);
    b.insert(b.end(), s.begin(), s.end());
  }
  write_bytes(dir.path() / "a.bin", a);
  write_bytes(dir.path() / "b.bin", b);
  const auto ds = load_cifar10_binary({dir.path() / "a.bin", dir.path() / "b.bin"});
  ASSERT_EQ(ds.size(), 4u);
  EXPECT_EQ(ds.labels.labels, (std::vector<std::size_t>{0, 1, 8, 9}));

  std::vector<unsigned char> joined = a;
  joined.insert(joined.end(), b.begin(), b.end());
  EXPECT_EQ(encode_cifar10_binary(ds), joined);
  write_cifar10_binary(ds, dir.path() / "c.bin");
  EXPECT_EQ(augloss::testing::slurp(dir.path() / "c.bin"), std::string(joined.begin(), joined.end()));
}

TEST(Synth, NoiselessUnshiftedImagesEqualTemplates) {
  SynthOptions o;
  o.n_per_class = 2;
  o.noise_sd = 0.0;
  o.max_offset = 0;
  const auto ds = synth_shapes(o);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(ds.images[i], synth_template(ds.labels[i], o.side));
}

TEST(Synth, BalancedDeterministicAndValidated) {
  SynthOptions o;
  o.k = 7;
  o.n_per_class = 13;
  const auto a = synth_shapes(o);
  EXPECT_EQ(a.size(), 91u);
  std::vector<std::size_t> counts(7, 0);
  for (std::size_t i = 0; i < a.size(); ++i) ++counts[a.labels[i]];
  for (std::size_t c : counts) EXPECT_EQ(c, 13u);
  const auto b = synth_shapes(o);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.labels, b.labels);
  o.k = 11;
  EXPECT_THROW(synth_shapes(o), ArgumentError);
  o.k = 1;
  EXPECT_THROW(synth_shapes(o), ArgumentError);
}

TEST(Synth, TemplatesArePairwiseDistinct) {
  for (std::size_t side : {8u, 16u, 32u})
    for (std::size_t i = 0; i < kSynthTemplateCount; ++i)
      for (std::size_t j = i + 1; j < kSynthTemplateCount; ++j) {
        const auto a = synth_template(i, side);
        const auto b = synth_template(j, side);
        double d2 = 0.0;
        for (std::size_t t = 0; t < a.size(); ++t) d2 += (a.data()[t] - b.data()[t]) * (a.data()[t] - b.data()[t]);
        EXPECT_GT(std::sqrt(d2), 1.0) << i << " vs " << j << " side " << side;
      }
}

TEST(Synth, NearestTemplateClassifierIsAccurate) {
  SynthOptions o;
  o.n_per_class = 50;
  o.noise_sd = 0.1;
  o.seed = 4;
  const auto ds = synth_shapes(o);
  // Templates at every admissible offset, as the generator may shift by up to max_offset.
  std::vector<std::pair<std::size_t, ImageTensor>> bank;
  for (std::size_t c = 0; c < o.k; ++c)
    for (int dr = -o.max_offset; dr <= o.max_offset; ++dr)
      for (int dc = -o.max_offset; dc <= o.max_offset; ++dc) bank.emplace_back(c, synth_template(c, o.side, 3, dr, dc));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t pred = 0;
    for (const auto& [c, t] : bank) {
      double d = 0.0;
      for (std::size_t j = 0; j < t.size(); ++j) d += (t.data()[j] - ds.images[i].data()[j]) * (t.data()[j] - ds.images[i].data()[j]);
      if (d < best) {
        best = d;
        pred = c;
      }
    }
    correct += pred == ds.labels[i];
  }
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(ds.size()), 0.95);
}

TEST(Split, SizesDisjointnessDeterminism) {
  SynthOptions o;
  o.n_per_class = 100;
  o.side = 4;
  auto ds = synth_shapes(o);
  // Tag every image so membership can be tracked through the shuffle.
  for (std::size_t i = 0; i < ds.size(); ++i) ds.images[i](0, 0, 0) = static_cast<double>(i) / 1000.0;
  const auto [tr, te] = split(ds, 0.8, 3);
  EXPECT_EQ(tr.size(), 800u);
  EXPECT_EQ(te.size(), 200u);
  std::vector<double> tags;
  for (const auto& im : tr.images) tags.push_back(im(0, 0, 0));
  for (const auto& im : te.images) tags.push_back(im(0, 0, 0));
  std::sort(tags.begin(), tags.end());
  for (std::size_t i = 0; i < tags.size(); ++i) EXPECT_EQ(tags[i], static_cast<double>(i) / 1000.0);
  const auto again = split(ds, 0.8, 3);
  EXPECT_EQ(again.first.images, tr.images);
  EXPECT_THROW(split(ds, 1.0, 0), ArgumentError);
  EXPECT_THROW(split(ds, 0.0, 0), ArgumentError);
}

TEST(Export, PpmLayout) {
  TempDir dir("export");
  SynthOptions o;
  o.k = 2;
  o.n_per_class = 2;
  const auto ds = synth_shapes(o);
  export_dataset(ds, dir.path());
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "1" / "3.ppm"));
  const ImageTensor back = read_ppm(dir.path() / "0" / "2.ppm");
  EXPECT_LE(max_abs_diff(back, ds.images[2]), 0.5 / 255.0 + 1e-12);
  const std::string head = augloss::testing::slurp(dir.path() / "0" / "0.ppm").substr(0, 2);
  EXPECT_EQ(head, "P6");
}

TEST(Dataset, RejectsMismatchedSizes) {
  std::vector<ImageTensor> imgs(2, ImageTensor(2, 2, 1));
  EXPECT_THROW(LabeledImageDataset(imgs, LabelSet({0}, 2)), ArgumentError);
  imgs.push_back(ImageTensor(3, 2, 1));
  EXPECT_THROW(LabeledImageDataset(imgs, LabelSet({0, 1, 0}, 2)), ArgumentError);
}

}  // namespace
