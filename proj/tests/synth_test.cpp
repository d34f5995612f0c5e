/* Copyright 2026 The rtdetr-desk Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rtdetr/errors.hpp"
#include "rtdetr/synth.hpp"

namespace rtdetr {
namespace {

// Recorded at first generation; any change to the PRNG, rasterizer or
// annotation format shows up here.
constexpr std::uint64_t kGoldenSeed42Index0 = 0xd19b33041a07a2bdULL;
constexpr std::uint64_t kGoldenSeed7Index3 = 0xcf650823a8bfbe29ULL;

class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

TEST(GenerateScene, DeterministicAndGolden) {
  const SceneSpec spec;
  const AnnotatedImage a = generate_scene(spec, 0), b = generate_scene(spec, 0);
  EXPECT_EQ(a, b);
  EXPECT_EQ(encode_ppm(a.image), encode_ppm(b.image));
  EXPECT_EQ(scene_checksum(a), kGoldenSeed42Index0);
  SceneSpec s7;
  s7.seed = 7;
  EXPECT_EQ(scene_checksum(generate_scene(s7, 3)), kGoldenSeed7Index3);
  EXPECT_NE(scene_checksum(generate_scene(spec, 1)), kGoldenSeed42Index0);
}

TEST(GenerateScene, BoxesLieInsideTheDisc) {
  const SceneSpec spec;
  for (std::size_t i = 0; i < 200; ++i) {
    const AnnotatedImage s = generate_scene(spec, i);
    ASSERT_EQ(s.boxes.size(), s.labels.size());
    for (std::size_t k = 0; k < s.boxes.size(); ++k) {
      const BoxXY b = to_corner(s.boxes[k]);
      for (double x : {b.x1, b.x2}) {
        for (double y : {b.y1, b.y2}) {
          const double r2 = (x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5);
          EXPECT_LE(r2, spec.disc_radius * spec.disc_radius + 1e-12);
        }
      }
      EXPECT_GT(s.boxes[k].w, 0.0);
      EXPECT_GT(s.boxes[k].h, 0.0);
      EXPECT_GE(s.labels[k], 0);
      EXPECT_LT(s.labels[k], static_cast<int>(spec.num_classes));
    }
    for (double v : s.image.pixels) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(GenerateScene, CountRangeAndMean) {
  SceneSpec spec;
  spec.count_min = 5;
  spec.count_max = 15;
  double total = 0.0;
  for (std::size_t i = 0; i < 100; ++i) {
    const std::size_t n = generate_scene(spec, i).boxes.size();
    EXPECT_GE(n, 5u);
    EXPECT_LE(n, 15u);
    total += static_cast<double>(n);
  }
  EXPECT_GE(total / 100.0, 8.0);
  EXPECT_LE(total / 100.0, 12.0);
}

TEST(GenerateScene, DenseScenesOverlap) {
  SceneSpec spec;
  spec.count_min = 10;
  spec.count_max = 15;
  std::size_t overlapping = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    const AnnotatedImage s = generate_scene(spec, i);
    bool any = false;
    for (std::size_t a = 0; a < s.boxes.size() && !any; ++a) {
      for (std::size_t b = a + 1; b < s.boxes.size() && !any; ++b) {
        any = iou(s.boxes[a], s.boxes[b]) > 0.0;
      }
    }
    overlapping += any ? 1 : 0;
  }
  EXPECT_GT(overlapping, 10u);
}

TEST(SceneSpec, ValidationAndStrictJson) {
  SceneSpec s;
  s.count_min = 5;
  s.count_max = 4;
  EXPECT_THROW(s.validate(), ConfigError);
  s = SceneSpec{};
  s.radius_max = 0.9;
  EXPECT_THROW(s.validate(), ConfigError);
  s = SceneSpec{};
  s.seed = 99;
  EXPECT_EQ(scene_spec_from_json(scene_spec_to_json(s)), s);
  try {
    scene_spec_from_json(R"({"count_mx": 3})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("scene.count_mx"), std::string::npos);
  }
}

TEST(Ppm, RoundTripAndErrors) {
  const AnnotatedImage s = generate_scene(SceneSpec{}, 2);
  const std::string bytes = encode_ppm(s.image);
  EXPECT_EQ(bytes.rfind("P6\n", 0), 0u);
  const Image back = decode_ppm(bytes);
  double max_diff = 0.0;
  for (std::size_t i = 0; i < back.pixels.size(); ++i) {
    max_diff = std::max(max_diff, std::fabs(back.pixels[i] - s.image.pixels[i]));
  }
  EXPECT_LE(max_diff, 1.0 / 255.0);
  EXPECT_THROW(decode_ppm("P3\n2 2\n255\n"), FormatError);
  EXPECT_THROW(decode_ppm(bytes.substr(0, bytes.size() - 5)), FormatError);
}

TEST(Dataset, RoundTrip) {
  TempDir dir("rtdetr_synth_rt");
  const SceneSpec spec;
  const auto scenes = generate_dataset(spec, 4);
  write_dataset(dir.path(), spec, scenes);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "images" / "000003.ppm"));
  const Dataset ds = read_dataset(dir.path());
  EXPECT_EQ(ds.spec, spec);
  ASSERT_EQ(ds.scenes.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(ds.scenes[i].boxes, scenes[i].boxes);
    EXPECT_EQ(ds.scenes[i].labels, scenes[i].labels);
    EXPECT_EQ(ds.scenes[i].index, i);
    EXPECT_EQ(ds.scenes[i].image, scenes[i].image);  // 8-bit quantized at generation
  }
}

TEST(Dataset, TruncatedAnnotationLineNamesTheLine) {
  TempDir dir("rtdetr_synth_trunc");
  const SceneSpec spec;
  write_dataset(dir.path(), spec, generate_dataset(spec, 3));
  const auto path = dir.path() / "annotations.jsonl";
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  in.close();
  std::string text = ss.str();
  // Cut the second line in half.
  const std::size_t l2 = text.find('\n') + 1;
  const std::size_t l3 = text.find('\n', l2);
  text = text.substr(0, l2) + text.substr(l2, (l3 - l2) / 2) + text.substr(l3);
  std::ofstream(path, std::ios::trunc) << text;
  try {
    read_dataset(dir.path());
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 2);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Dataset, MissingDirectoryIsIoError) {
  EXPECT_THROW(read_dataset("/nonexistent/rtdetr/data"), IoError);
}

}  // namespace
}  // namespace rtdetr
