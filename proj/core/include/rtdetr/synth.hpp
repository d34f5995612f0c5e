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

#ifndef RTDETR_SYNTH_HPP_
#define RTDETR_SYNTH_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rtdetr/box.hpp"
#include "rtdetr/image.hpp"
#include "rtdetr/model.hpp"

namespace rtdetr {

// Retina-like scene parameters. Radii and the disc radius are fractions of
// the image side.
struct SceneSpec {
  std::size_t image_size = 64;
  std::size_t count_min = 4;
  std::size_t count_max = 10;
  double radius_min = 0.02;
  double radius_max = 0.08;
  std::size_t num_classes = 4;
  double disc_radius = 0.46;
  std::uint64_t seed = 42;

  void validate() const;

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

std::string scene_spec_to_json(const SceneSpec& spec);
// Strict: unknown keys raise ConfigError; missing keys keep defaults.
SceneSpec scene_spec_from_json(std::string_view json);

struct AnnotatedImage {
  std::size_t index = 0;
  Image image;
  std::vector<BoxCS> boxes;
  std::vector<int> labels;

  std::vector<GroundTruth> ground_truths() const;
  // "NNNNNN", the zero-padded index.
  std::string id() const;

  friend bool operator==(const AnnotatedImage&, const AnnotatedImage&) = default;
};

// Pure function of (spec, index): background disc with a radial gradient,
// then anti-aliased axis-aligned ellipses whose boxes are exact tight bounds
// lying inside the disc. Pixels are already 8-bit quantized, so PPM storage
// is lossless.
AnnotatedImage generate_scene(const SceneSpec& spec, std::size_t index);

// Scenes first_index .. first_index + count - 1.
std::vector<AnnotatedImage> generate_dataset(const SceneSpec& spec, std::size_t count,
                                             std::size_t first_index = 0);

// Binary PPM (P6, maxval 255). Values are rounded to the nearest 1/255.
std::string encode_ppm(const Image& image);
Image decode_ppm(std::string_view bytes);

// FNV-1a over the PPM bytes followed by the annotation line.
std::uint64_t scene_checksum(const AnnotatedImage& scene);

std::string annotation_line(const AnnotatedImage& scene);

struct Dataset {
  SceneSpec spec;
  std::vector<AnnotatedImage> scenes;
};

// Layout: images/NNNNNN.ppm, annotations.jsonl (one line per image) and
// manifest.json {"count", "seed", "spec"}.
void write_dataset(const std::filesystem::path& dir, const SceneSpec& spec,
                   std::span<const AnnotatedImage> scenes);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace rtdetr

#endif  // RTDETR_SYNTH_HPP_
