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

#include "rtdetr/synth.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "rtdetr/errors.hpp"
#include "rtdetr/rng.hpp"

namespace rtdetr {

using json = nlohmann::json;

void SceneSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("scene: " + msg); };
  if (image_size < 8) fail("image_size must be at least 8");
  if (count_min > count_max) fail("count range is empty (count_min > count_max)");
  if (count_max > 1000) fail("count_max must not exceed 1000");
  if (!(radius_min > 0.0 && radius_max < 0.5 && radius_min <= radius_max)) {
    fail("radius range must be non-empty and inside (0, 0.5)");
  }
  if (!(disc_radius > 0.0 && disc_radius < 0.5)) fail("disc_radius must be inside (0, 0.5)");
  // Corners of the largest box must fit in the disc: 2 r_max^2 < R^2.
  if (!(2.0 * radius_max * radius_max < disc_radius * disc_radius)) {
    fail("radius_max too large for the background disc");
  }
  if (num_classes < 1) fail("num_classes must be at least 1");
}

std::string scene_spec_to_json(const SceneSpec& s) {
  const json j = {{"image_size", s.image_size}, {"count_min", s.count_min},
                  {"count_max", s.count_max},   {"radius_min", s.radius_min},
                  {"radius_max", s.radius_max}, {"num_classes", s.num_classes},
                  {"disc_radius", s.disc_radius}, {"seed", s.seed}};
  return j.dump();
}

SceneSpec scene_spec_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("scene spec is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("scene spec must be a JSON object");
  SceneSpec s;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    try {
      if (key == "image_size") s.image_size = it->get<std::size_t>();
      else if (key == "count_min") s.count_min = it->get<std::size_t>();
      else if (key == "count_max") s.count_max = it->get<std::size_t>();
      else if (key == "radius_min") s.radius_min = it->get<double>();
      else if (key == "radius_max") s.radius_max = it->get<double>();
      else if (key == "num_classes") s.num_classes = it->get<std::size_t>();
      else if (key == "disc_radius") s.disc_radius = it->get<double>();
      else if (key == "seed") s.seed = it->get<std::uint64_t>();
      else throw ConfigError("unknown key 'scene." + key + "'");
    } catch (const json::exception& e) {
      throw ConfigError("bad value for 'scene." + key + "': " + e.what());
    }
  }
  s.validate();
  return s;
}

std::vector<GroundTruth> AnnotatedImage::ground_truths() const {
  std::vector<GroundTruth> out;
  out.reserve(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) out.push_back({labels[i], boxes[i]});
  return out;
}

std::string AnnotatedImage::id() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return buf;
}

namespace {

constexpr int kSuper = 4;  // supersamples per pixel side

struct Lesion {
  double cx, cy, rx, ry;
  int label;
  std::array<double, 3> color;
  double opacity;
  std::uint64_t texture_key;
};

// Class looks: microaneurysm (small dark red dot), hemorrhage (deep red,
// mottled), hard exudate (bright yellow), cotton-wool spot (pale, soft edge).
// Further classes cycle through these with a hue shift.
std::array<double, 3> class_color(int label) {
  static constexpr std::array<std::array<double, 3>, 4> kBase = {{
      {0.42, 0.06, 0.05},
      {0.55, 0.10, 0.08},
      {0.95, 0.85, 0.35},
      {0.92, 0.88, 0.80},
  }};
  auto c = kBase[static_cast<std::size_t>(label) % 4];
  const int cycle = label / 4;
  if (cycle > 0) {
    const double shift = 0.15 * static_cast<double>(cycle % 4);
    c = {c[2] * (1.0 - shift) + c[0] * shift, c[0], c[1] * (1.0 - shift) + shift};
  }
  return c;
}

double texture(std::uint64_t key, std::uint64_t sx, std::uint64_t sy) {
  const std::uint64_t h = splitmix64(key ^ splitmix64((sy << 32) ^ sx));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

bool corners_in_disc(double cx, double cy, double rx, double ry, double r) {
  const double dx = (cx > 0.5 ? cx - 0.5 : 0.5 - cx) + rx;
  const double dy = (cy > 0.5 ? cy - 0.5 : 0.5 - cy) + ry;
  return dx * dx + dy * dy <= r * r;
}

double quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<double>(static_cast<int>(c * 255.0 + 0.5)) / 255.0;
}

}  // namespace

AnnotatedImage generate_scene(const SceneSpec& spec, std::size_t index) {
  spec.validate();
  Rng rng(spec.seed, index);
  const auto count = static_cast<std::size_t>(rng.uniform_int(
      static_cast<std::int64_t>(spec.count_min), static_cast<std::int64_t>(spec.count_max)));

  // Per-scene illumination.
  const double brightness = rng.uniform(0.85, 1.0);
  const std::array<double, 3> fundus = {0.78 * brightness, 0.36 * brightness,
                                        0.16 * brightness};

  std::vector<Lesion> lesions;
  lesions.reserve(count);
  const double R = spec.disc_radius;
  for (std::size_t k = 0; k < count; ++k) {
    Lesion l{};
    l.label = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(spec.num_classes) - 1));
    l.rx = rng.uniform(spec.radius_min, spec.radius_max);
    l.ry = rng.uniform(spec.radius_min, spec.radius_max);
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      l.cx = rng.uniform(0.5 - R, 0.5 + R);
      l.cy = rng.uniform(0.5 - R, 0.5 + R);
      placed = corners_in_disc(l.cx, l.cy, l.rx, l.ry, R);
    }
    if (!placed) l.cx = l.cy = 0.5;  // always valid, see SceneSpec::validate
    l.color = class_color(l.label);
    l.opacity = rng.uniform(0.75, 0.95);
    l.texture_key = rng.next_u64();
    lesions.push_back(l);
  }

  const std::size_t S = spec.image_size;
  const double inv = 1.0 / static_cast<double>(S * kSuper);
  AnnotatedImage out;
  out.index = index;
  out.image = Image(S, S, 3, 0.0);
  for (std::size_t y = 0; y < S; ++y) {
    for (std::size_t x = 0; x < S; ++x) {
      std::array<double, 3> acc{0.0, 0.0, 0.0};
      for (int sj = 0; sj < kSuper; ++sj) {
        for (int si = 0; si < kSuper; ++si) {
          const std::uint64_t sx = x * kSuper + static_cast<std::uint64_t>(si);
          const std::uint64_t sy = y * kSuper + static_cast<std::uint64_t>(sj);
          const double px = (static_cast<double>(sx) + 0.5) * inv;
          const double py = (static_cast<double>(sy) + 0.5) * inv;
          const double dx = px - 0.5, dy = py - 0.5;
          const double r2 = (dx * dx + dy * dy) / (R * R);
          if (r2 > 1.0) continue;  // black outside the fundus disc
          const double shade = 1.0 - 0.45 * r2;
          std::array<double, 3> c = {fundus[0] * shade, fundus[1] * shade, fundus[2] * shade};
          for (const Lesion& l : lesions) {
            const double ex = (px - l.cx) / l.rx, ey = (py - l.cy) / l.ry;
            const double q = ex * ex + ey * ey;
            if (q > 1.0) continue;
            double a = l.opacity;
            std::array<double, 3> col = l.color;
            switch (l.label % 4) {
              case 1: {  // mottled
                const double m = 0.8 + 0.2 * texture(l.texture_key, sx, sy);
                col = {col[0] * m, col[1] * m, col[2] * m};
                break;
              }
              case 3:  // soft edge
                a *= 1.0 - 0.6 * q;
                break;
              default:
                break;
            }
            for (int ch = 0; ch < 3; ++ch) c[ch] = c[ch] * (1.0 - a) + col[ch] * a;
          }
          for (int ch = 0; ch < 3; ++ch) acc[ch] += c[ch];
        }
      }
      for (std::size_t ch = 0; ch < 3; ++ch) {
        out.image.at(y, x, ch) = quantize(acc[ch] / static_cast<double>(kSuper * kSuper));
      }
    }
  }
  for (const Lesion& l : lesions) {
    out.boxes.push_back({l.cx, l.cy, 2.0 * l.rx, 2.0 * l.ry});
    out.labels.push_back(l.label);
  }
  return out;
}

std::vector<AnnotatedImage> generate_dataset(const SceneSpec& spec, std::size_t count,
                                             std::size_t first_index) {
  std::vector<AnnotatedImage> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_scene(spec, first_index + i));
  return out;
}

// ---------------------------------------------------------------------------
// PPM

std::string encode_ppm(const Image& image) {
  if (image.channels != 3) {
    throw DimensionError("PPM needs 3 channels, got " + std::to_string(image.channels));
  }
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                    "\n255\n";
  out.reserve(out.size() + image.pixels.size());
  for (double v : image.pixels) {
    const double c = std::clamp(v, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(static_cast<int>(c * 255.0 + 0.5))));
  }
  return out;
}

Image decode_ppm(std::string_view bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (bytes[pos] == ' ' || bytes[pos] == '\n' || bytes[pos] == '\r' ||
                 bytes[pos] == '\t') {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* what) {
    skip_space();
    std::size_t v = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (v > (1u << 20)) throw FormatError(std::string("PPM ") + what + " too large");
      ++pos;
    }
    if (pos == start) throw FormatError(std::string("PPM header: missing ") + what);
    return v;
  };
  if (bytes.substr(0, 2) != "P6") throw FormatError("not a binary PPM (missing P6 magic)");
  pos = 2;
  const std::size_t w = read_uint("width");
  const std::size_t h = read_uint("height");
  const std::size_t maxval = read_uint("maxval");
  if (maxval != 255) throw FormatError("PPM maxval must be 255, got " + std::to_string(maxval));
  if (pos >= bytes.size()) throw FormatError("PPM truncated after header");
  ++pos;  // single whitespace before the raster
  const std::size_t n = w * h * 3;
  if (bytes.size() - pos != n) {
    throw FormatError("PPM raster has " + std::to_string(bytes.size() - pos) +
                      " bytes, expected " + std::to_string(n));
  }
  Image img(h, w, 3);
  for (std::size_t i = 0; i < n; ++i) {
    img.pixels[i] = static_cast<double>(static_cast<unsigned char>(bytes[pos + i])) / 255.0;
  }
  return img;
}

std::string annotation_line(const AnnotatedImage& scene) {
  json boxes = json::array();
  for (const BoxCS& b : scene.boxes) boxes.push_back({b.cx, b.cy, b.w, b.h});
  const json j = {{"image", scene.id() + ".ppm"}, {"boxes", boxes}, {"labels", scene.labels}};
  return j.dump();
}

std::uint64_t scene_checksum(const AnnotatedImage& scene) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto feed = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001B3ULL;
    }
  };
  feed(encode_ppm(scene.image));
  feed(annotation_line(scene));
  return h;
}

// ---------------------------------------------------------------------------
// Dataset directory

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const SceneSpec& spec,
                   std::span<const AnnotatedImage> scenes) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  if (ec) throw IoError("cannot create '" + (dir / "images").string() + "': " + ec.message());
  std::string ann;
  for (const AnnotatedImage& s : scenes) {
    write_file(dir / "images" / (s.id() + ".ppm"), encode_ppm(s.image));
    ann += annotation_line(s);
    ann += '\n';
  }
  write_file(dir / "annotations.jsonl", ann);
  const json manifest = {{"count", scenes.size()},
                         {"seed", spec.seed},
                         {"spec", json::parse(scene_spec_to_json(spec))}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  std::size_t count = 0;
  {
    const std::string text = read_file(dir / "manifest.json");
    try {
      const json m = json::parse(text);
      count = m.at("count").get<std::size_t>();
      ds.spec = scene_spec_from_json(m.at("spec").dump());
    } catch (const json::exception& e) {
      throw FormatError("manifest.json: " + std::string(e.what()));
    } catch (const ConfigError& e) {
      throw FormatError("manifest.json: " + std::string(e.what()));
    }
  }

  std::istringstream in(read_file(dir / "annotations.jsonl"));
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    AnnotatedImage s;
    std::string name;
    try {
      const json j = json::parse(line);
      name = j.at("image").get<std::string>();
      for (const auto& b : j.at("boxes")) {
        const auto v = b.get<std::vector<double>>();
        if (v.size() != 4) throw FormatError("box must have 4 values", line_no);
        s.boxes.push_back({v[0], v[1], v[2], v[3]});
      }
      s.labels = j.at("labels").get<std::vector<int>>();
    } catch (const json::exception& e) {
      throw FormatError("annotations.jsonl: " + std::string(e.what()), line_no);
    }
    if (s.boxes.size() != s.labels.size()) {
      throw FormatError("annotations.jsonl: boxes and labels differ in length", line_no);
    }
    const auto dot = name.find(".ppm");
    if (dot == std::string::npos || dot == 0 ||
        name.find_first_not_of("0123456789") != dot) {
      throw FormatError("annotations.jsonl: bad image name '" + name + "'", line_no);
    }
    s.index = std::stoul(name.substr(0, dot));
    s.image = decode_ppm(read_file(dir / "images" / name));
    ds.scenes.push_back(std::move(s));
  }
  if (ds.scenes.size() != count) {
    throw FormatError("manifest lists " + std::to_string(count) + " images but annotations have " +
                      std::to_string(ds.scenes.size()));
  }
  return ds;
}

}  // namespace rtdetr
