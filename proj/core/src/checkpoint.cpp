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

#include "rtdetr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>

#include "rtdetr/errors.hpp"

namespace rtdetr {
namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) {
      throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
    }
  }
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

void write_header(Writer& w, const std::string& name, const Shape& dims) {
  if (name.size() > 0xFFFF) throw ContractError("tensor name too long: " + name);
  if (dims.size() > 0xFF) throw ContractError("tensor rank too large: " + name);
  w.u16(static_cast<std::uint16_t>(name.size()));
  w.bytes(name.data(), name.size());
  w.u8(static_cast<std::uint8_t>(dims.size()));
  for (auto d : dims) w.u32(static_cast<std::uint32_t>(d));
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const DetectionModel& model) {
  const auto& entries = model.params().entries();
  Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(entries.size() + 1));

  const std::string config = model_config_to_json(model.config());
  write_header(w, kConfigTensorName, {config.size()});
  w.bytes(config.data(), config.size());

  for (const auto& e : entries) {
    write_header(w, e.name, e.tensor.dims());
    for (double v : e.tensor.data()) w.f32(static_cast<float>(v));
  }
  return w.take();
}

DetectionModel decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(4) != std::string(kCheckpointMagic, 4)) {
    throw FormatError("not a checkpoint: bad magic bytes");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  std::optional<ModelConfig> config;
  ParameterSet params;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::string name = r.str(r.u16());
    const std::uint8_t rank = r.u8();
    Shape dims(rank);
    std::size_t n = 1;
    for (auto& d : dims) {
      d = r.u32();
      n *= d;
    }
    if (name == kConfigTensorName) {
      if (rank != 1) throw FormatError("config tensor must be rank 1");
      config = model_config_from_json(r.str(n));
      continue;
    }
    if (rank == 0 || n == 0) throw FormatError("tensor '" + name + "' has empty shape");
    r.need(4 * n);
    std::vector<double> values(n);
    for (double& v : values) v = static_cast<double>(r.f32());
    params.add(name, Tensor(std::move(dims), std::move(values)));
  }
  if (!r.done()) throw FormatError("trailing bytes after last tensor");
  if (!config) throw FormatError("checkpoint has no __config__ tensor");
  return DetectionModel(*config, std::move(params));
}

void save_checkpoint(const std::filesystem::path& path, const DetectionModel& model) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

DetectionModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace rtdetr
