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

#ifndef RTDETR_MODEL_HPP_
#define RTDETR_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rtdetr/box.hpp"
#include "rtdetr/gradcheck.hpp"
#include "rtdetr/image.hpp"
#include "rtdetr/tensor.hpp"

namespace rtdetr {

// Architecture hyperparameters. Class index `num_classes` is "no object".
struct ModelConfig {
  std::size_t image_size = 64;
  std::vector<std::size_t> patch_sizes{8, 16};
  std::size_t channels = 3;
  std::size_t d_model = 64;
  std::size_t num_heads = 4;
  std::size_t num_encoder_layers = 2;
  std::size_t num_decoder_layers = 2;
  std::size_t num_queries = 25;
  std::size_t num_classes = 4;

  std::size_t ffn_width() const { return 4 * d_model; }
  std::size_t head_dim() const { return d_model / num_heads; }
  // Side length of the token grid for each patch size.
  std::vector<std::size_t> grid_sides() const;
  std::size_t num_tokens() const;

  // Throws ConfigError naming the violated invariant.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Strict JSON (de)serialization; unknown keys raise ConfigError.
std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(std::string_view json);

// Ordered, named collection of trainable leaf tensors.
class ParameterSet {
 public:
  Tensor& add(std::string name, Tensor value);
  const Tensor& get(std::string_view name) const;
  Tensor& get(std::string_view name);
  bool contains(std::string_view name) const;

  std::vector<NamedTensor>& entries() { return entries_; }
  const std::vector<NamedTensor>& entries() const { return entries_; }
  std::size_t num_scalars() const;

  void zero_grad();
  // Deep copy; the copy shares no storage with this set.
  ParameterSet clone() const;
  // Rounds every value through 32-bit float, as a checkpoint would.
  void quantize_to_float();

 private:
  std::vector<NamedTensor> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct AttentionParams {
  Tensor wq, bq, wk, wv, bv, wo, bo;  // keys carry no bias

  static AttentionParams from(const ParameterSet& params, const std::string& prefix);
};

// Raw output slots: class_logits [N_q x (K+1)], boxes [N_q x 4] (cx, cy, w, h
// through a sigmoid). Each query owns a learned reference box
// ("query_anchor", logits); the box head predicts an offset from it.
struct Predictions {
  Tensor class_logits;
  Tensor boxes;

  std::size_t num_queries() const { return class_logits.dim(0); }
  std::size_t num_classes() const { return class_logits.dim(1) - 1; }
  BoxCS box(std::size_t query) const;
};

// Annotated object: foreground class in [0, num_classes) and its box.
struct GroundTruth {
  int class_id = 0;
  BoxCS box;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct Detection {
  BoxCS box;
  int class_id = 0;
  double score = 0.0;
  std::size_t query = 0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

// Multi-scale patch projection: for each patch size P the image is cut into
// non-overlapping P x P patches (row-major grid order), each flattened in
// (row, col, channel) order and projected to d_model. Scales are stacked in
// config order. Returns [T x d_model].
Tensor patch_embed(const Image& image, const ModelConfig& config,
                   const ParameterSet& params);

// Fixed 2-D sinusoidal encoding for each grid (scale) in order. For a token
// at grid column x and row y with F = d_model / 4 frequencies
// w_i = 10000^(-i/F), the vector is
// [sin(x w_i) | cos(x w_i) | sin(y w_i) | cos(y w_i)].
Tensor positional_encoding(std::span<const std::size_t> grid_sides,
                           std::size_t d_model);

// Scaled dot-product attention over already-projected q [a x d], k [b x d],
// v [b x d], split into num_heads column groups and re-concatenated.
// Optionally returns the per-head [a x b] weight matrices.
Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v,
              std::size_t num_heads, std::vector<Tensor>* weights = nullptr);

// Projects query/key/value inputs, attends per head, and applies the output
// projection.
Tensor multi_head_attention(const Tensor& query, const Tensor& key,
                            const Tensor& value, const AttentionParams& p,
                            std::size_t num_heads,
                            std::vector<Tensor>* weights = nullptr);

class DetectionModel {
 public:
  // Fresh model with weights drawn uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  DetectionModel(ModelConfig config, std::uint64_t seed);
  DetectionModel(ModelConfig config, ParameterSet params);

  const ModelConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  // Graph-recording forward pass. Read-only over parameters.
  Predictions forward(const Image& image) const;

 private:
  void check_params() const;

  ModelConfig config_;
  ParameterSet params_;
  Tensor pos_;
};

// Keeps queries whose arg-max class is a foreground class and whose best
// foreground probability is >= conf_threshold, sorted by score descending
// (ties: lower query index first), truncated to top_k. No suppression of
// overlapping boxes.
std::vector<Detection> decode(const Predictions& p, double conf_threshold,
                              std::size_t top_k);

}  // namespace rtdetr

#endif  // RTDETR_MODEL_HPP_
