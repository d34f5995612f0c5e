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

#include "rtdetr/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "rtdetr/errors.hpp"
#include "rtdetr/rng.hpp"

namespace rtdetr {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// ModelConfig

std::vector<std::size_t> ModelConfig::grid_sides() const {
  std::vector<std::size_t> sides;
  sides.reserve(patch_sizes.size());
  for (auto p : patch_sizes) sides.push_back(image_size / p);
  return sides;
}

std::size_t ModelConfig::num_tokens() const {
  std::size_t t = 0;
  for (auto g : grid_sides()) t += g * g;
  return t;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model: " + msg); };
  if (image_size == 0) fail("image_size must be positive");
  if (channels == 0) fail("channels must be positive");
  if (patch_sizes.empty()) fail("patch_sizes must not be empty");
  for (auto p : patch_sizes) {
    if (p == 0 || image_size % p != 0) {
      fail("image_size " + std::to_string(image_size) +
           " is not divisible by patch size " + std::to_string(p));
    }
  }
  if (num_heads == 0 || d_model == 0 || d_model % num_heads != 0) {
    fail("d_model " + std::to_string(d_model) + " is not divisible by num_heads " +
         std::to_string(num_heads));
  }
  if (d_model % 4 != 0) {
    fail("d_model " + std::to_string(d_model) +
         " must be divisible by 4 for the 2-D positional encoding");
  }
  if (num_queries == 0) fail("num_queries must be positive");
  if (num_classes == 0) fail("num_classes must be positive");
}

std::string model_config_to_json(const ModelConfig& c) {
  json j = {{"image_size", c.image_size},
            {"patch_sizes", c.patch_sizes},
            {"channels", c.channels},
            {"d_model", c.d_model},
            {"num_heads", c.num_heads},
            {"num_encoder_layers", c.num_encoder_layers},
            {"num_decoder_layers", c.num_decoder_layers},
            {"num_queries", c.num_queries},
            {"num_classes", c.num_classes}};
  return j.dump();
}

ModelConfig model_config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("model config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    try {
      if (key == "image_size") c.image_size = it->get<std::size_t>();
      else if (key == "patch_sizes") c.patch_sizes = it->get<std::vector<std::size_t>>();
      else if (key == "channels") c.channels = it->get<std::size_t>();
      else if (key == "d_model") c.d_model = it->get<std::size_t>();
      else if (key == "num_heads") c.num_heads = it->get<std::size_t>();
      else if (key == "num_encoder_layers") c.num_encoder_layers = it->get<std::size_t>();
      else if (key == "num_decoder_layers") c.num_decoder_layers = it->get<std::size_t>();
      else if (key == "num_queries") c.num_queries = it->get<std::size_t>();
      else if (key == "num_classes") c.num_classes = it->get<std::size_t>();
      else throw ConfigError("unknown key 'model." + key + "'");
    } catch (const json::exception& e) {
      throw ConfigError("bad value for 'model." + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// ParameterSet

Tensor& ParameterSet::add(std::string name, Tensor value) {
  if (index_.count(name)) throw ContractError("duplicate parameter '" + name + "'");
  value.set_requires_grad(true);
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(value)});
  return entries_.back().tensor;
}

const Tensor& ParameterSet::get(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) {
    throw ContractError("missing parameter '" + std::string(name) + "'");
  }
  return entries_[it->second].tensor;
}

Tensor& ParameterSet::get(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).get(name));
}

bool ParameterSet::contains(std::string_view name) const {
  return index_.count(std::string(name)) > 0;
}

std::size_t ParameterSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

ParameterSet ParameterSet::clone() const {
  ParameterSet out;
  for (const auto& e : entries_) out.add(e.name, e.tensor.detach());
  return out;
}

void ParameterSet::quantize_to_float() {
  for (auto& e : entries_) {
    for (double& v : e.tensor.mutable_data()) v = static_cast<double>(static_cast<float>(v));
  }
}

AttentionParams AttentionParams::from(const ParameterSet& p, const std::string& prefix) {
  return {p.get(prefix + ".wq"), p.get(prefix + ".bq"), p.get(prefix + ".wk"),
          p.get(prefix + ".wv"), p.get(prefix + ".bv"), p.get(prefix + ".wo"),
          p.get(prefix + ".bo")};
}

BoxCS Predictions::box(std::size_t query) const {
  return {boxes.at(query, 0), boxes.at(query, 1), boxes.at(query, 2),
          boxes.at(query, 3)};
}

// ---------------------------------------------------------------------------
// Building blocks

namespace {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add(matmul(x, w), b);
}

}  // namespace

Tensor patch_embed(const Image& image, const ModelConfig& config,
                   const ParameterSet& params) {
  const std::size_t s = config.image_size;
  const std::size_t c = config.channels;
  if (image.height != s || image.width != s || image.channels != c ||
      image.pixels.size() != s * s * c) {
    throw DimensionError("patch_embed: image is " + std::to_string(image.height) +
                         "x" + std::to_string(image.width) + "x" +
                         std::to_string(image.channels) + ", model expects " +
                         std::to_string(s) + "x" + std::to_string(s) + "x" +
                         std::to_string(c));
  }
  std::vector<Tensor> scales;
  for (std::size_t p : config.patch_sizes) {
    const std::size_t g = s / p;
    const std::size_t width = p * p * c;
    std::vector<double> patches(g * g * width);
    for (std::size_t gy = 0; gy < g; ++gy) {
      for (std::size_t gx = 0; gx < g; ++gx) {
        double* row = patches.data() + (gy * g + gx) * width;
        for (std::size_t py = 0; py < p; ++py) {
          const double* src = image.pixels.data() + ((gy * p + py) * s + gx * p) * c;
          std::copy_n(src, p * c, row + py * p * c);
        }
      }
    }
    const std::string name = "patch" + std::to_string(p);
    const Tensor flat = Tensor::matrix(g * g, width, std::move(patches));
    scales.push_back(linear(flat, params.get(name + ".weight"), params.get(name + ".bias")));
  }
  if (scales.size() == 1) return scales.front();
  return concat(scales, 0);
}

Tensor positional_encoding(std::span<const std::size_t> grid_sides,
                           std::size_t d_model) {
  if (d_model == 0 || d_model % 4 != 0) {
    throw ConfigError("positional_encoding: d_model " + std::to_string(d_model) +
                      " must be a positive multiple of 4");
  }
  const std::size_t f = d_model / 4;
  std::vector<double> freq(f);
  for (std::size_t i = 0; i < f; ++i) {
    freq[i] = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(f));
  }
  std::size_t tokens = 0;
  for (auto g : grid_sides) tokens += g * g;
  if (tokens == 0) throw DimensionError("positional_encoding: empty grid");
  std::vector<double> out(tokens * d_model);
  std::size_t t = 0;
  for (auto g : grid_sides) {
    for (std::size_t y = 0; y < g; ++y) {
      for (std::size_t x = 0; x < g; ++x, ++t) {
        double* row = out.data() + t * d_model;
        for (std::size_t i = 0; i < f; ++i) {
          row[i] = std::sin(static_cast<double>(x) * freq[i]);
          row[f + i] = std::cos(static_cast<double>(x) * freq[i]);
          row[2 * f + i] = std::sin(static_cast<double>(y) * freq[i]);
          row[3 * f + i] = std::cos(static_cast<double>(y) * freq[i]);
        }
      }
    }
  }
  return Tensor::matrix(tokens, d_model, std::move(out));
}

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v,
              std::size_t num_heads, std::vector<Tensor>* weights) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) ||
      k.dims() != v.dims()) {
    throw DimensionError("attention: incompatible q " + shape_to_string(q.dims()) +
                         ", k " + shape_to_string(k.dims()) + ", v " +
                         shape_to_string(v.dims()));
  }
  const std::size_t d = q.dim(1);
  if (num_heads == 0 || d % num_heads != 0) {
    throw ConfigError("attention: width " + std::to_string(d) +
                      " is not divisible by " + std::to_string(num_heads) + " heads");
  }
  const std::size_t dk = d / num_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  if (weights) weights->clear();
  std::vector<Tensor> heads;
  heads.reserve(num_heads);
  for (std::size_t h = 0; h < num_heads; ++h) {
    const Tensor qh = num_heads == 1 ? q : slice(q, 1, h * dk, dk);
    const Tensor kh = num_heads == 1 ? k : slice(k, 1, h * dk, dk);
    const Tensor vh = num_heads == 1 ? v : slice(v, 1, h * dk, dk);
    const Tensor w = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), 1);
    if (weights) weights->push_back(w);
    heads.push_back(matmul(w, vh));
  }
  if (num_heads == 1) return heads.front();
  return concat(heads, 1);
}

Tensor multi_head_attention(const Tensor& query, const Tensor& key,
                            const Tensor& value, const AttentionParams& p,
                            std::size_t num_heads, std::vector<Tensor>* weights) {
  const Tensor q = linear(query, p.wq, p.bq);
  const Tensor k = matmul(key, p.wk);
  const Tensor v = linear(value, p.wv, p.bv);
  return linear(attend(q, k, v, num_heads, weights), p.wo, p.bo);
}

// ---------------------------------------------------------------------------
// DetectionModel

namespace {

constexpr double kAnchorSize = 0.1;

class Initializer {
 public:
  Initializer(ParameterSet& params, std::uint64_t seed)
      : params_(params), rng_(seed, 0x5EED1417ULL) {}

  void weight(const std::string& name, std::size_t fan_in, std::size_t fan_out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> w(fan_in * fan_out);
    for (double& x : w) x = rng_.uniform(-bound, bound);
    params_.add(name, Tensor::matrix(fan_in, fan_out, std::move(w)));
  }
  void zeros(const std::string& name, std::size_t n) {
    params_.add(name, Tensor(Shape{n}, 0.0));
  }
  void linear(const std::string& prefix, std::size_t in, std::size_t out) {
    weight(prefix + ".weight", in, out);
    zeros(prefix + ".bias", out);
  }
  void norm(const std::string& prefix, std::size_t d) {
    params_.add(prefix + ".gain", Tensor(Shape{d}, 1.0));
    zeros(prefix + ".bias", d);
  }
  void attention(const std::string& prefix, std::size_t d) {
    // No key bias: it shifts every score in a softmax row equally.
    for (const char* m : {"q", "k", "v", "o"}) {
      weight(prefix + ".w" + m, d, d);
      if (*m != 'k') zeros(prefix + ".b" + m, d);
    }
  }
  void ffn(const std::string& prefix, std::size_t d, std::size_t hidden) {
    weight(prefix + ".w1", d, hidden);
    zeros(prefix + ".b1", hidden);
    weight(prefix + ".w2", hidden, d);
    zeros(prefix + ".b2", d);
  }
  // Reference boxes on a ceil(sqrt(n)) grid over the image, 0.1 wide, stored
  // as logits.
  void anchors(const std::string& name, std::size_t n) {
    std::size_t g = 1;
    while (g * g < n) ++g;
    auto logit = [](double v) { return std::log(v / (1.0 - v)); };
    std::vector<double> a(n * 4);
    for (std::size_t i = 0; i < n; ++i) {
      a[i * 4 + 0] = logit((static_cast<double>(i % g) + 0.5) / static_cast<double>(g));
      a[i * 4 + 1] = logit((static_cast<double>(i / g) + 0.5) / static_cast<double>(g));
      a[i * 4 + 2] = logit(kAnchorSize);
      a[i * 4 + 3] = logit(kAnchorSize);
    }
    params_.add(name, Tensor::matrix(n, 4, std::move(a)));
  }
  void embedding(const std::string& name, std::size_t rows, std::size_t d) {
    std::vector<double> w(rows * d);
    for (double& x : w) x = rng_.uniform(-1.0, 1.0);
    params_.add(name, Tensor::matrix(rows, d, std::move(w)));
  }

 private:
  ParameterSet& params_;
  Rng rng_;
};

std::string layer_prefix(const char* stack, std::size_t l) {
  return std::string(stack) + "." + std::to_string(l);
}

Tensor ffn(const Tensor& x, const ParameterSet& p, const std::string& prefix) {
  const Tensor h = relu(linear(x, p.get(prefix + ".w1"), p.get(prefix + ".b1")));
  return linear(h, p.get(prefix + ".w2"), p.get(prefix + ".b2"));
}

Tensor norm(const Tensor& x, const ParameterSet& p, const std::string& prefix) {
  return layer_norm(x, p.get(prefix + ".gain"), p.get(prefix + ".bias"));
}

}  // namespace

DetectionModel::DetectionModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  const std::size_t d = config_.d_model;
  Initializer init(params_, seed);
  for (auto p : config_.patch_sizes) {
    init.linear("patch" + std::to_string(p), p * p * config_.channels, d);
  }
  for (std::size_t l = 0; l < config_.num_encoder_layers; ++l) {
    const std::string pre = layer_prefix("encoder", l);
    init.norm(pre + ".norm1", d);
    init.attention(pre + ".self_attn", d);
    init.norm(pre + ".norm2", d);
    init.ffn(pre + ".ffn", d, config_.ffn_width());
  }
  init.norm("encoder.norm", d);
  init.embedding("query_embed", config_.num_queries, d);
  init.anchors("query_anchor", config_.num_queries);
  for (std::size_t l = 0; l < config_.num_decoder_layers; ++l) {
    const std::string pre = layer_prefix("decoder", l);
    init.norm(pre + ".norm1", d);
    init.attention(pre + ".self_attn", d);
    init.norm(pre + ".norm2", d);
    init.attention(pre + ".cross_attn", d);
    init.norm(pre + ".norm3", d);
    init.ffn(pre + ".ffn", d, config_.ffn_width());
  }
  init.norm("decoder.norm", d);
  init.linear("class_head", d, config_.num_classes + 1);
  init.linear("box_head.fc1", d, d);
  init.linear("box_head.fc2", d, 4);
  const auto sides = config_.grid_sides();
  pos_ = positional_encoding(sides, d);
}

DetectionModel::DetectionModel(ModelConfig config, ParameterSet params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  check_params();
  const auto sides = config_.grid_sides();
  pos_ = positional_encoding(sides, config_.d_model);
}

void DetectionModel::check_params() const {
  const DetectionModel reference(config_, std::uint64_t{0});
  const auto& want = reference.params().entries();
  const auto& have = params_.entries();
  if (want.size() != have.size()) {
    throw ContractError("parameter set has " + std::to_string(have.size()) +
                        " tensors, model config needs " + std::to_string(want.size()));
  }
  for (const auto& w : want) {
    const Tensor& t = params_.get(w.name);
    if (t.dims() != w.tensor.dims()) {
      throw DimensionError("parameter '" + w.name + "' has shape " +
                           shape_to_string(t.dims()) + ", expected " +
                           shape_to_string(w.tensor.dims()));
    }
  }
}

Predictions DetectionModel::forward(const Image& image) const {
  const ParameterSet& p = params_;
  const std::size_t heads = config_.num_heads;

  Tensor x = add(patch_embed(image, config_, p), pos_);
  for (std::size_t l = 0; l < config_.num_encoder_layers; ++l) {
    const std::string pre = layer_prefix("encoder", l);
    const Tensor h = norm(x, p, pre + ".norm1");
    x = x + multi_head_attention(h, h, h, AttentionParams::from(p, pre + ".self_attn"), heads);
    x = x + ffn(norm(x, p, pre + ".norm2"), p, pre + ".ffn");
  }
  const Tensor memory = norm(x, p, "encoder.norm");

  Tensor q = p.get("query_embed");
  for (std::size_t l = 0; l < config_.num_decoder_layers; ++l) {
    const std::string pre = layer_prefix("decoder", l);
    const Tensor h = norm(q, p, pre + ".norm1");
    q = q + multi_head_attention(h, h, h, AttentionParams::from(p, pre + ".self_attn"), heads);
    q = q + multi_head_attention(norm(q, p, pre + ".norm2"), memory, memory,
                                 AttentionParams::from(p, pre + ".cross_attn"), heads);
    q = q + ffn(norm(q, p, pre + ".norm3"), p, pre + ".ffn");
  }
  const Tensor out = norm(q, p, "decoder.norm");

  Predictions pred;
  pred.class_logits = linear(out, p.get("class_head.weight"), p.get("class_head.bias"));
  const Tensor hidden =
      relu(linear(out, p.get("box_head.fc1.weight"), p.get("box_head.fc1.bias")));
  // The box head predicts an offset from each query's reference box in
  // logit space.
  pred.boxes = sigmoid(linear(hidden, p.get("box_head.fc2.weight"), p.get("box_head.fc2.bias")) +
                       p.get("query_anchor"));
  return pred;
}

// ---------------------------------------------------------------------------
// Decoding

std::vector<Detection> decode(const Predictions& p, double conf_threshold,
                              std::size_t top_k) {
  if (!(conf_threshold >= 0.0 && conf_threshold < 1.0)) {
    throw ContractError("decode: conf_threshold must lie in [0, 1)");
  }
  const std::size_t nq = p.num_queries();
  const std::size_t k = p.num_classes();
  const auto logits = p.class_logits.data();
  std::vector<Detection> dets;
  std::vector<double> prob(k + 1);
  for (std::size_t i = 0; i < nq; ++i) {
    const double* row = logits.data() + i * (k + 1);
    const double mx = *std::max_element(row, row + k + 1);
    double total = 0.0;
    for (std::size_t c = 0; c <= k; ++c) total += prob[c] = std::exp(row[c] - mx);
    std::size_t best = 0;
    for (std::size_t c = 1; c <= k; ++c) {
      if (prob[c] > prob[best]) best = c;
    }
    if (best == k) continue;
    const double score = prob[best] / total;
    if (score < conf_threshold) continue;
    dets.push_back({p.box(i), static_cast<int>(best), score, i});
  }
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    return a.score > b.score;
  });
  if (dets.size() > top_k) dets.resize(top_k);
  return dets;
}

}  // namespace rtdetr
