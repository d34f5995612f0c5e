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

// Runs every acceptance criterion and prints one PASS/FAIL line for each.
// Exit status is 0 only if all of them pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "rtdetr/box.hpp"
#include "rtdetr/checkpoint.hpp"
#include "rtdetr/cli.hpp"
#include "rtdetr/losses.hpp"
#include "rtdetr/matching.hpp"
#include "rtdetr/metrics.hpp"
#include "rtdetr/rng.hpp"
#include "rtdetr/selfcheck.hpp"
#include "rtdetr/synth.hpp"
#include "rtdetr/training.hpp"

namespace rtdetr {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, sep);) out.push_back(part);
  return out;
}

int run_cli(const std::vector<std::string>& args, std::string* out_text = nullptr) {
  std::vector<const char*> argv{"rtdetr"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (code != cli::kExitOk) std::fprintf(stderr, "rtdetr exited %d: %s\n", code, err.str().c_str());
  return code;
}

// --- 1 ------------------------------------------------------------------------

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  bool ok = true;
  double worst_op = 0.0;
  std::string worst_name;
  for (const auto& c : op_gradchecks(1)) {
    ok = ok && c.report.passed(1e-4);
    if (c.report.max_rel_error >= worst_op) {
      worst_op = c.report.max_rel_error;
      worst_name = c.op;
    }
  }
  const GradReport m = model_gradcheck(1);
  ok = ok && m.passed(1e-4);
  const double secs = seconds_since(t0);
  ok = ok && secs < 30.0;
  return {ok, fmt("worst op %s %.2e; model %zu entries max %.2e (raw %.2e, roundoff floor %.2e), "
                  "skipped %zu; %.1f s",
                  worst_name.c_str(), worst_op, m.checked, m.max_rel_error, m.max_raw_rel_error,
                  m.roundoff_floor, m.skipped, secs)};
}

// --- 2, 3 ---------------------------------------------------------------------

Outcome conformance(const ConformanceResult& r, double secs, double limit) {
  std::string d = fmt("%zu trials, %zu mismatches, max |diff| %.2e; %.2f s", r.trials,
                      r.mismatches, r.max_abs_diff, secs);
  if (!r.passed()) d += "; first: " + r.first_failure;
  return {r.passed() && secs < limit, d};
}

Outcome matching_conformance_check() {
  const auto t0 = Clock::now();
  const ConformanceResult r = matching_conformance(1000, 1);
  return conformance(r, seconds_since(t0), 10.0);
}

Outcome metrics_conformance_check() {
  const auto t0 = Clock::now();
  const ConformanceResult r = metrics_conformance(200, 1, 1e-9);
  return conformance(r, seconds_since(t0), 30.0);
}

// --- 4 ------------------------------------------------------------------------

Outcome giou_cases() {
  const double same = giou(BoxXY{0.1, 0.2, 0.4, 0.9}, BoxXY{0.1, 0.2, 0.4, 0.9});
  const double overlap = giou(BoxXY{0, 0, 2, 2}, BoxXY{1, 1, 3, 3});
  const double touching = giou(BoxXY{0, 0, 1, 1}, BoxXY{2, 0, 3, 1});
  bool ok = same == 1.0 && std::fabs(overlap + 5.0 / 63.0) <= 1e-12 &&
            std::fabs(touching + 1.0 / 3.0) <= 1e-12;
  Rng rng(404);
  std::size_t violations = 0;
  for (int i = 0; i < 100000; ++i) {
    BoxXY b[2];
    for (BoxXY& x : b) {
      const double x1 = rng.uniform(), x2 = rng.uniform(), y1 = rng.uniform(), y2 = rng.uniform();
      x = {std::min(x1, x2), std::min(y1, y2), std::max(x1, x2), std::max(y1, y2)};
    }
    if (!(giou(b[0], b[1]) <= iou(b[0], b[1]))) ++violations;
  }
  ok = ok && violations == 0;
  return {ok, fmt("identical %.17g, overlap %+.3e from -5/63, touching %+.3e from -1/3, "
                  "giou > iou in %zu of 100000 pairs",
                  same, overlap + 5.0 / 63.0, touching + 1.0 / 3.0, violations)};
}

// --- 5 ------------------------------------------------------------------------

double matched_total(const Predictions& p, const std::vector<GroundTruth>& gts) {
  const Assignment a = hungarian(build_cost_matrix(p, gts, MatchWeights{}));
  return composite_loss(p, gts, a, LossWeights{}).values.total;
}

Outcome permutation_invariance() {
  Rng rng(55);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto nq = static_cast<std::size_t>(rng.uniform_int(2, 10));
    const auto k = static_cast<std::size_t>(rng.uniform_int(1, 4));
    Tensor logits(Shape{nq, k + 1}), boxes(Shape{nq, 4});
    for (double& v : logits.mutable_data()) v = rng.uniform(-3, 3);
    for (double& v : boxes.mutable_data()) v = rng.uniform(0.1, 0.6);
    const Predictions p{logits, boxes};
    std::vector<GroundTruth> gts(static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(nq))));
    for (auto& g : gts) {
      g.class_id = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(k) - 1));
      g.box = {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.05, 0.4),
               rng.uniform(0.05, 0.4)};
    }
    const double base = matched_total(p, gts);
    for (std::size_t i = gts.size(); i > 1; --i) {
      std::swap(gts[i - 1],
                gts[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    }
    worst = std::max(worst, std::fabs(matched_total(p, gts) - base));
  }
  return {worst < 1e-9, fmt("100 instances, max |delta total| %.2e", worst)};
}

// --- 6, 7 ---------------------------------------------------------------------

struct OverfitRun {
  std::vector<double> losses;
  double best_map50 = 0.0;
  std::size_t best_epoch = 0;
  double final_map50 = 0.0;
  double seconds = 0.0;
};

OverfitRun overfit(DetectionModel& model, const std::vector<AnnotatedImage>& data,
                   const TrainConfig& config) {
  OverfitRun r;
  const auto t0 = Clock::now();
  train(model, data, config, [&](const EpochRecord& e) {
    r.losses.push_back(e.loss.total);
    const double m = evaluate_model(model, data).map50;
    if (m > r.best_map50) {
      r.best_map50 = m;
      r.best_epoch = e.epoch;
    }
    r.final_map50 = m;
  });
  r.seconds = seconds_since(t0);
  return r;
}

// Epochs e >= 11 whose trailing 10-epoch mean exceeds that of epoch e - 1.
std::size_t moving_average_rises(const std::vector<double>& losses) {
  std::size_t rises = 0;
  double prev = 0.0;
  for (std::size_t e = 10; e <= losses.size(); ++e) {
    const double ma = std::accumulate(losses.begin() + static_cast<std::ptrdiff_t>(e - 10),
                                      losses.begin() + static_cast<std::ptrdiff_t>(e), 0.0) /
                      10.0;
    if (e > 10 && ma > prev) ++rises;
    prev = ma;
  }
  return rises;
}

Outcome overfit_convergence(const OverfitRun& r) {
  const std::size_t rises = moving_average_rises(r.losses);
  const bool ok = r.best_map50 >= 0.9 && rises == 0 && r.seconds < 600.0;
  return {ok, fmt("best mAP50 %.3f (epoch %zu), final mAP50 %.3f; loss %.3f -> %.3f; "
                  "10-epoch mean rose in %zu epochs; %.0f s",
                  r.best_map50, r.best_epoch, r.final_map50, r.losses.front(), r.losses.back(),
                  rises, r.seconds)};
}

Outcome nms_free(const DetectionModel& trained, const std::vector<AnnotatedImage>& data) {
  // Two queries on the same box, foreground probabilities 0.9 and 0.8.
  const double l9 = std::log(9.0), l8 = std::log(4.0);
  const Predictions p{Tensor::matrix(2, 2, {l9, 0, l8, 0}),
                      Tensor::matrix(2, 4, {0.4, 0.4, 0.2, 0.2, 0.4, 0.4, 0.2, 0.2})};
  const auto d = decode(p, 0.5, 10);
  const bool constructed = d.size() == 2 && d[0].box == d[1].box &&
                           d[0].class_id == d[1].class_id;
  const auto samples = predict_samples(trained, data, 0.5);
  std::size_t dets = 0, gts = 0;
  for (const auto& s : samples) {
    dets += s.detections.size();
    gts += s.ground_truths.size();
  }
  const double dup = duplicates_per_ground_truth(samples);
  return {constructed && dup <= 1.0,
          fmt("constructed duplicate pair kept %zu of 2; trained model: %.3f duplicates per "
              "ground truth at confidence 0.5 (%zu detections, %zu ground truths)",
              d.size(), dup, dets, gts)};
}

// --- 8 ------------------------------------------------------------------------

Outcome sweep_procedure(const fs::path& work) {
  const auto t0 = Clock::now();
  const std::string data = (work / "sweep_data").string();
  if (run_cli({"generate", "--out", data, "--count", "32"}) != cli::kExitOk) {
    return {false, "generate failed"};
  }
  std::string runs[2];
  for (int i = 0; i < 2; ++i) {
    const fs::path out = work / ("sweep_" + std::to_string(i));
    std::string printed;
    if (run_cli({"sweep", "--data", data, "--out", out.string(), "--lrs",
                 "0.025,0.03,0.005,0.02,0.01", "--epochs", "10"},
                &printed) != cli::kExitOk) {
      return {false, "sweep failed"};
    }
    runs[i] = printed + "\n--\n" + slurp(out / "sweep.csv") + "\n--\n" + slurp(out / "sweep.json");
  }
  const std::string csv = slurp(work / "sweep_0" / "sweep.csv");
  const auto lines = split(csv, '\n');
  bool ok = lines.size() == 6 && lines[0] == "lr,precision,recall,map50,map50_95,best";
  std::size_t markers = 0;
  std::string best;
  for (std::size_t i = 1; ok && i < lines.size(); ++i) {
    const auto cells = split(lines[i], ',');
    if (cells.size() < 5 || cells.size() > 6) {
      ok = false;
      break;
    }
    for (std::size_t c = 1; c <= 4; ++c) {
      char* end = nullptr;
      const double v = std::strtod(cells[c].c_str(), &end);
      ok = ok && !cells[c].empty() && *end == '\0' && v >= 0.0 && v <= 1.0;
    }
    if (cells.size() == 6 && cells[5] == "*") {
      ++markers;
      best = cells[0];
    }
  }
  ok = ok && markers == 1;
  const bool identical = runs[0] == runs[1];
  return {ok && identical,
          fmt("%zu rows, %zu argmax marker (lr %s), re-run %s; %.0f s",
              lines.empty() ? 0 : lines.size() - 1, markers, best.c_str(),
              identical ? "byte-identical" : "DIFFERS", seconds_since(t0))};
}

// --- 9 ------------------------------------------------------------------------

bool same_values(const Tensor& a, const Tensor& b) {
  return a.dims() == b.dims() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

Outcome artifacts(const fs::path& work) {
  std::vector<std::string> problems;
  const auto data = generate_dataset(SceneSpec{}, 4);
  DetectionModel model(ModelConfig{}, 7);
  TrainConfig c;
  c.epochs = 2;
  train(model, data, c);
  const fs::path ck = work / "model.rtdk";
  save_checkpoint(ck, model);
  const DetectionModel loaded = load_checkpoint(ck);
  DetectionModel quantized(model.config(), model.params().clone());
  quantized.params().quantize_to_float();
  for (const auto& s : data) {
    const Predictions a = quantized.forward(s.image), b = loaded.forward(s.image);
    if (!same_values(a.class_logits, b.class_logits) || !same_values(a.boxes, b.boxes)) {
      problems.push_back("predictions differ after reload of " + s.id());
    }
  }
  if (encode_checkpoint(loaded) != encode_checkpoint(model)) {
    problems.push_back("re-encoded checkpoint differs");
  }

  constexpr std::uint64_t kGolden = 0xd19b33041a07a2bdULL;
  const std::uint64_t sum0 = scene_checksum(generate_scene(SceneSpec{}, 0));
  if (sum0 != kGolden || scene_checksum(generate_scene(SceneSpec{}, 0)) != sum0) {
    problems.push_back(fmt("scene checksum %016llx", static_cast<unsigned long long>(sum0)));
  }
  std::string gen[2];
  for (int i = 0; i < 2; ++i) {
    const fs::path d = work / ("golden_" + std::to_string(i));
    if (run_cli({"generate", "--out", d.string(), "--count", "8"}, &gen[i]) != cli::kExitOk) {
      problems.push_back("generate failed");
    }
    gen[i] += slurp(d / "annotations.jsonl") + slurp(d / "images" / "000007.ppm");
  }
  if (gen[0] != gen[1]) problems.push_back("generated datasets differ");

  // Loss curve as written by `train`.
  const fs::path run_dir = work / "curve";
  const std::size_t epochs = 3;
  if (run_cli({"train", "--data", (work / "golden_0").string(), "--out", run_dir.string(),
               "--epochs", std::to_string(epochs)}) != cli::kExitOk) {
    problems.push_back("train failed");
  }
  const auto lines = split(slurp(run_dir / "loss_curve.csv"), '\n');
  bool curve_ok = lines.size() == epochs + 1 && lines[0] == "epoch,total,cls,l1,giou";
  for (std::size_t i = 1; curve_ok && i < lines.size(); ++i) {
    const auto cells = split(lines[i], ',');
    curve_ok = cells.size() == 5 && cells[0] == std::to_string(i);
  }
  if (!curve_ok) problems.push_back("loss_curve.csv does not have a header plus one row per epoch");

  std::string d = fmt("checkpoint reload bit-exact on %zu images; checksum %016llx; "
                      "loss curve %zu rows",
                      data.size(), static_cast<unsigned long long>(sum0),
                      lines.empty() ? 0 : lines.size() - 1);
  for (const auto& p : problems) d += "; " + p;
  return {problems.empty(), d};
}

int run_all() {
  const fs::path work = fs::temp_directory_path() / "rtdetr_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  int failures = 0;
  auto report = [&](int n, const char* name, const Outcome& o) {
    std::printf("criterion %d %s: %s -- %s\n", n, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  };

  report(1, "gradient fidelity", gradient_fidelity());
  report(2, "matching conformance", matching_conformance_check());
  report(3, "metrics conformance", metrics_conformance_check());
  report(4, "GIoU cases", giou_cases());
  report(5, "set-prediction invariance", permutation_invariance());

  const auto data = generate_dataset(SceneSpec{}, 8);
  const TrainConfig defaults;
  DetectionModel model(ModelConfig{}, defaults.seed);
  const OverfitRun run = overfit(model, data, defaults);
  report(6, "overfit convergence", overfit_convergence(run));
  report(7, "NMS-free behavior", nms_free(model, data));

  {
    // Informational: the same run at a tenth of the learning rate.
    TrainConfig slow = defaults;
    slow.learning_rate = 0.001;
    DetectionModel m(ModelConfig{}, slow.seed);
    const OverfitRun r = overfit(m, data, slow);
    std::printf("info: lr 0.001 -- best mAP50 %.3f (epoch %zu), final mAP50 %.3f, loss %.3f -> "
                "%.3f, 10-epoch mean rose in %zu epochs; %.0f s\n",
                r.best_map50, r.best_epoch, r.final_map50, r.losses.front(), r.losses.back(),
                moving_average_rises(r.losses), r.seconds);
    std::fflush(stdout);
  }

  report(8, "sweep procedure", sweep_procedure(work));
  report(9, "artifact reproducibility", artifacts(work));

  fs::remove_all(work);
  std::printf("%d of 9 criteria passed\n", 9 - failures);
  return failures == 0 ? 0 : 1;
}

}  // namespace
}  // namespace rtdetr

int main() {
  try {
    return rtdetr::run_all();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance aborted: %s\n", e.what());
    return 2;
  }
}
