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

#include "rtdetr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "rtdetr/errors.hpp"

namespace rtdetr {

using json = nlohmann::json;

double ClassAP::ap50_95() const {
  double s = 0.0;
  for (double v : ap) s += v;
  return s / static_cast<double>(ap.size());
}

std::vector<bool> greedy_match(std::span<const BoxCS> dets, std::span<const BoxCS> gts,
                               double iou_thr) {
  std::vector<bool> flags(dets.size(), false);
  std::vector<char> taken(gts.size(), 0);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    double best = -1.0;
    std::size_t best_g = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double v = iou(dets[d], gts[g]);
      if (v >= iou_thr && v > best) {
        best = v;
        best_g = g;
      }
    }
    if (best_g < gts.size()) {
      taken[best_g] = 1;
      flags[d] = true;
    }
  }
  return flags;
}

double average_precision(const std::vector<bool>& flags, std::size_t num_gt) {
  if (num_gt == 0 || flags.empty()) return 0.0;
  const std::size_t n = flags.size();
  std::vector<double> prec(n), rec(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (flags[i]) ++tp;
    prec[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    rec[i] = static_cast<double>(tp) / static_cast<double>(num_gt);
  }
  for (std::size_t i = n - 1; i-- > 0;) prec[i] = std::max(prec[i], prec[i + 1]);
  double total = 0.0;
  std::size_t i = 0;
  for (std::size_t k = 0; k < kRecallPoints; ++k) {
    const double r = static_cast<double>(k) / 100.0;
    while (i < n && rec[i] < r) ++i;
    if (i < n) total += prec[i];
  }
  return total / static_cast<double>(kRecallPoints);
}

namespace {

struct FlatDet {
  double score;
  BoxCS box;
  int class_id;
  std::size_t sample;
};

// Canonical detection order shared by evaluate() and the oracle.
bool ranks_before(const FlatDet& a, const FlatDet& b,
                  std::span<const EvalSample> samples) {
  if (a.score != b.score) return a.score > b.score;
  const auto ka = std::tie(a.box.cx, a.box.cy, a.box.w, a.box.h);
  const auto kb = std::tie(b.box.cx, b.box.cy, b.box.w, b.box.h);
  if (ka != kb) return ka < kb;
  const auto& ia = samples[a.sample].image_id;
  const auto& ib = samples[b.sample].image_id;
  if (ia != ib) return ia < ib;
  if (a.class_id != b.class_id) return a.class_id < b.class_id;
  return a.sample < b.sample;
}

std::vector<FlatDet> flatten_sorted(std::span<const EvalSample> samples) {
  std::vector<FlatDet> flat;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    for (const Detection& d : samples[s].detections) {
      if (!std::isfinite(d.score)) throw InputError("detection score is not finite");
      flat.push_back({d.score, d.box, d.class_id, s});
    }
  }
  std::stable_sort(flat.begin(), flat.end(), [&](const FlatDet& a, const FlatDet& b) {
    return ranks_before(a, b, samples);
  });
  return flat;
}

struct OperatingPoint {
  double precision = 0.0;
  double recall = 0.0;
};

double f1(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

OperatingPoint ratio(std::size_t tp, std::size_t n, std::size_t total_gt) {
  return {n ? static_cast<double>(tp) / static_cast<double>(n) : 0.0,
          total_gt ? static_cast<double>(tp) / static_cast<double>(total_gt) : 0.0};
}

void check_samples(std::span<const EvalSample> samples) {
  if (samples.empty()) throw InputError("evaluate: no samples");
}

void finish_means(MetricsReport& r) {
  if (r.per_class.empty()) return;
  double s50 = 0.0, s5095 = 0.0;
  for (const auto& c : r.per_class) {
    s50 += c.ap50();
    s5095 += c.ap50_95();
  }
  const auto n = static_cast<double>(r.per_class.size());
  r.map50 = s50 / n;
  r.map50_95 = s5095 / n;
}

}  // namespace

MetricsReport evaluate(std::span<const EvalSample> samples, const EvalOptions& options) {
  check_samples(samples);
  const std::vector<FlatDet> flat = flatten_sorted(samples);

  std::map<int, std::size_t> gt_count;
  std::set<int> classes;
  std::size_t total_gt = 0;
  for (const auto& s : samples) {
    for (const auto& g : s.ground_truths) {
      ++gt_count[g.class_id];
      classes.insert(g.class_id);
      ++total_gt;
    }
  }
  for (const auto& d : flat) classes.insert(d.class_id);

  MetricsReport report;
  std::vector<char> tp50(flat.size(), 0);
  for (int c : classes) {
    // Ground-truth boxes of this class, per sample.
    std::vector<std::vector<BoxCS>> gts(samples.size());
    for (std::size_t s = 0; s < samples.size(); ++s) {
      for (const auto& g : samples[s].ground_truths) {
        if (g.class_id == c) gts[s].push_back(g.box);
      }
    }
    std::vector<std::size_t> idx;
    std::vector<std::vector<double>> ious;
    for (std::size_t i = 0; i < flat.size(); ++i) {
      if (flat[i].class_id != c) continue;
      idx.push_back(i);
      const auto& g = gts[flat[i].sample];
      std::vector<double> row(g.size());
      const BoxXY dxy = to_corner(flat[i].box);
      for (std::size_t j = 0; j < g.size(); ++j) row[j] = iou(dxy, to_corner(g[j]));
      ious.push_back(std::move(row));
    }
    const std::size_t num_gt = gt_count.count(c) ? gt_count[c] : 0;
    ClassAP entry{c, num_gt, {}};
    for (std::size_t t = 0; t < kIouThresholds.size(); ++t) {
      const double thr = kIouThresholds[t];
      std::vector<std::vector<char>> taken(samples.size());
      for (std::size_t s = 0; s < samples.size(); ++s) taken[s].assign(gts[s].size(), 0);
      std::vector<bool> flags(idx.size(), false);
      for (std::size_t k = 0; k < idx.size(); ++k) {
        auto& tk = taken[flat[idx[k]].sample];
        double best = -1.0;
        std::size_t best_j = tk.size();
        for (std::size_t j = 0; j < tk.size(); ++j) {
          if (!tk[j] && ious[k][j] >= thr && ious[k][j] > best) {
            best = ious[k][j];
            best_j = j;
          }
        }
        if (best_j < tk.size()) {
          tk[best_j] = 1;
          flags[k] = true;
        }
      }
      if (t == 0) {
        for (std::size_t k = 0; k < idx.size(); ++k) tp50[idx[k]] = flags[k] ? 1 : 0;
      }
      entry.ap[t] = average_precision(flags, num_gt);
    }
    if (num_gt > 0) report.per_class.push_back(entry);
  }
  finish_means(report);

  OperatingPoint op;
  if (options.fixed_threshold) {
    std::size_t n = 0, tp = 0;
    for (std::size_t i = 0; i < flat.size(); ++i) {
      if (flat[i].score >= *options.fixed_threshold) {
        ++n;
        tp += tp50[i];
      }
    }
    op = ratio(tp, n, total_gt);
  } else {
    double best_f1 = -1.0;
    std::size_t tp = 0;
    for (std::size_t i = 0; i < flat.size(); ++i) {
      tp += tp50[i];
      if (i + 1 < flat.size() && flat[i + 1].score == flat[i].score) continue;
      const OperatingPoint cand = ratio(tp, i + 1, total_gt);
      const double f = f1(cand.precision, cand.recall);
      if (f > best_f1) {
        best_f1 = f;
        op = cand;
      }
    }
  }
  report.precision = op.precision;
  report.recall = op.recall;
  return report;
}

// ---------------------------------------------------------------------------
// Oracle

namespace {

constexpr std::size_t kOracleDetGuard = 20;

// TP flags for the class-c detections with score >= min_score, in canonical
// order, recomputed image by image through greedy_match.
std::vector<std::pair<FlatDet, bool>> oracle_flags(std::span<const EvalSample> samples,
                                                   int c, double thr, double min_score) {
  std::vector<std::pair<FlatDet, bool>> out;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    std::vector<FlatDet> dets;
    for (const auto& d : samples[s].detections) {
      if (d.class_id == c && d.score >= min_score) dets.push_back({d.score, d.box, c, s});
    }
    std::sort(dets.begin(), dets.end(), [&](const FlatDet& a, const FlatDet& b) {
      return ranks_before(a, b, samples);
    });
    std::vector<BoxCS> dboxes, gboxes;
    for (const auto& d : dets) dboxes.push_back(d.box);
    for (const auto& g : samples[s].ground_truths) {
      if (g.class_id == c) gboxes.push_back(g.box);
    }
    const auto flags = greedy_match(dboxes, gboxes, thr);
    for (std::size_t i = 0; i < dets.size(); ++i) out.emplace_back(dets[i], flags[i]);
  }
  std::sort(out.begin(), out.end(), [&](const auto& a, const auto& b) {
    return ranks_before(a.first, b.first, samples);
  });
  return out;
}

double oracle_ap(const std::vector<bool>& flags, std::size_t num_gt) {
  if (num_gt == 0) return 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < kRecallPoints; ++k) {
    const double r = static_cast<double>(k) / 100.0;
    double best = 0.0;
    for (std::size_t cut = 1; cut <= flags.size(); ++cut) {
      std::size_t tp = 0;
      for (std::size_t i = 0; i < cut; ++i) tp += flags[i] ? 1 : 0;
      const double rec = static_cast<double>(tp) / static_cast<double>(num_gt);
      const double prec = static_cast<double>(tp) / static_cast<double>(cut);
      if (rec >= r) best = std::max(best, prec);
    }
    total += best;
  }
  return total / static_cast<double>(kRecallPoints);
}

OperatingPoint oracle_point(std::span<const EvalSample> samples, const std::set<int>& classes,
                            std::size_t total_gt, double threshold) {
  std::size_t n = 0, tp = 0;
  for (int c : classes) {
    for (const auto& [d, flag] : oracle_flags(samples, c, 0.5, threshold)) {
      ++n;
      tp += flag ? 1 : 0;
    }
  }
  return ratio(tp, n, total_gt);
}

}  // namespace

MetricsReport brute_force_map(std::span<const EvalSample> samples, const EvalOptions& options) {
  check_samples(samples);
  std::set<int> classes, gt_classes;
  std::set<double, std::greater<>> scores;
  std::size_t total_gt = 0;
  for (const auto& s : samples) {
    if (s.detections.size() > kOracleDetGuard) {
      throw SizeError("brute_force_map: image '" + s.image_id + "' has " +
                      std::to_string(s.detections.size()) + " detections (guard " +
                      std::to_string(kOracleDetGuard) + ")");
    }
    for (const auto& d : s.detections) {
      classes.insert(d.class_id);
      scores.insert(d.score);
    }
    for (const auto& g : s.ground_truths) {
      classes.insert(g.class_id);
      gt_classes.insert(g.class_id);
      ++total_gt;
    }
  }

  MetricsReport report;
  for (int c : gt_classes) {
    std::size_t num_gt = 0;
    for (const auto& s : samples) {
      for (const auto& g : s.ground_truths) num_gt += g.class_id == c ? 1 : 0;
    }
    ClassAP entry{c, num_gt, {}};
    for (std::size_t t = 0; t < kIouThresholds.size(); ++t) {
      std::vector<bool> flags;
      for (const auto& [d, flag] : oracle_flags(samples, c, kIouThresholds[t], -1.0)) {
        flags.push_back(flag);
      }
      entry.ap[t] = oracle_ap(flags, num_gt);
    }
    report.per_class.push_back(entry);
  }
  finish_means(report);

  OperatingPoint op;
  if (options.fixed_threshold) {
    op = oracle_point(samples, classes, total_gt, *options.fixed_threshold);
  } else {
    double best_f1 = -1.0;
    for (double tau : scores) {
      const OperatingPoint cand = oracle_point(samples, classes, total_gt, tau);
      const double f = f1(cand.precision, cand.recall);
      if (f > best_f1) {
        best_f1 = f;
        op = cand;
      }
    }
  }
  report.precision = op.precision;
  report.recall = op.recall;
  return report;
}

// ---------------------------------------------------------------------------
// Serialization

double duplicates_per_ground_truth(std::span<const EvalSample> samples, double iou_thr) {
  std::size_t gts = 0, extra = 0;
  for (const auto& s : samples) {
    for (const auto& g : s.ground_truths) {
      std::size_t hits = 0;
      for (const auto& d : s.detections) {
        if (d.class_id == g.class_id && iou(d.box, g.box) >= iou_thr) ++hits;
      }
      extra += hits > 0 ? hits - 1 : 0;
      ++gts;
    }
  }
  return gts == 0 ? 0.0 : static_cast<double>(extra) / static_cast<double>(gts);
}

std::string report_to_json(const MetricsReport& r) {
  json per_class = json::array();
  for (const auto& c : r.per_class) {
    per_class.push_back({{"class_id", c.class_id},
                         {"num_gt", c.num_gt},
                         {"ap50", c.ap50()},
                         {"ap50_95", c.ap50_95()},
                         {"ap", c.ap}});
  }
  json j = {{"precision", r.precision},
            {"recall", r.recall},
            {"map50", r.map50},
            {"map50_95", r.map50_95},
            {"per_class", per_class}};
  return j.dump(2);
}

MetricsReport report_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    MetricsReport r;
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.map50 = j.at("map50").get<double>();
    r.map50_95 = j.at("map50_95").get<double>();
    if (j.contains("per_class")) {
      for (const auto& c : j.at("per_class")) {
        ClassAP entry;
        entry.class_id = c.at("class_id").get<int>();
        entry.num_gt = c.at("num_gt").get<std::size_t>();
        const auto ap = c.at("ap").get<std::vector<double>>();
        if (ap.size() != entry.ap.size()) {
          throw FormatError("per_class ap must have " + std::to_string(entry.ap.size()) +
                            " entries");
        }
        std::copy(ap.begin(), ap.end(), entry.ap.begin());
        r.per_class.push_back(entry);
      }
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("metrics report: ") + e.what());
  }
}

std::string detections_to_jsonl(std::span<const EvalSample> samples) {
  std::string out;
  for (const auto& s : samples) {
    for (const auto& d : s.detections) {
      const json j = {{"image_id", s.image_id},
                      {"class_id", d.class_id},
                      {"score", d.score},
                      {"box_cs", {d.box.cx, d.box.cy, d.box.w, d.box.h}}};
      out += j.dump();
      out += '\n';
    }
  }
  return out;
}

std::vector<DetectionRecord> detections_from_jsonl(std::string_view text) {
  std::vector<DetectionRecord> out;
  std::istringstream in{std::string(text)};
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      DetectionRecord rec;
      rec.image_id = j.at("image_id").get<std::string>();
      rec.detection.class_id = j.at("class_id").get<int>();
      rec.detection.score = j.at("score").get<double>();
      const auto box = j.at("box_cs").get<std::vector<double>>();
      if (box.size() != 4) throw FormatError("box_cs must have 4 values", line_no);
      rec.detection.box = {box[0], box[1], box[2], box[3]};
      out.push_back(std::move(rec));
    } catch (const json::exception& e) {
      throw FormatError(std::string("detections: ") + e.what(), line_no);
    }
  }
  return out;
}

void write_detections(const std::filesystem::path& path, std::span<const EvalSample> samples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << detections_to_jsonl(samples);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<DetectionRecord> read_detections(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return detections_from_jsonl(ss.str());
}

}  // namespace rtdetr
