// Copyright 2026 The alignsift Authors.
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

#include "alignsift/evaluator.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <set>
#include <thread>

#include "alignsift/error.h"
#include "alignsift/pairgen.h"
#include "alignsift/util.h"
#include "json.hpp"

namespace alignsift {
namespace {

using nlohmann::json;

template <typename T>
double Cosine(std::span<const T> u, std::span<const T> v) {
  if (u.size() != v.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "cosine of vectors with dimensions " +
                                                   std::to_string(u.size()) + " and " +
                                                   std::to_string(v.size()));
  }
  double dot = 0.0;
  double uu = 0.0;
  double vv = 0.0;
  for (size_t i = 0; i < u.size(); ++i) {
    dot += static_cast<double>(u[i]) * static_cast<double>(v[i]);
    uu += static_cast<double>(u[i]) * static_cast<double>(u[i]);
    vv += static_cast<double>(v[i]) * static_cast<double>(v[i]);
  }
  if (uu == 0.0 || vv == 0.0) throw Error(ErrorCode::kZeroVector, "cosine of a zero vector");
  // sqrt(uu·vv) keeps cosine(v, v) exactly 1; fall back when the product
  // leaves the normal range.
  const double product = uu * vv;
  const double norm = std::isnormal(product) ? std::sqrt(product) : std::sqrt(uu) * std::sqrt(vv);
  return std::clamp(dot / norm, -1.0, 1.0);
}

struct RecordOutcome {
  bool best_correct = false;
  bool constant = false;
  uint64_t pairs = 0;
  uint64_t pairs_correct = 0;
};

RecordOutcome Judge(const CaptionScorer& scorer, const PreferenceRecord& record, bool strict) {
  std::map<std::string, double> scores;
  for (const auto& group : record.ranking) {
    for (const auto& c : group) {
      double s = scorer.Score(record.image_id, c);
      if (!std::isfinite(s)) {
        throw Error(ErrorCode::kNonFiniteScore,
                    "non-finite score for " + record.image_id + "/" + c);
      }
      scores.emplace(c, s);
    }
  }
  RecordOutcome out;
  // std::map iterates by caption id, so the first maximum wins ties.
  auto best = scores.begin();
  for (auto it = scores.begin(); it != scores.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  out.constant = std::all_of(scores.begin(), scores.end(),
                             [&](const auto& kv) { return kv.second == best->second; });
  const auto& top = record.ranking.front();
  if (strict) {
    out.best_correct = top.size() == 1 && top.front() == best->first;
  } else {
    out.best_correct = std::find(top.begin(), top.end(), best->first) != top.end();
  }
  for (const auto& pair : GeneratePairs(record)) {
    ++out.pairs;
    if (scores.at(pair.preferred) > scores.at(pair.dispreferred)) ++out.pairs_correct;
  }
  return out;
}

// Estimates the j-th order statistic (0-based) from a histogram over
// [low, high]. The result lies in the bin that holds x[j].
double HistogramOrderStatistic(const std::vector<uint64_t>& bins, double low, double width,
                               uint64_t j) {
  uint64_t before = 0;
  for (size_t b = 0; b < bins.size(); ++b) {
    if (j < before + bins[b]) {
      double frac = (static_cast<double>(j - before) + 0.5) / static_cast<double>(bins[b]);
      return low + (static_cast<double>(b) + frac) * width;
    }
    before += bins[b];
  }
  return low + static_cast<double>(bins.size()) * width;
}

size_t BinOf(double x, double low, double high, size_t bins) {
  if (!(high > low)) return 0;
  auto b = static_cast<size_t>((x - low) / (high - low) * static_cast<double>(bins));
  return std::min(b, bins - 1);
}

}  // namespace

double CosineScore(std::span<const float> u, std::span<const float> v) { return Cosine(u, v); }
double CosineScore(std::span<const double> u, std::span<const double> v) { return Cosine(u, v); }

RewardHeadScorer::RewardHeadScorer(const Checkpoint& checkpoint, const EmbeddingTable& fused)
    : checkpoint_(checkpoint), fused_(fused), hash_(CheckpointHash(checkpoint)) {
  if (fused.size() > 0 &&
      fused.dimension() != static_cast<uint32_t>(checkpoint.architecture.input_dim())) {
    throw Error(ErrorCode::kDimensionMismatch,
                "embeddings have dimension " + std::to_string(fused.dimension()) +
                    ", head expects " + std::to_string(checkpoint.architecture.input_dim()));
  }
}

bool RewardHeadScorer::Has(std::string_view image_id, std::string_view caption_id) const {
  return fused_.Contains(CaptionKey(image_id, caption_id));
}

double RewardHeadScorer::Score(std::string_view image_id, std::string_view caption_id) const {
  auto v = fused_.Find(CaptionKey(image_id, caption_id));
  if (!v) {
    throw Error(ErrorCode::kMissingEmbedding,
                "no embedding for " + std::string(image_id) + "/" + std::string(caption_id));
  }
  return Forward(checkpoint_.architecture, checkpoint_.parameters, *v);
}

CosineScorer::CosineScorer(const EmbeddingTable& images, const EmbeddingTable& texts)
    : images_(images), texts_(texts) {
  if (images.dimension() != texts.dimension()) {
    throw Error(ErrorCode::kDimensionMismatch, "image and text embeddings differ in dimension");
  }
}

bool CosineScorer::Has(std::string_view image_id, std::string_view caption_id) const {
  std::string key = CaptionKey(image_id, caption_id);
  return images_.Contains(key) && texts_.Contains(key);
}

double CosineScorer::Score(std::string_view image_id, std::string_view caption_id) const {
  std::string key = CaptionKey(image_id, caption_id);
  auto u = images_.Find(key);
  auto v = texts_.Find(key);
  if (!u || !v) {
    throw Error(ErrorCode::kMissingEmbedding,
                "no embedding for " + std::string(image_id) + "/" + std::string(caption_id));
  }
  return CosineScore(*u, *v);
}

PreferenceEvalReport EvaluatePreferences(const CaptionScorer& scorer,
                                         const PreferenceDataset& eval_store,
                                         const EvalOptions& options) {
  PreferenceEvalReport report;
  report.scorer_id = scorer.scorer_id();
  report.checkpoint_hash = scorer.checkpoint_hash();
  report.strict = options.strict;

  std::vector<const PreferenceRecord*> judged;
  std::vector<std::string> missing;
  size_t missing_total = 0;
  for (const auto& record : eval_store.records()) {
    if (record.degenerate()) {
      ++report.skipped_degenerate;
      continue;
    }
    judged.push_back(&record);
    for (const auto& group : record.ranking) {
      for (const auto& c : group) {
        if (!scorer.Has(record.image_id, c)) {
          if (missing.size() < 5) missing.push_back(record.image_id + "/" + c);
          ++missing_total;
        }
      }
    }
  }
  if (missing_total > 0) {
    std::string msg = std::to_string(missing_total) + " captions lack embeddings:";
    for (const auto& m : missing) msg += " " + m;
    throw Error(ErrorCode::kMissingEmbedding, msg);
  }
  if (judged.empty()) {
    throw Error(ErrorCode::kEmptyEvalSet, "no non-degenerate records to evaluate");
  }

  std::vector<RecordOutcome> outcomes(judged.size());
  std::vector<std::exception_ptr> failures(judged.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (size_t i = next++; i < judged.size(); i = next++) {
      try {
        outcomes[i] = Judge(scorer, *judged[i], options.strict);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const size_t n_workers = std::clamp<size_t>(options.workers, 1, judged.size());
  std::vector<std::thread> threads;
  for (size_t w = 1; w < n_workers; ++w) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  for (auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  std::set<std::string_view> images;
  for (size_t i = 0; i < judged.size(); ++i) {
    images.insert(judged[i]->image_id);
    const auto& o = outcomes[i];
    report.n_best_correct += o.best_correct ? 1 : 0;
    report.constant_score_records += o.constant ? 1 : 0;
    report.n_pairs += o.pairs;
    report.n_pairs_correct += o.pairs_correct;
  }
  report.n_records = judged.size();
  report.n_images = images.size();
  report.best_caption_accuracy =
      static_cast<double>(report.n_best_correct) / static_cast<double>(report.n_records);
  report.pairwise_accuracy =
      report.n_pairs == 0
          ? 0.0
          : static_cast<double>(report.n_pairs_correct) / static_cast<double>(report.n_pairs);
  report.constant_score_degenerate = report.constant_score_records == report.n_records;
  return report;
}

std::string FormatReportText(const PreferenceEvalReport& r) {
  std::string out;
  out += "scorer: " + r.scorer_id + "\n";
  out += "checkpoint: " + (r.checkpoint_hash.empty() ? std::string("-") : r.checkpoint_hash) + "\n";
  out += std::string("best_caption_rule: ") + (r.strict ? "strict" : "top-group") + "\n";
  out += "records: " + std::to_string(r.n_records) + "\n";
  out += "images: " + std::to_string(r.n_images) + "\n";
  out += "skipped_degenerate: " + std::to_string(r.skipped_degenerate) + "\n";
  out += "best_caption_accuracy: " + FormatDouble(r.best_caption_accuracy) + " (" +
         std::to_string(r.n_best_correct) + "/" + std::to_string(r.n_records) + ")\n";
  out += "pairwise_accuracy: " + FormatDouble(r.pairwise_accuracy) + " (" +
         std::to_string(r.n_pairs_correct) + "/" + std::to_string(r.n_pairs) + ")\n";
  out += "constant_score_records: " + std::to_string(r.constant_score_records) + "\n";
  if (r.constant_score_degenerate) {
    out += "warning: scorer is constant on every record; best-caption choices follow caption ids\n";
  }
  return out;
}

std::string FormatReportJson(const PreferenceEvalReport& r) {
  json j = {
      {"schema_version", 1},
      {"scorer_id", r.scorer_id},
      {"checkpoint_hash", r.checkpoint_hash},
      {"best_caption_rule", r.strict ? "strict" : "top-group"},
      {"n_records", r.n_records},
      {"n_images", r.n_images},
      {"skipped_degenerate", r.skipped_degenerate},
      {"n_best_correct", r.n_best_correct},
      {"best_caption_accuracy", r.best_caption_accuracy},
      {"n_pairs", r.n_pairs},
      {"n_pairs_correct", r.n_pairs_correct},
      {"pairwise_accuracy", r.pairwise_accuracy},
      {"constant_score_records", r.constant_score_records},
      {"constant_score_degenerate", r.constant_score_degenerate},
  };
  return j.dump() + "\n";
}

double InterpolatedQuantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error(ErrorCode::kEmptyTable, "quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "quantile outside [0, 1]");
  double h = static_cast<double>(sorted.size() - 1) * p;
  auto lo = static_cast<size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

ScoreStats ComputeScoreStats(std::span<const double> scores, const StatsOptions& options) {
  if (scores.empty()) throw Error(ErrorCode::kEmptyTable, "score table is empty");
  if (options.histogram_bins == 0 || options.streaming_bins == 0) {
    throw Error(ErrorCode::kInvalidArgument, "histogram needs at least one bin");
  }
  ScoreStats stats;
  stats.count = scores.size();
  stats.min = std::numeric_limits<double>::infinity();
  stats.max = -std::numeric_limits<double>::infinity();
  long double sum = 0.0L;
  for (double s : scores) {
    if (!std::isfinite(s)) throw Error(ErrorCode::kNonFiniteScore, "non-finite score in table");
    stats.min = std::min(stats.min, s);
    stats.max = std::max(stats.max, s);
    sum += s;
  }
  stats.mean = static_cast<double>(sum / static_cast<long double>(scores.size()));
  stats.mean = std::clamp(stats.mean, stats.min, stats.max);

  stats.histogram_low = stats.min;
  stats.histogram_high = stats.max;
  stats.histogram.assign(options.histogram_bins, 0);
  for (double s : scores) ++stats.histogram[BinOf(s, stats.min, stats.max, options.histogram_bins)];

  const bool streaming = options.force_streaming || scores.size() > options.exact_limit;
  if (!streaming) {
    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    for (double p : kReportedQuantiles) stats.quantiles[p] = InterpolatedQuantile(sorted, p);
    return stats;
  }

  stats.exact = false;
  const size_t bins = options.streaming_bins;
  const double width = (stats.max - stats.min) / static_cast<double>(bins);
  stats.quantile_error_bound = width;
  std::vector<uint64_t> fine(bins, 0);
  for (double s : scores) ++fine[BinOf(s, stats.min, stats.max, bins)];
  auto order_stat = [&](uint64_t j) {
    if (j == 0) return stats.min;
    if (j + 1 == stats.count) return stats.max;
    return std::clamp(HistogramOrderStatistic(fine, stats.min, width, j), stats.min, stats.max);
  };
  for (double p : kReportedQuantiles) {
    double h = static_cast<double>(stats.count - 1) * p;
    auto lo = static_cast<uint64_t>(std::floor(h));
    double a = order_stat(lo);
    double b = lo + 1 < stats.count ? order_stat(lo + 1) : a;
    stats.quantiles[p] = a + (h - static_cast<double>(lo)) * (b - a);
  }
  return stats;
}

ScoreStats ComputeScoreStats(const ScoreTable& table, const StatsOptions& options) {
  std::vector<double> scores;
  scores.reserve(table.entries.size());
  for (const auto& e : table.entries) scores.push_back(e.score);
  return ComputeScoreStats(scores, options);
}

std::string FormatStatsText(const ScoreStats& s) {
  std::string out;
  out += "count: " + std::to_string(s.count) + "\n";
  out += "min: " + FormatDouble(s.min) + "\n";
  out += "max: " + FormatDouble(s.max) + "\n";
  out += "mean: " + FormatDouble(s.mean) + "\n";
  out += std::string("quantiles: ") + (s.exact ? "exact" : "streaming") + "\n";
  if (!s.exact) out += "quantile_error_bound: " + FormatDouble(s.quantile_error_bound) + "\n";
  for (const auto& [p, q] : s.quantiles) out += "  p" + FormatDouble(p * 100) + ": " + FormatDouble(q) + "\n";
  out += "histogram: [" + FormatDouble(s.histogram_low) + ", " + FormatDouble(s.histogram_high) +
         "] in " + std::to_string(s.histogram.size()) + " bins\n";
  const double width = (s.histogram_high - s.histogram_low) / static_cast<double>(s.histogram.size());
  for (size_t b = 0; b < s.histogram.size(); ++b) {
    out += "  " + FormatDouble(s.histogram_low + static_cast<double>(b) * width) + "\t" +
           std::to_string(s.histogram[b]) + "\n";
  }
  return out;
}

std::string FormatStatsJson(const ScoreStats& s) {
  json quantiles = json::object();
  for (const auto& [p, q] : s.quantiles) quantiles["p" + FormatDouble(p * 100)] = q;
  json j = {
      {"schema_version", 1},
      {"count", s.count},
      {"min", s.min},
      {"max", s.max},
      {"mean", s.mean},
      {"exact", s.exact},
      {"quantile_error_bound", s.quantile_error_bound},
      {"quantiles", quantiles},
      {"histogram", {{"low", s.histogram_low}, {"high", s.histogram_high}, {"counts", s.histogram}}},
  };
  return j.dump() + "\n";
}

}  // namespace alignsift
