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

// Agreement between a scorer and human rankings, cosine baselines, and
// summary statistics over score tables.

#ifndef ALIGNSIFT_EVALUATOR_H_
#define ALIGNSIFT_EVALUATOR_H_

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "alignsift/compressor.h"
#include "alignsift/embedding_io.h"
#include "alignsift/preference_store.h"
#include "alignsift/trainer.h"

namespace alignsift {

// dot(u, v) / (|u| |v|), clamped to [-1, 1]. Throws ZeroVector or
// DimensionMismatch.
double CosineScore(std::span<const float> u, std::span<const float> v);
double CosineScore(std::span<const double> u, std::span<const double> v);

// Scores one candidate caption of one image. Implementations are read-only
// and safe to call from several threads.
class CaptionScorer {
 public:
  virtual ~CaptionScorer() = default;
  virtual std::string scorer_id() const = 0;
  virtual std::string checkpoint_hash() const { return ""; }
  virtual bool Has(std::string_view image_id, std::string_view caption_id) const = 0;
  virtual double Score(std::string_view image_id, std::string_view caption_id) const = 0;
};

// Reward head over fused embeddings keyed by CaptionKey(image, caption).
class RewardHeadScorer final : public CaptionScorer {
 public:
  RewardHeadScorer(const Checkpoint& checkpoint, const EmbeddingTable& fused);

  std::string scorer_id() const override { return "reward-head"; }
  std::string checkpoint_hash() const override { return hash_; }
  bool Has(std::string_view image_id, std::string_view caption_id) const override;
  double Score(std::string_view image_id, std::string_view caption_id) const override;

 private:
  const Checkpoint& checkpoint_;
  const EmbeddingTable& fused_;
  std::string hash_;
};

// Cosine similarity between an image-only and a text-only table that share
// keys and dimension.
class CosineScorer final : public CaptionScorer {
 public:
  CosineScorer(const EmbeddingTable& images, const EmbeddingTable& texts);

  std::string scorer_id() const override { return "cosine-similarity"; }
  bool Has(std::string_view image_id, std::string_view caption_id) const override;
  double Score(std::string_view image_id, std::string_view caption_id) const override;

 private:
  const EmbeddingTable& images_;
  const EmbeddingTable& texts_;
};

// Wraps an arbitrary function; used for oracles and controls.
class FunctionScorer final : public CaptionScorer {
 public:
  using Fn = std::function<double(std::string_view image_id, std::string_view caption_id)>;
  FunctionScorer(std::string id, Fn fn) : id_(std::move(id)), fn_(std::move(fn)) {}

  std::string scorer_id() const override { return id_; }
  bool Has(std::string_view, std::string_view) const override { return true; }
  double Score(std::string_view image_id, std::string_view caption_id) const override {
    return fn_(image_id, caption_id);
  }

 private:
  std::string id_;
  Fn fn_;
};

struct EvalOptions {
  // Count an image correct only when the human top group is a single caption
  // and the scorer's argmax is that caption.
  bool strict = false;
  size_t workers = 1;
};

// Each non-degenerate record is one judged image.
struct PreferenceEvalReport {
  std::string scorer_id;
  std::string checkpoint_hash;
  bool strict = false;
  uint64_t n_records = 0;
  uint64_t n_images = 0;  // distinct images among the judged records
  uint64_t n_best_correct = 0;
  double best_caption_accuracy = 0.0;
  uint64_t n_pairs = 0;
  uint64_t n_pairs_correct = 0;
  double pairwise_accuracy = 0.0;
  uint64_t skipped_degenerate = 0;
  // Records whose candidates all received the same score; their argmax is
  // decided by caption id alone.
  uint64_t constant_score_records = 0;
  bool constant_score_degenerate = false;  // true when every record is constant
};

// Throws MissingEmbedding (naming up to five captions) or EmptyEvalSet.
PreferenceEvalReport EvaluatePreferences(const CaptionScorer& scorer,
                                         const PreferenceDataset& eval_store,
                                         const EvalOptions& options = {});

std::string FormatReportText(const PreferenceEvalReport& report);
std::string FormatReportJson(const PreferenceEvalReport& report);

// Quantiles use linear interpolation between order statistics:
// q(p) = x[floor(h)] + (h - floor(h)) (x[floor(h)+1] - x[floor(h)]),
// h = (n - 1) p, on the ascending sample x[0..n-1].
double InterpolatedQuantile(std::span<const double> sorted, double p);

inline constexpr double kReportedQuantiles[] = {0.01, 0.05, 0.1, 0.25, 0.5,
                                                0.75, 0.9,  0.95, 0.99};

struct StatsOptions {
  size_t histogram_bins = 20;
  // Above this many scores, quantiles come from a fine histogram instead of
  // a sort.
  uint64_t exact_limit = 10'000'000;
  bool force_streaming = false;
  size_t streaming_bins = 1 << 16;
};

struct ScoreStats {
  uint64_t count = 0;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  std::map<double, double> quantiles;
  bool exact = true;
  // Absolute bound on every quantile's error; 0 when exact.
  double quantile_error_bound = 0.0;
  double histogram_low = 0.0;
  double histogram_high = 0.0;
  std::vector<uint64_t> histogram;  // equal-width bins over [low, high]
};

// Throws EmptyTable.
ScoreStats ComputeScoreStats(std::span<const double> scores, const StatsOptions& options = {});
ScoreStats ComputeScoreStats(const ScoreTable& table, const StatsOptions& options = {});

std::string FormatStatsText(const ScoreStats& stats);
std::string FormatStatsJson(const ScoreStats& stats);

}  // namespace alignsift

#endif  // ALIGNSIFT_EVALUATOR_H_
