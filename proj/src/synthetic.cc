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

#include "alignsift/synthetic.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "alignsift/error.h"

namespace alignsift {
namespace {

std::string Numbered(const char* prefix, size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, i);
  return buf;
}

// base + noise_scale·N(0, I) with its component along `w` removed, plus s·w.
std::vector<float> EmbedWithScore(std::span<const double> w, std::span<const double> base,
                                  double noise_scale, double s, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> e(w.size());
  for (size_t i = 0; i < e.size(); ++i) e[i] = base[i] + noise_scale * normal(rng);
  double along = std::inner_product(e.begin(), e.end(), w.begin(), 0.0);
  std::vector<float> out(w.size());
  for (size_t i = 0; i < w.size(); ++i) out[i] = static_cast<float>(e[i] + (s - along) * w[i]);
  return out;
}

}  // namespace

std::vector<double> HiddenDirection(uint32_t dimension, uint64_t seed) {
  if (dimension == 0) throw Error(ErrorCode::kInvalidArgument, "dimension must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> w(dimension);
  double norm = 0.0;
  while (norm == 0.0) {
    for (auto& x : w) x = normal(rng);
    norm = std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
  }
  for (auto& x : w) x /= norm;
  return w;
}

SyntheticPreferences GenerateSyntheticPreferences(const SyntheticPreferenceConfig& config) {
  if (config.captions_per_image < kMinCaptionsPerImage ||
      config.captions_per_image > kMaxCaptionsPerImage) {
    throw Error(ErrorCode::kInvalidArgument, "captions per image must be in [2, 16]");
  }
  if (config.n_images == 0) throw Error(ErrorCode::kInvalidArgument, "need at least one image");
  if (!(config.margin >= 0.0) || config.margin > 0.5) {
    throw Error(ErrorCode::kInvalidArgument, "margin must be in [0, 0.5]");
  }
  if (!(config.shared_image_variance >= 0.0 && config.shared_image_variance < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "shared image variance must be in [0, 1)");
  }
  SyntheticPreferences out;
  out.store = PreferenceDataset("synthetic-" + std::to_string(config.seed));
  out.direction = HiddenDirection(config.dimension, config.seed);
  std::mt19937_64 rng(config.seed ^ 0x5EEDC0DEULL);
  std::normal_distribution<double> normal;
  const size_t k = config.captions_per_image;
  const double image_scale = std::sqrt(config.shared_image_variance);
  const double caption_scale = std::sqrt(1.0 - config.shared_image_variance);
  std::vector<double> image_part(config.dimension);

  for (size_t i = 0; i < config.n_images; ++i) {
    const std::string image_id = Numbered("img-", i, 5);
    out.store.AddImage({image_id, "synthetic://" + image_id, ImageSource::kDatasetNative});

    for (auto& x : image_part) x = image_scale * normal(rng);

    std::vector<double> s(k);
    while (true) {
      for (auto& x : s) x = normal(rng);
      std::vector<double> sorted = s;
      std::sort(sorted.begin(), sorted.end());
      bool ok = true;
      for (size_t j = 1; j < k; ++j) ok = ok && sorted[j] - sorted[j - 1] >= config.margin;
      if (ok) break;
    }

    std::vector<std::string> ids;
    for (size_t j = 0; j < k; ++j) {
      ids.push_back(Numbered("c", j, 2));
      out.store.AddCaption({ids.back(), image_id,
                            "synthetic caption " + std::to_string(j) + " of " + image_id,
                            CaptionSource::kDatasetSampled});
      out.embeddings.push_back({CaptionKey(image_id, ids.back()),
                                EmbedWithScore(out.direction, image_part, caption_scale, s[j], rng)});
    }

    std::vector<size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    if (config.random_labels) {
      std::shuffle(order.begin(), order.end(), rng);
    } else {
      std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return s[a] > s[b]; });
    }
    PreferenceRecord record;
    record.record_id = "rec-" + image_id;
    record.image_id = image_id;
    record.labeler_id = config.random_labels ? "synthetic-random" : "synthetic-oracle";
    for (size_t j : order) record.ranking.push_back({ids[j]});
    record.timestamp_ms = static_cast<int64_t>(i);
    out.store.AppendRecord(std::move(record));
  }
  return out;
}

MixedCorpus GenerateMixedCorpus(const MixedCorpusConfig& config,
                                std::span<const double> direction) {
  if (!(config.aligned_fraction >= 0.0 && config.aligned_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "aligned fraction must be in [0, 1]");
  }
  MixedCorpus out;
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal;
  const auto n_aligned = static_cast<size_t>(
      std::llround(config.aligned_fraction * static_cast<double>(config.n_pairs)));
  const std::vector<double> no_base(direction.size(), 0.0);
  std::vector<bool> aligned(config.n_pairs, false);
  std::fill(aligned.begin(), aligned.begin() + static_cast<std::ptrdiff_t>(n_aligned), true);
  std::shuffle(aligned.begin(), aligned.end(), rng);

  for (size_t i = 0; i < config.n_pairs; ++i) {
    double s = normal(rng);
    if (!aligned[i]) s -= config.corruption_shift;
    std::string id = Numbered("pair-", i, 7);
    out.embeddings.push_back({id, EmbedWithScore(direction, no_base, 1.0, s, rng)});
    out.listing.push_back(id + "\t" + (aligned[i] ? "aligned" : "corrupted"));
  }
  out.aligned = std::move(aligned);
  return out;
}

}  // namespace alignsift
