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

// Corpus scoring and top-k% selection.
//
// Selection keeps exactly floor(keep_ratio × N) pairs: the prefix of the
// order (score descending, pair_id ascending). The cut is located with
// nth_element and kept ids are emitted by a second pass in table order.

#ifndef ALIGNSIFT_COMPRESSOR_H_
#define ALIGNSIFT_COMPRESSOR_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "alignsift/trainer.h"

namespace alignsift {

struct ScoreEntry {
  std::string pair_id;
  double score = 0.0;

  bool operator==(const ScoreEntry&) const = default;
};

struct ScoreTable {
  std::string scorer_id;        // "reward-head" or "cosine-similarity"
  std::string checkpoint_hash;  // empty for baselines
  std::vector<ScoreEntry> entries;

  bool operator==(const ScoreTable&) const = default;
};

// Exact rational in (0, 1]. Parses "0.35", "7/20" or "35%".
class KeepRatio {
 public:
  KeepRatio() = default;
  KeepRatio(uint64_t numerator, uint64_t denominator);
  static KeepRatio Parse(std::string_view text);

  uint64_t numerator() const { return num_; }
  uint64_t denominator() const { return den_; }
  double value() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  // floor(ratio × n), computed exactly.
  uint64_t KeepCount(uint64_t n) const;
  std::string ToString() const;

  bool operator==(const KeepRatio&) const = default;

 private:
  uint64_t num_ = 1;
  uint64_t den_ = 2;
};

struct CompressionSpec {
  KeepRatio keep_ratio;
};

inline constexpr std::string_view kTieBreakPolicy = "score-desc,pair-id-asc";

struct CompressedManifest {
  std::vector<std::string> selected;  // table order
  std::optional<double> threshold;    // score of the last kept pair
  uint64_t input_count = 0;
  uint64_t kept_count = 0;
  CompressionSpec spec;
  std::string scorer_id;
  std::string checkpoint_hash;
  bool exact = true;
};

struct ScoreOptions {
  size_t workers = 1;
  size_t batch_size = 512;
};

// Eval-mode reward for every record of every shard, in shard order. Shards
// are scored concurrently; the merged table does not depend on `workers`.
ScoreTable ScoreCorpus(const Checkpoint& checkpoint,
                       std::span<const std::filesystem::path> shards,
                       const ScoreOptions& options = {});

// Cosine similarity between aligned image-only and text-only shards.
ScoreTable ScoreCorpusCosine(std::span<const std::filesystem::path> image_shards,
                             std::span<const std::filesystem::path> text_shards);

// Throws EmptyTable, NonFiniteScore, DuplicateKey.
CompressedManifest SelectTop(const ScoreTable& table, const CompressionSpec& spec);

// Memory-capped variant: the threshold is estimated from a seeded reservoir
// sample of `reservoir_size` scores and every pair scoring at or above it is
// kept, so the kept count is only approximately floor(ratio × N). The
// manifest is marked non-exact.
CompressedManifest SelectTopApproximate(const ScoreTable& table, const CompressionSpec& spec,
                                        size_t reservoir_size, uint64_t seed);

// Keeps listing lines whose first tab-separated column is a selected pair id,
// in listing order. Lines starting with '#' pass through. Throws MissingPair
// naming the first manifest id absent from the listing.
std::vector<std::string> ApplyManifest(const CompressedManifest& manifest,
                                       std::span<const std::string> listing);
void ApplyManifestFile(const CompressedManifest& manifest,
                       const std::filesystem::path& listing,
                       const std::filesystem::path& out);

std::string SerializeManifest(const CompressedManifest& manifest);
CompressedManifest ParseManifest(std::string_view text);
void WriteManifest(const CompressedManifest& manifest, const std::filesystem::path& path);
CompressedManifest ReadManifest(const std::filesystem::path& path);

// Binary: "ALSFSCR1", u32 version, u32 provenance length, provenance JSON,
// u64 count, count × (u32 length, id bytes), count × f64, u64 FNV-1a of all
// prior bytes.
void WriteScoreTable(const ScoreTable& table, const std::filesystem::path& path);
ScoreTable ReadScoreTable(const std::filesystem::path& path);
// "pair_id<TAB>score" lines after '#' provenance lines.
std::string ScoreTableText(const ScoreTable& table);

}  // namespace alignsift

#endif  // ALIGNSIFT_COMPRESSOR_H_
