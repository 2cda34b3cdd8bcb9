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

#ifndef ALIGNSIFT_PAIRGEN_H_
#define ALIGNSIFT_PAIRGEN_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "alignsift/preference_store.h"

namespace alignsift {

// (image, preferred caption, dispreferred caption) from one labeler's ranking.
struct ComparisonPair {
  std::string image_id;
  std::string preferred;
  std::string dispreferred;
  std::string record_id;

  bool operator==(const ComparisonPair&) const = default;
};

// One pair for every caption ranked strictly above another; tied captions
// produce none. Ordered by (preferred group, preferred id, dispreferred
// group, dispreferred id). Throws DegenerateRecord when fewer than two rank
// groups exist.
std::vector<ComparisonPair> GeneratePairs(const PreferenceRecord& record);

// Σ_{p<q} g_p·g_q over rank group sizes.
uint64_t ExpectedPairCount(const PreferenceRecord& record);

struct PairSplit {
  std::vector<ComparisonPair> train;
  std::vector<ComparisonPair> holdout;
  std::vector<std::string> holdout_images;  // sorted
};

struct PairGenOptions {
  uint64_t split_seed = 0;
  double holdout_fraction = 0.0;  // in [0, 1)
  size_t max_pairs_per_image = 0;  // 0 = unlimited
};

// Pairs for every non-degenerate record, split by image so that all pairs of
// an image land on the same side. round(holdout_fraction × |pair-bearing
// images|) images are held out, chosen by a seeded shuffle of the sorted
// image ids. Throws EmptyStore if the store has no records.
PairSplit GenerateDatasetPairs(const PreferenceDataset& store,
                               const PairGenOptions& options);

// Tab-separated: image_id, preferred, dispreferred, record_id. No header.
void WritePairFile(std::span<const ComparisonPair> pairs,
                   const std::filesystem::path& path);
std::vector<ComparisonPair> ReadPairFile(const std::filesystem::path& path);

}  // namespace alignsift

#endif  // ALIGNSIFT_PAIRGEN_H_
