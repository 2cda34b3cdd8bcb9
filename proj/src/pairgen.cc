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

#include "alignsift/pairgen.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "alignsift/error.h"
#include "alignsift/util.h"

namespace alignsift {

std::vector<ComparisonPair> GeneratePairs(const PreferenceRecord& record) {
  if (record.degenerate()) {
    throw Error(ErrorCode::kDegenerateRecord,
                "record " + record.record_id + " has no strict preference");
  }
  std::vector<RankGroup> groups = record.ranking;
  for (auto& g : groups) std::sort(g.begin(), g.end());

  std::vector<ComparisonPair> pairs;
  pairs.reserve(ExpectedPairCount(record));
  for (size_t p = 0; p < groups.size(); ++p) {
    for (const auto& better : groups[p]) {
      for (size_t q = p + 1; q < groups.size(); ++q) {
        for (const auto& worse : groups[q]) {
          pairs.push_back({record.image_id, better, worse, record.record_id});
        }
      }
    }
  }
  return pairs;
}

uint64_t ExpectedPairCount(const PreferenceRecord& record) {
  uint64_t total = 0;
  uint64_t above = 0;
  for (const auto& g : record.ranking) {
    total += above * g.size();
    above += g.size();
  }
  return total;
}

PairSplit GenerateDatasetPairs(const PreferenceDataset& store,
                               const PairGenOptions& options) {
  if (store.records().empty()) {
    throw Error(ErrorCode::kEmptyStore, "store has no preference records");
  }
  if (!(options.holdout_fraction >= 0.0 && options.holdout_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "holdout fraction must lie in [0, 1)");
  }

  // Pairs per image, in record order; the cap applies per image.
  std::map<std::string, std::vector<ComparisonPair>> by_image;
  std::vector<std::string> image_order;
  for (const auto& record : store.records()) {
    if (record.degenerate()) continue;
    auto& bucket = by_image[record.image_id];
    if (bucket.empty()) image_order.push_back(record.image_id);
    for (auto& pair : GeneratePairs(record)) {
      if (options.max_pairs_per_image != 0 &&
          bucket.size() >= options.max_pairs_per_image) {
        break;
      }
      bucket.push_back(std::move(pair));
    }
  }

  std::vector<std::string> shuffled;
  shuffled.reserve(by_image.size());
  for (const auto& [id, pairs] : by_image) shuffled.push_back(id);
  std::mt19937_64 rng(options.split_seed);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  auto n_holdout = static_cast<size_t>(
      std::llround(options.holdout_fraction * static_cast<double>(shuffled.size())));
  std::set<std::string> holdout(shuffled.begin(), shuffled.begin() + n_holdout);

  PairSplit split;
  split.holdout_images.assign(holdout.begin(), holdout.end());
  for (const auto& image_id : image_order) {
    auto& target = holdout.count(image_id) ? split.holdout : split.train;
    for (auto& pair : by_image[image_id]) target.push_back(std::move(pair));
  }
  return split;
}

void WritePairFile(std::span<const ComparisonPair> pairs,
                   const std::filesystem::path& path) {
  std::string out;
  for (const auto& p : pairs) {
    out += p.image_id + '\t' + p.preferred + '\t' + p.dispreferred + '\t' +
           p.record_id + '\n';
  }
  WriteFileAtomic(path, out);
}

std::vector<ComparisonPair> ReadPairFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<ComparisonPair> pairs;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != 4) {
      throw Error(ErrorCode::kInvalidArgument,
                  path.string() + ":" + std::to_string(line_no) +
                      ": expected 4 tab-separated columns");
    }
    pairs.push_back({cols[0], cols[1], cols[2], cols[3]});
  }
  return pairs;
}

}  // namespace alignsift
