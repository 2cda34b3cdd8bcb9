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

#include <map>
#include <random>
#include <set>

#include "alignsift/pairgen.h"
#include "alignsift/util.h"
#include "doctest.h"
#include "test_support.h"

namespace alignsift {
namespace {

using testing::CodeOf;
using testing::MakeRecord;

PreferenceRecord WithGroups(const std::vector<size_t>& sizes) {
  std::vector<RankGroup> ranking;
  size_t next = 0;
  for (size_t s : sizes) {
    ranking.emplace_back();
    for (size_t j = 0; j < s; ++j) ranking.back().push_back(testing::Id("c", next++));
  }
  return MakeRecord("r", "img", ranking);
}

// Brute-force oracle: the group index of each caption decides every pair.
std::set<std::pair<std::string, std::string>> OraclePairs(const PreferenceRecord& r) {
  std::map<std::string, size_t> group;
  for (size_t g = 0; g < r.ranking.size(); ++g) {
    for (const auto& c : r.ranking[g]) group[c] = g;
  }
  std::set<std::pair<std::string, std::string>> out;
  for (const auto& [a, ga] : group) {
    for (const auto& [b, gb] : group) {
      if (ga < gb) out.insert({a, b});
    }
  }
  return out;
}

TEST_CASE("total orders over k captions give k(k-1)/2 pairs") {
  CHECK(GeneratePairs(WithGroups({1, 1, 1, 1, 1, 1, 1, 1})).size() == 28);
  CHECK(GeneratePairs(WithGroups(std::vector<size_t>(10, 1))).size() == 45);
  for (size_t k = 2; k <= 16; ++k) {
    CHECK(GeneratePairs(WithGroups(std::vector<size_t>(k, 1))).size() == k * (k - 1) / 2);
  }
}

TEST_CASE("group sizes (3,2,1) give 11 pairs") {
  auto r = WithGroups({3, 2, 1});
  CHECK(ExpectedPairCount(r) == 11);
  CHECK(GeneratePairs(r).size() == 11);
}

TEST_CASE("tied captions produce no pair between them") {
  auto r = MakeRecord("r", "img", {{"a", "b"}, {"c"}});
  auto pairs = GeneratePairs(r);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0] == ComparisonPair{"img", "a", "c", "r"});
  CHECK(pairs[1] == ComparisonPair{"img", "b", "c", "r"});
}

TEST_CASE("degenerate rankings are rejected") {
  CHECK(CodeOf([] { GeneratePairs(MakeRecord("r", "img", {{"a"}})); }) ==
        ErrorCode::kDegenerateRecord);
  CHECK(CodeOf([] { GeneratePairs(MakeRecord("r", "img", {{"a", "b", "c"}})); }) ==
        ErrorCode::kDegenerateRecord);
}

TEST_CASE("output order is group index then caption id") {
  auto pairs = GeneratePairs(MakeRecord("r", "img", {{"z", "b"}, {"y", "a"}, {"m"}}));
  std::vector<std::pair<std::string, std::string>> got;
  for (const auto& p : pairs) got.emplace_back(p.preferred, p.dispreferred);
  std::vector<std::pair<std::string, std::string>> want = {
      {"b", "a"}, {"b", "y"}, {"b", "m"}, {"z", "a"}, {"z", "y"}, {"z", "m"}, {"a", "m"}, {"y", "m"}};
  CHECK(got == want);
}

TEST_CASE("count law, antisymmetry and oracle agreement on random rankings") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 500; ++trial) {
    const size_t k = 2 + rng() % 15;
    auto r = MakeRecord("r", "img", testing::RandomRanking(k, rng));
    if (r.degenerate()) continue;
    auto pairs = GeneratePairs(r);
    uint64_t law = 0;
    for (size_t p = 0; p < r.ranking.size(); ++p) {
      for (size_t q = p + 1; q < r.ranking.size(); ++q) law += r.ranking[p].size() * r.ranking[q].size();
    }
    CHECK(pairs.size() == law);
    CHECK(ExpectedPairCount(r) == law);
    std::set<std::pair<std::string, std::string>> got;
    for (const auto& p : pairs) {
      CHECK(p.preferred != p.dispreferred);
      got.insert({p.preferred, p.dispreferred});
    }
    for (const auto& [a, b] : got) CHECK_FALSE(got.count({b, a}));
    CHECK(got == OraclePairs(r));
    CHECK((law == k * (k - 1) / 2) == (r.ranking.size() == k));
  }
}

PreferenceDataset TenImageStore() {
  PreferenceDataset data("ten");
  for (size_t i = 0; i < 10; ++i) {
    testing::AddImageWithCaptions(data, testing::Id("img", i), 4);
    data.AppendRecord(MakeRecord(testing::Id("r", i), testing::Id("img", i), testing::TotalOrder(4)));
  }
  return data;
}

TEST_CASE("holdout fraction 0 keeps every pair in train") {
  auto split = GenerateDatasetPairs(TenImageStore(), {7, 0.0, 0});
  CHECK(split.train.size() == 60);
  CHECK(split.holdout.empty());
  CHECK(split.holdout_images.empty());
}

TEST_CASE("10 images at fraction 0.2 hold out exactly 2, repeatably") {
  const auto data = TenImageStore();
  auto a = GenerateDatasetPairs(data, {99, 0.2, 0});
  auto b = GenerateDatasetPairs(data, {99, 0.2, 0});
  CHECK(a.holdout_images.size() == 2);
  CHECK(a.holdout.size() == 12);
  CHECK(a.train == b.train);
  CHECK(a.holdout == b.holdout);
  CHECK(a.holdout_images == b.holdout_images);
}

TEST_CASE("splits are image-disjoint and cover every pair-bearing image") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    PreferenceDataset data("p");
    const size_t n = 1 + rng() % 20;
    std::set<std::string> bearing;
    for (size_t i = 0; i < n; ++i) {
      const size_t k = 2 + rng() % 6;
      testing::AddImageWithCaptions(data, testing::Id("img", i), k);
      auto rec = MakeRecord(testing::Id("r", i), testing::Id("img", i), testing::RandomRanking(k, rng));
      if (!rec.degenerate()) bearing.insert(rec.image_id);
      data.AppendRecord(rec);
    }
    if (data.records().empty()) continue;
    const double fraction = static_cast<double>(rng() % 10) / 10.0;
    auto split = GenerateDatasetPairs(data, {rng(), fraction, 0});
    std::set<std::string> train_images;
    std::set<std::string> holdout_images;
    for (const auto& p : split.train) train_images.insert(p.image_id);
    for (const auto& p : split.holdout) holdout_images.insert(p.image_id);
    for (const auto& id : train_images) CHECK_FALSE(holdout_images.count(id));
    std::set<std::string> all = train_images;
    all.insert(holdout_images.begin(), holdout_images.end());
    CHECK(all == bearing);
    CHECK(split.holdout_images.size() ==
          static_cast<size_t>(std::llround(fraction * static_cast<double>(bearing.size()))));
  }
}

TEST_CASE("degenerate records are skipped and an empty store is an error") {
  PreferenceDataset data("d");
  testing::AddImageWithCaptions(data, "img", 3);
  CHECK(CodeOf([&] { GenerateDatasetPairs(data, {}); }) == ErrorCode::kEmptyStore);
  data.AppendRecord(MakeRecord("r", "img", {{"c0", "c1", "c2"}}));
  CHECK(GenerateDatasetPairs(data, {}).train.empty());
}

TEST_CASE("the per-image cap keeps the first pairs of each image") {
  auto split = GenerateDatasetPairs(TenImageStore(), {1, 0.0, 4});
  CHECK(split.train.size() == 40);
  CHECK(split.train[0] == ComparisonPair{"img0", "c0", "c1", "r0"});
}

TEST_CASE("pair files round-trip") {
  testing::TempDir dir;
  auto split = GenerateDatasetPairs(TenImageStore(), {3, 0.3, 0});
  WritePairFile(split.train, dir / "train.tsv");
  CHECK(ReadPairFile(dir / "train.tsv") == split.train);
  WriteFileAtomic(dir / "bad.tsv", "a\tb\tc\n");
  CHECK(CodeOf([&] { ReadPairFile(dir / "bad.tsv"); }) == ErrorCode::kInvalidArgument);
}

}  // namespace
}  // namespace alignsift
