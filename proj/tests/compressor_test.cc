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

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "alignsift/compressor.h"
#include "alignsift/embedding_io.h"
#include "alignsift/error.h"
#include "alignsift/util.h"
#include "doctest.h"
#include "test_support.h"

namespace alignsift {
namespace {

using testing::CodeOf;
using testing::TempDir;

ScoreTable TableOf(const std::vector<double>& scores, const char* prefix = "p") {
  ScoreTable t;
  t.scorer_id = "test";
  for (size_t i = 0; i < scores.size(); ++i) t.entries.push_back({testing::Id(prefix, i), scores[i]});
  return t;
}

// Brute-force oracle: full sort by (score desc, id asc), take the prefix.
std::set<std::string> SortOracle(const ScoreTable& t, uint64_t m) {
  auto sorted = t.entries;
  std::sort(sorted.begin(), sorted.end(), [](const ScoreEntry& a, const ScoreEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.pair_id < b.pair_id;
  });
  std::set<std::string> out;
  for (uint64_t i = 0; i < m; ++i) out.insert(sorted[i].pair_id);
  return out;
}

std::set<std::string> AsSet(const CompressedManifest& m) {
  return {m.selected.begin(), m.selected.end()};
}

ScoreTable RandomTable(size_t n, std::mt19937_64& rng, bool coarse) {
  std::vector<double> scores(n);
  std::normal_distribution<double> normal;
  // Coarse scores force many ties at the threshold.
  for (auto& s : scores) s = coarse ? static_cast<double>(rng() % 7) : normal(rng);
  auto t = TableOf(scores);
  std::shuffle(t.entries.begin(), t.entries.end(), rng);
  return t;
}

TEST_CASE("keep ratios parse exactly") {
  CHECK(KeepRatio::Parse("0.5") == KeepRatio(1, 2));
  CHECK(KeepRatio::Parse("7/20") == KeepRatio(7, 20));
  CHECK(KeepRatio::Parse("35%") == KeepRatio(7, 20));
  CHECK(KeepRatio::Parse("1") == KeepRatio(1, 1));
  CHECK(KeepRatio::Parse("0.3").KeepCount(10) == 3);
  CHECK(KeepRatio(3, 10).ToString() == "3/10");
  CHECK(KeepRatio(1, 3).KeepCount(UINT64_MAX) == UINT64_MAX / 3);
  for (const char* bad : {"0", "1.5", "-0.2", "abc", "3/0", "", "150%"}) {
    INFO(bad);
    CHECK(CodeOf([&] { KeepRatio::Parse(bad); }) == ErrorCode::kInvalidArgument);
  }
}

TEST_CASE("N=10 at one half keeps 5") {
  auto m = SelectTop(TableOf({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}), {KeepRatio(1, 2)});
  CHECK(m.kept_count == 5);
  CHECK(m.selected == std::vector<std::string>{"p5", "p6", "p7", "p8", "p9"});
  CHECK(m.threshold == 6.0);
  CHECK(m.input_count == 10);
  CHECK(m.exact);
}

TEST_CASE("equal scores keep the smallest pair ids") {
  ScoreTable t;
  t.entries = {{"d", 1.0}, {"b", 1.0}, {"c", 1.0}, {"a", 1.0}};
  auto m = SelectTop(t, {KeepRatio(1, 2)});
  CHECK(AsSet(m) == std::set<std::string>{"a", "b"});
  CHECK(m.selected == std::vector<std::string>{"b", "a"});  // table order
}

TEST_CASE("small inputs and the floor") {
  CHECK(SelectTop(TableOf({3.0}), {KeepRatio(1, 2)}).kept_count == 0);
  CHECK_FALSE(SelectTop(TableOf({3.0}), {KeepRatio(1, 2)}).threshold.has_value());
  CHECK(SelectTop(TableOf({3.0}), {KeepRatio(1, 1)}).selected == std::vector<std::string>{"p0"});
  CHECK(SelectTop(TableOf({1, 2, 3}), {KeepRatio(1, 1)}).kept_count == 3);
  CHECK(CodeOf([] { SelectTop(ScoreTable{}, {}); }) == ErrorCode::kEmptyTable);
  CHECK(CodeOf([] { SelectTop(TableOf({1, std::nan("")}), {}); }) == ErrorCode::kNonFiniteScore);
  ScoreTable dup;
  dup.entries = {{"a", 1}, {"a", 2}};
  CHECK(CodeOf([&] { SelectTop(dup, {}); }) == ErrorCode::kDuplicateKey);
}

TEST_CASE("selection equals a full sort on 100000 random scores") {
  std::mt19937_64 rng(100);
  for (bool coarse : {false, true}) {
    auto t = RandomTable(100000, rng, coarse);
    for (auto ratio : {KeepRatio(1, 5), KeepRatio(1, 2), KeepRatio(4, 5), KeepRatio(37, 1000)}) {
      auto m = SelectTop(t, {ratio});
      CHECK(m.kept_count == ratio.KeepCount(100000));
      CHECK(AsSet(m) == SortOracle(t, m.kept_count));
    }
  }
}

TEST_CASE("cardinality, threshold, nesting and monotone invariance on random tables") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const size_t n = 1 + rng() % 400;
    auto t = RandomTable(n, rng, trial % 2 == 0);
    const uint64_t den = 1 + rng() % 50;
    const uint64_t a = 1 + rng() % den;
    const uint64_t b = a + rng() % (den - a + 1);
    const KeepRatio ra(a, den), rb(b, den);
    auto ma = SelectTop(t, {ra});
    auto mb = SelectTop(t, {rb});
    CHECK(ma.selected.size() == (a * n) / den);
    CHECK(ma.kept_count == ma.selected.size());
    auto sa = AsSet(ma);
    auto sb = AsSet(mb);
    CHECK(std::includes(sb.begin(), sb.end(), sa.begin(), sa.end()));
    CHECK(sa == SortOracle(t, ma.kept_count));
    if (ma.threshold) {
      double min_kept = std::numeric_limits<double>::infinity();
      double max_dropped = -std::numeric_limits<double>::infinity();
      std::string last_tied_kept;
      for (const auto& e : t.entries) {
        if (sa.count(e.pair_id)) {
          min_kept = std::min(min_kept, e.score);
          CHECK(e.score >= *ma.threshold);
        } else {
          max_dropped = std::max(max_dropped, e.score);
          CHECK(e.score <= *ma.threshold);
        }
      }
      CHECK(min_kept == *ma.threshold);
      CHECK(min_kept >= max_dropped);
      // Ties at the threshold: every kept tied id precedes every dropped one.
      for (const auto& kept : t.entries) {
        if (!sa.count(kept.pair_id) || kept.score != *ma.threshold) continue;
        for (const auto& dropped : t.entries) {
          if (sa.count(dropped.pair_id) || dropped.score != *ma.threshold) continue;
          CHECK(kept.pair_id < dropped.pair_id);
        }
      }
    }
    auto transformed = t;
    for (auto& e : transformed.entries) e.score = std::exp(0.3 * e.score) * 5 - 2;
    CHECK(SelectTop(transformed, {ra}).selected == ma.selected);
  }
}

TEST_CASE("laws hold for N in {1, 10, 100000} and ratios {0.2, 0.5, 0.8}") {
  std::mt19937_64 rng(42);
  for (size_t n : {size_t{1}, size_t{10}, size_t{100000}}) {
    auto t = RandomTable(n, rng, false);
    for (const char* r : {"0.2", "0.5", "0.8"}) {
      auto ratio = KeepRatio::Parse(r);
      auto m = SelectTop(t, {ratio});
      CHECK(m.selected.size() == static_cast<size_t>(std::floor(ratio.value() * n + 1e-9)));
      CHECK(AsSet(m) == SortOracle(t, m.selected.size()));
    }
  }
}

HeadArchitecture TinyArch() {
  HeadArchitecture arch;
  arch.layer_widths = {4, 8};
  arch.dropout_rates = {0.1};
  return arch;
}

std::vector<std::filesystem::path> WriteCorpus(const TempDir& dir, size_t shards, size_t per_shard,
                                               uint32_t d, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal;
  std::vector<std::filesystem::path> paths;
  size_t next = 0;
  for (size_t s = 0; s < shards; ++s) {
    auto path = dir / ("shard" + std::to_string(s) + ".emb");
    ShardWriter writer(path, d, KeyMode::kPairId);
    std::vector<float> v(d);
    for (size_t i = 0; i < per_shard; ++i) {
      for (auto& x : v) x = normal(rng);
      writer.Add(testing::Id("pair-", next++), v);
    }
    writer.Finish();
    paths.push_back(path);
  }
  return paths;
}

TEST_CASE("a zero-parameter head scores everything 0") {
  TempDir dir;
  auto paths = WriteCorpus(dir, 2, 50, 4, 1);
  Checkpoint ckpt = Checkpoint::Initialize(TinyArch(), {});
  ckpt.parameters.SetZero();
  auto table = ScoreCorpus(ckpt, paths);
  CHECK(table.entries.size() == 100);
  for (const auto& e : table.entries) CHECK(e.score == 0.0);
  CHECK(table.scorer_id == "reward-head");
  CHECK(table.checkpoint_hash == CheckpointHash(ckpt));
}

TEST_CASE("a single record scores its forward value") {
  TempDir dir;
  auto paths = WriteCorpus(dir, 1, 1, 4, 2);
  Checkpoint ckpt = Checkpoint::Initialize(TinyArch(), {});
  auto table = ScoreCorpus(ckpt, paths);
  auto rec = ReadShard(paths[0]);
  REQUIRE(table.entries.size() == 1);
  CHECK(table.entries[0].pair_id == rec[0].key);
  CHECK(table.entries[0].score ==
        Forward(ckpt.architecture, ckpt.parameters, std::span<const float>(rec[0].vector)));
}

TEST_CASE("parallel and serial scoring of a million records agree exactly") {
  TempDir dir;
  auto paths = WriteCorpus(dir, 8, 125000, 4, 3);
  Checkpoint ckpt = Checkpoint::Initialize(TinyArch(), {});
  auto serial = ScoreCorpus(ckpt, paths, {1, 512});
  auto parallel = ScoreCorpus(ckpt, paths, {4, 512});
  CHECK(serial.entries.size() == 1000000);
  CHECK(serial == parallel);
  CHECK(serial.entries.front().pair_id == "pair-0");
  CHECK(serial.entries.back().pair_id == "pair-999999");
}

TEST_CASE("scoring errors") {
  TempDir dir;
  auto paths = WriteCorpus(dir, 2, 3, 5, 4);
  Checkpoint ckpt = Checkpoint::Initialize(TinyArch(), {});
  CHECK(CodeOf([&] { ScoreCorpus(ckpt, paths); }) == ErrorCode::kDimensionMismatch);
  auto same = WriteCorpus(dir, 1, 3, 4, 5);
  std::vector<std::filesystem::path> twice = {same[0], same[0]};
  CHECK(CodeOf([&] { ScoreCorpus(ckpt, twice); }) == ErrorCode::kDuplicateKey);
  ckpt.parameters.layers[0].weight.setConstant(1e308);
  std::vector<EmbeddingRecord> big = {{"huge", {2, 2, 2, 2}}};
  WriteShard(big, dir / "huge.emb", 4);
  std::vector<std::filesystem::path> huge = {dir / "huge.emb"};
  try {
    ScoreCorpus(ckpt, huge);
    FAIL("expected NonFiniteScore");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonFiniteScore);
    CHECK(std::string(e.what()).find("huge") != std::string::npos);
  }
}

TEST_CASE("cosine corpus scoring") {
  TempDir dir;
  std::vector<EmbeddingRecord> images = {{"a", {1, 0}}, {"b", {0, 2}}};
  std::vector<EmbeddingRecord> texts = {{"a", {1, 1}}, {"b", {0, -1}}};
  WriteShard(images, dir / "i.emb", 2);
  WriteShard(texts, dir / "t.emb", 2);
  std::vector<std::filesystem::path> ip = {dir / "i.emb"}, tp = {dir / "t.emb"};
  auto table = ScoreCorpusCosine(ip, tp);
  REQUIRE(table.entries.size() == 2);
  CHECK(std::abs(table.entries[0].score - 1 / std::sqrt(2.0)) < 1e-12);
  CHECK(table.entries[1].score == -1.0);
  CHECK(table.scorer_id == "cosine-similarity");
}

TEST_CASE("manifests round-trip through their text form") {
  TempDir dir;
  std::mt19937_64 rng(9);
  auto t = RandomTable(1000, rng, false);
  t.checkpoint_hash = "abc123";
  auto m = SelectTop(t, {KeepRatio(1, 3)});
  WriteManifest(m, dir / "m.txt");
  auto back = ReadManifest(dir / "m.txt");
  CHECK(back.selected == m.selected);
  CHECK(back.threshold == m.threshold);
  CHECK(back.kept_count == 333);
  CHECK(back.input_count == 1000);
  CHECK(back.spec.keep_ratio == KeepRatio(1, 3));
  CHECK(back.checkpoint_hash == "abc123");
  CHECK(back.exact);
  CHECK(SerializeManifest(back) == ReadFile(dir / "m.txt"));
  std::string text = ReadFile(dir / "m.txt");
  CHECK(text.rfind("# alignsift-manifest v1\n", 0) == 0);
  text.erase(text.rfind('\n', text.size() - 2) + 1);  // drop the last id
  CHECK(CodeOf([&] { ParseManifest(text); }) == ErrorCode::kInvalidArgument);
  CHECK(CodeOf([&] { ParseManifest("p1\np2\n"); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("score tables round-trip and detect damage") {
  TempDir dir;
  std::mt19937_64 rng(10);
  auto t = RandomTable(500, rng, false);
  t.entries[0].score = -0.0;
  t.entries[1].score = 5e-324;
  t.checkpoint_hash = "h";
  WriteScoreTable(t, dir / "s.bin");
  auto back = ReadScoreTable(dir / "s.bin");
  CHECK(back == t);
  CHECK(std::signbit(back.entries[0].score));
  std::string bytes = ReadFile(dir / "s.bin");
  bytes[bytes.size() / 2] ^= 1;
  WriteFileAtomic(dir / "bad.bin", bytes);
  CHECK(CodeOf([&] { ReadScoreTable(dir / "bad.bin"); }) == ErrorCode::kChecksumMismatch);
  WriteFileAtomic(dir / "junk.bin", "hello");
  CHECK(CodeOf([&] { ReadScoreTable(dir / "junk.bin"); }) == ErrorCode::kBadMagic);
  auto text = ScoreTableText(TableOf({0.5}));
  CHECK(text.find("p0\t0.5\n") != std::string::npos);
}

TEST_CASE("applying a manifest filters the listing in source order") {
  std::vector<std::string> listing = {"# corpus", "p0\turl0", "p1\turl1", "p2\turl2", "p3"};
  auto all = SelectTop(TableOf({1, 2, 3, 4}), {KeepRatio(1, 1)});
  CHECK(ApplyManifest(all, listing) == listing);
  auto half = SelectTop(TableOf({4, 1, 3, 2}), {KeepRatio(1, 2)});
  CHECK(ApplyManifest(half, listing) == std::vector<std::string>{"# corpus", "p0\turl0", "p2\turl2"});
  std::vector<std::string> wrong = {"q0\tx", "q1\ty"};
  try {
    ApplyManifest(half, wrong);
    FAIL("expected MissingPair");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMissingPair);
    CHECK(std::string(e.what()).find("p0") != std::string::npos);
  }
  TempDir dir;
  WriteFileAtomic(dir / "l.tsv", "p0\ta\np1\tb\np2\tc\np3\td\n");
  ApplyManifestFile(half, dir / "l.tsv", dir / "out.tsv");
  CHECK(ReadFile(dir / "out.tsv") == "p0\ta\np2\tc\n");
}

TEST_CASE("approximate selection is labeled and close to the exact count") {
  std::mt19937_64 rng(11);
  auto t = RandomTable(200000, rng, false);
  auto exact = SelectTop(t, {KeepRatio(1, 2)});
  auto approx = SelectTopApproximate(t, {KeepRatio(1, 2)}, 20000, 5);
  CHECK_FALSE(approx.exact);
  CHECK(std::abs(static_cast<double>(approx.kept_count) - 100000.0) < 3000.0);
  CHECK(approx.kept_count == approx.selected.size());
  auto kept = AsSet(approx);
  for (const auto& e : t.entries) CHECK((kept.count(e.pair_id) > 0) == (e.score >= *approx.threshold));
  auto again = SelectTopApproximate(t, {KeepRatio(1, 2)}, 20000, 5);
  CHECK(again.selected == approx.selected);
  auto whole = SelectTopApproximate(t, {KeepRatio(1, 2)}, 200000, 5);
  CHECK(AsSet(whole) == AsSet(exact));
  CHECK(SerializeManifest(approx).find("# selection: approximate") != std::string::npos);
}

}  // namespace
}  // namespace alignsift
