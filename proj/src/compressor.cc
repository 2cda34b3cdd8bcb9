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

#include "alignsift/compressor.h"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "alignsift/error.h"
#include "alignsift/evaluator.h"
#include "alignsift/util.h"
#include "json.hpp"

namespace alignsift {
namespace {

using nlohmann::json;

constexpr char kScoreMagic[8] = {'A', 'L', 'S', 'F', 'S', 'C', 'R', '1'};
constexpr uint32_t kScoreFormatVersion = 1;
constexpr std::string_view kManifestHeader = "# alignsift-manifest v1";

// Strict total order used for selection: higher score first, then smaller id.
bool RanksAbove(const ScoreEntry& a, const ScoreEntry& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.pair_id < b.pair_id;
}

void ValidateTable(const ScoreTable& table) {
  if (table.entries.empty()) throw Error(ErrorCode::kEmptyTable, "score table is empty");
  std::unordered_set<std::string_view> seen;
  seen.reserve(table.entries.size());
  for (const auto& e : table.entries) {
    if (!std::isfinite(e.score)) {
      throw Error(ErrorCode::kNonFiniteScore, "non-finite score for " + e.pair_id);
    }
    if (!seen.insert(e.pair_id).second) {
      throw Error(ErrorCode::kDuplicateKey, "pair " + e.pair_id + " is scored twice");
    }
  }
}

std::vector<ScoreEntry> ScoreShard(const Checkpoint& ckpt, const std::filesystem::path& path,
                                   size_t batch_size) {
  ShardReader reader(path);
  if (reader.dimension() != static_cast<uint32_t>(ckpt.architecture.input_dim())) {
    throw Error(ErrorCode::kDimensionMismatch,
                path.string() + ": dimension " + std::to_string(reader.dimension()) +
                    ", head expects " + std::to_string(ckpt.architecture.input_dim()));
  }
  if (reader.key_mode() != KeyMode::kPairId) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": corpus shards must be keyed by pair id");
  }
  std::vector<ScoreEntry> out;
  out.reserve(reader.count());
  const auto dim = static_cast<Eigen::Index>(reader.dimension());
  Eigen::MatrixXd batch(dim, static_cast<Eigen::Index>(batch_size));
  std::vector<std::string> keys;
  EmbeddingRecord record;
  auto flush = [&]() {
    if (keys.empty()) return;
    const auto n = static_cast<Eigen::Index>(keys.size());
    Eigen::RowVectorXd scores;
    try {
      scores = ForwardBatch(ckpt.architecture, ckpt.parameters, batch.leftCols(n));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNonFiniteActivation) throw;
      // Rescore one column at a time to name the offending pair.
      for (Eigen::Index i = 0; i < n; ++i) {
        try {
          ForwardBatch(ckpt.architecture, ckpt.parameters, batch.col(i));
        } catch (const Error& inner) {
          throw Error(ErrorCode::kNonFiniteScore, "non-finite score for " +
                                                      keys[static_cast<size_t>(i)] + " (" +
                                                      inner.what() + ")");
        }
      }
      throw;
    }
    for (size_t i = 0; i < keys.size(); ++i) {
      double s = scores(static_cast<Eigen::Index>(i));
      if (!std::isfinite(s)) throw Error(ErrorCode::kNonFiniteScore, "non-finite score for " + keys[i]);
      out.push_back({std::move(keys[i]), s});
    }
    keys.clear();
  };
  while (reader.Next(record)) {
    auto col = static_cast<Eigen::Index>(keys.size());
    for (Eigen::Index r = 0; r < dim; ++r) batch(r, col) = record.vector[static_cast<size_t>(r)];
    keys.push_back(std::move(record.key));
    if (keys.size() == batch_size) flush();
  }
  flush();
  return out;
}

}  // namespace

// --- KeepRatio -----------------------------------------------------------------

KeepRatio::KeepRatio(uint64_t numerator, uint64_t denominator) {
  if (denominator == 0 || numerator == 0 || numerator > denominator) {
    throw Error(ErrorCode::kInvalidArgument, "keep ratio must lie in (0, 1]");
  }
  uint64_t g = std::gcd(numerator, denominator);
  num_ = numerator / g;
  den_ = denominator / g;
}

KeepRatio KeepRatio::Parse(std::string_view text) {
  auto parse_uint = [&](std::string_view digits) {
    uint64_t v = 0;
    auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (digits.empty() || ec != std::errc() || end != digits.data() + digits.size()) {
      throw Error(ErrorCode::kInvalidArgument, "cannot parse keep ratio '" + std::string(text) + "'");
    }
    return v;
  };
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    return KeepRatio(parse_uint(text.substr(0, slash)), parse_uint(text.substr(slash + 1)));
  }
  uint64_t scale = 1;
  std::string_view body = text;
  if (!body.empty() && body.back() == '%') {
    body.remove_suffix(1);
    scale = 100;
  }
  auto dot = body.find('.');
  std::string_view whole = body.substr(0, dot);
  std::string_view frac = dot == std::string_view::npos ? std::string_view() : body.substr(dot + 1);
  if (frac.size() > 15) {
    throw Error(ErrorCode::kInvalidArgument, "keep ratio has too many decimals");
  }
  uint64_t den = scale;
  for (size_t i = 0; i < frac.size(); ++i) den *= 10;
  uint64_t num = (whole.empty() ? 0 : parse_uint(whole));
  for (size_t i = 0; i < frac.size(); ++i) num *= 10;
  if (!frac.empty()) num += parse_uint(frac);
  return KeepRatio(num, den);
}

uint64_t KeepRatio::KeepCount(uint64_t n) const {
  return static_cast<uint64_t>(static_cast<unsigned __int128>(n) * num_ / den_);
}

std::string KeepRatio::ToString() const {
  return std::to_string(num_) + "/" + std::to_string(den_);
}

// --- scoring -------------------------------------------------------------------

ScoreTable ScoreCorpus(const Checkpoint& checkpoint, std::span<const std::filesystem::path> shards,
                       const ScoreOptions& options) {
  if (options.batch_size == 0) throw Error(ErrorCode::kInvalidArgument, "batch size must be positive");
  std::vector<std::vector<ScoreEntry>> per_shard(shards.size());
  std::vector<std::exception_ptr> failures(shards.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (size_t i = next++; i < shards.size(); i = next++) {
      try {
        per_shard[i] = ScoreShard(checkpoint, shards[i], options.batch_size);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const size_t n_workers = std::clamp<size_t>(options.workers, 1, std::max<size_t>(shards.size(), 1));
  std::vector<std::thread> threads;
  for (size_t w = 1; w < n_workers; ++w) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  for (auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  ScoreTable table{"reward-head", CheckpointHash(checkpoint), {}};
  for (auto& part : per_shard) {
    std::move(part.begin(), part.end(), std::back_inserter(table.entries));
  }
  std::unordered_set<std::string_view> seen;
  for (const auto& e : table.entries) {
    if (!seen.insert(e.pair_id).second) {
      throw Error(ErrorCode::kDuplicateKey, "pair " + e.pair_id + " appears in more than one shard");
    }
  }
  return table;
}

ScoreTable ScoreCorpusCosine(std::span<const std::filesystem::path> image_shards,
                             std::span<const std::filesystem::path> text_shards) {
  if (image_shards.size() != text_shards.size()) {
    throw Error(ErrorCode::kInvalidArgument, "image and text shard lists differ in length");
  }
  ScoreTable table{"cosine-similarity", "", {}};
  for (size_t i = 0; i < image_shards.size(); ++i) {
    auto images = OpenEmbeddings(image_shards[i]);
    auto texts = OpenEmbeddings(text_shards[i]);
    if (images->dimension() != texts->dimension()) {
      throw Error(ErrorCode::kDimensionMismatch, "image and text shards differ in dimension");
    }
    EmbeddingRecord a;
    EmbeddingRecord b;
    while (true) {
      bool more_a = images->Next(a);
      bool more_b = texts->Next(b);
      if (more_a != more_b || (more_a && a.key != b.key)) {
        throw Error(ErrorCode::kInvalidArgument,
                    "image and text shards are not aligned at " + (more_a ? a.key : b.key));
      }
      if (!more_a) break;
      table.entries.push_back({a.key, CosineScore(a.vector, b.vector)});
    }
  }
  return table;
}

// --- selection -----------------------------------------------------------------

CompressedManifest SelectTop(const ScoreTable& table, const CompressionSpec& spec) {
  ValidateTable(table);
  const auto& entries = table.entries;
  CompressedManifest manifest;
  manifest.spec = spec;
  manifest.scorer_id = table.scorer_id;
  manifest.checkpoint_hash = table.checkpoint_hash;
  manifest.input_count = entries.size();
  const uint64_t keep = spec.keep_ratio.KeepCount(entries.size());
  manifest.kept_count = keep;
  if (keep == 0) return manifest;

  std::vector<uint32_t> order(entries.size());
  std::iota(order.begin(), order.end(), 0u);
  auto cut = order.begin() + static_cast<std::ptrdiff_t>(keep - 1);
  std::nth_element(order.begin(), cut, order.end(), [&](uint32_t a, uint32_t b) {
    return RanksAbove(entries[a], entries[b]);
  });
  const ScoreEntry& last_kept = entries[*cut];
  manifest.threshold = last_kept.score;

  manifest.selected.reserve(keep);
  for (const auto& e : entries) {
    if (!RanksAbove(last_kept, e)) manifest.selected.push_back(e.pair_id);
  }
  return manifest;
}

CompressedManifest SelectTopApproximate(const ScoreTable& table, const CompressionSpec& spec,
                                        size_t reservoir_size, uint64_t seed) {
  ValidateTable(table);
  if (reservoir_size == 0) throw Error(ErrorCode::kInvalidArgument, "reservoir must be non-empty");
  const auto& entries = table.entries;
  CompressedManifest manifest;
  manifest.spec = spec;
  manifest.scorer_id = table.scorer_id;
  manifest.checkpoint_hash = table.checkpoint_hash;
  manifest.input_count = entries.size();
  manifest.exact = false;
  if (spec.keep_ratio.KeepCount(entries.size()) == 0) return manifest;

  std::vector<double> sample;
  sample.reserve(std::min(reservoir_size, entries.size()));
  std::mt19937_64 rng(seed);
  for (size_t i = 0; i < entries.size(); ++i) {
    if (sample.size() < reservoir_size) {
      sample.push_back(entries[i].score);
    } else {
      uint64_t j = rng() % (i + 1);
      if (j < reservoir_size) sample[j] = entries[i].score;
    }
  }
  std::sort(sample.begin(), sample.end(), std::greater<>());
  uint64_t k = std::max<uint64_t>(1, spec.keep_ratio.KeepCount(sample.size()));
  const double threshold = sample[k - 1];
  manifest.threshold = threshold;
  for (const auto& e : entries) {
    if (e.score >= threshold) manifest.selected.push_back(e.pair_id);
  }
  manifest.kept_count = manifest.selected.size();
  return manifest;
}

// --- manifests -----------------------------------------------------------------

std::vector<std::string> ApplyManifest(const CompressedManifest& manifest,
                                       std::span<const std::string> listing) {
  std::unordered_set<std::string_view> wanted(manifest.selected.begin(), manifest.selected.end());
  std::unordered_set<std::string_view> present;
  std::vector<std::string> out;
  for (const auto& line : listing) {
    if (!line.empty() && line.front() == '#') {
      out.push_back(line);
      continue;
    }
    std::string_view id = std::string_view(line).substr(0, line.find('\t'));
    present.insert(id);
    if (wanted.count(id)) out.push_back(line);
  }
  for (const auto& id : manifest.selected) {
    if (!present.count(id)) {
      throw Error(ErrorCode::kMissingPair, "manifest pair " + id + " is not in the listing");
    }
  }
  return out;
}

void ApplyManifestFile(const CompressedManifest& manifest, const std::filesystem::path& listing,
                       const std::filesystem::path& out) {
  std::ifstream in(listing);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + listing.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(std::move(line));
  std::string text;
  for (const auto& line : ApplyManifest(manifest, lines)) text += line + "\n";
  WriteFileAtomic(out, text);
}

std::string SerializeManifest(const CompressedManifest& m) {
  std::string out(kManifestHeader);
  out += "\n# scorer: " + m.scorer_id;
  out += "\n# checkpoint: " + (m.checkpoint_hash.empty() ? std::string("-") : m.checkpoint_hash);
  out += "\n# keep_ratio: " + m.spec.keep_ratio.ToString();
  out += "\n# tie_break: " + std::string(kTieBreakPolicy);
  out += std::string("\n# selection: ") + (m.exact ? "exact" : "approximate");
  out += "\n# input_count: " + std::to_string(m.input_count);
  out += "\n# kept_count: " + std::to_string(m.kept_count);
  out += "\n# threshold: " + (m.threshold ? FormatDouble(*m.threshold) : std::string("none"));
  out += "\n";
  for (const auto& id : m.selected) out += id + "\n";
  return out;
}

CompressedManifest ParseManifest(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader) {
    throw Error(ErrorCode::kInvalidArgument, "not a manifest (missing header)");
  }
  CompressedManifest m;
  while (std::getline(in, line)) {
    if (line.rfind("# ", 0) == 0) {
      auto colon = line.find(": ");
      if (colon == std::string::npos) continue;
      std::string key = line.substr(2, colon - 2);
      std::string value = line.substr(colon + 2);
      if (key == "scorer") m.scorer_id = value;
      else if (key == "checkpoint") m.checkpoint_hash = value == "-" ? "" : value;
      else if (key == "keep_ratio") m.spec.keep_ratio = KeepRatio::Parse(value);
      else if (key == "selection") m.exact = value == "exact";
      else if (key == "input_count") m.input_count = std::stoull(value);
      else if (key == "kept_count") m.kept_count = std::stoull(value);
      else if (key == "threshold" && value != "none") m.threshold = std::stod(value);
      continue;
    }
    if (!line.empty()) m.selected.push_back(line);
  }
  if (m.selected.size() != m.kept_count) {
    throw Error(ErrorCode::kInvalidArgument, "manifest lists " + std::to_string(m.selected.size()) +
                                                 " ids but declares " + std::to_string(m.kept_count));
  }
  return m;
}

void WriteManifest(const CompressedManifest& manifest, const std::filesystem::path& path) {
  WriteFileAtomic(path, SerializeManifest(manifest));
}

CompressedManifest ReadManifest(const std::filesystem::path& path) {
  return ParseManifest(ReadFile(path));
}

// --- score tables --------------------------------------------------------------

void WriteScoreTable(const ScoreTable& table, const std::filesystem::path& path) {
  std::ostringstream out;
  out.write(kScoreMagic, sizeof(kScoreMagic));
  WriteU32(out, kScoreFormatVersion);
  std::string provenance =
      json{{"scorer_id", table.scorer_id}, {"checkpoint_hash", table.checkpoint_hash}}.dump();
  WriteU32(out, static_cast<uint32_t>(provenance.size()));
  out << provenance;
  WriteU64(out, table.entries.size());
  for (const auto& e : table.entries) {
    WriteU32(out, static_cast<uint32_t>(e.pair_id.size()));
    out << e.pair_id;
  }
  for (const auto& e : table.entries) WriteF64(out, e.score);
  std::string bytes = out.str();
  uint64_t checksum = Fnv64Of(bytes);
  bytes.append(reinterpret_cast<const char*>(&checksum), sizeof(checksum));
  WriteFileAtomic(path, bytes);
}

ScoreTable ReadScoreTable(const std::filesystem::path& path) {
  const std::string bytes = ReadFile(path);
  auto corrupt = [&](const std::string& what) {
    return Error(ErrorCode::kInvalidArgument, path.string() + ": " + what);
  };
  if (bytes.size() < 8 + 4 + 4 + 8 + 8 || std::memcmp(bytes.data(), kScoreMagic, 8) != 0) {
    throw Error(ErrorCode::kBadMagic, path.string() + ": not a score table");
  }
  uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  std::string_view body(bytes.data(), bytes.size() - 8);
  if (Fnv64Of(body) != stored) {
    throw Error(ErrorCode::kChecksumMismatch, path.string() + ": score table checksum mismatch");
  }
  std::istringstream in{std::string(body.substr(8))};
  uint32_t version = 0;
  uint32_t prov_len = 0;
  if (!ReadU32(in, version) || version != kScoreFormatVersion) throw corrupt("unsupported version");
  if (!ReadU32(in, prov_len)) throw corrupt("truncated");
  std::string prov(prov_len, '\0');
  if (!in.read(prov.data(), prov_len)) throw corrupt("truncated provenance");
  ScoreTable table;
  try {
    json j = json::parse(prov);
    table.scorer_id = j.at("scorer_id").get<std::string>();
    table.checkpoint_hash = j.at("checkpoint_hash").get<std::string>();
  } catch (const json::exception& e) {
    throw corrupt(e.what());
  }
  uint64_t count = 0;
  if (!ReadU64(in, count)) throw corrupt("truncated");
  if (count > body.size()) throw corrupt("implausible entry count");
  table.entries.resize(count);
  for (auto& e : table.entries) {
    uint32_t len = 0;
    if (!ReadU32(in, len) || len > body.size()) throw corrupt("truncated key table");
    e.pair_id.resize(len);
    if (!in.read(e.pair_id.data(), len)) throw corrupt("truncated key table");
  }
  for (auto& e : table.entries) {
    if (!ReadF64(in, e.score)) throw corrupt("truncated scores");
  }
  return table;
}

std::string ScoreTableText(const ScoreTable& table) {
  std::string out = "# scorer: " + table.scorer_id + "\n# checkpoint: " +
                    (table.checkpoint_hash.empty() ? std::string("-") : table.checkpoint_hash) + "\n";
  for (const auto& e : table.entries) out += e.pair_id + "\t" + FormatDouble(e.score) + "\n";
  return out;
}

}  // namespace alignsift
