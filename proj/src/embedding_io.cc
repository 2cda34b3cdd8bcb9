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

#include "alignsift/embedding_io.h"

#include <cmath>
#include <cstring>

#include "alignsift/error.h"
#include "json.hpp"

namespace alignsift {
namespace {

using nlohmann::json;

constexpr char kShardMagic[8] = {'A', 'L', 'S', 'F', 'E', 'M', 'B', '1'};
constexpr uint64_t kHeaderBytes = 36;
constexpr char kCaptionKeySeparator = '\x1f';

void ValidateKey(std::string_view key, KeyMode mode) {
  if (mode == KeyMode::kPairId) {
    RequireValidId(key, "pair_id");
    return;
  }
  auto [image_id, caption_id] = SplitCaptionKey(key);
  RequireValidId(image_id, "image_id");
  RequireValidId(caption_id, "caption_id");
}

std::string DisplayKey(std::string_view key) {
  std::string out(key);
  for (char& c : out) {
    if (c == kCaptionKeySeparator) c = '/';
  }
  return out;
}

void RequireFinite(std::string_view key, std::span<const float> v) {
  for (float x : v) {
    if (!std::isfinite(x)) {
      throw Error(ErrorCode::kNonFiniteVector,
                  "non-finite component in embedding " + DisplayKey(key));
    }
  }
}

Error Truncated(const std::filesystem::path& path, uint64_t offset) {
  return Error(ErrorCode::kTruncatedShard,
               path.string() + ": truncated at byte offset " + std::to_string(offset));
}

class JsonlSource final : public EmbeddingSource {
 public:
  JsonlSource(const std::filesystem::path& path, std::optional<uint32_t> expected)
      : path_(path), in_(path) {
    if (!in_) throw Error(ErrorCode::kIo, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in_, line)) {
      throw Error(ErrorCode::kBadMagic, path.string() + ": missing embeddings header");
    }
    json header;
    try {
      header = json::parse(line);
    } catch (const json::exception&) {
      throw Error(ErrorCode::kBadMagic, path.string() + ": unreadable embeddings header");
    }
    if (!header.is_object() || header.value("format", "") != "alignsift-embeddings") {
      throw Error(ErrorCode::kBadMagic, path.string() + ": not an embeddings file");
    }
    dimension_ = header.at("dimension").get<uint32_t>();
    mode_ = header.value("key_mode", "pair") == "caption" ? KeyMode::kImageCaption
                                                          : KeyMode::kPairId;
    if (expected && *expected != dimension_) {
      throw Error(ErrorCode::kDimensionMismatch,
                  path.string() + ": dimension " + std::to_string(dimension_) +
                      ", expected " + std::to_string(*expected));
    }
  }

  uint32_t dimension() const override { return dimension_; }
  // Unknown up front for the text form; reported after a full pass.
  uint64_t count() const override { return produced_; }
  KeyMode key_mode() const override { return mode_; }

  bool Next(EmbeddingRecord& out) override {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line.empty()) continue;
      if (++produced_ > kMaxJsonlRecords) {
        throw Error(ErrorCode::kInvalidArgument,
                    path_.string() + ": text embeddings are limited to " +
                        std::to_string(kMaxJsonlRecords) + " records; use a binary shard");
      }
      json j;
      try {
        j = json::parse(line);
        if (mode_ == KeyMode::kPairId) {
          out.key = j.at("key").get<std::string>();
        } else {
          out.key = CaptionKey(j.at("image_id").get<std::string>(),
                               j.at("caption_id").get<std::string>());
        }
        out.vector.clear();
        for (const auto& x : j.at("vector")) {
          out.vector.push_back(x.is_null() ? NAN : x.get<float>());
        }
      } catch (const json::exception& e) {
        throw Error(ErrorCode::kInvalidArgument,
                    path_.string() + ":" + std::to_string(line_no_ + 1) + ": " + e.what());
      }
      if (out.vector.size() != dimension_) {
        throw Error(ErrorCode::kDimensionMismatch,
                    "embedding " + DisplayKey(out.key) + " has " +
                        std::to_string(out.vector.size()) + " components, expected " +
                        std::to_string(dimension_));
      }
      RequireFinite(out.key, out.vector);
      return true;
    }
    return false;
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  uint32_t dimension_ = 0;
  KeyMode mode_ = KeyMode::kPairId;
  uint64_t produced_ = 0;
  size_t line_no_ = 0;
};

}  // namespace

std::string CaptionKey(std::string_view image_id, std::string_view caption_id) {
  std::string key(image_id);
  key += kCaptionKeySeparator;
  key += caption_id;
  return key;
}

std::pair<std::string, std::string> SplitCaptionKey(std::string_view key) {
  size_t sep = key.find(kCaptionKeySeparator);
  if (sep == std::string_view::npos) return {std::string(key), ""};
  return {std::string(key.substr(0, sep)), std::string(key.substr(sep + 1))};
}

// --- ShardWriter -------------------------------------------------------------

ShardWriter::ShardWriter(std::filesystem::path path, uint32_t dimension, KeyMode mode)
    : path_(std::move(path)), dimension_(dimension), mode_(mode) {
  if (dimension_ == 0) throw Error(ErrorCode::kInvalidArgument, "dimension must be positive");
  spool_path_ = path_;
  spool_path_ += ".payload.tmp";
  spool_.open(spool_path_, std::ios::binary | std::ios::trunc);
  if (!spool_) throw Error(ErrorCode::kIo, "cannot create " + spool_path_.string());
}

ShardWriter::~ShardWriter() {
  if (!finished_) {
    spool_.close();
    std::error_code ec;
    std::filesystem::remove(spool_path_, ec);
  }
}

void ShardWriter::Add(std::string_view key, std::span<const float> vector) {
  ValidateKey(key, mode_);
  if (vector.size() != dimension_) {
    throw Error(ErrorCode::kDimensionMismatch,
                "embedding " + DisplayKey(key) + " has " + std::to_string(vector.size()) +
                    " components, shard dimension is " + std::to_string(dimension_));
  }
  RequireFinite(key, vector);
  if (!keys_.emplace(key).second) {
    throw Error(ErrorCode::kDuplicateKey, "duplicate embedding key " + DisplayKey(key));
  }
  auto len = static_cast<uint32_t>(key.size());
  key_table_.append(reinterpret_cast<const char*>(&len), sizeof(len));
  key_table_.append(key);
  const auto* bytes = reinterpret_cast<const char*>(vector.data());
  spool_.write(bytes, static_cast<std::streamsize>(vector.size_bytes()));
  checksum_.Update(bytes, vector.size_bytes());
  ++count_;
}

ShardSummary ShardWriter::Finish() {
  spool_.close();
  auto tmp = path_;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot create " + tmp.string());
    out.write(kShardMagic, sizeof(kShardMagic));
    WriteU32(out, kShardFormatVersion);
    WriteU32(out, dimension_);
    WriteU64(out, count_);
    WriteU32(out, static_cast<uint32_t>(mode_));
    WriteU64(out, key_table_.size());
    out.write(key_table_.data(), static_cast<std::streamsize>(key_table_.size()));
    std::ifstream spool(spool_path_, std::ios::binary);
    if (count_ > 0) out << spool.rdbuf();
    WriteU64(out, checksum_.digest());
    if (!out.flush()) throw Error(ErrorCode::kIo, "write failed: " + tmp.string());
  }
  std::filesystem::remove(spool_path_);
  std::filesystem::rename(tmp, path_);
  finished_ = true;
  return {count_, checksum_.digest()};
}

ShardSummary WriteShard(std::span<const EmbeddingRecord> records,
                        const std::filesystem::path& path, uint32_t dimension, KeyMode mode) {
  ShardWriter writer(path, dimension, mode);
  for (const auto& r : records) writer.Add(r.key, r.vector);
  return writer.Finish();
}

// --- ShardReader -------------------------------------------------------------

ShardReader::ShardReader(const std::filesystem::path& path,
                         std::optional<uint32_t> expected_dimension)
    : path_(path), keys_(path, std::ios::binary), payload_(path, std::ios::binary) {
  if (!keys_) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  char magic[sizeof(kShardMagic)];
  if (!keys_.read(magic, sizeof(magic))) {
    throw Error(ErrorCode::kBadMagic, path.string() + ": too short for a shard header");
  }
  if (std::memcmp(magic, kShardMagic, sizeof(magic)) != 0) {
    throw Error(ErrorCode::kBadMagic, path.string() + ": not an embedding shard");
  }
  uint32_t version = 0;
  uint32_t mode = 0;
  uint64_t key_table_bytes = 0;
  if (!ReadU32(keys_, version) || !ReadU32(keys_, dimension_) || !ReadU64(keys_, count_) ||
      !ReadU32(keys_, mode) || !ReadU64(keys_, key_table_bytes)) {
    throw Truncated(path, 0);
  }
  if (version != kShardFormatVersion) {
    throw Error(ErrorCode::kBadMagic,
                path.string() + ": unsupported shard version " + std::to_string(version));
  }
  if (mode > 1) throw Error(ErrorCode::kBadMagic, path.string() + ": unknown key mode");
  mode_ = static_cast<KeyMode>(mode);
  if (expected_dimension && *expected_dimension != dimension_) {
    throw Error(ErrorCode::kDimensionMismatch,
                path.string() + ": dimension " + std::to_string(dimension_) + ", expected " +
                    std::to_string(*expected_dimension));
  }
  key_cursor_ = kHeaderBytes;
  key_table_end_ = kHeaderBytes + key_table_bytes;
  payload_offset_ = key_table_end_;
  payload_.seekg(static_cast<std::streamoff>(payload_offset_));
}

bool ShardReader::Next(EmbeddingRecord& out) {
  if (done_) return false;
  if (next_index_ == count_) {
    uint64_t trailer_offset = payload_offset_ + count_ * dimension_ * sizeof(float);
    uint64_t stored = 0;
    if (!ReadU64(payload_, stored)) throw Truncated(path_, trailer_offset);
    if (stored != checksum_.digest()) {
      throw Error(ErrorCode::kChecksumMismatch, path_.string() + ": payload checksum mismatch");
    }
    done_ = true;
    return false;
  }
  uint32_t len = 0;
  if (key_cursor_ + sizeof(len) > key_table_end_) {
    throw Error(ErrorCode::kChecksumMismatch, path_.string() + ": key table shorter than record count");
  }
  if (!ReadU32(keys_, len)) throw Truncated(path_, key_cursor_);
  if (key_cursor_ + sizeof(len) + len > key_table_end_) {
    throw Error(ErrorCode::kChecksumMismatch, path_.string() + ": key overruns key table");
  }
  out.key.resize(len);
  if (!keys_.read(out.key.data(), len)) throw Truncated(path_, key_cursor_);
  key_cursor_ += sizeof(len) + len;

  uint64_t record_offset = payload_offset_ + next_index_ * dimension_ * sizeof(float);
  out.vector.resize(dimension_);
  auto bytes = static_cast<std::streamsize>(dimension_ * sizeof(float));
  if (!payload_.read(reinterpret_cast<char*>(out.vector.data()), bytes)) {
    throw Truncated(path_, record_offset);
  }
  checksum_.Update(out.vector.data(), static_cast<size_t>(bytes));
  RequireFinite(out.key, out.vector);
  ++next_index_;
  return true;
}

std::unique_ptr<EmbeddingSource> OpenEmbeddings(const std::filesystem::path& path,
                                                std::optional<uint32_t> expected_dimension) {
  if (path.extension() == ".jsonl") {
    return std::make_unique<JsonlSource>(path, expected_dimension);
  }
  return std::make_unique<ShardReader>(path, expected_dimension);
}

std::vector<EmbeddingRecord> ReadShard(const std::filesystem::path& path) {
  auto source = OpenEmbeddings(path);
  std::vector<EmbeddingRecord> records;
  EmbeddingRecord r;
  while (source->Next(r)) records.push_back(r);
  return records;
}

void WriteJsonlEmbeddings(std::span<const EmbeddingRecord> records,
                          const std::filesystem::path& path, uint32_t dimension, KeyMode mode) {
  if (records.size() > kMaxJsonlRecords) {
    throw Error(ErrorCode::kInvalidArgument, "text embeddings are limited to " +
                                                 std::to_string(kMaxJsonlRecords) + " records");
  }
  std::string out = json{{"format", "alignsift-embeddings"},
                         {"dimension", dimension},
                         {"key_mode", mode == KeyMode::kPairId ? "pair" : "caption"}}
                        .dump() +
                    "\n";
  std::unordered_set<std::string_view> seen;
  for (const auto& r : records) {
    ValidateKey(r.key, mode);
    if (r.vector.size() != dimension) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "embedding " + DisplayKey(r.key) + " has " + std::to_string(r.vector.size()) +
                      " components, expected " + std::to_string(dimension));
    }
    RequireFinite(r.key, r.vector);
    if (!seen.insert(r.key).second) {
      throw Error(ErrorCode::kDuplicateKey, "duplicate embedding key " + DisplayKey(r.key));
    }
    json j;
    if (mode == KeyMode::kPairId) {
      j["key"] = r.key;
    } else {
      auto [image_id, caption_id] = SplitCaptionKey(r.key);
      j["image_id"] = image_id;
      j["caption_id"] = caption_id;
    }
    j["vector"] = r.vector;
    out += j.dump() + "\n";
  }
  WriteFileAtomic(path, out);
}

ShardSummary WriteEmbeddings(std::span<const EmbeddingRecord> records,
                             const std::filesystem::path& path, uint32_t dimension, KeyMode mode) {
  if (path.extension() == ".jsonl") {
    WriteJsonlEmbeddings(records, path, dimension, mode);
    return {records.size(), 0};
  }
  return WriteShard(records, path, dimension, mode);
}

// --- EmbeddingTable ----------------------------------------------------------

EmbeddingTable EmbeddingTable::Load(std::span<const std::filesystem::path> paths) {
  EmbeddingTable table;
  for (const auto& path : paths) {
    auto source = OpenEmbeddings(path, table.dimension_ ? std::optional(table.dimension_)
                                                        : std::nullopt);
    if (table.dimension_ == 0) table.dimension_ = source->dimension();
    EmbeddingRecord r;
    while (source->Next(r)) table.Add(r.key, r.vector);
  }
  return table;
}

void EmbeddingTable::Add(std::string_view key, std::span<const float> vector) {
  if (dimension_ == 0) dimension_ = static_cast<uint32_t>(vector.size());
  if (vector.size() != dimension_) {
    throw Error(ErrorCode::kDimensionMismatch,
                "embedding " + DisplayKey(key) + " has " + std::to_string(vector.size()) +
                    " components, table dimension is " + std::to_string(dimension_));
  }
  if (!index_.emplace(std::string(key), data_.size() / dimension_).second) {
    throw Error(ErrorCode::kDuplicateKey, "duplicate embedding key " + DisplayKey(key));
  }
  data_.insert(data_.end(), vector.begin(), vector.end());
}

std::optional<std::span<const float>> EmbeddingTable::Find(std::string_view key) const {
  auto it = index_.find(std::string(key));
  if (it == index_.end()) return std::nullopt;
  return std::span<const float>(data_.data() + it->second * dimension_, dimension_);
}

}  // namespace alignsift
