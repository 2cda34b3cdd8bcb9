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

// Fused image-text embedding shards.
//
// Binary layout (all integers and floats little-endian):
//
//   offset  size  field
//   0       8     magic "ALSFEMB1"
//   8       4     u32 format version (1)
//   12      4     u32 dimension d
//   16      8     u64 record count n
//   24      4     u32 key mode (0 = pair id, 1 = image/caption)
//   28      8     u64 key-table byte length K
//   36      K     n × (u32 key length, key bytes)
//   36+K    4nd   n × d f32 payload, record-major
//   end     8     u64 FNV-1a checksum of the payload bytes
//
// Records are fixed size in the payload, so record i starts at
// 36 + K + 4·d·i. Image/caption keys are stored as image_id '\x1f' caption_id.
//
// The text variant (.jsonl) has a header line
//   {"dimension":d,"format":"alignsift-embeddings","key_mode":"pair"|"caption"}
// followed by {"key":..,"vector":[..]} or {"caption_id":..,"image_id":..,"vector":[..]}.

#ifndef ALIGNSIFT_EMBEDDING_IO_H_
#define ALIGNSIFT_EMBEDDING_IO_H_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "alignsift/util.h"

namespace alignsift {

inline constexpr uint32_t kDefaultEmbeddingDim = 768;
inline constexpr uint32_t kShardFormatVersion = 1;
inline constexpr size_t kMaxJsonlRecords = 100000;

enum class KeyMode : uint32_t { kPairId = 0, kImageCaption = 1 };

struct EmbeddingRecord {
  std::string key;
  std::vector<float> vector;

  bool operator==(const EmbeddingRecord&) const = default;
};

std::string CaptionKey(std::string_view image_id, std::string_view caption_id);
std::pair<std::string, std::string> SplitCaptionKey(std::string_view key);

struct ShardSummary {
  uint64_t count = 0;
  uint64_t checksum = 0;
};

// Streams records into a binary shard. The payload is spooled to a sibling
// temp file so memory stays bounded by the key table.
class ShardWriter {
 public:
  ShardWriter(std::filesystem::path path, uint32_t dimension, KeyMode mode);
  ~ShardWriter();
  ShardWriter(const ShardWriter&) = delete;
  ShardWriter& operator=(const ShardWriter&) = delete;

  // Throws DimensionMismatch or DuplicateKey naming the key.
  void Add(std::string_view key, std::span<const float> vector);
  ShardSummary Finish();

 private:
  std::filesystem::path path_;
  std::filesystem::path spool_path_;
  uint32_t dimension_;
  KeyMode mode_;
  std::ofstream spool_;
  std::string key_table_;
  std::unordered_set<std::string> keys_;
  uint64_t count_ = 0;
  Fnv64 checksum_;
  bool finished_ = false;
};

ShardSummary WriteShard(std::span<const EmbeddingRecord> records,
                        const std::filesystem::path& path, uint32_t dimension,
                        KeyMode mode = KeyMode::kPairId);

// Pull-style reader shared by both on-disk variants.
class EmbeddingSource {
 public:
  virtual ~EmbeddingSource() = default;
  virtual uint32_t dimension() const = 0;
  virtual uint64_t count() const = 0;
  virtual KeyMode key_mode() const = 0;
  // Returns false once every record has been produced.
  virtual bool Next(EmbeddingRecord& out) = 0;
};

// Holds one record at a time. Validates finiteness per record and the
// payload checksum after the last record.
class ShardReader final : public EmbeddingSource {
 public:
  explicit ShardReader(const std::filesystem::path& path,
                       std::optional<uint32_t> expected_dimension = std::nullopt);

  uint32_t dimension() const override { return dimension_; }
  uint64_t count() const override { return count_; }
  KeyMode key_mode() const override { return mode_; }
  bool Next(EmbeddingRecord& out) override;

  uint64_t payload_offset() const { return payload_offset_; }

 private:
  std::filesystem::path path_;
  std::ifstream keys_;
  std::ifstream payload_;
  uint32_t dimension_ = 0;
  uint64_t count_ = 0;
  KeyMode mode_ = KeyMode::kPairId;
  uint64_t key_table_end_ = 0;
  uint64_t payload_offset_ = 0;
  uint64_t key_cursor_ = 0;
  uint64_t next_index_ = 0;
  Fnv64 checksum_;
  bool done_ = false;
};

// Chooses the reader by extension: ".jsonl" is text, anything else binary.
std::unique_ptr<EmbeddingSource> OpenEmbeddings(
    const std::filesystem::path& path,
    std::optional<uint32_t> expected_dimension = std::nullopt);

std::vector<EmbeddingRecord> ReadShard(const std::filesystem::path& path);

void WriteJsonlEmbeddings(std::span<const EmbeddingRecord> records,
                          const std::filesystem::path& path,
                          uint32_t dimension, KeyMode mode);

// Writes either variant depending on the extension of `path`.
ShardSummary WriteEmbeddings(std::span<const EmbeddingRecord> records,
                             const std::filesystem::path& path,
                             uint32_t dimension, KeyMode mode);

// Random-access lookup over a set of embeddings held in memory.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(uint32_t dimension = 0) : dimension_(dimension) {}

  static EmbeddingTable Load(std::span<const std::filesystem::path> paths);

  void Add(std::string_view key, std::span<const float> vector);
  std::optional<std::span<const float>> Find(std::string_view key) const;
  bool Contains(std::string_view key) const { return index_.count(std::string(key)) > 0; }

  uint32_t dimension() const { return dimension_; }
  size_t size() const { return index_.size(); }

 private:
  uint32_t dimension_;
  std::unordered_map<std::string, size_t> index_;
  std::vector<float> data_;
};

}  // namespace alignsift

#endif  // ALIGNSIFT_EMBEDDING_IO_H_
