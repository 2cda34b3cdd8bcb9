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

// Images, candidate captions and labeler rankings, persisted as an
// append-only log with one canonical JSON object per line:
//
//   {"format":"alignsift-preference-log","schema_version":1,"store_id":"..."}
//   {"image_id":"...","kind":"image","source_tag":"dataset-native","uri":"..."}
//   {"caption_id":"...","image_id":"...","kind":"caption","source":"...","text":"..."}
//   {"criteria":{...},"image_id":"...","kind":"record","labeler_id":"...",
//    "ranking":[["c1"],["c2","c3"]],"record_id":"...","timestamp_ms":...}
//
// Keys are emitted in sorted order, so a given store state has exactly one
// encoding. Replaying a log reapplies the same validation as the live API.

#ifndef ALIGNSIFT_PREFERENCE_STORE_H_
#define ALIGNSIFT_PREFERENCE_STORE_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace alignsift {

inline constexpr int kStoreSchemaVersion = 1;
inline constexpr size_t kMinCaptionsPerImage = 2;
inline constexpr size_t kMaxCaptionsPerImage = 16;
inline constexpr int kMaxCriteriaGrade = 2;

enum class ImageSource { kDatasetNative, kExternal };
enum class CaptionSource { kDatasetSampled, kModelRewritten, kHumanRewritten };

std::string_view ToString(ImageSource s);
std::string_view ToString(CaptionSource s);
ImageSource ParseImageSource(std::string_view s);
CaptionSource ParseCaptionSource(std::string_view s);

struct ImageEntry {
  std::string image_id;
  std::string uri;
  ImageSource source_tag = ImageSource::kDatasetNative;

  bool operator==(const ImageEntry&) const = default;
};

struct CaptionCandidate {
  std::string caption_id;
  std::string image_id;
  std::string text;
  CaptionSource source = CaptionSource::kDatasetSampled;

  bool operator==(const CaptionCandidate&) const = default;
};

// Grades are 0 (absent), 1 (partial), 2 (full). Stored for reference only;
// training consumes the ranking alone.
struct CriteriaAnnotation {
  bool accuracy = false;
  int completeness = 0;
  int vividness = 0;
  int context = 0;

  bool operator==(const CriteriaAnnotation&) const = default;
};

// Captions in one group are tied; group 0 is the best.
using RankGroup = std::vector<std::string>;

struct PreferenceRecord {
  std::string record_id;
  std::string image_id;
  std::string labeler_id;
  std::vector<RankGroup> ranking;
  std::map<std::string, CriteriaAnnotation> criteria;
  int64_t timestamp_ms = 0;  // milliseconds since the Unix epoch, UTC

  // An all-tied ranking carries no strict preference and yields no pairs.
  bool degenerate() const { return ranking.size() < 2; }

  bool operator==(const PreferenceRecord&) const = default;
};

class PreferenceDataset {
 public:
  explicit PreferenceDataset(std::string store_id = "") : store_id_(std::move(store_id)) {}

  const std::string& store_id() const { return store_id_; }

  // Each mutator validates first and leaves the dataset untouched on error.
  void AddImage(ImageEntry image);
  void AddCaption(CaptionCandidate caption);
  void AppendRecord(PreferenceRecord record);

  void ValidateImage(const ImageEntry& image) const;
  void ValidateCaption(const CaptionCandidate& caption) const;
  void ValidateRecord(const PreferenceRecord& record) const;

  const std::vector<ImageEntry>& images() const { return images_; }
  const std::vector<PreferenceRecord>& records() const { return records_; }
  size_t caption_count() const;

  const ImageEntry* FindImage(std::string_view image_id) const;
  std::span<const CaptionCandidate> CaptionsOf(std::string_view image_id) const;
  const CaptionCandidate* FindCaption(std::string_view image_id,
                                      std::string_view caption_id) const;
  const PreferenceRecord* FindRecord(std::string_view record_id) const;
  // The record a labeler submitted for an image, if any.
  const PreferenceRecord* FindRecord(std::string_view image_id,
                                     std::string_view labeler_id) const;
  size_t RecordCountFor(std::string_view image_id) const;

  bool operator==(const PreferenceDataset& other) const;

 private:
  std::string store_id_;
  std::vector<ImageEntry> images_;
  std::unordered_map<std::string, size_t> image_index_;
  std::unordered_map<std::string, std::vector<CaptionCandidate>> captions_;
  std::vector<PreferenceRecord> records_;
  std::unordered_map<std::string, size_t> record_index_;
  std::unordered_map<std::string, std::vector<size_t>> records_by_image_;
};

// Canonical single-line encodings. Decoders throw CorruptLog on malformed
// input (the caller supplies line context).
std::string EncodeHeader(std::string_view store_id);
std::string EncodeImage(const ImageEntry& image);
std::string EncodeCaption(const CaptionCandidate& caption);
std::string EncodeRecord(const PreferenceRecord& record);
PreferenceRecord DecodeRecord(std::string_view line);

// Full canonical log text: header, images, captions grouped by image, records.
std::string SerializeStore(const PreferenceDataset& store);
PreferenceDataset ParseStore(std::string_view text);

// Strict load: any malformed or torn line is a CorruptLog naming the line.
PreferenceDataset LoadStore(const std::filesystem::path& path);
void ExportStore(const PreferenceDataset& store,
                 const std::filesystem::path& path);

// Durable, single-writer handle over a log file. Every mutation is appended
// and fsynced before it becomes visible in memory.
class PreferenceStore {
 public:
  enum class OpenMode {
    kStrict,
    // Drops a torn final line (a write interrupted by a crash). Completed
    // appends always end in a newline, so nothing acknowledged is lost.
    kRecoverTornTail,
  };

  static std::unique_ptr<PreferenceStore> Create(
      const std::filesystem::path& path, std::string_view store_id);
  static std::unique_ptr<PreferenceStore> Open(
      const std::filesystem::path& path, OpenMode mode = OpenMode::kStrict);

  ~PreferenceStore();
  PreferenceStore(const PreferenceStore&) = delete;
  PreferenceStore& operator=(const PreferenceStore&) = delete;

  void AddImage(ImageEntry image);
  void AddCaption(CaptionCandidate caption);
  void AppendRecord(PreferenceRecord record);

  PreferenceDataset Snapshot() const;

  // Runs `fn` against the live dataset under a shared lock.
  template <typename Fn>
  auto Read(Fn&& fn) const {
    std::shared_lock lock(mu_);
    return fn(static_cast<const PreferenceDataset&>(data_));
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  PreferenceStore(std::filesystem::path path, PreferenceDataset data, int fd);
  void AppendLine(const std::string& line);

  mutable std::shared_mutex mu_;
  std::filesystem::path path_;
  PreferenceDataset data_;
  int fd_ = -1;
};

}  // namespace alignsift

#endif  // ALIGNSIFT_PREFERENCE_STORE_H_
