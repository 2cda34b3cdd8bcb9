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

#include "alignsift/preference_store.h"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <set>
#include <utility>

#include "alignsift/error.h"
#include "alignsift/util.h"
#include "json.hpp"

namespace alignsift {
namespace {

using nlohmann::json;

constexpr std::string_view kLogFormat = "alignsift-preference-log";

std::string Dump(const json& j) {
  // Sorted keys (nlohmann's default object type) and UTF-8 passthrough.
  return j.dump(-1, ' ', false, json::error_handler_t::strict);
}

bool IsBlank(std::string_view text) {
  return std::all_of(text.begin(), text.end(), [](unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
           c == '\v';
  });
}

Error Corrupt(size_t line_no, const std::string& what) {
  return Error(ErrorCode::kCorruptLog,
               "line " + std::to_string(line_no) + ": " + what);
}

json CriteriaToJson(const CriteriaAnnotation& c) {
  return json{{"accuracy", c.accuracy},
              {"completeness", c.completeness},
              {"vividness", c.vividness},
              {"context", c.context}};
}

CriteriaAnnotation CriteriaFromJson(const json& j) {
  CriteriaAnnotation c;
  c.accuracy = j.at("accuracy").get<bool>();
  c.completeness = j.at("completeness").get<int>();
  c.vividness = j.at("vividness").get<int>();
  c.context = j.at("context").get<int>();
  return c;
}

PreferenceRecord RecordFromJson(const json& j) {
  PreferenceRecord r;
  r.record_id = j.at("record_id").get<std::string>();
  r.image_id = j.at("image_id").get<std::string>();
  r.labeler_id = j.at("labeler_id").get<std::string>();
  r.ranking = j.at("ranking").get<std::vector<RankGroup>>();
  for (const auto& [cid, cj] : j.at("criteria").items()) {
    r.criteria.emplace(cid, CriteriaFromJson(cj));
  }
  r.timestamp_ms = j.at("timestamp_ms").get<int64_t>();
  return r;
}

void ApplyLine(PreferenceDataset& data, const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "image") {
    data.AddImage(ImageEntry{j.at("image_id").get<std::string>(),
                             j.at("uri").get<std::string>(),
                             ParseImageSource(j.at("source_tag").get<std::string>())});
  } else if (kind == "caption") {
    data.AddCaption(CaptionCandidate{
        j.at("caption_id").get<std::string>(),
        j.at("image_id").get<std::string>(), j.at("text").get<std::string>(),
        ParseCaptionSource(j.at("source").get<std::string>())});
  } else if (kind == "record") {
    data.AppendRecord(RecordFromJson(j));
  } else {
    throw Error(ErrorCode::kInvalidEntry, "unknown entry kind '" + kind + "'");
  }
}

std::string ParseHeader(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw Corrupt(1, std::string("unreadable header: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != kLogFormat) {
    throw Corrupt(1, "missing preference-log header");
  }
  int version = j.value("schema_version", -1);
  if (version != kStoreSchemaVersion) {
    throw Error(ErrorCode::kSchemaVersionMismatch,
                "log schema version " + std::to_string(version) +
                    ", expected " + std::to_string(kStoreSchemaVersion));
  }
  return j.value("store_id", "");
}

// Replays `text` into a dataset. With `allow_torn_tail`, an unterminated
// final line is dropped instead of rejected; `consumed` receives the byte
// length of the accepted prefix.
PreferenceDataset Replay(std::string_view text, bool allow_torn_tail,
                         size_t* consumed) {
  if (consumed) *consumed = text.size();
  if (text.empty()) return PreferenceDataset();

  size_t line_count = static_cast<size_t>(std::count(text.begin(), text.end(), '\n'));
  if (text.back() != '\n') {
    size_t last_line = line_count + 1;
    if (!allow_torn_tail) {
      throw Corrupt(last_line, "truncated final line (no terminating newline)");
    }
    size_t cut = text.rfind('\n');
    text = cut == std::string_view::npos ? std::string_view() : text.substr(0, cut + 1);
    if (consumed) *consumed = text.size();
    if (text.empty()) return PreferenceDataset();
  }

  size_t pos = 0;
  size_t line_no = 0;
  std::optional<PreferenceDataset> data;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line_no == 1) {
      data.emplace(ParseHeader(line));
      continue;
    }
    if (IsBlank(line)) throw Corrupt(line_no, "blank line");
    try {
      ApplyLine(*data, json::parse(line));
    } catch (const json::exception& e) {
      throw Corrupt(line_no, e.what());
    } catch (const Error& e) {
      throw Corrupt(line_no, std::string(e.name()) + ": " + e.what());
    }
  }
  return std::move(*data);
}

}  // namespace

std::string_view ToString(ImageSource s) {
  return s == ImageSource::kDatasetNative ? "dataset-native" : "external";
}

std::string_view ToString(CaptionSource s) {
  switch (s) {
    case CaptionSource::kDatasetSampled: return "dataset-sampled";
    case CaptionSource::kModelRewritten: return "model-rewritten";
    case CaptionSource::kHumanRewritten: return "human-rewritten";
  }
  return "dataset-sampled";
}

ImageSource ParseImageSource(std::string_view s) {
  if (s == "dataset-native") return ImageSource::kDatasetNative;
  if (s == "external") return ImageSource::kExternal;
  throw Error(ErrorCode::kInvalidEntry, "unknown image source '" + std::string(s) + "'");
}

CaptionSource ParseCaptionSource(std::string_view s) {
  if (s == "dataset-sampled") return CaptionSource::kDatasetSampled;
  if (s == "model-rewritten") return CaptionSource::kModelRewritten;
  if (s == "human-rewritten") return CaptionSource::kHumanRewritten;
  throw Error(ErrorCode::kInvalidEntry, "unknown caption source '" + std::string(s) + "'");
}

// --- PreferenceDataset -------------------------------------------------------

void PreferenceDataset::ValidateImage(const ImageEntry& image) const {
  RequireValidId(image.image_id, "image_id");
  if (image.uri.empty()) {
    throw Error(ErrorCode::kInvalidEntry, "image " + image.image_id + " has an empty uri");
  }
  if (image_index_.count(image.image_id)) {
    throw Error(ErrorCode::kDuplicateImage, "image " + image.image_id + " already exists");
  }
}

void PreferenceDataset::ValidateCaption(const CaptionCandidate& caption) const {
  RequireValidId(caption.caption_id, "caption_id");
  if (!image_index_.count(caption.image_id)) {
    throw Error(ErrorCode::kUnknownImage, "caption " + caption.caption_id +
                                              " refers to unknown image " + caption.image_id);
  }
  if (IsBlank(caption.text)) {
    throw Error(ErrorCode::kInvalidEntry, "caption " + caption.caption_id + " has empty text");
  }
  try {
    (void)Dump(json(caption.text));
  } catch (const json::exception&) {
    throw Error(ErrorCode::kInvalidEntry, "caption " + caption.caption_id + " is not valid UTF-8");
  }
  auto it = captions_.find(caption.image_id);
  if (it != captions_.end()) {
    for (const auto& c : it->second) {
      if (c.caption_id == caption.caption_id) {
        throw Error(ErrorCode::kDuplicateCaption,
                    "caption " + caption.caption_id + " already exists on image " + caption.image_id);
      }
    }
    if (it->second.size() >= kMaxCaptionsPerImage) {
      throw Error(ErrorCode::kInvalidEntry,
                  "image " + caption.image_id + " already has " +
                      std::to_string(kMaxCaptionsPerImage) + " candidates");
    }
  }
  if (RecordCountFor(caption.image_id) > 0) {
    throw Error(ErrorCode::kInvalidEntry,
                "image " + caption.image_id + " is already annotated; its candidate set is frozen");
  }
}

void PreferenceDataset::ValidateRecord(const PreferenceRecord& record) const {
  RequireValidId(record.record_id, "record_id");
  RequireValidId(record.labeler_id, "labeler_id");
  if (record_index_.count(record.record_id)) {
    throw Error(ErrorCode::kDuplicateRecordId, "record " + record.record_id + " already exists");
  }
  if (!image_index_.count(record.image_id)) {
    throw Error(ErrorCode::kUnknownImage, "record " + record.record_id +
                                              " refers to unknown image " + record.image_id);
  }
  auto candidates = CaptionsOf(record.image_id);
  if (candidates.size() < kMinCaptionsPerImage) {
    throw Error(ErrorCode::kInvalidEntry, "image " + record.image_id + " has fewer than " +
                                              std::to_string(kMinCaptionsPerImage) + " candidates");
  }
  std::set<std::string_view> seen;
  for (const auto& group : record.ranking) {
    if (group.empty()) {
      throw Error(ErrorCode::kRankingNotPartition, "record " + record.record_id + " has an empty rank group");
    }
    for (const auto& cid : group) {
      if (!FindCaption(record.image_id, cid)) {
        throw Error(ErrorCode::kUnknownCaption,
                    "caption " + cid + " does not belong to image " + record.image_id);
      }
      if (!seen.insert(cid).second) {
        throw Error(ErrorCode::kRankingNotPartition, "caption " + cid + " appears more than once");
      }
    }
  }
  if (seen.size() != candidates.size()) {
    for (const auto& c : candidates) {
      if (!seen.count(c.caption_id)) {
        throw Error(ErrorCode::kRankingNotPartition, "caption " + c.caption_id + " is not ranked");
      }
    }
  }
  for (const auto& [cid, c] : record.criteria) {
    if (!seen.count(cid)) {
      throw Error(ErrorCode::kUnknownCaption, "criteria given for unranked caption " + cid);
    }
    for (int grade : {c.completeness, c.vividness, c.context}) {
      if (grade < 0 || grade > kMaxCriteriaGrade) {
        throw Error(ErrorCode::kInvalidEntry, "criteria grade out of range for caption " + cid);
      }
    }
  }
}

void PreferenceDataset::AddImage(ImageEntry image) {
  ValidateImage(image);
  image_index_.emplace(image.image_id, images_.size());
  images_.push_back(std::move(image));
}

void PreferenceDataset::AddCaption(CaptionCandidate caption) {
  ValidateCaption(caption);
  auto& list = captions_[caption.image_id];
  list.push_back(std::move(caption));
}

void PreferenceDataset::AppendRecord(PreferenceRecord record) {
  ValidateRecord(record);
  record_index_.emplace(record.record_id, records_.size());
  records_by_image_[record.image_id].push_back(records_.size());
  records_.push_back(std::move(record));
}

size_t PreferenceDataset::caption_count() const {
  size_t n = 0;
  for (const auto& [id, list] : captions_) n += list.size();
  return n;
}

const ImageEntry* PreferenceDataset::FindImage(std::string_view image_id) const {
  auto it = image_index_.find(std::string(image_id));
  return it == image_index_.end() ? nullptr : &images_[it->second];
}

std::span<const CaptionCandidate> PreferenceDataset::CaptionsOf(std::string_view image_id) const {
  auto it = captions_.find(std::string(image_id));
  if (it == captions_.end()) return {};
  return it->second;
}

const CaptionCandidate* PreferenceDataset::FindCaption(std::string_view image_id,
                                                       std::string_view caption_id) const {
  for (const auto& c : CaptionsOf(image_id)) {
    if (c.caption_id == caption_id) return &c;
  }
  return nullptr;
}

const PreferenceRecord* PreferenceDataset::FindRecord(std::string_view record_id) const {
  auto it = record_index_.find(std::string(record_id));
  return it == record_index_.end() ? nullptr : &records_[it->second];
}

const PreferenceRecord* PreferenceDataset::FindRecord(std::string_view image_id,
                                                      std::string_view labeler_id) const {
  auto it = records_by_image_.find(std::string(image_id));
  if (it == records_by_image_.end()) return nullptr;
  for (size_t idx : it->second) {
    if (records_[idx].labeler_id == labeler_id) return &records_[idx];
  }
  return nullptr;
}

size_t PreferenceDataset::RecordCountFor(std::string_view image_id) const {
  auto it = records_by_image_.find(std::string(image_id));
  return it == records_by_image_.end() ? 0 : it->second.size();
}

bool PreferenceDataset::operator==(const PreferenceDataset& other) const {
  return store_id_ == other.store_id_ && images_ == other.images_ &&
         captions_ == other.captions_ && records_ == other.records_;
}

// --- encoding ----------------------------------------------------------------

std::string EncodeHeader(std::string_view store_id) {
  return Dump(json{{"format", kLogFormat},
                   {"schema_version", kStoreSchemaVersion},
                   {"store_id", store_id}});
}

std::string EncodeImage(const ImageEntry& image) {
  return Dump(json{{"kind", "image"},
                   {"image_id", image.image_id},
                   {"uri", image.uri},
                   {"source_tag", ToString(image.source_tag)}});
}

std::string EncodeCaption(const CaptionCandidate& caption) {
  return Dump(json{{"kind", "caption"},
                   {"caption_id", caption.caption_id},
                   {"image_id", caption.image_id},
                   {"text", caption.text},
                   {"source", ToString(caption.source)}});
}

std::string EncodeRecord(const PreferenceRecord& record) {
  json criteria = json::object();
  for (const auto& [cid, c] : record.criteria) criteria[cid] = CriteriaToJson(c);
  return Dump(json{{"kind", "record"},
                   {"record_id", record.record_id},
                   {"image_id", record.image_id},
                   {"labeler_id", record.labeler_id},
                   {"ranking", record.ranking},
                   {"criteria", criteria},
                   {"timestamp_ms", record.timestamp_ms}});
}

PreferenceRecord DecodeRecord(std::string_view line) {
  try {
    return RecordFromJson(json::parse(line));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptLog, e.what());
  }
}

std::string SerializeStore(const PreferenceDataset& store) {
  std::string out = EncodeHeader(store.store_id()) + "\n";
  for (const auto& image : store.images()) out += EncodeImage(image) + "\n";
  for (const auto& image : store.images()) {
    for (const auto& caption : store.CaptionsOf(image.image_id)) {
      out += EncodeCaption(caption) + "\n";
    }
  }
  for (const auto& record : store.records()) out += EncodeRecord(record) + "\n";
  return out;
}

PreferenceDataset ParseStore(std::string_view text) {
  return Replay(text, /*allow_torn_tail=*/false, nullptr);
}

PreferenceDataset LoadStore(const std::filesystem::path& path) {
  return ParseStore(ReadFile(path));
}

void ExportStore(const PreferenceDataset& store, const std::filesystem::path& path) {
  WriteFileAtomic(path, SerializeStore(store));
}

// --- PreferenceStore ---------------------------------------------------------

PreferenceStore::PreferenceStore(std::filesystem::path path, PreferenceDataset data, int fd)
    : path_(std::move(path)), data_(std::move(data)), fd_(fd) {}

PreferenceStore::~PreferenceStore() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<PreferenceStore> PreferenceStore::Create(const std::filesystem::path& path,
                                                         std::string_view store_id) {
  RequireValidId(store_id, "store_id");
  if (std::filesystem::exists(path)) {
    throw Error(ErrorCode::kIo, "refusing to overwrite existing store " + path.string());
  }
  WriteFileAtomic(path, EncodeHeader(store_id) + "\n");
  return Open(path);
}

std::unique_ptr<PreferenceStore> PreferenceStore::Open(const std::filesystem::path& path,
                                                       OpenMode mode) {
  std::string text = ReadFile(path);
  size_t consumed = 0;
  PreferenceDataset data = Replay(text, mode == OpenMode::kRecoverTornTail, &consumed);
  if (consumed != text.size()) {
    std::filesystem::resize_file(path, consumed);
  }
  if (text.empty() || consumed == 0) {
    throw Error(ErrorCode::kCorruptLog, "line 1: store log has no header: " + path.string());
  }
  int fd = ::open(path.c_str(), O_WRONLY | O_APPEND);
  if (fd < 0) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for append");
  return std::unique_ptr<PreferenceStore>(new PreferenceStore(path, std::move(data), fd));
}

void PreferenceStore::AppendLine(const std::string& line) {
  std::string buf = line + "\n";
  size_t written = 0;
  while (written < buf.size()) {
    ssize_t n = ::write(fd_, buf.data() + written, buf.size() - written);
    if (n < 0) throw Error(ErrorCode::kIo, "append to " + path_.string() + " failed");
    written += static_cast<size_t>(n);
  }
  if (::fsync(fd_) != 0) throw Error(ErrorCode::kIo, "fsync of " + path_.string() + " failed");
}

void PreferenceStore::AddImage(ImageEntry image) {
  std::unique_lock lock(mu_);
  data_.ValidateImage(image);
  AppendLine(EncodeImage(image));
  data_.AddImage(std::move(image));
}

void PreferenceStore::AddCaption(CaptionCandidate caption) {
  std::unique_lock lock(mu_);
  data_.ValidateCaption(caption);
  AppendLine(EncodeCaption(caption));
  data_.AddCaption(std::move(caption));
}

void PreferenceStore::AppendRecord(PreferenceRecord record) {
  std::unique_lock lock(mu_);
  data_.ValidateRecord(record);
  AppendLine(EncodeRecord(record));
  data_.AppendRecord(std::move(record));
}

PreferenceDataset PreferenceStore::Snapshot() const {
  std::shared_lock lock(mu_);
  return data_;
}

}  // namespace alignsift
