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

// Shared fixtures for the unit tests.

#ifndef ALIGNSIFT_TESTS_TEST_SUPPORT_H_
#define ALIGNSIFT_TESTS_TEST_SUPPORT_H_

#include <stdlib.h>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "alignsift/error.h"
#include "alignsift/preference_store.h"

namespace alignsift::testing {

class TempDir {
 public:
  TempDir() {
    std::string pattern = (std::filesystem::temp_directory_path() / "alignsift-test-XXXXXX").string();
    if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Error code thrown by `fn`, or nullopt if it returns normally.
template <typename Fn>
std::optional<ErrorCode> CodeOf(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

inline std::string Id(const char* prefix, size_t i) { return prefix + std::to_string(i); }

// An image with captions c0..c{k-1}.
inline void AddImageWithCaptions(PreferenceDataset& data, const std::string& image_id, size_t k) {
  data.AddImage({image_id, "file://" + image_id + ".jpg", ImageSource::kDatasetNative});
  for (size_t j = 0; j < k; ++j) {
    data.AddCaption({Id("c", j), image_id, "caption " + std::to_string(j) + " of " + image_id,
                     CaptionSource::kDatasetSampled});
  }
}

inline std::vector<RankGroup> TotalOrder(size_t k) {
  std::vector<RankGroup> ranking;
  for (size_t j = 0; j < k; ++j) ranking.push_back({Id("c", j)});
  return ranking;
}

// Random partition of c0..c{k-1} into ordered groups.
inline std::vector<RankGroup> RandomRanking(size_t k, std::mt19937_64& rng) {
  std::vector<std::string> ids;
  for (size_t j = 0; j < k; ++j) ids.push_back(Id("c", j));
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<RankGroup> ranking;
  for (const auto& id : ids) {
    if (ranking.empty() || rng() % 3 == 0) ranking.emplace_back();
    ranking.back().push_back(id);
  }
  return ranking;
}

inline PreferenceRecord MakeRecord(const std::string& record_id, const std::string& image_id,
                                   std::vector<RankGroup> ranking,
                                   const std::string& labeler = "labeler-1") {
  PreferenceRecord r;
  r.record_id = record_id;
  r.image_id = image_id;
  r.labeler_id = labeler;
  r.ranking = std::move(ranking);
  r.timestamp_ms = 1700000000000;
  return r;
}

}  // namespace alignsift::testing

#endif  // ALIGNSIFT_TESTS_TEST_SUPPORT_H_
