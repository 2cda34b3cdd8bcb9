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

#ifndef ALIGNSIFT_UTIL_H_
#define ALIGNSIFT_UTIL_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>

namespace alignsift {

// 64-bit FNV-1a, used for payload checksums and provenance digests.
class Fnv64 {
 public:
  void Update(const void* data, size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < size; ++i) {
      state_ ^= bytes[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  void Update(std::string_view s) { Update(s.data(), s.size()); }
  uint64_t digest() const { return state_; }

 private:
  uint64_t state_ = 0xcbf29ce484222325ULL;
};

uint64_t Fnv64Of(std::string_view s);
uint64_t Fnv64OfFile(const std::filesystem::path& path);
std::string Hex64(uint64_t value);

// Identifiers travel through tab-separated files and binary key tables, so
// they must be non-empty and free of control characters.
bool IsValidId(std::string_view id);
void RequireValidId(std::string_view id, std::string_view what);

// Little-endian scalar I/O. Targets are little-endian hosts; the static_assert
// in util.cc keeps a big-endian build from silently writing the wrong bytes.
void WriteU32(std::ostream& out, uint32_t v);
void WriteU64(std::ostream& out, uint64_t v);
void WriteF64(std::ostream& out, double v);
bool ReadU32(std::istream& in, uint32_t& v);
bool ReadU64(std::istream& in, uint64_t& v);
bool ReadF64(std::istream& in, double& v);

// Writes `contents` to a sibling temp file, fsyncs it and renames it over
// `path`.
void WriteFileAtomic(const std::filesystem::path& path,
                     std::string_view contents);
std::string ReadFile(const std::filesystem::path& path);

// Shortest round-trip decimal rendering of a double.
std::string FormatDouble(double v);

}  // namespace alignsift

#endif  // ALIGNSIFT_UTIL_H_
