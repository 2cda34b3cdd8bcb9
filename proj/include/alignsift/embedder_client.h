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

// Client for an external service that computes fused embeddings.
//
// Request:  POST <url>  {"keys":["k1","k2",...],"schema_version":1}
// Response: 200 {"dimension":d,"embeddings":{"k1":[...],...},"schema_version":1}
//
// Connection failures, 429 and 5xx responses are retried with capped
// exponential backoff; other statuses fail immediately.

#ifndef ALIGNSIFT_EMBEDDER_CLIENT_H_
#define ALIGNSIFT_EMBEDDER_CLIENT_H_

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "alignsift/embedding_io.h"

namespace alignsift {

inline constexpr int kEmbedderSchemaVersion = 1;

struct EmbedderConfig {
  std::string url;  // http://host[:port]/path
  size_t batch_size = 256;
  int max_attempts = 5;
  std::chrono::milliseconds initial_backoff{100};
  std::chrono::milliseconds max_backoff{5000};
  std::chrono::milliseconds timeout{30000};
  std::optional<uint32_t> expected_dimension;

  // JSON object with any of: url, batch_size, max_attempts,
  // initial_backoff_ms, max_backoff_ms, timeout_ms, expected_dimension.
  // Keys present in the file override `base`.
  static EmbedderConfig FromFile(const std::filesystem::path& path, EmbedderConfig base);
  static EmbedderConfig FromFile(const std::filesystem::path& path) { return FromFile(path, {}); }
  // Reads ALIGNSIFT_EMBEDDER_URL and ALIGNSIFT_EMBEDDER_BATCH_SIZE. Apply
  // before FromFile so that file values win.
  void ApplyEnvironment();
};

using SleepFn = std::function<void(std::chrono::milliseconds)>;

// One record per key, in key order. Throws EndpointUnreachable once retries
// are exhausted, PartialResponse listing missing keys, DimensionMismatch when
// the served dimension disagrees with expected_dimension or with itself.
std::vector<EmbeddingRecord> FetchEmbeddings(const EmbedderConfig& config,
                                             std::span<const std::string> keys,
                                             const SleepFn& sleep = {});

}  // namespace alignsift

#endif  // ALIGNSIFT_EMBEDDER_CLIENT_H_
