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

#include "alignsift/embedder_client.h"

#include <algorithm>
#include <cstdlib>
#include <thread>

#include "alignsift/error.h"
#include "alignsift/util.h"
#include "httplib.h"
#include "json.hpp"

namespace alignsift {
namespace {

using nlohmann::json;

struct ParsedUrl {
  std::string origin;  // scheme://host:port
  std::string path;
};

ParsedUrl ParseUrl(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos || url.substr(0, scheme_end) != "http") {
    throw Error(ErrorCode::kInvalidArgument, "embedder url must start with http://: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/embed"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

struct BatchResult {
  uint32_t dimension = 0;
  json embeddings;
};

BatchResult PostBatch(const EmbedderConfig& config, const ParsedUrl& url,
                      std::span<const std::string> keys, const SleepFn& sleep) {
  json body{{"schema_version", kEmbedderSchemaVersion},
            {"keys", std::vector<std::string>(keys.begin(), keys.end())}};
  const std::string payload = body.dump();
  auto backoff = config.initial_backoff;
  std::string last_failure;
  for (int attempt = 1; attempt <= config.max_attempts; ++attempt) {
    httplib::Client client(url.origin);
    auto timeout_s = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
    client.set_connection_timeout(timeout_s);
    client.set_read_timeout(timeout_s);
    auto res = client.Post(url.path, payload, "application/json");
    if (res && res->status == 200) {
      json reply;
      try {
        reply = json::parse(res->body);
        return {reply.at("dimension").get<uint32_t>(), reply.at("embeddings")};
      } catch (const json::exception& e) {
        throw Error(ErrorCode::kPartialResponse,
                    std::string("malformed embedder response: ") + e.what());
      }
    }
    bool transient = !res || res->status == 429 || res->status >= 500;
    last_failure = res ? "HTTP " + std::to_string(res->status)
                       : httplib::to_string(res.error());
    if (!transient) break;
    if (attempt < config.max_attempts) {
      sleep(backoff);
      backoff = std::min(backoff * 2, config.max_backoff);
    }
  }
  throw Error(ErrorCode::kEndpointUnreachable,
              "embedder at " + config.url + " failed: " + last_failure);
}

}  // namespace

EmbedderConfig EmbedderConfig::FromFile(const std::filesystem::path& path, EmbedderConfig base) {
  json j;
  try {
    j = json::parse(ReadFile(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
  EmbedderConfig c = std::move(base);
  c.url = j.value("url", c.url);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_attempts = j.value("max_attempts", c.max_attempts);
  c.initial_backoff = std::chrono::milliseconds(j.value("initial_backoff_ms", c.initial_backoff.count()));
  c.max_backoff = std::chrono::milliseconds(j.value("max_backoff_ms", c.max_backoff.count()));
  c.timeout = std::chrono::milliseconds(j.value("timeout_ms", c.timeout.count()));
  if (j.contains("expected_dimension")) {
    c.expected_dimension = j.at("expected_dimension").get<uint32_t>();
  }
  return c;
}

void EmbedderConfig::ApplyEnvironment() {
  if (const char* v = std::getenv("ALIGNSIFT_EMBEDDER_URL")) url = v;
  if (const char* v = std::getenv("ALIGNSIFT_EMBEDDER_BATCH_SIZE")) {
    batch_size = static_cast<size_t>(std::strtoull(v, nullptr, 10));
  }
}

std::vector<EmbeddingRecord> FetchEmbeddings(const EmbedderConfig& config,
                                             std::span<const std::string> keys,
                                             const SleepFn& sleep) {
  if (keys.empty()) throw Error(ErrorCode::kInvalidArgument, "no keys to fetch");
  if (config.batch_size == 0) throw Error(ErrorCode::kInvalidArgument, "batch size must be positive");
  const SleepFn do_sleep =
      sleep ? sleep : SleepFn([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); });
  const ParsedUrl url = ParseUrl(config.url);

  std::vector<EmbeddingRecord> records;
  records.reserve(keys.size());
  std::optional<uint32_t> dimension = config.expected_dimension;
  std::vector<std::string> missing;
  for (size_t begin = 0; begin < keys.size(); begin += config.batch_size) {
    auto batch = keys.subspan(begin, std::min(config.batch_size, keys.size() - begin));
    BatchResult result = PostBatch(config, url, batch, do_sleep);
    if (dimension && *dimension != result.dimension) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "embedder serves dimension " + std::to_string(result.dimension) +
                      ", expected " + std::to_string(*dimension));
    }
    dimension = result.dimension;
    for (const auto& key : batch) {
      auto it = result.embeddings.find(key);
      if (it == result.embeddings.end() || !it->is_array()) {
        missing.push_back(key);
        continue;
      }
      EmbeddingRecord r{key, it->get<std::vector<float>>()};
      if (r.vector.size() != *dimension) {
        throw Error(ErrorCode::kDimensionMismatch,
                    "embedding for " + key + " has " + std::to_string(r.vector.size()) +
                        " components, advertised " + std::to_string(*dimension));
      }
      records.push_back(std::move(r));
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (size_t i = 0; i < missing.size(); ++i) list += (i ? "," : "") + missing[i];
    throw Error(ErrorCode::kPartialResponse, "embedder omitted keys: " + list);
  }
  return records;
}

}  // namespace alignsift
