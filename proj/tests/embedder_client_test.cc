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

#include <atomic>
#include <thread>

#include "alignsift/embedder_client.h"
#include "alignsift/error.h"
#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "test_support.h"

namespace alignsift {
namespace {

using nlohmann::json;
using testing::CodeOf;

// Stub embedder on a loopback port. `fail_first` requests answer 503;
// `drop` keys are omitted; `dimension` sets the vector length.
class StubEmbedder {
 public:
  StubEmbedder() {
    server_.Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      if (requests_ <= fail_first) {
        res.status = status_on_failure;
        return;
      }
      auto body = json::parse(req.body);
      json embeddings = json::object();
      for (const auto& key : body.at("keys")) {
        const std::string k = key.get<std::string>();
        if (k == drop) continue;
        std::vector<float> v(key_dimension(k), static_cast<float>(k.size()));
        embeddings[k] = v;
      }
      largest_batch = std::max<size_t>(largest_batch, body.at("keys").size());
      res.set_content(json{{"dimension", dimension}, {"embeddings", embeddings}, {"schema_version", 1}}.dump(),
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubEmbedder() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/embed"; }
  int requests() const { return requests_; }

  int fail_first = 0;
  int status_on_failure = 503;
  std::string drop;
  std::string short_key;
  uint32_t dimension = 3;
  size_t largest_batch = 0;

 private:
  uint32_t key_dimension(const std::string& k) const { return k == short_key ? dimension - 1 : dimension; }

  httplib::Server server_;
  std::thread thread_;
  std::atomic<int> requests_{0};
  int port_ = 0;
};

EmbedderConfig ConfigFor(const StubEmbedder& stub) {
  EmbedderConfig c;
  c.url = stub.url();
  c.max_attempts = 4;
  c.timeout = std::chrono::milliseconds(5000);
  return c;
}

std::vector<std::string> Keys(size_t n) {
  std::vector<std::string> keys;
  for (size_t i = 0; i < n; ++i) keys.push_back(testing::Id("k", i));
  return keys;
}

TEST_CASE("fetches every key in order across batches") {
  StubEmbedder stub;
  auto config = ConfigFor(stub);
  config.batch_size = 4;
  auto keys = Keys(10);
  auto records = FetchEmbeddings(config, keys);
  REQUIRE(records.size() == 10);
  for (size_t i = 0; i < 10; ++i) {
    CHECK(records[i].key == keys[i]);
    CHECK(records[i].vector.size() == 3);
  }
  CHECK(stub.requests() == 3);
  CHECK(stub.largest_batch == 4);
}

TEST_CASE("transient failures are retried with doubling capped backoff") {
  StubEmbedder stub;
  stub.fail_first = 3;
  auto config = ConfigFor(stub);
  config.initial_backoff = std::chrono::milliseconds(100);
  config.max_backoff = std::chrono::milliseconds(250);
  std::vector<int64_t> sleeps;
  auto keys = Keys(2);
  auto records = FetchEmbeddings(config, keys, [&](std::chrono::milliseconds d) { sleeps.push_back(d.count()); });
  CHECK(records.size() == 2);
  CHECK(sleeps == std::vector<int64_t>{100, 200, 250});
}

TEST_CASE("exhausted retries raise EndpointUnreachable") {
  StubEmbedder stub;
  stub.fail_first = 100;
  auto config = ConfigFor(stub);
  auto keys = Keys(1);
  CHECK(CodeOf([&] { FetchEmbeddings(config, keys, [](auto) {}); }) ==
        ErrorCode::kEndpointUnreachable);
  CHECK(stub.requests() == 4);
}

TEST_CASE("client errors are not retried") {
  StubEmbedder stub;
  stub.fail_first = 100;
  stub.status_on_failure = 400;
  auto config = ConfigFor(stub);
  auto keys = Keys(1);
  CHECK(CodeOf([&] { FetchEmbeddings(config, keys, [](auto) {}); }) ==
        ErrorCode::kEndpointUnreachable);
  CHECK(stub.requests() == 1);
}

TEST_CASE("a closed port is unreachable") {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  EmbedderConfig config;
  config.url = "http://127.0.0.1:" + std::to_string(port) + "/embed";
  config.max_attempts = 2;
  auto keys = Keys(1);
  CHECK(CodeOf([&] { FetchEmbeddings(config, keys, [](auto) {}); }) ==
        ErrorCode::kEndpointUnreachable);
}

TEST_CASE("omitted keys are listed in PartialResponse") {
  StubEmbedder stub;
  stub.drop = "k1";
  auto keys = Keys(3);
  try {
    FetchEmbeddings(ConfigFor(stub), keys);
    FAIL("expected PartialResponse");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kPartialResponse);
    CHECK(std::string(e.what()).find("k1") != std::string::npos);
  }
}

TEST_CASE("dimension disagreements are detected") {
  StubEmbedder stub;
  auto config = ConfigFor(stub);
  config.expected_dimension = 4;
  auto keys = Keys(2);
  CHECK(CodeOf([&] { FetchEmbeddings(config, keys); }) == ErrorCode::kDimensionMismatch);
  StubEmbedder ragged;
  ragged.short_key = "k1";
  CHECK(CodeOf([&] { FetchEmbeddings(ConfigFor(ragged), keys); }) == ErrorCode::kDimensionMismatch);
}

TEST_CASE("empty key lists and bad urls are argument errors") {
  EmbedderConfig config;
  config.url = "http://127.0.0.1:1/embed";
  std::vector<std::string> none;
  CHECK(CodeOf([&] { FetchEmbeddings(config, none); }) == ErrorCode::kInvalidArgument);
  config.url = "ftp://example";
  auto keys = Keys(1);
  CHECK(CodeOf([&] { FetchEmbeddings(config, keys); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("config files set every field") {
  testing::TempDir dir;
  WriteFileAtomic(dir / "e.json",
                  R"({"url":"http://h:1/x","batch_size":7,"max_attempts":2,"initial_backoff_ms":5,)"
                  R"("max_backoff_ms":9,"timeout_ms":11,"expected_dimension":768})");
  auto c = EmbedderConfig::FromFile(dir / "e.json");
  CHECK(c.url == "http://h:1/x");
  CHECK(c.batch_size == 7);
  CHECK(c.max_attempts == 2);
  CHECK(c.initial_backoff.count() == 5);
  CHECK(c.max_backoff.count() == 9);
  CHECK(c.timeout.count() == 11);
  CHECK(c.expected_dimension == 768u);
}

}  // namespace
}  // namespace alignsift
