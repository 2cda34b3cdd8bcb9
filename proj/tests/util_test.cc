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

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "alignsift/util.h"
#include "doctest.h"
#include "test_support.h"

namespace alignsift {
namespace {

TEST_CASE("FNV-1a 64 matches the published test vectors") {
  CHECK(Fnv64Of("") == 0xcbf29ce484222325ULL);
  CHECK(Fnv64Of("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(Fnv64Of("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("FNV-1a 64 is the same whether fed at once or in pieces") {
  Fnv64 h;
  h.Update("foo");
  h.Update("bar");
  CHECK(h.digest() == Fnv64Of("foobar"));
}

TEST_CASE("Hex64 renders sixteen lowercase digits") {
  CHECK(Hex64(0) == "0000000000000000");
  CHECK(Hex64(0xaf63dc4c8601ec8cULL) == "af63dc4c8601ec8c");
}

TEST_CASE("identifiers reject empty strings and control characters") {
  CHECK(IsValidId("img-001"));
  CHECK(IsValidId("caption with spaces"));
  CHECK_FALSE(IsValidId(""));
  CHECK_FALSE(IsValidId("a\tb"));
  CHECK_FALSE(IsValidId("a\nb"));
  CHECK(testing::CodeOf([] { RequireValidId("", "image id"); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("little-endian scalars round-trip") {
  std::stringstream s;
  WriteU32(s, 0xdeadbeefU);
  WriteU64(s, 0x0123456789abcdefULL);
  WriteF64(s, -0.1);
  CHECK(s.str().substr(0, 4) == std::string("\xef\xbe\xad\xde", 4));
  uint32_t a = 0;
  uint64_t b = 0;
  double c = 0;
  REQUIRE(ReadU32(s, a));
  REQUIRE(ReadU64(s, b));
  REQUIRE(ReadF64(s, c));
  CHECK(a == 0xdeadbeefU);
  CHECK(b == 0x0123456789abcdefULL);
  CHECK(c == -0.1);
  CHECK_FALSE(ReadU32(s, a));
}

TEST_CASE("FormatDouble is the shortest round-trip form") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    double v = u(rng);
    CHECK(std::stod(FormatDouble(v)) == v);
  }
  CHECK(FormatDouble(0.5) == "0.5");
  CHECK(FormatDouble(90.1) == "90.1");
}

TEST_CASE("WriteFileAtomic replaces contents and leaves no temp file") {
  testing::TempDir dir;
  auto path = dir / "f.txt";
  WriteFileAtomic(path, "first");
  WriteFileAtomic(path, "second");
  CHECK(ReadFile(path) == "second");
  CHECK_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  CHECK(Fnv64OfFile(path) == Fnv64Of("second"));
  CHECK(testing::CodeOf([&] { ReadFile(dir / "missing"); }) == ErrorCode::kIo);
}

}  // namespace
}  // namespace alignsift
