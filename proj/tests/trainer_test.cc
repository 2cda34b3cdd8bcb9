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

#include <cstring>
#include <random>

#include "alignsift/error.h"
#include "alignsift/pairgen.h"
#include "alignsift/synthetic.h"
#include "alignsift/trainer.h"
#include "alignsift/util.h"
#include "doctest.h"
#include "test_support.h"

namespace alignsift {
namespace {

using testing::CodeOf;
using testing::TempDir;

struct SmallProblem {
  HeadArchitecture arch;
  EmbeddingTable table;
  std::vector<ComparisonPair> train;
  std::vector<ComparisonPair> holdout;
};

SmallProblem MakeProblem(uint64_t seed = 3) {
  SyntheticPreferenceConfig sc;
  sc.n_images = 40;
  sc.captions_per_image = 4;
  sc.dimension = 8;
  sc.seed = seed;
  auto data = GenerateSyntheticPreferences(sc);
  SmallProblem p;
  p.arch.layer_widths = {8, 16, 8};
  p.arch.dropout_rates = {0.2, 0.1};
  p.table = EmbeddingTable(8);
  for (const auto& r : data.embeddings) p.table.Add(r.key, r.vector);
  auto split = GenerateDatasetPairs(data.store, {1, 0.25, 0});
  p.train = split.train;
  p.holdout = split.holdout;
  return p;
}

TrainConfig FastConfig(uint64_t updates = 40) {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.batch_size = 16;
  c.total_updates = updates;
  c.log_every = 10;
  return c;
}

TEST_CASE("save, load, save yields identical bytes") {
  TempDir dir;
  auto p = MakeProblem();
  auto fresh = Checkpoint::Initialize(p.arch, FastConfig());
  SaveCheckpoint(fresh, dir / "fresh.ckpt");
  SaveCheckpoint(LoadCheckpoint(dir / "fresh.ckpt"), dir / "fresh2.ckpt");
  CHECK(ReadFile(dir / "fresh.ckpt") == ReadFile(dir / "fresh2.ckpt"));

  auto trained = Train(p.arch, FastConfig(), p.table, p.train).checkpoint;
  SaveCheckpoint(trained, dir / "a.ckpt");
  auto loaded = LoadCheckpoint(dir / "a.ckpt");
  CHECK(loaded.parameters == trained.parameters);
  CHECK(loaded.first_moment == trained.first_moment);
  CHECK(loaded.second_moment == trained.second_moment);
  CHECK(loaded.update_count == 40);
  CHECK(loaded.config == trained.config);
  CHECK(loaded.architecture == trained.architecture);
  SaveCheckpoint(loaded, dir / "b.ckpt");
  CHECK(ReadFile(dir / "a.ckpt") == ReadFile(dir / "b.ckpt"));
}

TEST_CASE("loading into another architecture is rejected") {
  TempDir dir;
  auto p = MakeProblem();
  SaveCheckpoint(Checkpoint::Initialize(p.arch, FastConfig()), dir / "c.ckpt");
  HeadArchitecture other = p.arch;
  other.layer_widths = {8, 16, 4};
  CHECK(CodeOf([&] { LoadCheckpoint(dir / "c.ckpt", other); }) ==
        ErrorCode::kIncompatibleArchitecture);
  other = p.arch;
  other.activation = Activation::kTanh;
  CHECK(CodeOf([&] { LoadCheckpoint(dir / "c.ckpt", other); }) ==
        ErrorCode::kIncompatibleArchitecture);
  CHECK(CodeOf([&] { LoadCheckpoint(dir / "c.ckpt", p.arch); }) == std::nullopt);
}

TEST_CASE("damaged checkpoints are CorruptCheckpoint") {
  TempDir dir;
  auto p = MakeProblem();
  SaveCheckpoint(Checkpoint::Initialize(p.arch, FastConfig()), dir / "c.ckpt");
  const std::string bytes = ReadFile(dir / "c.ckpt");
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  CHECK(CodeOf([&] { ParseCheckpoint(flipped); }) == ErrorCode::kCorruptCheckpoint);
  CHECK(CodeOf([&] { ParseCheckpoint(bytes.substr(0, bytes.size() - 1)); }) ==
        ErrorCode::kCorruptCheckpoint);
  CHECK(CodeOf([&] { ParseCheckpoint("XXXXXXXX" + bytes.substr(8)); }) ==
        ErrorCode::kCorruptCheckpoint);
  CHECK(CodeOf([&] { ParseCheckpoint(""); }) == ErrorCode::kCorruptCheckpoint);
}

TEST_CASE("resuming equals an uninterrupted run, bit for bit") {
  TempDir dir;
  auto p = MakeProblem();
  for (bool per_image : {false, true}) {
    auto config = FastConfig(37);
    config.per_image_weighting = per_image;
    auto straight = Train(p.arch, config, p.table, p.train).checkpoint;

    Trainer first(Checkpoint::Initialize(p.arch, config), p.table, p.train);
    first.RunUntil(13);
    SaveCheckpoint(first.state(), dir / "mid.ckpt");
    Trainer second(LoadCheckpoint(dir / "mid.ckpt"), p.table, p.train);
    second.RunUntil(37);
    CHECK(SerializeCheckpoint(second.state()) == SerializeCheckpoint(straight));
  }
}

TEST_CASE("identical inputs give identical checkpoints") {
  auto p = MakeProblem();
  auto a = Train(p.arch, FastConfig(), p.table, p.train, p.holdout);
  auto b = Train(p.arch, FastConfig(), p.table, p.train, p.holdout);
  CHECK(SerializeCheckpoint(a.checkpoint) == SerializeCheckpoint(b.checkpoint));
  CHECK(CheckpointHash(a.checkpoint) == CheckpointHash(b.checkpoint));
  auto config = FastConfig();
  config.seed += 1;
  auto c = Train(p.arch, config, p.table, p.train);
  CHECK_FALSE(c.checkpoint.parameters == a.checkpoint.parameters);
}

TEST_CASE("zero learning rate leaves parameters exactly at their initial values") {
  auto p = MakeProblem();
  auto config = FastConfig(25);
  config.learning_rate = 0.0;
  auto init = Checkpoint::Initialize(p.arch, config);
  auto result = Train(p.arch, config, p.table, p.train);
  CHECK(result.checkpoint.parameters == init.parameters);
  CHECK(result.checkpoint.update_count == 25);
}

TEST_CASE("the training log has one entry per interval") {
  auto p = MakeProblem();
  auto result = Train(p.arch, FastConfig(40), p.table, p.train, p.holdout);
  REQUIRE(result.log.size() == 4);
  for (size_t i = 0; i < 4; ++i) {
    CHECK(result.log[i].update == 10 * (i + 1));
    CHECK(result.log[i].mean_loss > 0.0);
    REQUIRE(result.log[i].holdout_pairwise_accuracy.has_value());
  }
  const std::string line = FormatLogEntry(result.log[0]);
  CHECK(line.find("\"update\":10") != std::string::npos);
  CHECK(line.find('\n') == std::string::npos);
  auto no_holdout = Train(p.arch, FastConfig(10), p.table, p.train);
  CHECK_FALSE(no_holdout.log[0].holdout_pairwise_accuracy.has_value());
}

TEST_CASE("pairs without embeddings are listed") {
  auto p = MakeProblem();
  auto pairs = p.train;
  pairs.push_back({"img-nope", "c00", "c01", "r"});
  try {
    Train(p.arch, FastConfig(1), p.table, pairs);
    FAIL("expected MissingEmbedding");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMissingEmbedding);
    CHECK(std::string(e.what()).find("img-nope") != std::string::npos);
  }
}

TEST_CASE("divergence keeps the last finite state") {
  auto p = MakeProblem();
  auto config = FastConfig(50);
  config.learning_rate = 1e300;
  config.dropout_enabled = false;
  try {
    Train(p.arch, config, p.table, p.train);
    FAIL("expected DivergedTraining");
  } catch (const DivergedTrainingError& e) {
    CHECK(e.code() == ErrorCode::kDivergedTraining);
    CHECK(e.last_finite().parameters.AllFinite());
    CHECK(e.last_finite().update_count < 50);
  }
}

TEST_CASE("invalid configurations are rejected") {
  TrainConfig c;
  c.batch_size = 0;
  CHECK(CodeOf([&] { c.Validate(); }) == ErrorCode::kInvalidArgument);
  c = {};
  c.learning_rate = -1;
  CHECK(CodeOf([&] { c.Validate(); }) == ErrorCode::kInvalidArgument);
  c = {};
  c.adam_beta1 = 1.0;
  CHECK(CodeOf([&] { c.Validate(); }) == ErrorCode::kInvalidArgument);
  c = {};
  CHECK(c.learning_rate == 1e-5);
  CHECK(c.batch_size == 64);
  CHECK(c.total_updates == 20000);
  CHECK(c.weight_decay == 0.01);
}

// Noise-free linear ground truth: every caption embedding is isotropic noise
// plus s·w with s gaps of at least the margin, and rankings follow s.
SyntheticPreferences LinearlySeparable(bool random_labels) {
  SyntheticPreferenceConfig sc;
  sc.shared_image_variance = 0.0;
  sc.random_labels = random_labels;
  return GenerateSyntheticPreferences(sc);
}

double HoldoutAccuracyAfter5000(const SyntheticPreferences& data) {
  EmbeddingTable table(32);
  for (const auto& r : data.embeddings) table.Add(r.key, r.vector);
  auto split = GenerateDatasetPairs(data.store, {7, 0.2, 0});
  TrainConfig config;
  config.total_updates = 5000;
  config.log_every = 5000;
  Trainer trainer(Checkpoint::Initialize(HeadArchitecture::Default(32), config), table,
                  split.train, split.holdout);
  trainer.RunUntil(5000);
  return *trainer.HoldoutPairwiseAccuracy();
}

TEST_CASE("linearly separable preferences reach 0.99 holdout pairwise accuracy in 5000 updates") {
  const double acc = HoldoutAccuracyAfter5000(LinearlySeparable(false));
  MESSAGE("holdout pairwise accuracy " << acc);
  CHECK(acc >= 0.99);
}

TEST_CASE("random labels stay at chance") {
  const double acc = HoldoutAccuracyAfter5000(LinearlySeparable(true));
  MESSAGE("holdout pairwise accuracy " << acc);
  CHECK(acc >= 0.45);
  CHECK(acc <= 0.55);
}

}  // namespace
}  // namespace alignsift
