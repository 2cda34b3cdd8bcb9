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

#ifndef ALIGNSIFT_TRAINER_H_
#define ALIGNSIFT_TRAINER_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "alignsift/embedding_io.h"
#include "alignsift/error.h"
#include "alignsift/pairgen.h"
#include "alignsift/reward_head.h"

namespace alignsift {

inline constexpr uint64_t kDefaultSeed = 20240601;
inline constexpr uint32_t kCheckpointFormatVersion = 1;

struct TrainConfig {
  double learning_rate = 1e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  // Decoupled (AdamW) decay applied to every parameter.
  double weight_decay = 0.01;
  size_t batch_size = 64;
  uint64_t total_updates = 20000;
  uint64_t seed = kDefaultSeed;
  bool dropout_enabled = true;
  bool shared_dropout_mask = false;
  // Each image in a minibatch contributes equally, however many pairs it has.
  bool per_image_weighting = false;
  uint64_t log_every = 100;

  void Validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct Checkpoint {
  HeadArchitecture architecture;
  HeadParameters parameters;
  // Adam moment estimates; empty before the first update.
  HeadParameters first_moment;
  HeadParameters second_moment;
  uint64_t update_count = 0;
  TrainConfig config;
  std::string init_scheme = std::string(kInitScheme);

  // Fresh, untrained state: Kaiming-uniform weights seeded by config.seed.
  static Checkpoint Initialize(const HeadArchitecture& arch, const TrainConfig& config);
};

// Self-describing binary format:
//   "ALSFCKP1", u32 version, u64 header length, JSON header,
//   f64 payload (parameters, then first and second moments; each layer's
//   weight row-major followed by its bias), u64 FNV-1a of all prior bytes.
std::string SerializeCheckpoint(const Checkpoint& ckpt);
Checkpoint ParseCheckpoint(std::string_view bytes);
void SaveCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws CorruptCheckpoint.
Checkpoint LoadCheckpoint(const std::filesystem::path& path);
// Additionally throws IncompatibleArchitecture when the stored architecture
// differs from `expected`.
Checkpoint LoadCheckpoint(const std::filesystem::path& path, const HeadArchitecture& expected);
std::string CheckpointHash(const Checkpoint& ckpt);

struct TrainLogEntry {
  uint64_t update = 0;
  double mean_loss = 0.0;  // over the updates since the previous entry
  std::optional<double> holdout_pairwise_accuracy;
};

std::string FormatLogEntry(const TrainLogEntry& entry);

// Carries the last state whose loss and gradient were finite.
class DivergedTrainingError : public Error {
 public:
  DivergedTrainingError(const std::string& message, Checkpoint last_finite)
      : Error(ErrorCode::kDivergedTraining, message), last_finite_(std::move(last_finite)) {}
  const Checkpoint& last_finite() const { return last_finite_; }

 private:
  Checkpoint last_finite_;
};

// Minibatch AdamW on the mean pairwise loss.
//
// Minibatches are consecutive slices of an endless stream of per-epoch
// permutations, each seeded from (seed, epoch); dropout for update t draws
// from an engine seeded with (seed, t). Both depend only on the seed and the
// update counter, so resuming from a checkpoint replays the exact sequence an
// uninterrupted run would have taken.
class Trainer {
 public:
  Trainer(Checkpoint start, const EmbeddingTable& embeddings,
          std::span<const ComparisonPair> train,
          std::span<const ComparisonPair> holdout = {});

  void Step();
  // Steps until update_count reaches `target`.
  void RunUntil(uint64_t target);

  const Checkpoint& state() const { return state_; }
  const std::vector<TrainLogEntry>& log() const { return log_; }

  // Eval-mode fraction of holdout pairs with f(preferred) > f(dispreferred).
  std::optional<double> HoldoutPairwiseAccuracy() const;

 private:
  struct IndexedPair {
    Eigen::Index preferred;
    Eigen::Index dispreferred;
    size_t image;
  };

  std::vector<IndexedPair> Index(std::span<const ComparisonPair> pairs,
                                 std::vector<std::string>& image_ids);
  const std::vector<size_t>& EpochOrder(uint64_t epoch);

  Checkpoint state_;
  Eigen::MatrixXd embeddings_;  // d x unique captions
  std::unordered_map<std::string, Eigen::Index> column_of_;
  std::vector<IndexedPair> train_;
  std::vector<IndexedPair> holdout_;
  std::vector<std::string> image_ids_;

  uint64_t cached_epoch_ = UINT64_MAX;
  std::vector<size_t> epoch_order_;

  std::vector<TrainLogEntry> log_;
  double window_loss_ = 0.0;
  uint64_t window_updates_ = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TrainLogEntry> log;
};

// Runs config.total_updates from a fresh initialization.
TrainResult Train(const HeadArchitecture& arch, const TrainConfig& config,
                  const EmbeddingTable& embeddings, std::span<const ComparisonPair> train,
                  std::span<const ComparisonPair> holdout = {});

}  // namespace alignsift

#endif  // ALIGNSIFT_TRAINER_H_
