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

#include "alignsift/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "alignsift/util.h"

namespace alignsift {
namespace {

std::mt19937_64 StreamEngine(uint64_t seed, uint64_t index, uint32_t stream) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(index), static_cast<uint32_t>(index >> 32), stream};
  return std::mt19937_64(seq);
}

constexpr uint32_t kEpochStream = 0xE0u;
constexpr uint32_t kDropoutStream = 0xD0u;

template <typename Fn>
void ForEachTensor(HeadParameters& a, Fn&& fn) {
  for (auto& l : a.layers) {
    fn(l.weight);
    fn(l.bias);
  }
}

}  // namespace

std::string FormatLogEntry(const TrainLogEntry& e) {
  std::string line = "{\"update\":" + std::to_string(e.update) +
                     ",\"mean_loss\":" + FormatDouble(e.mean_loss);
  if (e.holdout_pairwise_accuracy) {
    line += ",\"holdout_pairwise_accuracy\":" + FormatDouble(*e.holdout_pairwise_accuracy);
  }
  return line + "}";
}

Trainer::Trainer(Checkpoint start, const EmbeddingTable& embeddings,
                 std::span<const ComparisonPair> train, std::span<const ComparisonPair> holdout)
    : state_(std::move(start)) {
  state_.architecture.Validate();
  state_.config.Validate();
  if (!state_.parameters.Matches(state_.architecture)) {
    throw Error(ErrorCode::kIncompatibleArchitecture, "parameters do not match the architecture");
  }
  if (embeddings.dimension() != static_cast<uint32_t>(state_.architecture.input_dim())) {
    throw Error(ErrorCode::kDimensionMismatch,
                "embeddings have dimension " + std::to_string(embeddings.dimension()) +
                    ", head expects " + std::to_string(state_.architecture.input_dim()));
  }
  if (train.empty()) throw Error(ErrorCode::kInvalidArgument, "no training pairs");
  if (state_.first_moment.layers.empty()) {
    state_.first_moment = HeadParameters::Zeros(state_.architecture);
    state_.second_moment = HeadParameters::Zeros(state_.architecture);
  }

  // Resolve every caption key once; columns are assigned in first-use order.
  std::vector<std::string> missing;
  for (auto group : {train, holdout}) {
    for (const auto& p : group) {
      auto pref = CaptionKey(p.image_id, p.preferred);
      auto disp = CaptionKey(p.image_id, p.dispreferred);
      if (!embeddings.Contains(pref) || !embeddings.Contains(disp)) {
        missing.push_back(p.image_id + ":" + p.preferred + ">" + p.dispreferred);
      }
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (size_t i = 0; i < std::min<size_t>(missing.size(), 5); ++i) list += " " + missing[i];
    throw Error(ErrorCode::kMissingEmbedding,
                std::to_string(missing.size()) + " pair(s) lack embeddings:" + list +
                    (missing.size() > 5 ? " ..." : ""));
  }

  std::vector<std::string> ordered_keys;
  auto intern = [&](const std::string& key) {
    auto [it, inserted] = column_of_.emplace(key, static_cast<Eigen::Index>(ordered_keys.size()));
    if (inserted) ordered_keys.push_back(key);
  };
  for (auto group : {train, holdout}) {
    for (const auto& p : group) {
      intern(CaptionKey(p.image_id, p.preferred));
      intern(CaptionKey(p.image_id, p.dispreferred));
    }
  }
  embeddings_.resize(state_.architecture.input_dim(), static_cast<Eigen::Index>(ordered_keys.size()));
  for (size_t c = 0; c < ordered_keys.size(); ++c) {
    auto v = *embeddings.Find(ordered_keys[c]);
    for (size_t r = 0; r < v.size(); ++r) {
      embeddings_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[r];
    }
  }
  train_ = Index(train, image_ids_);
  holdout_ = Index(holdout, image_ids_);
}

std::vector<Trainer::IndexedPair> Trainer::Index(std::span<const ComparisonPair> pairs,
                                                 std::vector<std::string>& image_ids) {
  std::map<std::string, size_t> image_index;
  for (size_t i = 0; i < image_ids.size(); ++i) image_index.emplace(image_ids[i], i);
  std::vector<IndexedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    auto [it, inserted] = image_index.emplace(p.image_id, image_ids.size());
    if (inserted) image_ids.push_back(p.image_id);
    out.push_back({column_of_.at(CaptionKey(p.image_id, p.preferred)),
                   column_of_.at(CaptionKey(p.image_id, p.dispreferred)), it->second});
  }
  return out;
}

const std::vector<size_t>& Trainer::EpochOrder(uint64_t epoch) {
  if (epoch != cached_epoch_) {
    epoch_order_.resize(train_.size());
    std::iota(epoch_order_.begin(), epoch_order_.end(), size_t{0});
    auto rng = StreamEngine(state_.config.seed, epoch, kEpochStream);
    std::shuffle(epoch_order_.begin(), epoch_order_.end(), rng);
    cached_epoch_ = epoch;
  }
  return epoch_order_;
}

void Trainer::Step() {
  const TrainConfig& cfg = state_.config;
  const HeadArchitecture& arch = state_.architecture;
  const uint64_t t = state_.update_count;
  const auto batch = static_cast<Eigen::Index>(cfg.batch_size);
  const uint64_t n_pairs = train_.size();

  Eigen::MatrixXd pref(arch.input_dim(), batch);
  Eigen::MatrixXd disp(arch.input_dim(), batch);
  std::vector<size_t> images(cfg.batch_size);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const uint64_t position = t * cfg.batch_size + static_cast<uint64_t>(b);
    const IndexedPair& p = train_[EpochOrder(position / n_pairs)[position % n_pairs]];
    pref.col(b) = embeddings_.col(p.preferred);
    disp.col(b) = embeddings_.col(p.dispreferred);
    images[static_cast<size_t>(b)] = p.image;
  }

  Eigen::RowVectorXd weights = Eigen::RowVectorXd::Constant(batch, 1.0 / static_cast<double>(batch));
  if (cfg.per_image_weighting) {
    std::map<size_t, int> per_image;
    for (size_t img : images) ++per_image[img];
    const double n_images = static_cast<double>(per_image.size());
    for (Eigen::Index b = 0; b < batch; ++b) {
      weights(b) = 1.0 / (n_images * per_image[images[static_cast<size_t>(b)]]);
    }
  }

  auto dropout_rng = StreamEngine(cfg.seed, t, kDropoutStream);
  DropoutOptions dropout{cfg.dropout_enabled, cfg.shared_dropout_mask, &dropout_rng};
  BatchLoss loss;
  try {
    loss = ComputeBatchLoss(arch, state_.parameters, pref, disp, weights, dropout);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNonFiniteLoss && e.code() != ErrorCode::kNonFiniteActivation) throw;
    throw DivergedTrainingError("update " + std::to_string(t + 1) + ": " + e.what(), state_);
  }
  if (!std::isfinite(loss.loss) || !loss.gradient.AllFinite()) {
    throw DivergedTrainingError("update " + std::to_string(t + 1) + ": non-finite loss or gradient",
                                state_);
  }

  // AdamW with decoupled weight decay.
  const double step = static_cast<double>(t + 1);
  const double bias1 = 1.0 - std::pow(cfg.adam_beta1, step);
  const double bias2 = 1.0 - std::pow(cfg.adam_beta2, step);
  const double decay = 1.0 - cfg.learning_rate * cfg.weight_decay;
  for (size_t i = 0; i < state_.parameters.layers.size(); ++i) {
    auto update = [&](auto& theta, auto& m, auto& v, const auto& g) {
      theta.array() *= decay;
      m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
      v = cfg.adam_beta2 * v.array() + (1.0 - cfg.adam_beta2) * g.array().square();
      theta.array() -= cfg.learning_rate * (m.array() / bias1) /
                       ((v.array() / bias2).sqrt() + cfg.adam_epsilon);
    };
    auto& layer = state_.parameters.layers[i];
    const auto& grad = loss.gradient.layers[i];
    update(layer.weight, state_.first_moment.layers[i].weight,
           state_.second_moment.layers[i].weight, grad.weight);
    update(layer.bias, state_.first_moment.layers[i].bias, state_.second_moment.layers[i].bias,
           grad.bias);
  }
  state_.update_count = t + 1;

  window_loss_ += loss.loss;
  ++window_updates_;
  if (state_.update_count % cfg.log_every == 0) {
    log_.push_back({state_.update_count, window_loss_ / static_cast<double>(window_updates_),
                    HoldoutPairwiseAccuracy()});
    window_loss_ = 0.0;
    window_updates_ = 0;
  }
}

void Trainer::RunUntil(uint64_t target) {
  while (state_.update_count < target) Step();
}

std::optional<double> Trainer::HoldoutPairwiseAccuracy() const {
  if (holdout_.empty()) return std::nullopt;
  std::vector<Eigen::Index> columns;
  std::unordered_map<Eigen::Index, Eigen::Index> slot;
  for (const auto& p : holdout_) {
    for (Eigen::Index c : {p.preferred, p.dispreferred}) {
      if (slot.emplace(c, static_cast<Eigen::Index>(columns.size())).second) columns.push_back(c);
    }
  }
  Eigen::MatrixXd x(embeddings_.rows(), static_cast<Eigen::Index>(columns.size()));
  for (size_t i = 0; i < columns.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = embeddings_.col(columns[i]);
  Eigen::RowVectorXd scores = ForwardBatch(state_.architecture, state_.parameters, x);
  size_t correct = 0;
  for (const auto& p : holdout_) {
    if (scores(slot.at(p.preferred)) > scores(slot.at(p.dispreferred))) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(holdout_.size());
}

TrainResult Train(const HeadArchitecture& arch, const TrainConfig& config,
                  const EmbeddingTable& embeddings, std::span<const ComparisonPair> train,
                  std::span<const ComparisonPair> holdout) {
  Trainer trainer(Checkpoint::Initialize(arch, config), embeddings, train, holdout);
  trainer.RunUntil(config.total_updates);
  return {trainer.state(), trainer.log()};
}

}  // namespace alignsift
