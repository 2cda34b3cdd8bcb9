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

// Scalar reward head: a ReLU (by default) MLP over a fused embedding,
// trained with the Bradley-Terry pairwise loss
//
//   loss = -log σ(f(preferred) - f(dispreferred)) = softplus(-Δ).
//
// Arithmetic is double precision throughout. Batches are column-major
// matrices with one embedding per column.

#ifndef ALIGNSIFT_REWARD_HEAD_H_
#define ALIGNSIFT_REWARD_HEAD_H_

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace alignsift {

enum class Activation { kRelu, kGelu, kTanh };

std::string_view ToString(Activation a);
Activation ParseActivation(std::string_view s);

// layer_widths[0] is the embedding dimension; layer i maps
// layer_widths[i] -> layer_widths[i+1], and the last layer maps to a scalar.
// dropout_rates[i] applies to the output of hidden layer i.
struct HeadArchitecture {
  std::vector<int> layer_widths = {768, 1024, 128, 64, 16};
  std::vector<double> dropout_rates = {0.2, 0.2, 0.1};
  Activation activation = Activation::kRelu;

  static HeadArchitecture Default(int input_dim);

  int input_dim() const { return layer_widths.front(); }
  size_t layer_count() const { return layer_widths.size(); }
  int output_width(size_t layer) const {
    return layer + 1 < layer_widths.size() ? layer_widths[layer + 1] : 1;
  }
  double dropout_after(size_t layer) const {
    return layer < dropout_rates.size() ? dropout_rates[layer] : 0.0;
  }
  // Throws InvalidArgument.
  void Validate() const;

  bool operator==(const HeadArchitecture&) const = default;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

struct HeadParameters {
  std::vector<DenseLayer> layers;

  static HeadParameters Zeros(const HeadArchitecture& arch);
  // W ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)), b = 0.
  static HeadParameters KaimingUniform(const HeadArchitecture& arch, uint64_t seed);

  size_t parameter_count() const;
  bool AllFinite() const;
  bool Matches(const HeadArchitecture& arch) const;
  void SetZero();

  bool operator==(const HeadParameters& other) const;
};

inline constexpr std::string_view kInitScheme = "kaiming-uniform-fan-in";

// Uniform double in [0, 1) from the top 53 bits of one engine draw.
inline double UniformUnit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Inverted-dropout multipliers, one matrix per hidden layer (width x batch):
// each entry is 0 with probability p and 1/(1-p) otherwise. Empty matrices
// mark layers without dropout.
struct DropoutMasks {
  std::vector<Eigen::MatrixXd> per_layer;
};

DropoutMasks SampleDropoutMasks(const HeadArchitecture& arch, Eigen::Index batch,
                                std::mt19937_64& rng);

// Activations recorded during a forward pass for reuse in Backward.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> inputs;       // input to each layer
  std::vector<Eigen::MatrixXd> preactivation;  // hidden layers only
  Eigen::RowVectorXd output;
};

// Throws DimensionMismatch and NonFiniteActivation (naming the 1-based layer).
ForwardTrace ForwardWithTrace(const HeadArchitecture& arch, const HeadParameters& params,
                              const Eigen::MatrixXd& inputs,
                              const DropoutMasks* masks = nullptr);

// Accumulates d(Σ_b output_grad[b] · f(x_b))/dθ into `grad`.
void Backward(const HeadArchitecture& arch, const HeadParameters& params,
              const ForwardTrace& trace, const DropoutMasks* masks,
              const Eigen::RowVectorXd& output_grad, HeadParameters& grad);

// Eval-mode rewards for a batch of embeddings (d x n).
Eigen::RowVectorXd ForwardBatch(const HeadArchitecture& arch, const HeadParameters& params,
                                const Eigen::MatrixXd& inputs);

double Forward(const HeadArchitecture& arch, const HeadParameters& params,
               std::span<const double> embedding);
double Forward(const HeadArchitecture& arch, const HeadParameters& params,
               std::span<const float> embedding);
// Train mode: inverted dropout with masks drawn from `rng`.
double ForwardTrain(const HeadArchitecture& arch, const HeadParameters& params,
                    std::span<const double> embedding, std::mt19937_64& rng);

// softplus(-Δ), evaluated without overflow for any finite Δ.
double PairLossFromDelta(double delta);
// d loss / dΔ = -σ(-Δ).
double PairLossSlope(double delta);

struct PairLoss {
  double loss = 0.0;
  double delta = 0.0;
  HeadParameters gradient;
};

// Eval-mode loss and gradient for one pair. Throws NonFiniteLoss with Δ.
PairLoss ComputePairLoss(const HeadArchitecture& arch, const HeadParameters& params,
                         std::span<const double> preferred,
                         std::span<const double> dispreferred);

struct DropoutOptions {
  bool enabled = false;
  // Reuse the preferred caption's mask for its dispreferred partner.
  bool shared_mask = false;
  std::mt19937_64* rng = nullptr;
};

struct BatchLoss {
  double loss = 0.0;  // Σ_b weight[b] · softplus(-Δ_b)
  Eigen::RowVectorXd delta;
  HeadParameters gradient;
};

// Weighted pairwise loss over a minibatch; `weights` normally sums to 1.
BatchLoss ComputeBatchLoss(const HeadArchitecture& arch, const HeadParameters& params,
                           const Eigen::MatrixXd& preferred,
                           const Eigen::MatrixXd& dispreferred,
                           const Eigen::RowVectorXd& weights,
                           const DropoutOptions& dropout = {});

}  // namespace alignsift

#endif  // ALIGNSIFT_REWARD_HEAD_H_
