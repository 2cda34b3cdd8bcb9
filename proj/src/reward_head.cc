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

#include "alignsift/reward_head.h"

#include <cmath>
#include <numbers>

#include "alignsift/error.h"

namespace alignsift {
namespace {

double Activate(Activation a, double x) {
  switch (a) {
    case Activation::kRelu: return x > 0.0 ? x : 0.0;
    case Activation::kGelu: return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
    case Activation::kTanh: return std::tanh(x);
  }
  return x;
}

double ActivationSlope(Activation a, double x) {
  switch (a) {
    case Activation::kRelu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::kGelu: {
      double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
      double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
      return cdf + x * pdf;
    }
    case Activation::kTanh: {
      double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

const Eigen::MatrixXd* MaskFor(const DropoutMasks* masks, size_t layer) {
  if (!masks || layer >= masks->per_layer.size()) return nullptr;
  const auto& m = masks->per_layer[layer];
  return m.size() == 0 ? nullptr : &m;
}

Eigen::MatrixXd ToColumn(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string_view ToString(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kGelu: return "gelu";
    case Activation::kTanh: return "tanh";
  }
  return "relu";
}

Activation ParseActivation(std::string_view s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "gelu") return Activation::kGelu;
  if (s == "tanh") return Activation::kTanh;
  throw Error(ErrorCode::kInvalidArgument, "unknown activation '" + std::string(s) + "'");
}

HeadArchitecture HeadArchitecture::Default(int input_dim) {
  HeadArchitecture arch;
  arch.layer_widths.front() = input_dim;
  return arch;
}

void HeadArchitecture::Validate() const {
  if (layer_widths.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "architecture needs at least one layer");
  }
  for (int w : layer_widths) {
    if (w < 1) throw Error(ErrorCode::kInvalidArgument, "layer widths must be >= 1");
  }
  if (dropout_rates.size() >= layer_widths.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "dropout list must be shorter than the layer list");
  }
  for (double p : dropout_rates) {
    if (!(p >= 0.0 && p < 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "dropout rates must lie in [0, 1)");
    }
  }
}

// --- parameters --------------------------------------------------------------

HeadParameters HeadParameters::Zeros(const HeadArchitecture& arch) {
  arch.Validate();
  HeadParameters p;
  for (size_t i = 0; i < arch.layer_count(); ++i) {
    p.layers.push_back({Eigen::MatrixXd::Zero(arch.output_width(i), arch.layer_widths[i]),
                        Eigen::VectorXd::Zero(arch.output_width(i))});
  }
  return p;
}

HeadParameters HeadParameters::KaimingUniform(const HeadArchitecture& arch, uint64_t seed) {
  HeadParameters p = Zeros(arch);
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), 0x1417u};
  std::mt19937_64 rng(seq);
  for (auto& layer : p.layers) {
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.weight.cols()));
    // Row-major fill so the draw order matches the checkpoint layout.
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        layer.weight(r, c) = (2.0 * UniformUnit(rng) - 1.0) * bound;
      }
    }
  }
  return p;
}

size_t HeadParameters::parameter_count() const {
  size_t n = 0;
  for (const auto& l : layers) n += static_cast<size_t>(l.weight.size() + l.bias.size());
  return n;
}

bool HeadParameters::AllFinite() const {
  for (const auto& l : layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

bool HeadParameters::Matches(const HeadArchitecture& arch) const {
  if (layers.size() != arch.layer_count()) return false;
  for (size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].weight.rows() != arch.output_width(i) ||
        layers[i].weight.cols() != arch.layer_widths[i] ||
        layers[i].bias.size() != arch.output_width(i)) {
      return false;
    }
  }
  return true;
}

void HeadParameters::SetZero() {
  for (auto& l : layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
}

bool HeadParameters::operator==(const HeadParameters& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (size_t i = 0; i < layers.size(); ++i) {
    const auto& a = layers[i];
    const auto& b = other.layers[i];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
        a.bias.size() != b.bias.size()) {
      return false;
    }
    if (a.weight != b.weight || a.bias != b.bias) return false;
  }
  return true;
}

// --- forward / backward ------------------------------------------------------

DropoutMasks SampleDropoutMasks(const HeadArchitecture& arch, Eigen::Index batch,
                                std::mt19937_64& rng) {
  DropoutMasks masks;
  masks.per_layer.resize(arch.layer_count() - 1);
  for (size_t i = 0; i + 1 < arch.layer_count(); ++i) {
    const double p = arch.dropout_after(i);
    if (p <= 0.0) continue;
    const double keep_scale = 1.0 / (1.0 - p);
    auto& m = masks.per_layer[i];
    m.resize(arch.output_width(i), batch);
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        m(r, c) = UniformUnit(rng) < p ? 0.0 : keep_scale;
      }
    }
  }
  return masks;
}

ForwardTrace ForwardWithTrace(const HeadArchitecture& arch, const HeadParameters& params,
                              const Eigen::MatrixXd& inputs, const DropoutMasks* masks) {
  if (inputs.rows() != arch.input_dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "embedding has " + std::to_string(inputs.rows()) +
                    " components, head expects " + std::to_string(arch.input_dim()));
  }
  ForwardTrace trace;
  const size_t n_layers = params.layers.size();
  trace.inputs.reserve(n_layers);
  trace.preactivation.reserve(n_layers - 1);
  Eigen::MatrixXd x = inputs;
  for (size_t i = 0; i < n_layers; ++i) {
    const auto& layer = params.layers[i];
    Eigen::MatrixXd z = layer.weight * x;
    z.colwise() += layer.bias;
    if (!z.allFinite()) {
      throw Error(ErrorCode::kNonFiniteActivation,
                  "non-finite activation in layer " + std::to_string(i + 1));
    }
    trace.inputs.push_back(std::move(x));
    if (i + 1 == n_layers) {
      trace.output = z.row(0);
      break;
    }
    x = z.unaryExpr([&](double v) { return Activate(arch.activation, v); });
    if (const auto* mask = MaskFor(masks, i)) x.array() *= mask->array();
    trace.preactivation.push_back(std::move(z));
  }
  return trace;
}

void Backward(const HeadArchitecture& arch, const HeadParameters& params,
              const ForwardTrace& trace, const DropoutMasks* masks,
              const Eigen::RowVectorXd& output_grad, HeadParameters& grad) {
  Eigen::MatrixXd g = output_grad;
  for (size_t i = params.layers.size(); i-- > 0;) {
    grad.layers[i].weight.noalias() += g * trace.inputs[i].transpose();
    grad.layers[i].bias += g.rowwise().sum();
    if (i == 0) break;
    Eigen::MatrixXd upstream = params.layers[i].weight.transpose() * g;
    const auto& pre = trace.preactivation[i - 1];
    upstream.array() *=
        pre.unaryExpr([&](double v) { return ActivationSlope(arch.activation, v); }).array();
    if (const auto* mask = MaskFor(masks, i - 1)) upstream.array() *= mask->array();
    g = std::move(upstream);
  }
}

Eigen::RowVectorXd ForwardBatch(const HeadArchitecture& arch, const HeadParameters& params,
                                const Eigen::MatrixXd& inputs) {
  return ForwardWithTrace(arch, params, inputs).output;
}

double Forward(const HeadArchitecture& arch, const HeadParameters& params,
               std::span<const double> embedding) {
  return ForwardBatch(arch, params, ToColumn(embedding))(0);
}

double Forward(const HeadArchitecture& arch, const HeadParameters& params,
               std::span<const float> embedding) {
  Eigen::MatrixXd x =
      Eigen::Map<const Eigen::VectorXf>(embedding.data(), static_cast<Eigen::Index>(embedding.size()))
          .cast<double>();
  return ForwardBatch(arch, params, x)(0);
}

double ForwardTrain(const HeadArchitecture& arch, const HeadParameters& params,
                    std::span<const double> embedding, std::mt19937_64& rng) {
  DropoutMasks masks = SampleDropoutMasks(arch, 1, rng);
  return ForwardWithTrace(arch, params, ToColumn(embedding), &masks).output(0);
}

// --- loss --------------------------------------------------------------------

double PairLossFromDelta(double delta) {
  // softplus(-Δ) = max(-Δ, 0) + log1p(exp(-|Δ|))
  return std::max(-delta, 0.0) + std::log1p(std::exp(-std::abs(delta)));
}

double PairLossSlope(double delta) {
  // -σ(-Δ), written to avoid exp overflow on either side.
  if (delta >= 0.0) {
    double e = std::exp(-delta);
    return -e / (1.0 + e);
  }
  return -1.0 / (1.0 + std::exp(delta));
}

PairLoss ComputePairLoss(const HeadArchitecture& arch, const HeadParameters& params,
                         std::span<const double> preferred,
                         std::span<const double> dispreferred) {
  BatchLoss batch = ComputeBatchLoss(arch, params, ToColumn(preferred), ToColumn(dispreferred),
                                     Eigen::RowVectorXd::Ones(1));
  return {batch.loss, batch.delta(0), std::move(batch.gradient)};
}

BatchLoss ComputeBatchLoss(const HeadArchitecture& arch, const HeadParameters& params,
                           const Eigen::MatrixXd& preferred, const Eigen::MatrixXd& dispreferred,
                           const Eigen::RowVectorXd& weights, const DropoutOptions& dropout) {
  if (preferred.cols() != dispreferred.cols() || weights.size() != preferred.cols()) {
    throw Error(ErrorCode::kInvalidArgument, "batch shapes disagree");
  }
  DropoutMasks pref_masks;
  DropoutMasks disp_masks;
  const DropoutMasks* pref_ptr = nullptr;
  const DropoutMasks* disp_ptr = nullptr;
  if (dropout.enabled) {
    if (!dropout.rng) throw Error(ErrorCode::kInvalidArgument, "dropout needs an rng");
    pref_masks = SampleDropoutMasks(arch, preferred.cols(), *dropout.rng);
    pref_ptr = &pref_masks;
    if (dropout.shared_mask) {
      disp_ptr = &pref_masks;
    } else {
      disp_masks = SampleDropoutMasks(arch, preferred.cols(), *dropout.rng);
      disp_ptr = &disp_masks;
    }
  }

  ForwardTrace pref = ForwardWithTrace(arch, params, preferred, pref_ptr);
  ForwardTrace disp = ForwardWithTrace(arch, params, dispreferred, disp_ptr);

  BatchLoss out;
  out.delta = pref.output - disp.output;
  Eigen::RowVectorXd slope(out.delta.size());
  for (Eigen::Index b = 0; b < out.delta.size(); ++b) {
    const double d = out.delta(b);
    const double l = PairLossFromDelta(d);
    if (!std::isfinite(l)) {
      throw Error(ErrorCode::kNonFiniteLoss, "non-finite pair loss at delta=" + std::to_string(d));
    }
    out.loss += weights(b) * l;
    slope(b) = weights(b) * PairLossSlope(d);
  }
  out.gradient = HeadParameters::Zeros(arch);
  Backward(arch, params, pref, pref_ptr, slope, out.gradient);
  Backward(arch, params, disp, disp_ptr, -slope, out.gradient);
  return out;
}

}  // namespace alignsift
