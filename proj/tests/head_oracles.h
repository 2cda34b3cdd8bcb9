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

// Test-side oracles for the reward head: a loop-based forward pass and a
// central finite-difference gradient.

#ifndef ALIGNSIFT_TESTS_HEAD_ORACLES_H_
#define ALIGNSIFT_TESTS_HEAD_ORACLES_H_

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "alignsift/reward_head.h"

namespace alignsift::testing {

inline double OracleActivation(Activation a, double x) {
  switch (a) {
    case Activation::kRelu: return x > 0.0 ? x : 0.0;
    case Activation::kGelu: return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
    case Activation::kTanh: return std::tanh(x);
  }
  return x;
}

// Eval-mode forward pass with explicit loops and no linear-algebra library.
inline double OracleForward(const HeadArchitecture& arch, const HeadParameters& params,
                            const std::vector<double>& embedding) {
  std::vector<double> x = embedding;
  for (size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    std::vector<double> y(static_cast<size_t>(layer.weight.rows()));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      double acc = layer.bias(r);
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) acc += layer.weight(r, c) * x[c];
      y[r] = l + 1 < params.layers.size() ? OracleActivation(arch.activation, acc) : acc;
    }
    x = std::move(y);
  }
  return x[0];
}

inline double OraclePairLoss(double delta) {
  // log(1 + exp(-Δ)) evaluated in two branches.
  return delta >= 0 ? std::log1p(std::exp(-delta)) : -delta + std::log1p(std::exp(delta));
}

// Every scalar parameter, in a fixed order, as pointers into `p`.
inline std::vector<double*> Coordinates(HeadParameters& p) {
  std::vector<double*> out;
  for (auto& layer : p.layers) {
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) out.push_back(layer.weight.data() + i);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) out.push_back(layer.bias.data() + i);
  }
  return out;
}

struct GradientCheck {
  double max_relative_error = 0.0;
  size_t coordinates = 0;
};

// Compares ComputePairLoss gradients against central differences with step
// h. Relative error per coordinate is |a - n| / max(|a|, |n|, floor).
inline GradientCheck CheckPairGradient(const HeadArchitecture& arch, const HeadParameters& params,
                                       const std::vector<double>& preferred,
                                       const std::vector<double>& dispreferred,
                                       double h = 1e-5, double floor = 1e-6) {
  auto analytic = ComputePairLoss(arch, params, preferred, dispreferred).gradient;
  HeadParameters probe = params;
  auto grad_coords = Coordinates(analytic);
  auto probe_coords = Coordinates(probe);
  GradientCheck result;
  result.coordinates = probe_coords.size();
  for (size_t i = 0; i < probe_coords.size(); ++i) {
    const double saved = *probe_coords[i];
    *probe_coords[i] = saved + h;
    const double up = OraclePairLoss(OracleForward(arch, probe, preferred) -
                                     OracleForward(arch, probe, dispreferred));
    *probe_coords[i] = saved - h;
    const double down = OraclePairLoss(OracleForward(arch, probe, preferred) -
                                       OracleForward(arch, probe, dispreferred));
    *probe_coords[i] = saved;
    const double numeric = (up - down) / (2 * h);
    const double a = *grad_coords[i];
    const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
    result.max_relative_error = std::max(result.max_relative_error, err);
  }
  return result;
}

// Smallest |pre-activation| over hidden units for one input; ReLU is not
// differentiable at zero, so finite differences need clearance from it.
inline double KinkClearance(const HeadArchitecture& arch, const HeadParameters& params,
                            const std::vector<double>& x) {
  Eigen::MatrixXd in = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  auto trace = ForwardWithTrace(arch, params, in);
  double m = std::numeric_limits<double>::infinity();
  for (const auto& z : trace.preactivation) m = std::min(m, z.cwiseAbs().minCoeff());
  return m;
}

struct RandomHeadCase {
  HeadArchitecture arch;
  HeadParameters params;
  std::vector<double> preferred;
  std::vector<double> dispreferred;
};

// Random architecture with hidden widths in [min_width, max_width] and input
// dimension in [min_dim, max_dim]; inputs are redrawn until every ReLU
// pre-activation is at least 1e-3 away from zero.
inline RandomHeadCase RandomHead(std::mt19937_64& rng, int min_width = 2, int max_width = 64,
                                 int min_dim = 4, int max_dim = 32) {
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng() % static_cast<uint64_t>(hi - lo + 1)); };
  RandomHeadCase c;
  c.arch.layer_widths = {pick(min_dim, max_dim)};
  const int hidden = pick(1, 4);
  for (int i = 0; i < hidden; ++i) c.arch.layer_widths.push_back(pick(min_width, max_width));
  c.arch.dropout_rates.clear();
  const Activation kinds[] = {Activation::kRelu, Activation::kGelu, Activation::kTanh};
  c.arch.activation = kinds[rng() % 3];
  c.params = HeadParameters::KaimingUniform(c.arch, rng());
  std::normal_distribution<double> normal;
  for (auto& layer : c.params.layers) {
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = 0.1 * normal(rng);
  }
  auto draw = [&] {
    for (int attempt = 0;; ++attempt) {
      std::vector<double> x(static_cast<size_t>(c.arch.input_dim()));
      for (auto& v : x) v = normal(rng);
      if (c.arch.activation != Activation::kRelu || KinkClearance(c.arch, c.params, x) > 1e-3 ||
          attempt > 1000) {
        return x;
      }
    }
  };
  c.preferred = draw();
  c.dispreferred = draw();
  return c;
}

}  // namespace alignsift::testing

#endif  // ALIGNSIFT_TESTS_HEAD_ORACLES_H_
