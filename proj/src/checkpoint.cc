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
#include <cstring>
#include <sstream>

#include "alignsift/error.h"
#include "alignsift/trainer.h"
#include "alignsift/util.h"
#include "json.hpp"

namespace alignsift {
namespace {

using nlohmann::json;

constexpr char kCheckpointMagic[8] = {'A', 'L', 'S', 'F', 'C', 'K', 'P', '1'};

Error Corrupt(const std::string& what) {
  return Error(ErrorCode::kCorruptCheckpoint, what);
}

json ArchitectureToJson(const HeadArchitecture& arch) {
  return json{{"layer_widths", arch.layer_widths},
              {"dropout_rates", arch.dropout_rates},
              {"activation", ToString(arch.activation)}};
}

HeadArchitecture ArchitectureFromJson(const json& j) {
  HeadArchitecture arch;
  arch.layer_widths = j.at("layer_widths").get<std::vector<int>>();
  arch.dropout_rates = j.at("dropout_rates").get<std::vector<double>>();
  arch.activation = ParseActivation(j.at("activation").get<std::string>());
  return arch;
}

json ConfigToJson(const TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_epsilon", c.adam_epsilon},
              {"weight_decay", c.weight_decay},
              {"batch_size", c.batch_size},
              {"total_updates", c.total_updates},
              {"seed", c.seed},
              {"dropout_enabled", c.dropout_enabled},
              {"shared_dropout_mask", c.shared_dropout_mask},
              {"per_image_weighting", c.per_image_weighting},
              {"log_every", c.log_every}};
}

TrainConfig ConfigFromJson(const json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_epsilon = j.at("adam_epsilon").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.batch_size = j.at("batch_size").get<size_t>();
  c.total_updates = j.at("total_updates").get<uint64_t>();
  c.seed = j.at("seed").get<uint64_t>();
  c.dropout_enabled = j.at("dropout_enabled").get<bool>();
  c.shared_dropout_mask = j.at("shared_dropout_mask").get<bool>();
  c.per_image_weighting = j.at("per_image_weighting").get<bool>();
  c.log_every = j.at("log_every").get<uint64_t>();
  return c;
}

void AppendParameters(std::string& out, const HeadParameters& p) {
  for (const auto& layer : p.layers) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        double v = layer.weight(r, c);
        out.append(reinterpret_cast<const char*>(&v), sizeof(v));
      }
    }
    out.append(reinterpret_cast<const char*>(layer.bias.data()),
               static_cast<size_t>(layer.bias.size()) * sizeof(double));
  }
}

void ReadParameters(std::string_view& in, HeadParameters& p) {
  auto take = [&in]() {
    double v;
    std::memcpy(&v, in.data(), sizeof(v));
    in.remove_prefix(sizeof(v));
    return v;
  };
  for (auto& layer : p.layers) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = take();
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = take();
  }
}

}  // namespace

void TrainConfig::Validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    // Zero is accepted so a run can be replayed without moving the weights.
    throw Error(ErrorCode::kInvalidArgument, "learning rate must be finite and non-negative");
  }
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch size must be >= 1");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "Adam betas must lie in (0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw Error(ErrorCode::kInvalidArgument, "Adam epsilon must be > 0");
  if (!(weight_decay >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "weight decay must be >= 0");
  if (log_every < 1) throw Error(ErrorCode::kInvalidArgument, "log interval must be >= 1");
}

Checkpoint Checkpoint::Initialize(const HeadArchitecture& arch, const TrainConfig& config) {
  arch.Validate();
  config.Validate();
  Checkpoint c;
  c.architecture = arch;
  c.config = config;
  c.parameters = HeadParameters::KaimingUniform(arch, config.seed);
  return c;
}

std::string SerializeCheckpoint(const Checkpoint& ckpt) {
  const bool has_moments = !ckpt.first_moment.layers.empty();
  json header{{"format", "alignsift-checkpoint"},
              {"architecture", ArchitectureToJson(ckpt.architecture)},
              {"config", ConfigToJson(ckpt.config)},
              {"update_count", ckpt.update_count},
              {"init_scheme", ckpt.init_scheme},
              {"parameter_count", ckpt.parameters.parameter_count()},
              {"has_moments", has_moments}};
  const std::string header_text = header.dump();

  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  uint32_t version = kCheckpointFormatVersion;
  uint64_t header_len = header_text.size();
  out.append(reinterpret_cast<const char*>(&version), sizeof(version));
  out.append(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out += header_text;
  AppendParameters(out, ckpt.parameters);
  if (has_moments) {
    AppendParameters(out, ckpt.first_moment);
    AppendParameters(out, ckpt.second_moment);
  }
  uint64_t checksum = Fnv64Of(out);
  out.append(reinterpret_cast<const char*>(&checksum), sizeof(checksum));
  return out;
}

Checkpoint ParseCheckpoint(std::string_view bytes) {
  constexpr size_t kFixed = sizeof(kCheckpointMagic) + sizeof(uint32_t) + sizeof(uint64_t);
  if (bytes.size() < kFixed + sizeof(uint64_t)) throw Corrupt("checkpoint too short");
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw Corrupt("not a checkpoint file");
  }
  uint64_t stored_checksum;
  std::memcpy(&stored_checksum, bytes.data() + bytes.size() - sizeof(uint64_t), sizeof(uint64_t));
  std::string_view body = bytes.substr(0, bytes.size() - sizeof(uint64_t));
  if (Fnv64Of(body) != stored_checksum) throw Corrupt("checkpoint checksum mismatch");

  uint32_t version;
  uint64_t header_len;
  std::memcpy(&version, body.data() + 8, sizeof(version));
  std::memcpy(&header_len, body.data() + 12, sizeof(header_len));
  if (version != kCheckpointFormatVersion) {
    throw Corrupt("unsupported checkpoint version " + std::to_string(version));
  }
  if (header_len > body.size() - kFixed) throw Corrupt("checkpoint header overruns file");

  Checkpoint ckpt;
  bool has_moments = false;
  try {
    json header = json::parse(body.substr(kFixed, header_len));
    ckpt.architecture = ArchitectureFromJson(header.at("architecture"));
    ckpt.config = ConfigFromJson(header.at("config"));
    ckpt.update_count = header.at("update_count").get<uint64_t>();
    ckpt.init_scheme = header.at("init_scheme").get<std::string>();
    has_moments = header.at("has_moments").get<bool>();
    ckpt.architecture.Validate();
  } catch (const json::exception& e) {
    throw Corrupt(std::string("unreadable checkpoint header: ") + e.what());
  } catch (const Error& e) {
    throw Corrupt(std::string("invalid checkpoint header: ") + e.what());
  }

  std::string_view payload = body.substr(kFixed + header_len);
  ckpt.parameters = HeadParameters::Zeros(ckpt.architecture);
  const size_t block = ckpt.parameters.parameter_count() * sizeof(double);
  if (payload.size() != block * (has_moments ? 3 : 1)) {
    throw Corrupt("checkpoint payload has " + std::to_string(payload.size()) +
                  " bytes, header implies " + std::to_string(block * (has_moments ? 3 : 1)));
  }
  ReadParameters(payload, ckpt.parameters);
  if (has_moments) {
    ckpt.first_moment = HeadParameters::Zeros(ckpt.architecture);
    ckpt.second_moment = HeadParameters::Zeros(ckpt.architecture);
    ReadParameters(payload, ckpt.first_moment);
    ReadParameters(payload, ckpt.second_moment);
  }
  return ckpt;
}

void SaveCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  WriteFileAtomic(path, SerializeCheckpoint(ckpt));
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  return ParseCheckpoint(ReadFile(path));
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path, const HeadArchitecture& expected) {
  Checkpoint ckpt = LoadCheckpoint(path);
  if (!(ckpt.architecture == expected)) {
    throw Error(ErrorCode::kIncompatibleArchitecture,
                path.string() + ": stored architecture differs from the requested one");
  }
  return ckpt;
}

std::string CheckpointHash(const Checkpoint& ckpt) {
  return Hex64(Fnv64Of(SerializeCheckpoint(ckpt)));
}

}  // namespace alignsift
