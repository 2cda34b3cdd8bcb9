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

// Synthetic datasets with a known ground truth. A hidden unit direction w
// defines the true alignment score of an embedding e as w·e.

#ifndef ALIGNSIFT_SYNTHETIC_H_
#define ALIGNSIFT_SYNTHETIC_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "alignsift/embedding_io.h"
#include "alignsift/preference_store.h"
#include "alignsift/trainer.h"

namespace alignsift {

std::vector<double> HiddenDirection(uint32_t dimension, uint64_t seed);

struct SyntheticPreferenceConfig {
  size_t n_images = 500;
  size_t captions_per_image = 8;
  uint32_t dimension = 32;
  // Minimum gap between the hidden scores of two captions of one image.
  double margin = 0.1;
  // Share of the unit per-dimension noise variance common to every caption
  // of an image, as the image half of a fused embedding would be.
  double shared_image_variance = 0.5;
  uint64_t seed = kDefaultSeed;
  // Rankings become uniform random permutations, independent of the
  // embeddings.
  bool random_labels = false;
};

struct SyntheticPreferences {
  PreferenceDataset store;
  // Fused embeddings keyed by CaptionKey(image, caption).
  std::vector<EmbeddingRecord> embeddings;
  std::vector<double> direction;
};

// Each caption embedding is Gaussian noise orthogonal to w (an image part
// plus a caption part, unit variance per dimension in total) plus s·w. The
// per-image hidden scores s are resampled until every gap is at least the
// margin. Rankings are total orders by s (or random, for the control).
SyntheticPreferences GenerateSyntheticPreferences(const SyntheticPreferenceConfig& config);

struct MixedCorpusConfig {
  size_t n_pairs = 2000;
  double aligned_fraction = 0.5;
  // Corrupted pairs are shifted by -corruption_shift·w.
  double corruption_shift = 4.0;
  uint64_t seed = kDefaultSeed + 1;
};

struct MixedCorpus {
  std::vector<EmbeddingRecord> embeddings;  // keyed by pair id
  std::vector<bool> aligned;
  // "pair_id<TAB>label" lines, usable as an apply listing.
  std::vector<std::string> listing;
};

MixedCorpus GenerateMixedCorpus(const MixedCorpusConfig& config,
                                std::span<const double> direction);

}  // namespace alignsift

#endif  // ALIGNSIFT_SYNTHETIC_H_
