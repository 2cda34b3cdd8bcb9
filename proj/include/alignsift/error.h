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

#ifndef ALIGNSIFT_ERROR_H_
#define ALIGNSIFT_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace alignsift {

// Every failure a module can report. ErrorName() returns the identifier that
// the CLI and the HTTP service surface verbatim.
enum class ErrorCode {
  kInvalidArgument,
  kIo,
  // preference store
  kUnknownImage,
  kUnknownCaption,
  kDuplicateImage,
  kDuplicateCaption,
  kDuplicateRecordId,
  kRankingNotPartition,
  kInvalidEntry,
  kCorruptLog,
  kSchemaVersionMismatch,
  // pair generation
  kDegenerateRecord,
  kEmptyStore,
  // embeddings
  kBadMagic,
  kDimensionMismatch,
  kTruncatedShard,
  kNonFiniteVector,
  kDuplicateKey,
  kChecksumMismatch,
  kEndpointUnreachable,
  kPartialResponse,
  // reward head
  kNonFiniteActivation,
  kNonFiniteLoss,
  kMissingEmbedding,
  kDivergedTraining,
  kIncompatibleArchitecture,
  kCorruptCheckpoint,
  // compressor / evaluator
  kNonFiniteScore,
  kEmptyTable,
  kMissingPair,
  kEmptyEvalSet,
  kZeroVector,
  // annotation service
  kNoTasksRemaining,
  kUnknownLabeler,
  kLeaseExpired,
  kUnknownTask,
};

std::string_view ErrorName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }
  std::string_view name() const { return ErrorName(code_); }

 private:
  ErrorCode code_;
};

}  // namespace alignsift

#endif  // ALIGNSIFT_ERROR_H_
