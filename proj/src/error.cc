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

#include "alignsift/error.h"

namespace alignsift {

std::string_view ErrorName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kUnknownImage: return "UnknownImage";
    case ErrorCode::kUnknownCaption: return "UnknownCaption";
    case ErrorCode::kDuplicateImage: return "DuplicateImage";
    case ErrorCode::kDuplicateCaption: return "DuplicateCaption";
    case ErrorCode::kDuplicateRecordId: return "DuplicateRecordId";
    case ErrorCode::kRankingNotPartition: return "RankingNotPartition";
    case ErrorCode::kInvalidEntry: return "InvalidEntry";
    case ErrorCode::kCorruptLog: return "CorruptLog";
    case ErrorCode::kSchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorCode::kDegenerateRecord: return "DegenerateRecord";
    case ErrorCode::kEmptyStore: return "EmptyStore";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kTruncatedShard: return "TruncatedShard";
    case ErrorCode::kNonFiniteVector: return "NonFiniteVector";
    case ErrorCode::kDuplicateKey: return "DuplicateKey";
    case ErrorCode::kChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::kEndpointUnreachable: return "EndpointUnreachable";
    case ErrorCode::kPartialResponse: return "PartialResponse";
    case ErrorCode::kNonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kMissingEmbedding: return "MissingEmbedding";
    case ErrorCode::kDivergedTraining: return "DivergedTraining";
    case ErrorCode::kIncompatibleArchitecture: return "IncompatibleArchitecture";
    case ErrorCode::kCorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::kNonFiniteScore: return "NonFiniteScore";
    case ErrorCode::kEmptyTable: return "EmptyTable";
    case ErrorCode::kMissingPair: return "MissingPair";
    case ErrorCode::kEmptyEvalSet: return "EmptyEvalSet";
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kNoTasksRemaining: return "NoTasksRemaining";
    case ErrorCode::kUnknownLabeler: return "UnknownLabeler";
    case ErrorCode::kLeaseExpired: return "LeaseExpired";
    case ErrorCode::kUnknownTask: return "UnknownTask";
  }
  return "Unknown";
}

}  // namespace alignsift
