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

// Dispenses ranking tasks to labelers and records their submissions.
//
// There is one task per image with at least two candidates. A task is open
// to a labeler until it holds `replication` records or that labeler has
// annotated it. Leases are exclusive and expire after a TTL, after which the
// task returns to the pool. Every operation is linearized by one mutex, and
// the store fsyncs each record before the acknowledgment is returned.

#ifndef ALIGNSIFT_ANNOTATION_SERVICE_H_
#define ALIGNSIFT_ANNOTATION_SERVICE_H_

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "alignsift/preference_store.h"

namespace alignsift {

inline constexpr int kApiSchemaVersion = 1;

struct RubricCriterion {
  std::string key;
  std::string title;
  std::string guidance;
};

// accuracy, completeness, vividness, context.
const std::vector<RubricCriterion>& Rubric();

// Milliseconds since the Unix epoch.
using Clock = std::function<int64_t()>;
int64_t SystemClockMs();

struct Lease {
  std::string task_id;
  std::string labeler_id;
  int64_t expires_ms = 0;

  bool operator==(const Lease&) const = default;
};

struct AnnotationTask {
  std::string task_id;
  std::string image_id;
  std::string uri;
  std::vector<CaptionCandidate> captions;  // presentation order
  uint64_t shuffle_seed = 0;
  Lease lease;
};

struct SubmissionPayload {
  std::string task_id;
  std::string labeler_id;
  std::vector<RankGroup> ranking;
  std::map<std::string, CriteriaAnnotation> criteria;
};

struct SubmitAck {
  std::string record_id;
  bool duplicate = false;
};

struct Progress {
  uint64_t total_tasks = 0;
  uint64_t completed_tasks = 0;
  uint64_t annotated = 0;  // accepted submissions
  uint64_t leased = 0;     // unexpired leases
  std::map<std::string, uint64_t> per_labeler;

  bool operator==(const Progress&) const = default;
};

std::string TaskIdFor(std::string_view image_id);
// Stable across retries, so a resubmission maps onto the stored record.
std::string RecordIdFor(std::string_view image_id, std::string_view labeler_id);
// Fisher-Yates driven by mt19937_64 seeded with FNV-1a of the task id.
uint64_t ShuffleSeedFor(std::string_view task_id);
std::vector<CaptionCandidate> ShuffleCaptions(std::vector<CaptionCandidate> captions,
                                              uint64_t seed);

struct ServiceOptions {
  std::chrono::milliseconds lease_ttl = std::chrono::minutes(30);
  size_t replication = 1;
  std::vector<std::string> labelers;
  // Accept any well-formed labeler id without prior registration.
  bool open_registration = false;
  // Leases are mirrored here so a restart does not hand out a leased task.
  std::optional<std::filesystem::path> lease_path;
};

class AnnotationService {
 public:
  AnnotationService(PreferenceStore& store, ServiceOptions options,
                    Clock clock = SystemClockMs);

  void RegisterLabeler(std::string_view labeler_id);

  // Returns the labeler's current unexpired lease if one exists, otherwise
  // leases the first open task in store order. Throws UnknownLabeler or
  // NoTasksRemaining.
  AnnotationTask NextTask(std::string_view labeler_id);

  // Throws UnknownTask, UnknownLabeler, LeaseExpired, or the store's
  // validation errors. A retry of an accepted submission returns the
  // original record id with duplicate set.
  SubmitAck Submit(const SubmissionPayload& payload);

  Progress GetProgress() const;
  std::vector<Lease> ActiveLeases() const;
  std::optional<ImageEntry> FindImage(std::string_view image_id) const;

 private:
  void RequireLabeler(std::string_view labeler_id) const;
  std::optional<std::string> ImageOfTask(std::string_view task_id) const;
  bool Active(const Lease& lease, int64_t now) const { return now < lease.expires_ms; }
  AnnotationTask MakeTask(const PreferenceDataset& data, const Lease& lease) const;
  void PruneLeases(int64_t now);
  void PersistLeases() const;
  void LoadLeases();

  mutable std::mutex mu_;
  PreferenceStore& store_;
  ServiceOptions options_;
  Clock clock_;
  std::set<std::string, std::less<>> labelers_;
  std::map<std::string, Lease, std::less<>> leases_;  // by task id
};

struct ServiceConfig {
  std::filesystem::path store_path;
  std::string host = "127.0.0.1";
  int port = 8080;
  ServiceOptions options;
  // Local image files are resolved against this directory.
  std::optional<std::filesystem::path> image_root;
  // Static files (the browser client) are served from here.
  std::optional<std::filesystem::path> ui_dir;

  // Canonical JSON; unknown keys are rejected. Keys present in the file
  // override `base`.
  static ServiceConfig FromFile(const std::filesystem::path& path, ServiceConfig base);
  static ServiceConfig FromFile(const std::filesystem::path& path) { return FromFile(path, {}); }
  // Reads ALIGNSIFT_SERVE_* variables. Apply before FromFile so that file
  // values win.
  void ApplyEnvironment();
};

// HTTP+JSON front end. Every response body carries schema_version; errors
// are {"error": <name>, "message": ..., "schema_version": 1}.
//
//   GET  /task?labeler=ID    200 task | 403 UnknownLabeler | 404 NoTasksRemaining
//   POST /submit             200 ack  | 409 LeaseExpired | 404 UnknownTask | 422 invalid
//   GET  /progress           200 counts
//   GET  /image/{id}         302 to remote uris, file bytes under image_root
class AnnotationServer {
 public:
  AnnotationServer(AnnotationService& service, const ServiceConfig& config);
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  // Binds to config.port (0 picks a free port) and returns the bound port.
  int Bind();
  // Blocks until Stop().
  void Serve();
  // Blocks until Serve() is accepting connections.
  void WaitUntilReady();
  void Stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string TaskToJson(const AnnotationTask& task);
SubmissionPayload SubmissionFromJson(std::string_view body);
std::string SubmissionToJson(const SubmissionPayload& payload);
std::string ProgressToJson(const Progress& progress);

}  // namespace alignsift

#endif  // ALIGNSIFT_ANNOTATION_SERVICE_H_
