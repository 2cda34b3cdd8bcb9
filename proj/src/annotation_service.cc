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

#include "alignsift/annotation_service.h"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <random>

#include "alignsift/error.h"
#include "alignsift/util.h"
#include "httplib.h"
#include "json.hpp"

namespace alignsift {
namespace {

using nlohmann::json;

constexpr std::string_view kTaskPrefix = "task-";

json CriteriaToJson(const CriteriaAnnotation& c) {
  return json{{"accuracy", c.accuracy},
              {"completeness", c.completeness},
              {"vividness", c.vividness},
              {"context", c.context}};
}

// Criteria are advisory, so absent fields read as "not met".
CriteriaAnnotation CriteriaFromJson(const json& j) {
  CriteriaAnnotation c;
  c.accuracy = j.value("accuracy", false);
  c.completeness = j.value("completeness", 0);
  c.vividness = j.value("vividness", 0);
  c.context = j.value("context", 0);
  return c;
}

void RequireSchema(const json& j) {
  if (j.contains("schema_version") && j.at("schema_version") != kApiSchemaVersion) {
    throw Error(ErrorCode::kSchemaVersionMismatch,
                "payload schema_version " + j.at("schema_version").dump() + ", expected " +
                    std::to_string(kApiSchemaVersion));
  }
}

int HttpStatusFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownLabeler:
      return 403;
    case ErrorCode::kNoTasksRemaining:
    case ErrorCode::kUnknownTask:
    case ErrorCode::kUnknownImage:
      return 404;
    case ErrorCode::kLeaseExpired:
      return 409;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kSchemaVersionMismatch:
      return 400;
    case ErrorCode::kIo:
      return 500;
    default:
      return 422;
  }
}

std::string ErrorBody(std::string_view name, std::string_view message) {
  return json{{"error", name}, {"message", message}, {"schema_version", kApiSchemaVersion}}.dump();
}

std::string ContentTypeFor(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".png") return "image/png";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  return "application/octet-stream";
}

}  // namespace

const std::vector<RubricCriterion>& Rubric() {
  static const std::vector<RubricCriterion> kRubric = {
      {"accuracy", "Accuracy", "True when nothing in the caption contradicts the image."},
      {"completeness", "Completeness",
       "How many of the image's main subjects the caption names. 0 none, 1 some, 2 all."},
      {"vividness", "Vividness",
       "How much descriptive detail the caption gives about those subjects. 0 none, 1 some, "
       "2 rich."},
      {"context", "Context",
       "How well the caption conveys the setting of the scene beyond its subjects. 0 not at all, "
       "1 partly, 2 clearly."},
  };
  return kRubric;
}

int64_t SystemClockMs() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string TaskIdFor(std::string_view image_id) {
  return std::string(kTaskPrefix) + std::string(image_id);
}

std::string RecordIdFor(std::string_view image_id, std::string_view labeler_id) {
  Fnv64 h;
  h.Update(image_id);
  h.Update("\0", 1);
  h.Update(labeler_id);
  return "rec-" + Hex64(h.digest());
}

uint64_t ShuffleSeedFor(std::string_view task_id) { return Fnv64Of(task_id); }

std::vector<CaptionCandidate> ShuffleCaptions(std::vector<CaptionCandidate> captions,
                                              uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (size_t i = captions.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng() % i);
    std::swap(captions[i - 1], captions[j]);
  }
  return captions;
}

// --- service -------------------------------------------------------------------

AnnotationService::AnnotationService(PreferenceStore& store, ServiceOptions options, Clock clock)
    : store_(store), options_(std::move(options)), clock_(std::move(clock)) {
  if (options_.replication == 0) {
    throw Error(ErrorCode::kInvalidArgument, "replication must be at least 1");
  }
  if (options_.lease_ttl.count() <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "lease TTL must be positive");
  }
  for (const auto& id : options_.labelers) RegisterLabeler(id);
  LoadLeases();
}

void AnnotationService::RegisterLabeler(std::string_view labeler_id) {
  RequireValidId(labeler_id, "labeler id");
  std::lock_guard lock(mu_);
  labelers_.emplace(labeler_id);
}

void AnnotationService::RequireLabeler(std::string_view labeler_id) const {
  if (options_.open_registration && IsValidId(labeler_id)) return;
  if (!labelers_.count(labeler_id)) {
    throw Error(ErrorCode::kUnknownLabeler, "labeler '" + std::string(labeler_id) + "' is not registered");
  }
}

std::optional<std::string> AnnotationService::ImageOfTask(std::string_view task_id) const {
  if (task_id.substr(0, kTaskPrefix.size()) != kTaskPrefix) return std::nullopt;
  std::string image_id(task_id.substr(kTaskPrefix.size()));
  bool known = store_.Read([&](const PreferenceDataset& d) {
    return d.FindImage(image_id) != nullptr && d.CaptionsOf(image_id).size() >= kMinCaptionsPerImage;
  });
  if (!known) return std::nullopt;
  return image_id;
}

AnnotationTask AnnotationService::MakeTask(const PreferenceDataset& data, const Lease& lease) const {
  AnnotationTask task;
  task.task_id = lease.task_id;
  task.image_id = lease.task_id.substr(kTaskPrefix.size());
  task.uri = data.FindImage(task.image_id)->uri;
  task.shuffle_seed = ShuffleSeedFor(task.task_id);
  auto captions = data.CaptionsOf(task.image_id);
  task.captions = ShuffleCaptions({captions.begin(), captions.end()}, task.shuffle_seed);
  task.lease = lease;
  return task;
}

void AnnotationService::PruneLeases(int64_t now) {
  bool changed = false;
  for (auto it = leases_.begin(); it != leases_.end();) {
    if (!Active(it->second, now)) {
      it = leases_.erase(it);
      changed = true;
    } else {
      ++it;
    }
  }
  if (changed) PersistLeases();
}

AnnotationTask AnnotationService::NextTask(std::string_view labeler_id) {
  std::lock_guard lock(mu_);
  RequireLabeler(labeler_id);
  const int64_t now = clock_();
  PruneLeases(now);
  return store_.Read([&](const PreferenceDataset& data) {
    for (const auto& [task_id, lease] : leases_) {
      if (lease.labeler_id == labeler_id) return MakeTask(data, lease);
    }
    for (const auto& image : data.images()) {
      if (data.CaptionsOf(image.image_id).size() < kMinCaptionsPerImage) continue;
      if (data.RecordCountFor(image.image_id) >= options_.replication) continue;
      if (data.FindRecord(image.image_id, labeler_id)) continue;
      std::string task_id = TaskIdFor(image.image_id);
      if (leases_.count(task_id)) continue;
      Lease lease{task_id, std::string(labeler_id), now + options_.lease_ttl.count()};
      leases_.emplace(task_id, lease);
      PersistLeases();
      return MakeTask(data, lease);
    }
    throw Error(ErrorCode::kNoTasksRemaining,
                "no open tasks for labeler '" + std::string(labeler_id) + "'");
  });
}

SubmitAck AnnotationService::Submit(const SubmissionPayload& payload) {
  std::lock_guard lock(mu_);
  RequireLabeler(payload.labeler_id);
  auto image_id = ImageOfTask(payload.task_id);
  if (!image_id) throw Error(ErrorCode::kUnknownTask, "unknown task '" + payload.task_id + "'");

  if (auto existing = store_.Read([&](const PreferenceDataset& d) {
        const PreferenceRecord* r = d.FindRecord(*image_id, payload.labeler_id);
        return r ? std::optional<std::string>(r->record_id) : std::nullopt;
      })) {
    return {*existing, true};
  }

  const int64_t now = clock_();
  auto lease = leases_.find(payload.task_id);
  if (lease == leases_.end() || lease->second.labeler_id != payload.labeler_id ||
      !Active(lease->second, now)) {
    throw Error(ErrorCode::kLeaseExpired, "labeler '" + payload.labeler_id +
                                              "' holds no active lease on " + payload.task_id);
  }

  PreferenceRecord record;
  record.record_id = RecordIdFor(*image_id, payload.labeler_id);
  record.image_id = *image_id;
  record.labeler_id = payload.labeler_id;
  record.ranking = payload.ranking;
  record.criteria = payload.criteria;
  record.timestamp_ms = now;
  store_.AppendRecord(std::move(record));

  leases_.erase(lease);
  PersistLeases();
  return {RecordIdFor(*image_id, payload.labeler_id), false};
}

Progress AnnotationService::GetProgress() const {
  std::lock_guard lock(mu_);
  const int64_t now = clock_();
  Progress p;
  store_.Read([&](const PreferenceDataset& data) {
    for (const auto& image : data.images()) {
      if (data.CaptionsOf(image.image_id).size() < kMinCaptionsPerImage) continue;
      ++p.total_tasks;
      if (data.RecordCountFor(image.image_id) >= options_.replication) ++p.completed_tasks;
    }
    for (const auto& r : data.records()) {
      ++p.annotated;
      ++p.per_labeler[r.labeler_id];
    }
    return 0;
  });
  for (const auto& [task_id, lease] : leases_) p.leased += Active(lease, now) ? 1 : 0;
  return p;
}

std::vector<Lease> AnnotationService::ActiveLeases() const {
  std::lock_guard lock(mu_);
  const int64_t now = clock_();
  std::vector<Lease> out;
  for (const auto& [task_id, lease] : leases_) {
    if (Active(lease, now)) out.push_back(lease);
  }
  return out;
}

std::optional<ImageEntry> AnnotationService::FindImage(std::string_view image_id) const {
  return store_.Read([&](const PreferenceDataset& d) -> std::optional<ImageEntry> {
    const ImageEntry* e = d.FindImage(image_id);
    if (!e) return std::nullopt;
    return *e;
  });
}

void AnnotationService::PersistLeases() const {
  if (!options_.lease_path) return;
  json leases = json::array();
  for (const auto& [task_id, lease] : leases_) {
    leases.push_back(
        {{"expires_ms", lease.expires_ms}, {"labeler_id", lease.labeler_id}, {"task_id", task_id}});
  }
  WriteFileAtomic(*options_.lease_path,
                  json{{"leases", leases}, {"schema_version", kApiSchemaVersion}}.dump() + "\n");
}

void AnnotationService::LoadLeases() {
  if (!options_.lease_path || !std::filesystem::exists(*options_.lease_path)) return;
  json j;
  try {
    j = json::parse(ReadFile(*options_.lease_path));
    RequireSchema(j);
    for (const auto& l : j.at("leases")) {
      Lease lease{l.at("task_id").get<std::string>(), l.at("labeler_id").get<std::string>(),
                  l.at("expires_ms").get<int64_t>()};
      auto image_id = ImageOfTask(lease.task_id);
      if (!image_id) continue;
      bool done = store_.Read([&](const PreferenceDataset& d) {
        return d.FindRecord(*image_id, lease.labeler_id) != nullptr;
      });
      if (!done) leases_.emplace(lease.task_id, lease);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptLog, options_.lease_path->string() + ": " + e.what());
  }
}

// --- JSON payloads -------------------------------------------------------------

std::string TaskToJson(const AnnotationTask& task) {
  json captions = json::array();
  for (const auto& c : task.captions) {
    captions.push_back({{"caption_id", c.caption_id}, {"text", c.text}});
  }
  json rubric = json::array();
  for (const auto& r : Rubric()) {
    rubric.push_back({{"guidance", r.guidance}, {"key", r.key}, {"title", r.title}});
  }
  return json{
      {"captions", captions},
      {"image_id", task.image_id},
      {"image_url", "/image/" + task.image_id},
      {"lease", {{"expires_ms", task.lease.expires_ms}, {"labeler_id", task.lease.labeler_id}}},
      {"rubric", rubric},
      {"schema_version", kApiSchemaVersion},
      {"shuffle_seed", task.shuffle_seed},
      {"task_id", task.task_id},
      {"uri", task.uri},
  }.dump();
}

SubmissionPayload SubmissionFromJson(std::string_view body) {
  try {
    json j = json::parse(body);
    RequireSchema(j);
    SubmissionPayload p;
    p.task_id = j.at("task_id").get<std::string>();
    p.labeler_id = j.at("labeler_id").get<std::string>();
    p.ranking = j.at("ranking").get<std::vector<RankGroup>>();
    if (j.contains("criteria")) {
      for (const auto& [cid, cj] : j.at("criteria").items()) p.criteria.emplace(cid, CriteriaFromJson(cj));
    }
    return p;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed submission: ") + e.what());
  }
}

std::string SubmissionToJson(const SubmissionPayload& p) {
  json criteria = json::object();
  for (const auto& [cid, c] : p.criteria) criteria[cid] = CriteriaToJson(c);
  return json{{"criteria", criteria},
              {"labeler_id", p.labeler_id},
              {"ranking", p.ranking},
              {"schema_version", kApiSchemaVersion},
              {"task_id", p.task_id}}
      .dump();
}

std::string ProgressToJson(const Progress& p) {
  return json{{"annotated", p.annotated},
              {"completed_tasks", p.completed_tasks},
              {"leased", p.leased},
              {"per_labeler", p.per_labeler},
              {"schema_version", kApiSchemaVersion},
              {"total_tasks", p.total_tasks}}
      .dump();
}

// --- configuration -------------------------------------------------------------

ServiceConfig ServiceConfig::FromFile(const std::filesystem::path& path, ServiceConfig base) {
  ServiceConfig c = std::move(base);
  try {
    json j = json::parse(ReadFile(path));
    for (const auto& [key, value] : j.items()) {
      if (key == "store") c.store_path = value.get<std::string>();
      else if (key == "host") c.host = value.get<std::string>();
      else if (key == "port") c.port = value.get<int>();
      else if (key == "lease_ttl_seconds") c.options.lease_ttl = std::chrono::seconds(value.get<int64_t>());
      else if (key == "replication") c.options.replication = value.get<size_t>();
      else if (key == "labelers") c.options.labelers = value.get<std::vector<std::string>>();
      else if (key == "open_registration") c.options.open_registration = value.get<bool>();
      else if (key == "lease_file") c.options.lease_path = value.get<std::string>();
      else if (key == "image_root") c.image_root = value.get<std::string>();
      else if (key == "ui_dir") c.ui_dir = value.get<std::string>();
      else throw Error(ErrorCode::kInvalidArgument, path.string() + ": unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
  return c;
}

void ServiceConfig::ApplyEnvironment() {
  auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  if (auto v = env("ALIGNSIFT_SERVE_STORE")) store_path = *v;
  if (auto v = env("ALIGNSIFT_SERVE_HOST")) host = *v;
  if (auto v = env("ALIGNSIFT_SERVE_PORT")) port = std::stoi(*v);
  if (auto v = env("ALIGNSIFT_SERVE_LEASE_TTL_SECONDS")) {
    options.lease_ttl = std::chrono::seconds(std::stoll(*v));
  }
  if (auto v = env("ALIGNSIFT_SERVE_REPLICATION")) options.replication = std::stoul(*v);
}

// --- HTTP ----------------------------------------------------------------------

struct AnnotationServer::Impl {
  AnnotationService& service;
  ServiceConfig config;
  httplib::Server server;

  template <typename Fn>
  void Guard(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      res.status = HttpStatusFor(e.code());
      res.set_content(ErrorBody(e.name(), e.what()), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(ErrorBody("InternalError", e.what()), "application/json");
    }
  }

  void ServeImage(const std::string& image_id, httplib::Response& res) {
    auto image = service.FindImage(image_id);
    if (!image) throw Error(ErrorCode::kUnknownImage, "unknown image '" + image_id + "'");
    const std::string& uri = image->uri;
    if (uri.rfind("http://", 0) == 0 || uri.rfind("https://", 0) == 0) {
      res.set_redirect(uri);
      return;
    }
    std::string local = uri.rfind("file://", 0) == 0 ? uri.substr(7) : uri;
    if (!config.image_root || local.empty()) {
      throw Error(ErrorCode::kUnknownImage, "image '" + image_id + "' has no servable uri");
    }
    std::filesystem::path root = std::filesystem::weakly_canonical(*config.image_root);
    std::filesystem::path file = std::filesystem::weakly_canonical(root / local);
    auto rel = file.lexically_relative(root);
    if (rel.empty() || *rel.begin() == "..") {
      throw Error(ErrorCode::kUnknownImage, "image '" + image_id + "' resolves outside image_root");
    }
    if (!std::filesystem::is_regular_file(file)) {
      throw Error(ErrorCode::kUnknownImage, "image file for '" + image_id + "' is missing");
    }
    res.set_content(ReadFile(file), ContentTypeFor(file));
  }

  void Install() {
    server.Get("/task", [this](const httplib::Request& req, httplib::Response& res) {
      Guard(res, [&] {
        if (!req.has_param("labeler")) {
          throw Error(ErrorCode::kInvalidArgument, "missing 'labeler' query parameter");
        }
        res.set_content(TaskToJson(service.NextTask(req.get_param_value("labeler"))),
                        "application/json");
      });
    });
    server.Post("/submit", [this](const httplib::Request& req, httplib::Response& res) {
      Guard(res, [&] {
        SubmitAck ack = service.Submit(SubmissionFromJson(req.body));
        res.set_content(json{{"duplicate", ack.duplicate},
                             {"record_id", ack.record_id},
                             {"schema_version", kApiSchemaVersion}}
                            .dump(),
                        "application/json");
      });
    });
    server.Get("/progress", [this](const httplib::Request&, httplib::Response& res) {
      Guard(res, [&] { res.set_content(ProgressToJson(service.GetProgress()), "application/json"); });
    });
    server.Get("/image/:id", [this](const httplib::Request& req, httplib::Response& res) {
      Guard(res, [&] { ServeImage(req.path_params.at("id"), res); });
    });
    if (config.ui_dir) server.set_mount_point("/", config.ui_dir->string());
  }
};

AnnotationServer::AnnotationServer(AnnotationService& service, const ServiceConfig& config)
    : impl_(new Impl{service, config, {}}) {
  impl_->Install();
}

AnnotationServer::~AnnotationServer() { Stop(); }

int AnnotationServer::Bind() {
  if (impl_->config.port == 0) {
    int port = impl_->server.bind_to_any_port(impl_->config.host);
    if (port < 0) throw Error(ErrorCode::kIo, "cannot bind " + impl_->config.host);
    return port;
  }
  if (!impl_->server.bind_to_port(impl_->config.host, impl_->config.port)) {
    throw Error(ErrorCode::kIo, "cannot bind " + impl_->config.host + ":" +
                                    std::to_string(impl_->config.port));
  }
  return impl_->config.port;
}

void AnnotationServer::Serve() { impl_->server.listen_after_bind(); }

void AnnotationServer::WaitUntilReady() { impl_->server.wait_until_ready(); }

void AnnotationServer::Stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

}  // namespace alignsift
