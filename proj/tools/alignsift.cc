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

// alignsift: command-line driver for the curation pipeline.
//
// Settings resolve in the order: command-line flag, TOML config file
// (--config, one [section] per subcommand), ALIGNSIFT_<SUBCOMMAND>_<OPTION>
// environment variable, built-in default.

#include <pthread.h>
#include <signal.h>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "alignsift/annotation_service.h"
#include "alignsift/compressor.h"
#include "alignsift/embedder_client.h"
#include "alignsift/embedding_io.h"
#include "alignsift/error.h"
#include "alignsift/evaluator.h"
#include "alignsift/pairgen.h"
#include "alignsift/preference_store.h"
#include "alignsift/synthetic.h"
#include "alignsift/trainer.h"
#include "alignsift/util.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace alignsift {
namespace {

constexpr const char* kVersion = "0.1.0";

// Invalid flag combinations detected after parsing; reported as usage errors.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool g_quiet = false;

void Info(const std::string& line) {
  if (!g_quiet) std::cerr << line << "\n";
}

std::string OneLine(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

// Provenance sidecar written next to each artifact. No timestamps, so two
// identical runs produce identical sidecars.
class Provenance {
 public:
  Provenance(const CLI::App* sub) : subcommand_(sub->get_name()) {
    config_ = sub->config_to_str(true, false);
  }

  void AddInput(const fs::path& path) { inputs_.push_back(path); }
  template <typename Paths>
  void AddInputs(const Paths& paths) {
    for (const auto& p : paths) AddInput(p);
  }

  void Stamp(const fs::path& artifact) const {
    json inputs = json::array();
    for (const auto& p : inputs_) {
      inputs.push_back({{"path", p.string()}, {"fnv1a64", Hex64(Fnv64OfFile(p))}});
    }
    json j = {
        {"schema_version", 1},
        {"tool", "alignsift"},
        {"version", kVersion},
        {"subcommand", subcommand_},
        {"config", config_},
        {"config_hash", Hex64(Fnv64Of(config_))},
        {"inputs", inputs},
        {"output", {{"path", artifact.string()}, {"fnv1a64", Hex64(Fnv64OfFile(artifact))}}},
    };
    WriteFileAtomic(artifact.string() + ".provenance.json", j.dump(2) + "\n");
  }

 private:
  std::string subcommand_;
  std::string config_;
  std::vector<fs::path> inputs_;
};

std::vector<std::string> SplitCsv(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Attaches ALIGNSIFT_<SUB>_<OPTION> to every long option of a subcommand.
void AttachEnvironment(CLI::App* sub) {
  std::string prefix = "ALIGNSIFT_" + sub->get_name() + "_";
  for (CLI::Option* opt : sub->get_options()) {
    if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
    std::string name = prefix + opt->get_lnames().front();
    for (auto& c : name) c = c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    opt->envname(name);
  }
}

std::vector<std::string> ReadLines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

// --- store -----------------------------------------------------------------

struct StoreArgs {
  fs::path store;
  std::string store_id = "alignsift";
  fs::path from;
  fs::path out;
};

int RunInitStore(const StoreArgs& a) {
  PreferenceStore::Create(a.store, a.store_id);
  Info("created store " + a.store.string());
  return 0;
}

// Merges every entry of a log file that the store does not already hold.
int RunImport(const StoreArgs& a) {
  PreferenceDataset incoming = LoadStore(a.from);
  auto store = PreferenceStore::Open(a.store, PreferenceStore::OpenMode::kRecoverTornTail);
  PreferenceDataset current = store->Snapshot();
  size_t images = 0;
  size_t captions = 0;
  size_t records = 0;
  for (const auto& image : incoming.images()) {
    if (!current.FindImage(image.image_id)) {
      store->AddImage(image);
      ++images;
    }
    for (const auto& c : incoming.CaptionsOf(image.image_id)) {
      if (!current.FindCaption(c.image_id, c.caption_id)) {
        store->AddCaption(c);
        ++captions;
      }
    }
  }
  for (const auto& r : incoming.records()) {
    if (!current.FindRecord(r.record_id)) {
      store->AppendRecord(r);
      ++records;
    }
  }
  Info("imported " + std::to_string(images) + " images, " + std::to_string(captions) +
       " captions, " + std::to_string(records) + " records");
  return 0;
}

int RunExport(const StoreArgs& a, const CLI::App* sub) {
  ExportStore(LoadStore(a.store), a.out);
  Provenance prov(sub);
  prov.AddInput(a.store);
  prov.Stamp(a.out);
  return 0;
}

// --- pairgen ---------------------------------------------------------------

struct PairgenArgs {
  fs::path store;
  fs::path out;
  fs::path holdout_out;
  double holdout_fraction = 0.0;
  uint64_t split_seed = kDefaultSeed;
  size_t max_pairs_per_image = 0;
};

int RunPairgen(const PairgenArgs& a, const CLI::App* sub) {
  if (a.holdout_fraction > 0.0 && a.holdout_out.empty()) {
    throw UsageError("--holdout-fraction needs --holdout-out");
  }
  PreferenceDataset data = LoadStore(a.store);
  PairGenOptions options{a.split_seed, a.holdout_fraction, a.max_pairs_per_image};
  PairSplit split = GenerateDatasetPairs(data, options);
  Provenance prov(sub);
  prov.AddInput(a.store);
  WritePairFile(split.train, a.out);
  prov.Stamp(a.out);
  if (!a.holdout_out.empty()) {
    WritePairFile(split.holdout, a.holdout_out);
    prov.Stamp(a.holdout_out);
  }
  Info("pairs: " + std::to_string(split.train.size()) + " train, " +
       std::to_string(split.holdout.size()) + " holdout (" +
       std::to_string(split.holdout_images.size()) + " images)");
  return 0;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  fs::path pairs;
  fs::path holdout;
  std::vector<fs::path> embeddings;
  fs::path out;
  fs::path resume;
  fs::path log;
  std::string hidden_widths = "1024,128,64,16";
  std::string dropout = "0.2,0.2,0.1";
  std::string activation = "relu";
  TrainConfig config;
  bool no_dropout = false;
};

int RunTrain(TrainArgs a, const CLI::App* sub) {
  EmbeddingTable table = EmbeddingTable::Load(a.embeddings);
  std::vector<ComparisonPair> train = ReadPairFile(a.pairs);
  std::vector<ComparisonPair> holdout;
  if (!a.holdout.empty()) holdout = ReadPairFile(a.holdout);

  Checkpoint start;
  if (!a.resume.empty()) {
    start = LoadCheckpoint(a.resume);
    if (start.update_count > a.config.total_updates) {
      throw UsageError("checkpoint is already past --updates");
    }
    start.config.total_updates = a.config.total_updates;
  } else {
    HeadArchitecture arch;
    arch.layer_widths = {static_cast<int>(table.dimension())};
    for (const auto& w : SplitCsv(a.hidden_widths)) arch.layer_widths.push_back(std::stoi(w));
    arch.dropout_rates.clear();
    for (const auto& r : SplitCsv(a.dropout)) arch.dropout_rates.push_back(std::stod(r));
    arch.activation = ParseActivation(a.activation);
    arch.Validate();
    a.config.dropout_enabled = !a.no_dropout;
    a.config.Validate();
    start = Checkpoint::Initialize(arch, a.config);
  }

  Trainer trainer(std::move(start), table, train, holdout);
  std::ofstream log;
  if (!a.log.empty()) log.open(a.log, std::ios::trunc);
  size_t logged = 0;
  auto flush_log = [&]() {
    for (; logged < trainer.log().size(); ++logged) {
      std::string line = FormatLogEntry(trainer.log()[logged]);
      if (log.is_open()) log << line << "\n";
      Info(line);
    }
  };
  try {
    while (trainer.state().update_count < trainer.state().config.total_updates) {
      trainer.Step();
      flush_log();
    }
  } catch (const DivergedTrainingError& e) {
    fs::path saved = a.out.string() + ".last-finite";
    SaveCheckpoint(e.last_finite(), saved);
    Info("saved last finite state to " + saved.string());
    throw;
  }
  SaveCheckpoint(trainer.state(), a.out);
  Provenance prov(sub);
  prov.AddInput(a.pairs);
  if (!a.holdout.empty()) prov.AddInput(a.holdout);
  prov.AddInputs(a.embeddings);
  if (!a.resume.empty()) prov.AddInput(a.resume);
  prov.Stamp(a.out);
  Info("checkpoint " + CheckpointHash(trainer.state()) + " after " +
       std::to_string(trainer.state().update_count) + " updates");
  return 0;
}

// --- score / compress / apply / stats --------------------------------------

struct ScoreArgs {
  fs::path checkpoint;
  std::vector<fs::path> shards;
  std::vector<fs::path> image_shards;
  std::vector<fs::path> text_shards;
  fs::path out;
  fs::path text_out;
  size_t workers = 1;
  size_t batch_size = 512;
};

int RunScore(const ScoreArgs& a, const CLI::App* sub) {
  const bool cosine = !a.image_shards.empty() || !a.text_shards.empty();
  if (cosine == !a.checkpoint.empty() || (cosine && !a.shards.empty())) {
    throw UsageError("give either --checkpoint with --shards or --image-shards with --text-shards");
  }
  Provenance prov(sub);
  ScoreTable table;
  if (cosine) {
    table = ScoreCorpusCosine(a.image_shards, a.text_shards);
    prov.AddInputs(a.image_shards);
    prov.AddInputs(a.text_shards);
  } else {
    if (a.shards.empty()) throw UsageError("--checkpoint needs --shards");
    table = ScoreCorpus(LoadCheckpoint(a.checkpoint), a.shards, {a.workers, a.batch_size});
    prov.AddInput(a.checkpoint);
    prov.AddInputs(a.shards);
  }
  WriteScoreTable(table, a.out);
  prov.Stamp(a.out);
  if (!a.text_out.empty()) {
    WriteFileAtomic(a.text_out, ScoreTableText(table));
    prov.Stamp(a.text_out);
  }
  Info("scored " + std::to_string(table.entries.size()) + " pairs");
  return 0;
}

struct CompressArgs {
  fs::path scores;
  std::string keep_ratio = "1/2";
  fs::path out;
  bool approximate = false;
  size_t reservoir_size = 1'000'000;
  uint64_t seed = kDefaultSeed;
};

int RunCompress(const CompressArgs& a, const CLI::App* sub) {
  ScoreTable table = ReadScoreTable(a.scores);
  CompressionSpec spec{KeepRatio::Parse(a.keep_ratio)};
  CompressedManifest m = a.approximate ? SelectTopApproximate(table, spec, a.reservoir_size, a.seed)
                                       : SelectTop(table, spec);
  WriteManifest(m, a.out);
  Provenance prov(sub);
  prov.AddInput(a.scores);
  prov.Stamp(a.out);
  Info("kept " + std::to_string(m.kept_count) + " of " + std::to_string(m.input_count));
  return 0;
}

struct ApplyArgs {
  fs::path manifest;
  fs::path listing;
  fs::path out;
};

int RunApply(const ApplyArgs& a, const CLI::App* sub) {
  ApplyManifestFile(ReadManifest(a.manifest), a.listing, a.out);
  Provenance prov(sub);
  prov.AddInput(a.manifest);
  prov.AddInput(a.listing);
  prov.Stamp(a.out);
  return 0;
}

struct StatsArgs {
  fs::path scores;
  fs::path out;
  bool json = false;
  bool streaming = false;
  size_t bins = 20;
};

int RunStats(const StatsArgs& a, const CLI::App* sub) {
  StatsOptions options;
  options.histogram_bins = a.bins;
  options.force_streaming = a.streaming;
  ScoreStats stats = ComputeScoreStats(ReadScoreTable(a.scores), options);
  std::string text = a.json ? FormatStatsJson(stats) : FormatStatsText(stats);
  if (a.out.empty()) {
    std::cout << text;
    return 0;
  }
  WriteFileAtomic(a.out, text);
  Provenance prov(sub);
  prov.AddInput(a.scores);
  prov.Stamp(a.out);
  return 0;
}

// --- eval-preference -------------------------------------------------------

struct EvalArgs {
  fs::path store;
  fs::path checkpoint;
  std::vector<fs::path> embeddings;
  std::vector<fs::path> image_embeddings;
  std::vector<fs::path> text_embeddings;
  fs::path out;
  fs::path json_out;
  bool strict = false;
  size_t workers = 1;
};

int RunEval(const EvalArgs& a, const CLI::App* sub) {
  const bool cosine = !a.image_embeddings.empty() || !a.text_embeddings.empty();
  if (cosine == !a.checkpoint.empty() || (cosine && !a.embeddings.empty()) ||
      (!cosine && a.embeddings.empty()) ||
      (cosine && (a.image_embeddings.empty() || a.text_embeddings.empty()))) {
    throw UsageError(
        "give either --checkpoint with --embeddings or --image-embeddings with --text-embeddings");
  }
  PreferenceDataset data = LoadStore(a.store);
  Provenance prov(sub);
  prov.AddInput(a.store);
  EvalOptions options{a.strict, a.workers};
  PreferenceEvalReport report;
  if (cosine) {
    EmbeddingTable images = EmbeddingTable::Load(a.image_embeddings);
    EmbeddingTable texts = EmbeddingTable::Load(a.text_embeddings);
    report = EvaluatePreferences(CosineScorer(images, texts), data, options);
    prov.AddInputs(a.image_embeddings);
    prov.AddInputs(a.text_embeddings);
  } else {
    Checkpoint ckpt = LoadCheckpoint(a.checkpoint);
    EmbeddingTable fused = EmbeddingTable::Load(a.embeddings);
    report = EvaluatePreferences(RewardHeadScorer(ckpt, fused), data, options);
    prov.AddInput(a.checkpoint);
    prov.AddInputs(a.embeddings);
  }
  if (a.out.empty()) {
    std::cout << FormatReportText(report);
  } else {
    WriteFileAtomic(a.out, FormatReportText(report));
    prov.Stamp(a.out);
  }
  if (!a.json_out.empty()) {
    WriteFileAtomic(a.json_out, FormatReportJson(report));
    prov.Stamp(a.json_out);
  }
  return 0;
}

// --- embed -----------------------------------------------------------------

struct EmbedArgs {
  fs::path store;
  fs::path listing;
  fs::path out;
  fs::path embedder_config;
  std::string embedder_url;
};

// Keys are CaptionKey(image, caption) for a store and pair ids for a listing.
int RunEmbed(const EmbedArgs& a, const CLI::App* sub) {
  if (a.store.empty() == a.listing.empty()) throw UsageError("give exactly one of --store, --listing");
  EmbedderConfig config;
  config.ApplyEnvironment();
  if (!a.embedder_config.empty()) config = EmbedderConfig::FromFile(a.embedder_config, config);
  if (!a.embedder_url.empty()) config.url = a.embedder_url;
  if (config.url.empty()) throw UsageError("no embedder url (--embedder-url or config)");

  std::vector<std::string> keys;
  KeyMode mode = KeyMode::kPairId;
  Provenance prov(sub);
  if (!a.store.empty()) {
    mode = KeyMode::kImageCaption;
    PreferenceDataset data = LoadStore(a.store);
    for (const auto& image : data.images()) {
      for (const auto& c : data.CaptionsOf(image.image_id)) {
        keys.push_back(CaptionKey(image.image_id, c.caption_id));
      }
    }
    prov.AddInput(a.store);
  } else {
    for (const auto& line : ReadLines(a.listing)) {
      if (line.empty() || line.front() == '#') continue;
      keys.push_back(line.substr(0, line.find('\t')));
    }
    prov.AddInput(a.listing);
  }
  std::vector<EmbeddingRecord> records = FetchEmbeddings(config, keys);
  if (records.empty()) throw Error(ErrorCode::kInvalidArgument, "nothing to embed");
  WriteEmbeddings(records, a.out, static_cast<uint32_t>(records.front().vector.size()), mode);
  prov.Stamp(a.out);
  Info("embedded " + std::to_string(records.size()) + " keys");
  return 0;
}

// --- serve -----------------------------------------------------------------

struct ServeArgs {
  fs::path service_config;
  ServiceConfig config;
  std::vector<std::string> labelers;
  int64_t lease_ttl_seconds = 1800;
  fs::path lease_file;
  fs::path image_root;
  fs::path ui_dir;
};

int RunServe(ServeArgs a, const CLI::App* sub) {
  ServiceConfig config;
  config.ApplyEnvironment();
  if (!a.service_config.empty()) config = ServiceConfig::FromFile(a.service_config, config);
  auto given = [&](const char* name) { return sub->get_option(name)->count() > 0; };
  if (!a.config.store_path.empty()) config.store_path = a.config.store_path;
  if (given("--host")) config.host = a.config.host;
  if (given("--port")) config.port = a.config.port;
  if (given("--replication")) config.options.replication = a.config.options.replication;
  if (given("--open-registration")) config.options.open_registration = true;
  if (given("--lease-ttl")) config.options.lease_ttl = std::chrono::seconds(a.lease_ttl_seconds);
  for (const auto& l : a.labelers) config.options.labelers.push_back(l);
  if (!a.lease_file.empty()) config.options.lease_path = a.lease_file;
  if (!a.image_root.empty()) config.image_root = a.image_root;
  if (!a.ui_dir.empty()) config.ui_dir = a.ui_dir;
  if (config.store_path.empty()) throw UsageError("serve needs --store");
  if (!config.options.lease_path) config.options.lease_path = config.store_path.string() + ".leases.json";

  // Signals are consumed by a dedicated thread so the server can be stopped
  // outside of signal-handler context.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  auto store = PreferenceStore::Open(config.store_path, PreferenceStore::OpenMode::kRecoverTornTail);
  AnnotationService service(*store, config.options);
  AnnotationServer server(service, config);
  int port = server.Bind();
  std::cout << "listening on http://" << config.host << ":" << port << std::endl;

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.Stop();
  });
  server.Serve();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return 0;
}

// --- demo ------------------------------------------------------------------

struct DemoArgs {
  fs::path out;
  SyntheticPreferenceConfig preferences;
  MixedCorpusConfig corpus;
};

int RunDemo(const DemoArgs& a, const CLI::App* sub) {
  fs::create_directories(a.out);
  SyntheticPreferences prefs = GenerateSyntheticPreferences(a.preferences);
  MixedCorpus corpus = GenerateMixedCorpus(a.corpus, prefs.direction);
  const uint32_t dim = a.preferences.dimension;
  Provenance prov(sub);

  const fs::path store = a.out / "store.jsonl";
  const fs::path fused = a.out / "fused.emb";
  const fs::path corpus_shard = a.out / "corpus.emb";
  const fs::path listing = a.out / "corpus_listing.tsv";
  ExportStore(prefs.store, store);
  WriteEmbeddings(prefs.embeddings, fused, dim, KeyMode::kImageCaption);
  WriteEmbeddings(corpus.embeddings, corpus_shard, dim, KeyMode::kPairId);
  std::string text;
  for (const auto& line : corpus.listing) text += line + "\n";
  WriteFileAtomic(listing, text);
  for (const auto& p : {store, fused, corpus_shard, listing}) prov.Stamp(p);
  Info("demo data in " + a.out.string() + ": " + std::to_string(prefs.store.images().size()) +
       " images, " + std::to_string(corpus.embeddings.size()) + " corpus pairs");
  return 0;
}

int Main(int argc, char** argv) {
  CLI::App app{"alignsift: curate image-text data with a learned alignment reward"};
  app.set_version_flag("--version", std::string("alignsift ") + kVersion);
  app.set_config("--config", "", "TOML config file with one [section] per subcommand");
  app.add_flag("-q,--quiet", g_quiet, "Suppress progress messages");
  app.require_subcommand(1);
  std::function<int()> run;

  StoreArgs store_args;
  auto* init = app.add_subcommand("init-store", "Create an empty preference store");
  init->add_option("--store", store_args.store, "Store log path")->required();
  init->add_option("--store-id", store_args.store_id, "Identifier written to the header");
  init->callback([&] { run = [&] { return RunInitStore(store_args); }; });

  auto* import = app.add_subcommand("import", "Merge a preference log into a store");
  import->add_option("--store", store_args.store, "Store log path")->required();
  import->add_option("--from", store_args.from, "Log file to merge")->required()->check(CLI::ExistingFile);
  import->callback([&] { run = [&] { return RunImport(store_args); }; });

  auto* exp = app.add_subcommand("export", "Write the canonical log of a store");
  exp->add_option("--store", store_args.store, "Store log path")->required()->check(CLI::ExistingFile);
  exp->add_option("--out", store_args.out, "Output path")->required();
  exp->callback([&] { run = [&] { return RunExport(store_args, exp); }; });

  PairgenArgs pg;
  auto* pairgen = app.add_subcommand("pairgen", "Expand rankings into comparison pairs");
  pairgen->add_option("--store", pg.store, "Store log path")->required()->check(CLI::ExistingFile);
  pairgen->add_option("--out", pg.out, "Training pair file")->required();
  pairgen->add_option("--holdout-out", pg.holdout_out, "Held-out pair file");
  pairgen->add_option("--holdout-fraction", pg.holdout_fraction, "Fraction of images held out")
      ->check(CLI::Range(0.0, 0.999999));
  pairgen->add_option("--split-seed", pg.split_seed, "Seed of the image split");
  pairgen->add_option("--max-pairs-per-image", pg.max_pairs_per_image, "0 keeps every pair");
  pairgen->callback([&] { run = [&] { return RunPairgen(pg, pairgen); }; });

  TrainArgs tr;
  tr.config.total_updates = 20000;
  auto* train = app.add_subcommand("train", "Fit the reward head on comparison pairs");
  train->add_option("--pairs", tr.pairs, "Training pair file")->required()->check(CLI::ExistingFile);
  train->add_option("--holdout", tr.holdout, "Held-out pair file")->check(CLI::ExistingFile);
  train->add_option("--embeddings", tr.embeddings, "Caption-keyed embedding files")
      ->required()->check(CLI::ExistingFile);
  train->add_option("--out", tr.out, "Checkpoint path")->required();
  train->add_option("--resume", tr.resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
  train->add_option("--log", tr.log, "Training log (JSON lines)");
  train->add_option("--hidden-widths", tr.hidden_widths, "Comma-separated hidden layer widths");
  train->add_option("--dropout", tr.dropout, "Comma-separated dropout rates after hidden layers");
  train->add_option("--activation", tr.activation, "relu, gelu or tanh");
  train->add_option("--learning-rate", tr.config.learning_rate)->check(CLI::NonNegativeNumber);
  train->add_option("--beta1", tr.config.adam_beta1)->check(CLI::Range(0.0, 0.999999));
  train->add_option("--beta2", tr.config.adam_beta2)->check(CLI::Range(0.0, 0.999999));
  train->add_option("--epsilon", tr.config.adam_epsilon)->check(CLI::PositiveNumber);
  train->add_option("--weight-decay", tr.config.weight_decay)->check(CLI::NonNegativeNumber);
  train->add_option("--batch-size", tr.config.batch_size)->check(CLI::PositiveNumber);
  train->add_option("--updates", tr.config.total_updates, "Total optimizer updates");
  train->add_option("--seed", tr.config.seed, "Initialization, shuffling and dropout seed");
  train->add_flag("--no-dropout", tr.no_dropout, "Train without dropout");
  train->add_flag("--shared-dropout-mask", tr.config.shared_dropout_mask,
                  "Use one dropout mask for both sides of a pair");
  train->add_flag("--per-image-weighting", tr.config.per_image_weighting,
                  "Weight each image equally within a minibatch");
  train->add_option("--log-every", tr.config.log_every)->check(CLI::PositiveNumber);
  train->add_option("--workers", [](const std::vector<std::string>&) { return true; },
                    "Accepted for uniformity; training is single-threaded");
  train->callback([&] { run = [&] { return RunTrain(tr, train); }; });

  ScoreArgs sc;
  auto* score = app.add_subcommand("score", "Score a corpus with a checkpoint or a cosine baseline");
  score->add_option("--checkpoint", sc.checkpoint)->check(CLI::ExistingFile);
  score->add_option("--shards", sc.shards, "Pair-keyed corpus shards")->check(CLI::ExistingFile);
  score->add_option("--image-shards", sc.image_shards)->check(CLI::ExistingFile);
  score->add_option("--text-shards", sc.text_shards)->check(CLI::ExistingFile);
  score->add_option("--out", sc.out, "Binary score table")->required();
  score->add_option("--text-out", sc.text_out, "Optional text export");
  score->add_option("--workers", sc.workers)->check(CLI::PositiveNumber);
  score->add_option("--batch-size", sc.batch_size)->check(CLI::PositiveNumber);
  score->callback([&] { run = [&] { return RunScore(sc, score); }; });

  CompressArgs cp;
  auto* compress = app.add_subcommand("compress", "Select the top-scoring fraction of a corpus");
  compress->add_option("--scores", cp.scores)->required()->check(CLI::ExistingFile);
  compress->add_option("--keep-ratio", cp.keep_ratio, "0.35, 7/20 or 35%");
  compress->add_option("--out", cp.out, "Manifest path")->required();
  compress->add_flag("--approximate", cp.approximate, "Estimate the threshold from a sample");
  compress->add_option("--reservoir-size", cp.reservoir_size)->check(CLI::PositiveNumber);
  compress->add_option("--seed", cp.seed, "Reservoir seed");
  compress->add_option("--workers", [](const std::vector<std::string>&) { return true; },
                       "Accepted for uniformity; selection is single-threaded");
  compress->callback([&] { run = [&] { return RunCompress(cp, compress); }; });

  ApplyArgs ap;
  auto* apply = app.add_subcommand("apply", "Filter a corpus listing by a manifest");
  apply->add_option("--manifest", ap.manifest)->required()->check(CLI::ExistingFile);
  apply->add_option("--listing", ap.listing)->required()->check(CLI::ExistingFile);
  apply->add_option("--out", ap.out)->required();
  apply->callback([&] { run = [&] { return RunApply(ap, apply); }; });

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval-preference", "Measure agreement with human rankings");
  eval->add_option("--store", ev.store, "Evaluation store")->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", ev.checkpoint)->check(CLI::ExistingFile);
  eval->add_option("--embeddings", ev.embeddings, "Fused caption embeddings")->check(CLI::ExistingFile);
  eval->add_option("--image-embeddings", ev.image_embeddings)->check(CLI::ExistingFile);
  eval->add_option("--text-embeddings", ev.text_embeddings)->check(CLI::ExistingFile);
  eval->add_option("--out", ev.out, "Text report (stdout if omitted)");
  eval->add_option("--json-out", ev.json_out, "Machine-readable summary");
  eval->add_flag("--strict", ev.strict, "Require a single human best caption");
  eval->add_option("--workers", ev.workers)->check(CLI::PositiveNumber);
  eval->callback([&] { run = [&] { return RunEval(ev, eval); }; });

  StatsArgs st;
  auto* stats = app.add_subcommand("stats", "Summarize a score table");
  stats->add_option("--scores", st.scores)->required()->check(CLI::ExistingFile);
  stats->add_option("--out", st.out, "Output path (stdout if omitted)");
  stats->add_flag("--json", st.json, "Emit JSON");
  stats->add_flag("--streaming", st.streaming, "Use histogram quantiles regardless of size");
  stats->add_option("--bins", st.bins)->check(CLI::PositiveNumber);
  stats->callback([&] { run = [&] { return RunStats(st, stats); }; });

  EmbedArgs em;
  auto* embed = app.add_subcommand("embed", "Fetch embeddings from an HTTP embedder");
  embed->add_option("--store", em.store)->check(CLI::ExistingFile);
  embed->add_option("--listing", em.listing)->check(CLI::ExistingFile);
  embed->add_option("--out", em.out)->required();
  embed->add_option("--embedder-config", em.embedder_config)->check(CLI::ExistingFile);
  embed->add_option("--embedder-url", em.embedder_url);
  embed->callback([&] { run = [&] { return RunEmbed(em, embed); }; });

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve", "Run the annotation service");
  serve->add_option("--service-config", sv.service_config, "JSON service config")
      ->check(CLI::ExistingFile);
  serve->add_option("--store", sv.config.store_path);
  serve->add_option("--host", sv.config.host);
  serve->add_option("--port", sv.config.port)->check(CLI::Range(0, 65535));
  serve->add_option("--lease-ttl", sv.lease_ttl_seconds, "Seconds")->check(CLI::PositiveNumber);
  serve->add_option("--replication", sv.config.options.replication)->check(CLI::PositiveNumber);
  serve->add_option("--labeler", sv.labelers, "Registered labeler id (repeatable)");
  serve->add_flag("--open-registration", sv.config.options.open_registration);
  serve->add_option("--lease-file", sv.lease_file);
  serve->add_option("--image-root", sv.image_root);
  serve->add_option("--ui-dir", sv.ui_dir);
  serve->callback([&] { run = [&] { return RunServe(sv, serve); }; });

  DemoArgs dm;
  auto* demo = app.add_subcommand("demo", "Generate a synthetic dataset with known ground truth");
  demo->add_option("--out", dm.out, "Output directory")->required();
  demo->add_option("--seed", dm.preferences.seed);
  demo->add_option("--images", dm.preferences.n_images)->check(CLI::PositiveNumber);
  demo->add_option("--captions", dm.preferences.captions_per_image)->check(CLI::Range(2, 16));
  demo->add_option("--dimension", dm.preferences.dimension)->check(CLI::PositiveNumber);
  demo->add_option("--margin", dm.preferences.margin)->check(CLI::Range(0.0, 0.5));
  demo->add_flag("--random-labels", dm.preferences.random_labels);
  demo->add_option("--corpus-pairs", dm.corpus.n_pairs)->check(CLI::PositiveNumber);
  demo->add_option("--aligned-fraction", dm.corpus.aligned_fraction)->check(CLI::Range(0.0, 1.0));
  demo->add_option("--corruption-shift", dm.corpus.corruption_shift);
  demo->callback([&] {
    dm.corpus.seed = dm.preferences.seed + 1;
    run = [&] { return RunDemo(dm, demo); };
  });

  for (CLI::App* sub : app.get_subcommands({})) AttachEnvironment(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "alignsift: error: Usage: " << OneLine(e.what()) << "\n";
    return 2;
  }

  try {
    return run();
  } catch (const UsageError& e) {
    std::cerr << "alignsift: error: Usage: " << OneLine(e.what()) << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "alignsift: error: " << e.name() << ": " << OneLine(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "alignsift: error: InternalError: " << OneLine(e.what()) << "\n";
    return 1;
  }
}

}  // namespace
}  // namespace alignsift

int main(int argc, char** argv) { return alignsift::Main(argc, argv); }
