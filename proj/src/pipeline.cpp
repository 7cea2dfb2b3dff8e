#include "seqdenoise/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>

#include "seqdenoise/error.hpp"
#include "seqdenoise/hashing.hpp"
#include "seqdenoise/noise.hpp"
#include "seqdenoise/prompt.hpp"
#include "seqdenoise/rec_bench.hpp"
#include "seqdenoise/stub_backend.hpp"

namespace seqdenoise::pipeline {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kModels = {"popularity", "markov", "itemknn"};

std::string format_alpha(double alpha) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", alpha);
  return buf;
}

json stamp(const PipelineConfig& config) {
  return json{{"schema_version", kSchemaVersion},
              {"config_digest", config.digest()},
              {"seed", config.seed}};
}

void write_json(const fs::path& path, const json& j) { write_atomic(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing file " + path.string());
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

fs::path resolve(const fs::path& configured, const fs::path& fallback) {
  return configured.empty() ? fallback : configured;
}

std::size_t count_split(std::span<const SequenceWindow> windows, Split split) {
  return static_cast<std::size_t>(
      std::count_if(windows.begin(), windows.end(), [&](const auto& w) { return w.split == split; }));
}

std::vector<SequenceWindow> only(std::span<const SequenceWindow> windows, Split split) {
  std::vector<SequenceWindow> out;
  for (const auto& w : windows) {
    if (w.split == split) out.push_back(w);
  }
  return out;
}

/// Writes windows plus a manifest describing where they came from.
void write_dataset(const Workspace& ws, const PipelineConfig& config, const std::string& variant,
                   std::string_view kind, const std::optional<std::string>& source,
                   std::span<const SequenceWindow> windows, json extra = json::object()) {
  const auto dir = ws.dataset(variant);
  fs::create_directories(dir);
  write_windows(dir / "windows.jsonl", windows);
  json manifest{{"variant", variant},
                {"kind", kind},
                {"source", source ? json(*source) : json(nullptr)},
                {"stamp", stamp(config)},
                {"windows_digest", digest(read_text(dir / "windows.jsonl"))},
                {"counts",
                 {{"train", count_split(windows, Split::kTrain)},
                  {"valid", count_split(windows, Split::kValid)},
                  {"test", count_split(windows, Split::kTest)}}}};
  manifest.update(extra);
  write_json(dir / "manifest.json", manifest);
}

json read_manifest(const Workspace& ws, const std::string& variant) {
  const auto path = ws.dataset(variant) / "manifest.json";
  if (!fs::exists(path)) throw PreconditionError("unknown dataset variant '" + variant + "'");
  return read_json(path);
}

std::vector<SequenceWindow> read_variant(const Workspace& ws, const std::string& variant) {
  read_manifest(ws, variant);
  return read_windows(ws.dataset(variant) / "windows.jsonl");
}

ItemCatalog work_catalog(const Workspace& ws) { return load_catalog(ws.data("catalog.jsonl")); }

void require_same_windows(std::span<const SequenceWindow> a, std::span<const SequenceWindow> b,
                          const std::string& what) {
  if (a.size() != b.size()) throw ValidationError(what + ": window counts differ");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].ref() != b[i].ref() || a[i].split != b[i].split) {
      throw ValidationError(what + ": window " + a[i].ref() + " does not line up with " + b[i].ref());
    }
  }
}

/// Test-split labels of a derived variant must match its source exactly.
void verify_labels(std::span<const SequenceWindow> derived, std::span<const SequenceWindow> source,
                   const std::string& variant) {
  std::unordered_map<std::string, const SequenceWindow*> by_ref;
  for (const auto& w : source) {
    if (w.split == Split::kTest) by_ref.emplace(w.ref(), &w);
  }
  std::size_t seen = 0;
  for (const auto& w : derived) {
    if (w.split != Split::kTest) continue;
    auto it = by_ref.find(w.ref());
    if (it == by_ref.end()) throw ValidationError(variant + ": unexpected test window " + w.ref());
    if (it->second->target() != w.target()) {
      throw ValidationError(variant + ": test target altered in window " + w.ref());
    }
    ++seen;
  }
  if (seen != by_ref.size()) throw ValidationError(variant + ": test windows were dropped");
}

std::unique_ptr<bench::Recommender> train(const std::string& model, const PipelineConfig& config,
                                          const ItemCatalog& catalog,
                                          std::span<const SequenceWindow> windows) {
  if (model == "popularity") return bench::train_popularity(catalog, windows);
  if (model == "markov") return bench::train_markov(catalog, windows, config.bench.markov_smoothing);
  return bench::train_itemknn(catalog, windows, config.bench.knn_neighbors);
}

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void PipelineConfig::validate() const {
  if (window < 2) throw ConfigError("window must be >= 2");
  if (min_length < 2) throw ConfigError("min_length must be >= 2");
  if (splits.train <= 0 || splits.valid <= 0 || splits.test <= 0 ||
      std::abs(splits.train + splits.valid + splits.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be positive and sum to 1");
  }
  for (double a : alphas) {
    if (!(a >= 0.0 && a < 1.0)) throw ConfigError("alpha must lie in [0, 1)");
  }
  if (corpus_size < 1) throw ConfigError("corpus_size must be >= 1");
  if (bench.ks.empty()) throw ConfigError("bench.ks must be non-empty");
  for (int k : bench.ks) {
    if (k < 1) throw ConfigError("bench.ks entries must be >= 1");
  }
  if (bench.models.empty()) throw ConfigError("bench.models must be non-empty");
  for (const auto& m : bench.models) {
    if (!kModels.contains(m)) throw ConfigError("unknown bench model '" + m + "'");
  }
  if (bench.markov_smoothing < 0) throw ConfigError("bench.markov_smoothing must be >= 0");
  if (bench.knn_neighbors < 1) throw ConfigError("bench.knn_neighbors must be >= 1");
  if (work_dir.empty()) throw ConfigError("work_dir must be set");
  backend.validate();
  denoise.validate();
}

json PipelineConfig::to_json() const {
  return json{{"paths",
               {{"catalog", catalog.string()},
                {"interactions", interactions.string()},
                {"categories", categories.string()},
                {"work_dir", work_dir.string()}}},
              {"window", window},
              {"min_length", min_length},
              {"splits", {{"train", splits.train}, {"valid", splits.valid}, {"test", splits.test}}},
              {"alpha", alphas},
              {"corpus_size", corpus_size},
              {"backend", backend.to_json()},
              {"denoise", denoise.to_json()},
              {"bench",
               {{"models", bench.models},
                {"ks", bench.ks},
                {"markov_smoothing", bench.markov_smoothing},
                {"knn_neighbors", bench.knn_neighbors}}},
              {"synth", synth.to_json()},
              {"seed", seed}};
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  static const std::set<std::string> kKeys = {"paths",  "window",  "min_length", "splits",
                                              "alpha",  "corpus_size", "backend", "denoise",
                                              "bench",  "synth",   "seed"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  PipelineConfig c;
  try {
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      c.catalog = p.value("catalog", std::string());
      c.interactions = p.value("interactions", std::string());
      c.categories = p.value("categories", std::string());
      c.work_dir = p.value("work_dir", c.work_dir.string());
    }
    take(j, "window", c.window);
    take(j, "min_length", c.min_length);
    if (j.contains("splits")) {
      const auto& s = j.at("splits");
      c.splits.train = s.value("train", c.splits.train);
      c.splits.valid = s.value("valid", c.splits.valid);
      c.splits.test = s.value("test", c.splits.test);
    }
    if (j.contains("alpha")) {
      const auto& a = j.at("alpha");
      c.alphas = a.is_array() ? a.get<std::vector<double>>() : std::vector<double>{a.get<double>()};
    }
    take(j, "corpus_size", c.corpus_size);
    if (j.contains("backend")) c.backend = lm::BackendConfig::from_json(j.at("backend"));
    if (j.contains("denoise")) c.denoise = denoise::DenoiseConfig::from_json(j.at("denoise"));
    if (j.contains("bench")) {
      const auto& b = j.at("bench");
      take(b, "models", c.bench.models);
      take(b, "ks", c.bench.ks);
      take(b, "markov_smoothing", c.bench.markov_smoothing);
      take(b, "knn_neighbors", c.bench.knn_neighbors);
    }
    if (j.contains("synth")) c.synth = synth::SynthSpec::from_json(j.at("synth"));
    take(j, "seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::string PipelineConfig::digest() const {
  auto j = to_json();
  j["paths"].erase("work_dir");
  return seqdenoise::digest(j.dump());
}

void Workspace::init() const {
  const auto version = root_ / "SCHEMA_VERSION";
  if (fs::exists(version)) {
    check();
  } else {
    fs::create_directories(root_);
    write_atomic(version, std::to_string(kSchemaVersion) + "\n");
  }
  for (const char* sub : {"data", "datasets", "corpus", "reports"}) fs::create_directories(root_ / sub);
}

void Workspace::check() const {
  const auto version = root_ / "SCHEMA_VERSION";
  if (!fs::exists(version)) {
    throw ConfigError("work-dir " + root_.string() + " is not initialized (run synth or ingest first)");
  }
  auto text = read_text(version);
  while (!text.empty() && (text.back() == '\n' || text.back() == ' ')) text.pop_back();
  if (text != std::to_string(kSchemaVersion)) {
    throw ConfigError("work-dir " + root_.string() + " has schema version " + text + ", expected " +
                      std::to_string(kSchemaVersion));
  }
}

fs::path Workspace::report(std::string_view stage) const {
  return root_ / "reports" / (std::string(stage) + ".json");
}

std::string noisy_variant(double alpha) { return "noisy-a" + format_alpha(alpha); }

std::string denoised_variant(std::string_view source, denoise::Targets targets,
                             denoise::CorrectionMode mode) {
  std::string name = std::string(source) + ".dn-" + std::string(denoise::to_string(targets));
  if (mode != denoise::CorrectionMode::kReplace) name += "-" + std::string(denoise::to_string(mode));
  return name;
}

std::shared_ptr<const lm::LanguageModel> make_backend(const PipelineConfig& config,
                                                      const ItemCatalog& catalog,
                                                      std::span<const InteractionSequence> reference,
                                                      const std::optional<fs::path>& replay) {
  if (replay && fs::exists(*replay)) return lm::make_replayer(*replay);
  std::shared_ptr<const lm::LanguageModel> inner;
  if (config.backend.kind == lm::BackendKind::kRemote) {
    inner = lm::make_remote(config.backend);
  } else {
    const auto path = resolve(config.categories, Workspace(config.work_dir).data("categories.jsonl"));
    if (!fs::exists(path)) {
      throw ConfigError("stub backend needs a category sidecar; " + path.string() + " not found");
    }
    inner = std::make_shared<lm::StubModel>(catalog, synth::read_categories(path, catalog), reference);
  }
  if (replay) return lm::make_recorder(inner, *replay);
  return inner;
}

json cmd_synth(const PipelineConfig& config) {
  const Workspace ws(config.work_dir);
  auto spec = config.synth;
  spec.seed = config.seed;
  spec.window_length = static_cast<int>(config.window);
  const auto corpus = synth::generate(spec);
  ws.init();
  write_catalog(ws.data("catalog.jsonl"), corpus.catalog);
  write_interactions(ws.data("interactions.jsonl"), corpus.sequences);
  synth::write_categories(ws.data("categories.jsonl"), corpus);
  std::size_t events = 0;
  for (const auto& s : corpus.sequences) events += s.events.size();
  json report{{"stage", "synth"},
              {"stamp", stamp(config)},
              {"spec", spec.to_json()},
              {"items", corpus.catalog.size()},
              {"users", corpus.sequences.size()},
              {"events", events},
              {"cross_category_events", corpus.cross_category_events},
              {"title_collisions", prompt::title_collisions(corpus.catalog).size()}};
  write_json(ws.report("synth"), report);
  return report;
}

json cmd_ingest(const PipelineConfig& config) {
  const Workspace ws(config.work_dir);
  const auto catalog_path = resolve(config.catalog, ws.data("catalog.jsonl"));
  const auto interactions_path = resolve(config.interactions, ws.data("interactions.jsonl"));
  for (const auto& p : {catalog_path, interactions_path}) {
    if (!fs::exists(p)) throw ConfigError("input file " + p.string() + " not found");
  }
  const auto catalog = load_catalog(catalog_path);
  const auto sequences = load_interactions(interactions_path, catalog);
  if (sequences.empty()) throw PreconditionError("interactions file " + interactions_path.string() + " is empty");
  const auto segmented = segment(sequences, config.window, config.min_length);
  if (segmented.windows.empty()) throw PreconditionError("no sequence reaches the minimum length");
  const auto windows = split_temporal(segmented.windows, config.splits);
  const auto stats = ingest_stats(catalog, sequences, segmented, windows);

  ws.init();
  if (!fs::exists(ws.data("catalog.jsonl")) || !fs::equivalent(catalog_path, ws.data("catalog.jsonl"))) {
    write_catalog(ws.data("catalog.jsonl"), catalog);
  }
  fs::create_directories(ws.dataset("clean"));
  write_interactions(ws.dataset("clean") / "interactions.jsonl", sequences);
  write_dataset(ws, config, "clean", "clean", std::nullopt, windows);
  json report{{"stage", "ingest"}, {"stamp", stamp(config)}, {"stats", stats.to_json()}};
  write_json(ws.report("ingest"), report);
  return report;
}

json cmd_inject(const PipelineConfig& config) {
  const Workspace ws(config.work_dir);
  ws.check();
  const auto catalog = work_catalog(ws);
  const auto sequences = load_interactions(ws.dataset("clean") / "interactions.jsonl", catalog);
  const auto clean = read_variant(ws, "clean");
  std::size_t events = 0;
  for (const auto& s : sequences) events += s.events.size();

  json per_alpha = json::array();
  for (double alpha : config.alphas) {
    const auto variant = noisy_variant(alpha);
    const auto injected =
        inject_artificial_noise(sequences, catalog, alpha, derive_seed(config.seed, variant));
    const auto windows =
        split_temporal(segment(injected.sequences, config.window, config.min_length).windows, config.splits);
    require_same_windows(windows, clean, variant);
    write_dataset(ws, config, variant, "noisy", std::string("clean"), windows,
                  json{{"alpha", alpha}, {"ground_truth", "ground_truth.jsonl"}});
    write_records(ws.dataset(variant) / "ground_truth.jsonl", injected.records);
    per_alpha.push_back({{"variant", variant},
                         {"alpha", alpha},
                         {"events", events},
                         {"replaced", injected.records.size()},
                         {"rate", events ? static_cast<double>(injected.records.size()) /
                                               static_cast<double>(events)
                                         : 0.0}});
  }
  json report{{"stage", "inject"}, {"stamp", stamp(config)}, {"datasets", per_alpha}};
  write_json(ws.report("inject"), report);
  return report;
}

json cmd_corpus(const PipelineConfig& config) {
  const Workspace ws(config.work_dir);
  ws.check();
  const auto catalog = work_catalog(ws);
  const auto train_windows = only(read_variant(ws, "clean"), Split::kTrain);
  if (config.corpus_size > train_windows.size()) {
    throw PreconditionError("corpus_size " + std::to_string(config.corpus_size) + " exceeds the " +
                            std::to_string(train_windows.size()) + " available train windows");
  }
  const auto sampled = sample_windows(train_windows, config.corpus_size, derive_seed(config.seed, "corpus-sample"));
  const auto corrupted = corrupt_for_corpus(sampled, catalog, derive_seed(config.seed, "corpus-corrupt"));

  const auto dir = ws.corpus_dir();
  fs::create_directories(dir);
  const auto lines = prompt::emit_corpus(corrupted, catalog, dir / "corpus.jsonl");
  std::vector<CorruptionRecord> records;
  records.reserve(corrupted.size());
  for (const auto& c : corrupted) records.push_back(c.record);
  write_records(dir / "records.jsonl", records);

  std::size_t verified = 0;
  std::size_t row = 0;
  for_each_jsonl(dir / "corpus.jsonl", [&](const json& j, std::size_t) {
    const auto pair = prompt::parse_output(j.at("output").get<std::string>());
    const auto& r = records.at(row++);
    if (pair && pair->noise == prompt::describe(catalog.title(r.noise)) &&
        pair->suggestion == prompt::describe(catalog.title(r.original))) {
      ++verified;
    }
  });
  json report{{"stage", "corpus"},
              {"stamp", stamp(config)},
              {"lines", lines},
              {"round_trip_verified", verified},
              {"corpus_digest", digest(read_text(dir / "corpus.jsonl"))}};
  write_json(ws.report("corpus"), report);
  return report;
}

json cmd_denoise(const PipelineConfig& config, const DenoiseRequest& request,
                 std::shared_ptr<const lm::LanguageModel> backend) {
  const Workspace ws(config.work_dir);
  ws.check();
  const auto catalog = work_catalog(ws);
  const auto windows = read_variant(ws, request.variant);
  const auto train_windows = only(windows, Split::kTrain);

  auto dconfig = config.denoise;
  dconfig.seed = derive_seed(config.seed, "denoise");
  const auto output =
      request.output.value_or(denoised_variant(request.variant, request.targets, dconfig.correction_mode));
  if (output == request.variant) throw ConfigError("denoise output must differ from its input variant");

  if (!backend) {
    // The stub's affinity counts come from the generator's clean interactions.
    std::vector<InteractionSequence> reference;
    if (config.backend.kind == lm::BackendKind::kStub) {
      reference = load_interactions(ws.dataset("clean") / "interactions.jsonl", catalog);
    }
    backend = make_backend(config, catalog, reference, request.replay);
  }
  std::optional<denoise::PopularitySampler> popularity;
  if (dconfig.correction_mode == denoise::CorrectionMode::kPopularityCompletion) {
    popularity.emplace(catalog, train_windows);
  }
  auto result = denoise::run_denoise(windows, catalog, *backend, dconfig, request.targets,
                                     popularity ? &*popularity : nullptr);
  verify_labels(result.windows, windows, output);

  write_dataset(ws, config, output, "denoised", request.variant, result.windows,
                json{{"assessments", "assessments.jsonl"}});
  denoise::write_assessments(ws.dataset(output) / "assessments.jsonl", result.assessments);
  json report{{"stage", "denoise"},
              {"stamp", stamp(config)},
              {"variant", output},
              {"source", request.variant},
              {"denoise", result.report.to_json()}};
  write_json(ws.dataset(output) / "report.json", report);
  write_json(ws.report("denoise-" + output), report);
  return report;
}

json cmd_eval(const PipelineConfig& config, const std::string& variant, bool write_ranks) {
  const Workspace ws(config.work_dir);
  ws.check();
  const auto catalog = work_catalog(ws);
  const auto manifest = read_manifest(ws, variant);
  const auto windows = read_variant(ws, variant);
  const auto train_windows = only(windows, Split::kTrain);
  const auto test_windows = only(windows, Split::kTest);

  std::optional<std::string> source;
  if (manifest.contains("source") && manifest.at("source").is_string()) {
    source = manifest.at("source").get<std::string>();
  }
  std::vector<SequenceWindow> source_windows;
  if (source) {
    source_windows = read_variant(ws, *source);
    if (manifest.value("kind", std::string()) == "denoised") verify_labels(windows, source_windows, variant);
  }

  json models = json::object();
  for (const auto& name : config.bench.models) {
    const auto model = train(name, config, catalog, train_windows);
    const auto report = bench::evaluate_ranking(*model, catalog, test_windows, config.bench.ks);
    models[name] = report.to_json();
    if (write_ranks) {
      write_atomic(ws.root() / "reports" / ("ranks-" + variant + "-" + name + ".csv"),
                   bench::ranks_csv(test_windows, report));
    }
  }

  json out{{"stage", "eval"}, {"stamp", stamp(config)}, {"variant", variant}, {"models", models}};
  const auto assessments_path = ws.dataset(variant) / "assessments.jsonl";
  if (source && fs::exists(assessments_path)) {
    const auto truth_path = ws.dataset(*source) / "ground_truth.jsonl";
    if (fs::exists(truth_path)) {
      const auto assessments = denoise::read_assessments(assessments_path, source_windows);
      const auto sequences = load_interactions(ws.dataset("clean") / "interactions.jsonl", catalog);
      const auto truth = bench::make_ground_truth(read_records(truth_path), sequences);
      const auto id = bench::evaluate_identification(assessments, truth);
      out["identification"] = {{"precision", id.precision},
                               {"recall", id.recall},
                               {"f1", id.f1},
                               {"true_positives", id.true_positives},
                               {"flagged", id.flagged},
                               {"ground_truth", id.ground_truth}};
    }
  }
  write_json(ws.report("eval-" + variant), out);
  return out;
}

json cmd_report(const PipelineConfig& config) {
  const Workspace ws(config.work_dir);
  ws.check();
  std::map<std::string, json> evals;
  std::map<std::string, json> denoises;
  for (const auto& entry : fs::directory_iterator(ws.root() / "reports")) {
    const auto name = entry.path().filename().string();
    if (entry.path().extension() != ".json") continue;
    if (name.starts_with("eval-")) evals[name] = read_json(entry.path());
    if (name.starts_with("denoise-")) denoises[name] = read_json(entry.path());
  }
  json variants = json::object();
  for (const auto& [_, e] : evals) {
    json row = json::object();
    for (const auto& [model, r] : e.at("models").items()) row[model] = r.at("metrics");
    json entry{{"models", row}};
    if (e.contains("identification")) entry["identification"] = e.at("identification");
    variants[e.at("variant").get<std::string>()] = entry;
  }
  json runs = json::object();
  for (const auto& [_, d] : denoises) {
    const auto& r = d.at("denoise");
    runs[d.at("variant").get<std::string>()] = {{"eta", r.at("eta")},
                                                {"positions_flagged", r.at("positions_flagged")},
                                                {"windows_modified", r.at("windows_modified")},
                                                {"windows_unscored", r.at("windows_unscored")}};
  }
  json summary{{"stage", "report"}, {"stamp", stamp(config)}, {"variants", variants}, {"denoise_runs", runs}};
  write_json(ws.report("summary"), summary);
  return summary;
}

}  // namespace seqdenoise::pipeline
