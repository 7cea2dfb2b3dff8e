#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqdenoise/corpus.hpp"
#include "seqdenoise/denoiser.hpp"
#include "seqdenoise/lm_bridge.hpp"
#include "seqdenoise/synth.hpp"

namespace seqdenoise::pipeline {

constexpr int kSchemaVersion = 1;

struct BenchConfig {
  std::vector<std::string> models{"popularity", "markov", "itemknn"};
  std::vector<int> ks{20, 50};
  double markov_smoothing = 0.01;
  std::size_t knn_neighbors = 50;
};

struct PipelineConfig {
  // Empty catalog/interactions/categories paths resolve to the work-dir copies
  // written by the synth subcommand.
  std::filesystem::path catalog;
  std::filesystem::path interactions;
  std::filesystem::path categories;
  std::filesystem::path work_dir = "work";
  std::size_t window = kDefaultWindow;
  std::size_t min_length = kDefaultMinLength;
  SplitRatios splits;
  std::vector<double> alphas{0.1, 0.2, 0.3};
  std::size_t corpus_size = 5000;
  lm::BackendConfig backend;
  denoise::DenoiseConfig denoise;
  BenchConfig bench;
  synth::SynthSpec synth;
  std::uint64_t seed = 0;

  /// Throws ConfigError.
  void validate() const;
  json to_json() const;
  /// Unknown keys raise ConfigError.
  static PipelineConfig from_json(const json& j);
  static PipelineConfig load(const std::filesystem::path& path);
  /// Digest of everything except the work-dir location.
  std::string digest() const;
};

/// Versioned work-dir layout:
///   SCHEMA_VERSION
///   data/{catalog,interactions,categories}.jsonl
///   datasets/<variant>/{windows.jsonl, manifest.json, ...}
///   corpus/{corpus.jsonl, records.jsonl}
///   reports/<stage>.json
class Workspace {
 public:
  explicit Workspace(std::filesystem::path root) : root_(std::move(root)) {}

  /// Creates the layout, or checks the version of an existing one.
  void init() const;
  /// Throws ConfigError if the work-dir is missing or from another schema.
  void check() const;

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path data(std::string_view file) const { return root_ / "data" / file; }
  std::filesystem::path dataset(std::string_view variant) const { return root_ / "datasets" / variant; }
  std::filesystem::path report(std::string_view stage) const;
  std::filesystem::path corpus_dir() const { return root_ / "corpus"; }

 private:
  std::filesystem::path root_;
};

std::string noisy_variant(double alpha);
std::string denoised_variant(std::string_view source, denoise::Targets targets,
                             denoise::CorrectionMode mode);

/// Backend selected by the config. The stub needs the category sidecar and
/// reference sequences. With `replay`, an existing file is replayed and a
/// missing one is recorded.
std::shared_ptr<const lm::LanguageModel> make_backend(
    const PipelineConfig& config, const ItemCatalog& catalog,
    std::span<const InteractionSequence> reference,
    const std::optional<std::filesystem::path>& replay);

json cmd_synth(const PipelineConfig& config);
json cmd_ingest(const PipelineConfig& config);
json cmd_inject(const PipelineConfig& config);
json cmd_corpus(const PipelineConfig& config);

struct DenoiseRequest {
  std::string variant;
  denoise::Targets targets = denoise::Targets::kBoth;
  std::optional<std::string> output;  // default: denoised_variant(...)
  std::optional<std::filesystem::path> replay;
};

/// With `backend` null the backend is built by make_backend.
json cmd_denoise(const PipelineConfig& config, const DenoiseRequest& request,
                 std::shared_ptr<const lm::LanguageModel> backend = nullptr);

json cmd_eval(const PipelineConfig& config, const std::string& variant, bool write_ranks = false);
json cmd_report(const PipelineConfig& config);

}  // namespace seqdenoise::pipeline
