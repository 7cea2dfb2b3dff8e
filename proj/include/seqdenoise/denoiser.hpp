#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqdenoise/corpus.hpp"
#include "seqdenoise/lm_bridge.hpp"
#include "seqdenoise/prompt.hpp"

namespace seqdenoise::denoise {

enum class ProbabilityMode { kFirstToken, kFullProduct };

/// kRawResponse trusts the model's generated noise title instead of
/// thresholded per-item probabilities.
enum class CorrectionMode { kReplace, kDeleteOnly, kPopularityCompletion, kRawResponse };

enum class Targets { kTrain, kTest, kBoth };

std::string_view to_string(ProbabilityMode mode);
std::string_view to_string(CorrectionMode mode);
std::string_view to_string(Targets targets);
ProbabilityMode parse_probability_mode(std::string_view text);
CorrectionMode parse_correction_mode(std::string_view text);
Targets parse_targets(std::string_view text);

struct DenoiseConfig {
  double eta_quantile = 0.85;
  int b_cap = 2;
  ProbabilityMode probability_mode = ProbabilityMode::kFirstToken;
  CorrectionMode correction_mode = CorrectionMode::kReplace;
  std::uint64_t seed = 0;
  int max_suggestion_tokens = 64;

  /// Throws ConfigError.
  void validate() const;
  json to_json() const;
  static DenoiseConfig from_json(const json& j);
};

struct PositionScore {
  std::size_t position = 0;
  double p_noise = 0.0;
};

struct PositionAssessment {
  std::size_t position = 0;
  double p_noise = 0.0;
  bool flagged = false;
  std::optional<std::string> suggested;
  std::optional<ItemId> grounded;
};

struct NoiseAssessment {
  std::string window_ref;
  std::size_t window_length = 0;
  bool scored = false;
  std::string failure;  // non-empty when the backend failed for this window
  std::vector<PositionAssessment> positions;

  std::vector<std::size_t> flagged_positions() const;
  json to_json() const;  // one sidecar row per position
};

std::vector<json> assessment_rows(std::span<const NoiseAssessment> assessments);
void write_assessments(const std::filesystem::path& path,
                       std::span<const NoiseAssessment> assessments);
/// Rebuilds assessments from sidecar rows (window lengths are not stored and
/// are taken from `windows` by ref).
std::vector<NoiseAssessment> read_assessments(const std::filesystem::path& path,
                                              std::span<const SequenceWindow> windows);

/// P_noise for every input position of the window. Full-product mode
/// exponentiates the summed token logprobs of the description; first-token
/// mode uses only the first token.
std::vector<PositionScore> score_window(const SequenceWindow& window,
                                        const prompt::PromptBundle& bundle,
                                        const ItemCatalog& catalog,
                                        const lm::LanguageModel& backend, ProbabilityMode mode);

/// Empirical quantile with linear interpolation between order statistics.
/// Quantile 1 returns a value strictly above the maximum and quantile 0 a
/// value strictly below the minimum, so the strict `p > eta` rule flags
/// nothing and everything respectively.
double select_eta(std::span<const double> scores, double quantile);

/// Positions with p_noise > eta; when more than b qualify, the b highest
/// (ties to the lower position). Sorted ascending.
std::vector<std::size_t> flag(std::span<const PositionScore> scores, double eta, int b);

/// Embeddings of every catalog description, used to ground free text.
class GroundingIndex {
 public:
  GroundingIndex(const ItemCatalog& catalog, const lm::LanguageModel& backend);

  /// Catalog index with the smallest cosine distance to `embedding`, skipping
  /// `excluded`; ties go to the lower catalog index.
  std::optional<std::size_t> nearest(std::span<const double> embedding,
                                     std::span<const std::size_t> excluded) const;
  std::size_t size() const { return rows_; }

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> matrix_;  // rows_ x dim_, unit rows
};

struct Suggestion {
  std::size_t position = 0;
  std::string text;
  std::optional<ItemId> grounded;  // nullopt: generation failed, delete instead
  std::string failure;
};

std::vector<Suggestion> suggest_and_ground(const SequenceWindow& window,
                                           std::span<const std::size_t> flagged,
                                           const prompt::PromptBundle& bundle,
                                           const ItemCatalog& catalog,
                                           const lm::LanguageModel& backend,
                                           const GroundingIndex& index, int max_tokens = 64);

/// Item sampler proportional to training interaction counts.
class PopularitySampler {
 public:
  PopularitySampler(const ItemCatalog& catalog, std::span<const SequenceWindow> train_windows);
  ItemId sample(std::uint64_t seed) const;
  std::uint64_t count(std::size_t catalog_index) const { return counts_.at(catalog_index); }

 private:
  const ItemCatalog* catalog_;
  std::vector<std::uint64_t> counts_;
  std::vector<std::uint64_t> cumulative_;
};

/// Applies an assessment: substitution (replace, raw-response, popularity
/// completion) or removal (delete-only, or replace positions whose grounding
/// failed). Returns nullopt when fewer than two items would remain.
std::optional<SequenceWindow> apply_corrections(const SequenceWindow& window,
                                                const NoiseAssessment& assessment,
                                                CorrectionMode mode,
                                                const PopularitySampler* popularity,
                                                std::uint64_t seed);

struct DenoiseReport {
  std::string targets;
  std::string probability_mode;
  std::string correction_mode;
  double eta_quantile = 0.0;
  std::optional<double> eta;
  int b_cap = 0;
  std::size_t windows_total = 0;
  std::size_t windows_targeted = 0;
  std::size_t windows_scored = 0;
  std::size_t windows_unscored = 0;
  std::size_t positions_scored = 0;
  std::size_t positions_flagged = 0;
  std::size_t windows_modified = 0;
  std::size_t windows_dropped = 0;
  std::size_t generation_failures = 0;
  std::size_t hallucinated_responses = 0;
  std::size_t first_token_collisions = 0;  // windows with a shared first token
  std::vector<std::string> failures;

  json to_json() const;
};

struct DenoiseResult {
  std::vector<SequenceWindow> windows;  // corrected, dropped windows removed
  std::vector<NoiseAssessment> assessments;
  DenoiseReport report;
};

DenoiseResult run_denoise(std::span<const SequenceWindow> windows, const ItemCatalog& catalog,
                          const lm::LanguageModel& backend, const DenoiseConfig& config,
                          Targets targets, const PopularitySampler* popularity = nullptr,
                          const GroundingIndex* grounding = nullptr);

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace seqdenoise::denoise
