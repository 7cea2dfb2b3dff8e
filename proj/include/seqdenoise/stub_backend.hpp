#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "seqdenoise/corpus.hpp"
#include "seqdenoise/lm_bridge.hpp"

namespace seqdenoise::lm {

/// Deterministic stand-in for a fine-tuned model, built over a catalog whose
/// items carry hidden category tags.
///
/// Scoring: the window is recovered from the prompt. Each window position k
/// gets logit mismatch_k / kTemperature, where mismatch_k is 1 when the
/// item's category differs from the window's majority category. The first
/// token of a continuation receives the softmax mass of the window positions
/// whose description starts with that token; later tokens get logprob 0.
///
/// Generation after a suggestion prefix returns the same-majority-category
/// item outside the window with the highest adjacency count to the flagged
/// item's neighbours in the reference sequences. After a scoring prefix it
/// returns the most probable noise title.
///
/// Embeddings are hashed character trigram counts, unit-normalized.
class StubModel final : public LanguageModel {
 public:
  static constexpr double kTemperature = 0.25;
  static constexpr std::size_t kEmbeddingDim = 256;
  static constexpr double kFloorProbability = 1e-12;

  /// `categories` is indexed like the catalog (-1 = unknown). `reference`
  /// supplies adjacency and popularity counts.
  StubModel(ItemCatalog catalog, std::vector<int> categories,
            std::span<const InteractionSequence> reference);

  std::vector<TokenLogprob> score_continuation(std::string_view prefix,
                                               std::string_view continuation) const override;
  std::string generate(std::string_view prefix, std::span<const std::string> stop,
                       int max_tokens) const override;
  std::vector<double> embed(std::string_view text) const override;
  std::size_t max_parallel() const override { return 8; }

  /// Splits text into tokens of (leading whitespace + non-whitespace run).
  static std::vector<std::string> tokenize(std::string_view text);

 private:
  struct Window {
    std::vector<std::string> titles;
    std::vector<int> items;  // catalog index or -1
    int majority = -1;
  };

  Window parse_window(std::string_view prefix) const;
  std::vector<double> noise_distribution(const Window& window) const;
  std::string suggest(const Window& window, std::string_view noise_title) const;
  std::size_t adjacency(std::size_t from, std::size_t to) const;

  ItemCatalog catalog_;
  std::vector<int> categories_;
  std::unordered_map<std::string, std::size_t> by_description_;
  std::unordered_map<std::uint64_t, std::uint32_t> adjacency_;
  std::vector<std::uint64_t> popularity_;
};

}  // namespace seqdenoise::lm
