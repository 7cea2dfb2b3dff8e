#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seqdenoise/corpus.hpp"
#include "seqdenoise/noise.hpp"

namespace seqdenoise::prompt {

/// Task statement shared by the fine-tuning corpus and inference prompts.
extern const std::string_view kInstruction;
extern const std::string_view kInputPreamble;   // "The user has interacted with ..."
extern const std::string_view kNoiseMarker;     // `Noise Items: "`
extern const std::string_view kSuggestMarker;   // `", Suggested Items: "`

constexpr std::size_t kMaxTitleTokens = 64;

/// Catalog title as it appears in prompts: truncated to the first
/// kMaxTitleTokens whitespace-delimited tokens.
std::string describe(std::string_view title, bool* truncated = nullptr);

/// Wraps text in double quotes, doubling any inner quote.
std::string quote(std::string_view text);
/// Doubles inner quotes without wrapping.
std::string escape(std::string_view text);

/// Reads one quoted field starting at `pos` (which must point at the opening
/// quote); returns the unescaped text and advances `pos` past the closing
/// quote. nullopt when the field is unterminated.
std::optional<std::string> read_quoted(std::string_view text, std::size_t& pos);

/// Reads text up to the first lone (undoubled) quote, unescaping doubled
/// quotes. Used on generations that start right after an opening quote.
std::string read_until_closing_quote(std::string_view text);

std::string render_input(std::span<const ItemId> items, const ItemCatalog& catalog,
                         std::size_t* truncated = nullptr);
std::string render_input(const SequenceWindow& window, const ItemCatalog& catalog);

/// Inverse of render_input: recovers the title list from a rendered input
/// line (or any text containing one). nullopt if no input line is present.
std::optional<std::vector<std::string>> parse_input(std::string_view text);

struct InstructionExample {
  std::string instruction;
  std::string input;
  std::string output;

  json to_json() const;
};

/// Output string `Noise Items: "<noise>", Suggested Items: "<suggestion>"`.
std::string render_output(std::string_view noise_title, std::string_view suggestion_title);

struct OutputPair {
  std::string noise;
  std::string suggestion;
};
std::optional<OutputPair> parse_output(std::string_view output);

/// Builds the training example for a corrupted window: the prompt shows the
/// window inputs, the output names the injected item and the original.
InstructionExample make_example(const CorruptedWindow& corrupted, const ItemCatalog& catalog);

/// Writes one {instruction, input, output} line per corruption; returns the
/// line count.
std::size_t emit_corpus(std::span<const CorruptedWindow> corruptions, const ItemCatalog& catalog,
                        const std::filesystem::path& path);

struct PromptBundle {
  std::string scoring_prefix;  // ends with kNoiseMarker

  std::string suggestion_prefix(std::string_view description) const;
};

/// Prompts for one window. Only the inputs are shown; the target is never
/// part of the prompt.
PromptBundle build_prompt_bundle(const SequenceWindow& window, const ItemCatalog& catalog);

/// Groups of item ids whose titles are identical (ambiguous for grounding).
std::vector<std::vector<ItemId>> title_collisions(const ItemCatalog& catalog);

}  // namespace seqdenoise::prompt
