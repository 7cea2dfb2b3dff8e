#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "seqdenoise/corpus.hpp"

namespace seqdenoise::synth {

/// Parameters of the synthetic categorized corpus.
struct SynthSpec {
  int n_categories = 4;
  int items_per_category = 200;
  int n_users = 2000;
  int window_length = 11;
  double cross_category_rate = 0.0;
  std::uint64_t seed = 0;

  int min_events = 12;
  int max_events = 30;
  /// Zipf-distributed item popularity inside each category (exponent 1.0).
  bool zipf = true;
  double zipf_exponent = 1.0;
  /// Probability that a same-category event continues from the previous
  /// item's successor list instead of a popularity draw.
  double follow_rate = 0.6;
  int successors_per_item = 3;

  /// Throws ValidationError when an invariant does not hold.
  void validate() const;
  json to_json() const;
  static SynthSpec from_json(const json& j);
};

struct SynthCorpus {
  ItemCatalog catalog;
  std::vector<int> categories;  // by catalog index
  std::vector<std::string> category_names;
  std::vector<int> home_category;  // by sequence index
  std::vector<InteractionSequence> sequences;
  std::size_t cross_category_events = 0;
};

SynthCorpus generate(const SynthSpec& spec);

/// Pronounceable word that is unique per index; used as every title's first
/// token so first tokens never collide.
std::string pseudo_word(std::size_t index);

/// Category sidecar: one {"item", "category", "name"} object per line.
void write_categories(const std::filesystem::path& path, const SynthCorpus& corpus);
std::vector<int> read_categories(const std::filesystem::path& path, const ItemCatalog& catalog);

}  // namespace seqdenoise::synth
