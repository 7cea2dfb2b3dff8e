#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "seqdenoise/corpus.hpp"

namespace seqdenoise {

enum class CorruptionOrigin { kArtificialEval, kInstructionCorpus };

std::string_view to_string(CorruptionOrigin origin);

/// Ground truth for one replaced position. For artificial-eval records the
/// window ref is the user id and `position` indexes the full sequence (noise
/// is injected before segmentation); for corpus records it is a window ref
/// and a window position.
struct CorruptionRecord {
  std::string window_ref;
  std::size_t position = 0;
  ItemId original;
  ItemId noise;
  CorruptionOrigin origin = CorruptionOrigin::kArtificialEval;

  bool operator==(const CorruptionRecord&) const = default;
};

json record_to_json(const CorruptionRecord& record);
CorruptionRecord record_from_json(const json& row);
void write_records(const std::filesystem::path& path, std::span<const CorruptionRecord> records);
std::vector<CorruptionRecord> read_records(const std::filesystem::path& path);

struct InjectionResult {
  std::vector<InteractionSequence> sequences;
  std::vector<CorruptionRecord> records;
};

/// Replaces every event independently with probability `alpha` by an item
/// drawn uniformly from the catalog minus the original item.
InjectionResult inject_artificial_noise(std::span<const InteractionSequence> sequences,
                                        const ItemCatalog& catalog, double alpha,
                                        std::uint64_t seed);

struct CorruptedWindow {
  SequenceWindow window;
  CorruptionRecord record;
};

/// Replaces exactly one input position per window (never the target) with an
/// item that does not occur anywhere in the window.
std::vector<CorruptedWindow> corrupt_for_corpus(std::span<const SequenceWindow> windows,
                                                const ItemCatalog& catalog, std::uint64_t seed);

/// Seeded sample without replacement, returned in input order.
std::vector<SequenceWindow> sample_windows(std::span<const SequenceWindow> windows,
                                           std::size_t count, std::uint64_t seed);

}  // namespace seqdenoise
