#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "seqdenoise/jsonl.hpp"

namespace seqdenoise {

using ItemId = std::string;
using Timestamp = std::int64_t;

struct CatalogEntry {
  ItemId id;
  std::string title;
};

/// Item ids mapped to their textual descriptions, in insertion order.
class ItemCatalog {
 public:
  ItemCatalog() = default;
  explicit ItemCatalog(std::vector<CatalogEntry> entries);

  /// Throws ValidationError on a duplicate id or a blank title.
  void add(ItemId id, std::string title);

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  bool contains(std::string_view id) const { return find(id).has_value(); }
  std::optional<std::size_t> find(std::string_view id) const;
  /// Throws ValidationError for an unknown id.
  std::size_t index_of(std::string_view id) const;
  const std::string& title(std::string_view id) const;
  const CatalogEntry& at(std::size_t index) const { return entries_.at(index); }
  const std::vector<CatalogEntry>& entries() const noexcept { return entries_; }

 private:
  std::vector<CatalogEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Event {
  ItemId item;
  Timestamp timestamp = 0;
};

struct InteractionSequence {
  std::string user;
  std::vector<Event> events;
};

enum class Split { kTrain, kValid, kTest };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct SequenceWindow {
  std::string user;
  std::vector<ItemId> items;
  std::size_t window_index = 0;  // offset of items[0] in the source sequence
  Split split = Split::kTrain;
  Timestamp anchor_timestamp = 0;

  /// Stable identifier "<user>#<window_index>".
  std::string ref() const;
  /// Everything but the prediction target.
  std::span<const ItemId> inputs() const {
    return std::span<const ItemId>(items).first(items.empty() ? 0 : items.size() - 1);
  }
  const ItemId& target() const { return items.back(); }

  bool operator==(const SequenceWindow&) const = default;
};

/// Splits a window ref back into (user, window_index). Throws ParseError.
std::pair<std::string, std::size_t> parse_window_ref(std::string_view ref);

json window_to_json(const SequenceWindow& window);
SequenceWindow window_from_json(const json& row);
std::vector<SequenceWindow> read_windows(const std::filesystem::path& path);
void write_windows(const std::filesystem::path& path, std::span<const SequenceWindow> windows);

ItemCatalog load_catalog(const std::filesystem::path& path);
void write_catalog(const std::filesystem::path& path, const ItemCatalog& catalog);

/// One sequence per distinct user (first-appearance order), events sorted by
/// timestamp with ties kept in file order.
std::vector<InteractionSequence> load_interactions(const std::filesystem::path& path,
                                                   const ItemCatalog& catalog);
void write_interactions(const std::filesystem::path& path,
                        std::span<const InteractionSequence> sequences);

constexpr std::size_t kDefaultWindow = 11;
constexpr std::size_t kDefaultMinLength = 3;

struct SegmentResult {
  std::vector<SequenceWindow> windows;
  std::size_t dropped_sequences = 0;
};

SegmentResult segment(std::span<const InteractionSequence> sequences,
                      std::size_t window = kDefaultWindow,
                      std::size_t min_length = kDefaultMinLength);

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

/// Sorts by (anchor timestamp, user, window index) and tags the first
/// floor(train*n) windows train, the next floor(valid*n) valid, the rest test.
std::vector<SequenceWindow> split_temporal(std::vector<SequenceWindow> windows,
                                           const SplitRatios& ratios = {});

struct IngestStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t interactions = 0;
  std::size_t sequences = 0;  // windows after segmentation
  std::size_t dropped_sequences = 0;
  std::size_t train = 0;
  std::size_t valid = 0;
  std::size_t test = 0;
  double density = 0.0;

  json to_json() const;
};

IngestStats ingest_stats(const ItemCatalog& catalog,
                         std::span<const InteractionSequence> sequences,
                         const SegmentResult& segmented,
                         std::span<const SequenceWindow> split_windows);

}  // namespace seqdenoise
