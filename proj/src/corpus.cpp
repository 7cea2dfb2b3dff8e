#include "seqdenoise/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "seqdenoise/error.hpp"

namespace seqdenoise {

namespace {

bool is_blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n\f\v") == std::string_view::npos;
}

std::string require_string(const json& row, const char* field, const std::string& where) {
  auto it = row.find(field);
  if (it == row.end() || !it->is_string()) {
    throw ParseError(where + ": missing string field '" + field + "'");
  }
  return it->get<std::string>();
}

}  // namespace

ItemCatalog::ItemCatalog(std::vector<CatalogEntry> entries) {
  for (auto& e : entries) add(std::move(e.id), std::move(e.title));
}

void ItemCatalog::add(ItemId id, std::string title) {
  if (is_blank(title)) throw ValidationError("item '" + id + "' has an empty title");
  if (index_.contains(id)) throw ValidationError("duplicate item id '" + id + "'");
  index_.emplace(id, entries_.size());
  entries_.push_back({std::move(id), std::move(title)});
}

std::optional<std::size_t> ItemCatalog::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ItemCatalog::index_of(std::string_view id) const {
  auto idx = find(id);
  if (!idx) throw ValidationError("unknown item id '" + std::string(id) + "'");
  return *idx;
}

const std::string& ItemCatalog::title(std::string_view id) const {
  return entries_[index_of(id)].title;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "valid") return Split::kValid;
  if (text == "test") return Split::kTest;
  throw ParseError("unknown split tag '" + std::string(text) + "'");
}

std::string SequenceWindow::ref() const { return user + "#" + std::to_string(window_index); }

std::pair<std::string, std::size_t> parse_window_ref(std::string_view ref) {
  auto hash = ref.rfind('#');
  if (hash == std::string_view::npos || hash + 1 == ref.size()) {
    throw ParseError("malformed window ref '" + std::string(ref) + "'");
  }
  std::size_t index = 0;
  for (char c : ref.substr(hash + 1)) {
    if (c < '0' || c > '9') throw ParseError("malformed window ref '" + std::string(ref) + "'");
    index = index * 10 + static_cast<std::size_t>(c - '0');
  }
  return {std::string(ref.substr(0, hash)), index};
}

json window_to_json(const SequenceWindow& w) {
  return json{{"user", w.user},
              {"window_index", w.window_index},
              {"split", to_string(w.split)},
              {"anchor", w.anchor_timestamp},
              {"items", w.items}};
}

SequenceWindow window_from_json(const json& row) {
  SequenceWindow w;
  try {
    w.user = row.at("user").get<std::string>();
    w.window_index = row.at("window_index").get<std::size_t>();
    w.split = parse_split(row.at("split").get<std::string>());
    w.anchor_timestamp = row.at("anchor").get<Timestamp>();
    w.items = row.at("items").get<std::vector<ItemId>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed window record: ") + e.what());
  }
  return w;
}

std::vector<SequenceWindow> read_windows(const std::filesystem::path& path) {
  std::vector<SequenceWindow> out;
  for_each_jsonl(path, [&](const json& row, std::size_t) { out.push_back(window_from_json(row)); });
  return out;
}

void write_windows(const std::filesystem::path& path, std::span<const SequenceWindow> windows) {
  std::string text;
  for (const auto& w : windows) {
    text += window_to_json(w).dump();
    text += '\n';
  }
  write_atomic(path, text);
}

ItemCatalog load_catalog(const std::filesystem::path& path) {
  ItemCatalog catalog;
  for_each_jsonl(path, [&](const json& row, std::size_t line) {
    const std::string where = path.string() + ":" + std::to_string(line);
    if (!row.is_object()) throw ParseError(where + ": expected an object");
    catalog.add(require_string(row, "item", where), require_string(row, "title", where));
  });
  return catalog;
}

void write_catalog(const std::filesystem::path& path, const ItemCatalog& catalog) {
  std::string text;
  for (const auto& e : catalog.entries()) {
    text += json{{"item", e.id}, {"title", e.title}}.dump();
    text += '\n';
  }
  write_atomic(path, text);
}

std::vector<InteractionSequence> load_interactions(const std::filesystem::path& path,
                                                   const ItemCatalog& catalog) {
  std::vector<InteractionSequence> sequences;
  std::unordered_map<std::string, std::size_t> by_user;
  for_each_jsonl(path, [&](const json& row, std::size_t line) {
    const std::string where = path.string() + ":" + std::to_string(line);
    if (!row.is_object()) throw ParseError(where + ": expected an object");
    std::string user = require_string(row, "user", where);
    std::string item = require_string(row, "item", where);
    auto ts = row.find("timestamp");
    if (ts == row.end() || !ts->is_number_integer()) {
      throw ParseError(where + ": timestamp must be an integer");
    }
    if (!catalog.contains(item)) {
      throw ValidationError(where + ": user '" + user + "' references unknown item '" + item + "'");
    }
    auto [it, inserted] = by_user.try_emplace(user, sequences.size());
    if (inserted) sequences.push_back({user, {}});
    sequences[it->second].events.push_back({std::move(item), ts->get<Timestamp>()});
  });
  for (auto& seq : sequences) {
    std::stable_sort(seq.events.begin(), seq.events.end(),
                     [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });
  }
  return sequences;
}

void write_interactions(const std::filesystem::path& path,
                        std::span<const InteractionSequence> sequences) {
  std::string text;
  for (const auto& seq : sequences) {
    for (const auto& e : seq.events) {
      text += json{{"user", seq.user}, {"item", e.item}, {"timestamp", e.timestamp}}.dump();
      text += '\n';
    }
  }
  write_atomic(path, text);
}

SegmentResult segment(std::span<const InteractionSequence> sequences, std::size_t window,
                      std::size_t min_length) {
  if (window < 2) throw PreconditionError("window length must be at least 2");
  SegmentResult result;
  for (const auto& seq : sequences) {
    const std::size_t n = seq.events.size();
    if (n < min_length) {
      ++result.dropped_sequences;
      continue;
    }
    const std::size_t len = std::min(n, window);
    for (std::size_t offset = 0; offset + len <= n; ++offset) {
      SequenceWindow w;
      w.user = seq.user;
      w.window_index = offset;
      w.items.reserve(len);
      for (std::size_t i = offset; i < offset + len; ++i) w.items.push_back(seq.events[i].item);
      w.anchor_timestamp = seq.events[offset + len - 1].timestamp;
      result.windows.push_back(std::move(w));
    }
  }
  return result;
}

std::vector<SequenceWindow> split_temporal(std::vector<SequenceWindow> windows,
                                           const SplitRatios& ratios) {
  if (windows.empty()) throw PreconditionError("cannot split an empty window list");
  if (ratios.train <= 0 || ratios.valid <= 0 || ratios.test <= 0 ||
      std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9) {
    throw PreconditionError("split ratios must be positive and sum to 1");
  }
  std::sort(windows.begin(), windows.end(), [](const SequenceWindow& a, const SequenceWindow& b) {
    return std::tie(a.anchor_timestamp, a.user, a.window_index) <
           std::tie(b.anchor_timestamp, b.user, b.window_index);
  });
  const auto n = static_cast<double>(windows.size());
  // The epsilon keeps exact products such as 0.8 * 10 from flooring to 7.
  const auto n_train = static_cast<std::size_t>(std::floor(ratios.train * n + 1e-9));
  const auto n_valid = static_cast<std::size_t>(std::floor(ratios.valid * n + 1e-9));
  for (std::size_t i = 0; i < windows.size(); ++i) {
    windows[i].split = i < n_train             ? Split::kTrain
                       : i < n_train + n_valid ? Split::kValid
                                               : Split::kTest;
  }
  return windows;
}

json IngestStats::to_json() const {
  return json{{"users", users},
              {"items", items},
              {"interactions", interactions},
              {"sequences", sequences},
              {"dropped_sequences", dropped_sequences},
              {"train", train},
              {"valid", valid},
              {"test", test},
              {"density", density}};
}

IngestStats ingest_stats(const ItemCatalog& catalog, std::span<const InteractionSequence> sequences,
                         const SegmentResult& segmented,
                         std::span<const SequenceWindow> split_windows) {
  IngestStats s;
  s.users = sequences.size();
  s.items = catalog.size();
  for (const auto& seq : sequences) s.interactions += seq.events.size();
  s.sequences = segmented.windows.size();
  s.dropped_sequences = segmented.dropped_sequences;
  for (const auto& w : split_windows) {
    switch (w.split) {
      case Split::kTrain: ++s.train; break;
      case Split::kValid: ++s.valid; break;
      case Split::kTest: ++s.test; break;
    }
  }
  if (s.users > 0 && s.items > 0) {
    s.density = static_cast<double>(s.interactions) /
                (static_cast<double>(s.users) * static_cast<double>(s.items));
  }
  return s;
}

}  // namespace seqdenoise
