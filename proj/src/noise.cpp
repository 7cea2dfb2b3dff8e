#include "seqdenoise/noise.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "seqdenoise/error.hpp"
#include "seqdenoise/hashing.hpp"

namespace seqdenoise {

std::string_view to_string(CorruptionOrigin origin) {
  return origin == CorruptionOrigin::kArtificialEval ? "artificial-eval" : "instruction-corpus";
}

json record_to_json(const CorruptionRecord& r) {
  return json{{"window", r.window_ref},
              {"position", r.position},
              {"original", r.original},
              {"noise", r.noise},
              {"origin", to_string(r.origin)}};
}

CorruptionRecord record_from_json(const json& row) {
  CorruptionRecord r;
  try {
    r.window_ref = row.at("window").get<std::string>();
    r.position = row.at("position").get<std::size_t>();
    r.original = row.at("original").get<std::string>();
    r.noise = row.at("noise").get<std::string>();
    const auto origin = row.at("origin").get<std::string>();
    if (origin == "artificial-eval") {
      r.origin = CorruptionOrigin::kArtificialEval;
    } else if (origin == "instruction-corpus") {
      r.origin = CorruptionOrigin::kInstructionCorpus;
    } else {
      throw ParseError("unknown corruption origin '" + origin + "'");
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed corruption record: ") + e.what());
  }
  return r;
}

void write_records(const std::filesystem::path& path, std::span<const CorruptionRecord> records) {
  std::string text;
  for (const auto& r : records) {
    text += record_to_json(r).dump();
    text += '\n';
  }
  write_atomic(path, text);
}

std::vector<CorruptionRecord> read_records(const std::filesystem::path& path) {
  std::vector<CorruptionRecord> out;
  for_each_jsonl(path, [&](const json& row, std::size_t) { out.push_back(record_from_json(row)); });
  return out;
}

InjectionResult inject_artificial_noise(std::span<const InteractionSequence> sequences,
                                        const ItemCatalog& catalog, double alpha,
                                        std::uint64_t seed) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw PreconditionError("alpha must lie in [0, 1]");
  if (alpha > 0.0 && catalog.size() < 2) {
    throw PreconditionError("catalog needs at least 2 items to inject noise");
  }
  InjectionResult result;
  result.sequences.assign(sequences.begin(), sequences.end());
  if (alpha == 0.0) return result;

  std::bernoulli_distribution replace(alpha);
  std::uniform_int_distribution<std::size_t> pick(0, catalog.size() - 2);
  for (auto& seq : result.sequences) {
    std::mt19937_64 rng(derive_seed(seed, seq.user));
    for (std::size_t pos = 0; pos < seq.events.size(); ++pos) {
      if (!replace(rng)) continue;
      auto& event = seq.events[pos];
      const std::size_t original = catalog.index_of(event.item);
      std::size_t drawn = pick(rng);
      if (drawn >= original) ++drawn;  // skip the original item
      CorruptionRecord record{seq.user, pos, event.item, catalog.at(drawn).id,
                              CorruptionOrigin::kArtificialEval};
      event.item = record.noise;
      result.records.push_back(std::move(record));
    }
  }
  return result;
}

std::vector<CorruptedWindow> corrupt_for_corpus(std::span<const SequenceWindow> windows,
                                                const ItemCatalog& catalog, std::uint64_t seed) {
  std::vector<CorruptedWindow> out;
  out.reserve(windows.size());
  for (const auto& window : windows) {
    if (window.items.size() < 2) {
      throw PreconditionError("window " + window.ref() + " has fewer than 2 items");
    }
    if (catalog.size() < window.items.size() + 1) {
      throw PreconditionError("catalog too small to find an item outside window " + window.ref());
    }
    std::vector<std::size_t> excluded;
    excluded.reserve(window.items.size());
    for (const auto& id : window.items) excluded.push_back(catalog.index_of(id));
    std::sort(excluded.begin(), excluded.end());
    excluded.erase(std::unique(excluded.begin(), excluded.end()), excluded.end());

    std::mt19937_64 rng(derive_seed(seed, window.ref()));
    std::uniform_int_distribution<std::size_t> pick_pos(0, window.items.size() - 2);
    std::uniform_int_distribution<std::size_t> pick_item(0, catalog.size() - excluded.size() - 1);
    const std::size_t position = pick_pos(rng);
    // Map the k-th allowed slot onto a catalog index by stepping over the
    // sorted excluded indices.
    std::size_t chosen = pick_item(rng);
    for (std::size_t ex : excluded) {
      if (ex <= chosen) ++chosen;
    }

    CorruptedWindow cw{window, {window.ref(), position, window.items[position],
                                catalog.at(chosen).id, CorruptionOrigin::kInstructionCorpus}};
    cw.window.items[position] = cw.record.noise;
    out.push_back(std::move(cw));
  }
  return out;
}

std::vector<SequenceWindow> sample_windows(std::span<const SequenceWindow> windows,
                                           std::size_t count, std::uint64_t seed) {
  if (count > windows.size()) {
    throw PreconditionError("cannot sample " + std::to_string(count) + " windows from " +
                            std::to_string(windows.size()));
  }
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(fnv1a_u64(seed, fnv1a("sample_windows")));
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(count);
  std::sort(order.begin(), order.end());
  std::vector<SequenceWindow> out;
  out.reserve(count);
  for (std::size_t i : order) out.push_back(windows[i]);
  return out;
}

}  // namespace seqdenoise
