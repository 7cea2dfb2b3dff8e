#include "seqdenoise/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <random>

#include "seqdenoise/error.hpp"
#include "seqdenoise/hashing.hpp"

namespace seqdenoise::synth {

namespace {

constexpr std::array<std::string_view, 16> kSyllables = {
    "ba", "ko", "ri", "mu", "te", "lo", "sa", "vi", "ne", "du", "pa", "zo", "fe", "gi", "ha", "ju"};

constexpr std::array<std::string_view, 12> kCategoryNames = {
    "Strategy", "Racing", "Puzzle", "Horror", "Sports", "Arcade",
    "Fantasy",  "Shooter", "Rhythm", "Survival", "Stealth", "Platformer"};

constexpr std::array<std::string_view, 10> kNouns = {"Saga",    "Legends", "Quest", "Chronicle",
                                                     "Arena",   "Frontier", "Odyssey", "Tactics",
                                                     "Origins", "Rivals"};

std::string category_name(int c) {
  if (c < static_cast<int>(kCategoryNames.size())) return std::string(kCategoryNames[c]);
  return "Category" + std::to_string(c);
}

std::string padded(char prefix, std::size_t value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%c%0*zu", prefix, width, value);
  return buf;
}

}  // namespace

void SynthSpec::validate() const {
  if (n_categories < 2) throw ValidationError("synth: n_categories must be >= 2");
  if (window_length < 2) throw ValidationError("synth: window_length must be >= 2");
  if (items_per_category < window_length + 1) {
    throw ValidationError("synth: items_per_category must be >= window_length + 1");
  }
  if (n_users < 1) throw ValidationError("synth: n_users must be >= 1");
  if (!(cross_category_rate >= 0.0 && cross_category_rate <= 1.0)) {
    throw ValidationError("synth: cross_category_rate must lie in [0, 1]");
  }
  if (!(follow_rate >= 0.0 && follow_rate <= 1.0)) {
    throw ValidationError("synth: follow_rate must lie in [0, 1]");
  }
  if (min_events < 1 || max_events < min_events) {
    throw ValidationError("synth: need 1 <= min_events <= max_events");
  }
  if (successors_per_item < 1 || successors_per_item >= items_per_category) {
    throw ValidationError("synth: successors_per_item must lie in [1, items_per_category)");
  }
}

json SynthSpec::to_json() const {
  return json{{"n_categories", n_categories},
              {"items_per_category", items_per_category},
              {"n_users", n_users},
              {"window_length", window_length},
              {"cross_category_rate", cross_category_rate},
              {"seed", seed},
              {"min_events", min_events},
              {"max_events", max_events},
              {"zipf", zipf},
              {"zipf_exponent", zipf_exponent},
              {"follow_rate", follow_rate},
              {"successors_per_item", successors_per_item}};
}

SynthSpec SynthSpec::from_json(const json& j) {
  SynthSpec s;
  s.n_categories = j.value("n_categories", s.n_categories);
  s.items_per_category = j.value("items_per_category", s.items_per_category);
  s.n_users = j.value("n_users", s.n_users);
  s.window_length = j.value("window_length", s.window_length);
  s.cross_category_rate = j.value("cross_category_rate", s.cross_category_rate);
  s.seed = j.value("seed", s.seed);
  s.min_events = j.value("min_events", s.min_events);
  s.max_events = j.value("max_events", s.max_events);
  s.zipf = j.value("zipf", s.zipf);
  s.zipf_exponent = j.value("zipf_exponent", s.zipf_exponent);
  s.follow_rate = j.value("follow_rate", s.follow_rate);
  s.successors_per_item = j.value("successors_per_item", s.successors_per_item);
  return s;
}

std::string pseudo_word(std::size_t index) {
  std::size_t digits = 3;
  for (std::size_t cap = 16 * 16 * 16; index >= cap; cap *= 16) ++digits;
  std::string word;
  for (std::size_t d = 0; d < digits; ++d) {
    const std::size_t shift = 4 * (digits - 1 - d);
    word += kSyllables[(index >> shift) & 0xF];
  }
  word[0] = static_cast<char>(word[0] - 'a' + 'A');
  return word;
}

SynthCorpus generate(const SynthSpec& spec) {
  spec.validate();
  SynthCorpus out;
  const int ipc = spec.items_per_category;
  const std::size_t n_items = static_cast<std::size_t>(spec.n_categories) * ipc;

  for (int c = 0; c < spec.n_categories; ++c) out.category_names.push_back(category_name(c));
  for (std::size_t g = 0; g < n_items; ++g) {
    const int c = static_cast<int>(g / ipc);
    const std::size_t j = g % ipc;
    std::string title = pseudo_word(g) + " " + out.category_names[c] + " " +
                        std::string(kNouns[j % kNouns.size()]) + " " + std::to_string(j + 1);
    out.catalog.add(padded('s', g, 5), std::move(title));
    out.categories.push_back(c);
  }

  std::vector<double> weights(ipc);
  for (int j = 0; j < ipc; ++j) {
    weights[j] = spec.zipf ? 1.0 / std::pow(static_cast<double>(j + 1), spec.zipf_exponent) : 1.0;
  }
  std::discrete_distribution<int> popularity(weights.begin(), weights.end());

  // Successor lists: distinct same-category items, popularity-weighted.
  std::vector<std::vector<std::size_t>> successors(n_items);
  {
    std::mt19937_64 rng(derive_seed(spec.seed, "successors"));
    for (std::size_t g = 0; g < n_items; ++g) {
      const std::size_t base = (g / ipc) * ipc;
      auto& list = successors[g];
      while (static_cast<int>(list.size()) < spec.successors_per_item) {
        const std::size_t cand = base + static_cast<std::size_t>(popularity(rng));
        if (cand == g || std::find(list.begin(), list.end(), cand) != list.end()) continue;
        list.push_back(cand);
      }
    }
  }

  std::uniform_int_distribution<int> pick_category(0, spec.n_categories - 1);
  std::uniform_int_distribution<int> pick_other(0, spec.n_categories - 2);
  std::uniform_int_distribution<int> pick_uniform(0, ipc - 1);
  std::uniform_int_distribution<int> pick_length(spec.min_events, spec.max_events);
  std::uniform_int_distribution<int> pick_successor(0, spec.successors_per_item - 1);
  std::uniform_int_distribution<Timestamp> pick_start(0, 30'000'000);
  std::uniform_int_distribution<Timestamp> pick_gap(60, 86'400);
  std::bernoulli_distribution cross(spec.cross_category_rate);
  std::bernoulli_distribution follow(spec.follow_rate);

  for (int u = 0; u < spec.n_users; ++u) {
    InteractionSequence seq;
    seq.user = padded('u', static_cast<std::size_t>(u), 6);
    std::mt19937_64 rng(derive_seed(spec.seed, seq.user));
    const int home = pick_category(rng);
    const int length = pick_length(rng);
    Timestamp ts = pick_start(rng);
    std::optional<std::size_t> prev;
    for (int e = 0; e < length; ++e) {
      std::size_t item = 0;
      if (cross(rng)) {
        int other = pick_other(rng);
        if (other >= home) ++other;
        item = static_cast<std::size_t>(other) * ipc + static_cast<std::size_t>(pick_uniform(rng));
        ++out.cross_category_events;
      } else {
        if (prev && follow(rng)) {
          item = successors[*prev][static_cast<std::size_t>(pick_successor(rng))];
        } else {
          item = static_cast<std::size_t>(home) * ipc + static_cast<std::size_t>(popularity(rng));
        }
        prev = item;
      }
      seq.events.push_back({out.catalog.at(item).id, ts});
      ts += pick_gap(rng);
    }
    out.home_category.push_back(home);
    out.sequences.push_back(std::move(seq));
  }
  return out;
}

void write_categories(const std::filesystem::path& path, const SynthCorpus& corpus) {
  std::string text;
  for (std::size_t i = 0; i < corpus.catalog.size(); ++i) {
    const int c = corpus.categories[i];
    text += json{{"item", corpus.catalog.at(i).id}, {"category", c}, {"name", corpus.category_names[c]}}
                .dump();
    text += '\n';
  }
  write_atomic(path, text);
}

std::vector<int> read_categories(const std::filesystem::path& path, const ItemCatalog& catalog) {
  std::vector<int> categories(catalog.size(), -1);
  for_each_jsonl(path, [&](const json& row, std::size_t line) {
    auto idx = catalog.find(row.at("item").get<std::string>());
    if (!idx) {
      throw ValidationError(path.string() + ":" + std::to_string(line) + ": unknown item");
    }
    categories[*idx] = row.at("category").get<int>();
  });
  return categories;
}

}  // namespace seqdenoise::synth
