#include "seqdenoise/stub_backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <tuple>

#include "seqdenoise/error.hpp"
#include "seqdenoise/hashing.hpp"
#include "seqdenoise/prompt.hpp"

namespace seqdenoise::lm {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string first_token(std::string_view text) {
  auto tokens = StubModel::tokenize(text);
  return tokens.empty() ? std::string() : tokens.front();
}

}  // namespace

StubModel::StubModel(ItemCatalog catalog, std::vector<int> categories,
                     std::span<const InteractionSequence> reference)
    : catalog_(std::move(catalog)), categories_(std::move(categories)) {
  if (categories_.size() != catalog_.size()) {
    throw PreconditionError("stub: category tags must cover the catalog");
  }
  for (std::size_t i = 0; i < catalog_.size(); ++i) {
    by_description_.try_emplace(prompt::describe(catalog_.at(i).title), i);
  }
  popularity_.assign(catalog_.size(), 0);
  const std::uint64_t n = catalog_.size();
  for (const auto& seq : reference) {
    constexpr std::size_t kNone = static_cast<std::size_t>(-1);
    std::size_t prev = kNone;
    for (const auto& e : seq.events) {
      const auto idx = catalog_.find(e.item);
      if (!idx) {
        prev = kNone;
        continue;
      }
      ++popularity_[*idx];
      if (prev != kNone) ++adjacency_[prev * n + *idx];
      prev = *idx;
    }
  }
}

std::vector<std::string> StubModel::tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    while (i < text.size() && is_space(text[i])) ++i;
    while (i < text.size() && !is_space(text[i])) ++i;
    tokens.emplace_back(text.substr(start, i - start));
  }
  return tokens;
}

StubModel::Window StubModel::parse_window(std::string_view prefix) const {
  Window w;
  if (auto titles = prompt::parse_input(prefix)) w.titles = std::move(*titles);
  std::map<int, int> counts;
  for (const auto& t : w.titles) {
    auto it = by_description_.find(t);
    const int idx = it == by_description_.end() ? -1 : static_cast<int>(it->second);
    w.items.push_back(idx);
    if (idx >= 0 && categories_[idx] >= 0) ++counts[categories_[idx]];
  }
  int best = 0;
  for (const auto& [category, count] : counts) {
    if (count > best) {  // ties keep the smaller category id
      best = count;
      w.majority = category;
    }
  }
  return w;
}

std::vector<double> StubModel::noise_distribution(const Window& w) const {
  std::vector<double> logits(w.titles.size());
  for (std::size_t k = 0; k < w.titles.size(); ++k) {
    const int idx = w.items[k];
    const bool mismatch = idx < 0 || categories_[idx] != w.majority;
    logits[k] = (mismatch ? 1.0 : 0.0) / kTemperature;
  }
  if (logits.empty()) return logits;
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& l : logits) {
    l = std::exp(l - top);
    total += l;
  }
  for (double& l : logits) l /= total;
  return logits;
}

std::vector<TokenLogprob> StubModel::score_continuation(std::string_view prefix,
                                                        std::string_view continuation) const {
  check_score_args(prefix, continuation);
  auto tokens = tokenize(continuation);
  const std::string head = tokens.front();

  double p = 0.0;
  const Window w = parse_window(prefix);
  if (!w.titles.empty()) {
    const auto dist = noise_distribution(w);
    for (std::size_t k = 0; k < w.titles.size(); ++k) {
      if (first_token(prompt::escape(w.titles[k])) == head) p += dist[k];
    }
  } else {
    std::size_t matches = 0;
    for (const auto& e : catalog_.entries()) {
      if (first_token(prompt::escape(prompt::describe(e.title))) == head) ++matches;
    }
    p = static_cast<double>(matches) / static_cast<double>(std::max<std::size_t>(1, catalog_.size()));
  }
  p = std::clamp(p, kFloorProbability, 1.0);

  std::vector<TokenLogprob> out;
  out.reserve(tokens.size());
  out.push_back({tokens.front(), std::min(0.0, std::log(p))});
  for (std::size_t i = 1; i < tokens.size(); ++i) out.push_back({tokens[i], 0.0});
  return out;
}

std::size_t StubModel::adjacency(std::size_t from, std::size_t to) const {
  auto it = adjacency_.find(static_cast<std::uint64_t>(from) * catalog_.size() + to);
  return it == adjacency_.end() ? 0 : it->second;
}

std::string StubModel::suggest(const Window& w, std::string_view noise_title) const {
  std::vector<bool> in_window(catalog_.size(), false);
  for (int idx : w.items) {
    if (idx >= 0) in_window[idx] = true;
  }
  std::vector<std::size_t> flagged;
  for (std::size_t k = 0; k < w.titles.size(); ++k) {
    if (w.titles[k] == noise_title) flagged.push_back(k);
  }

  std::optional<std::size_t> best;
  std::tuple<std::size_t, std::uint64_t> best_key{0, 0};
  for (std::size_t c = 0; c < catalog_.size(); ++c) {
    if (in_window[c]) continue;
    if (w.majority >= 0 && categories_[c] != w.majority) continue;
    std::size_t affinity = 0;
    for (std::size_t k : flagged) {
      if (k > 0 && w.items[k - 1] >= 0) affinity += adjacency(w.items[k - 1], c);
      if (k + 1 < w.items.size() && w.items[k + 1] >= 0) affinity += adjacency(c, w.items[k + 1]);
    }
    std::tuple<std::size_t, std::uint64_t> key{affinity, popularity_[c]};
    if (!best || key > best_key) {
      best = c;
      best_key = key;
    }
  }
  if (!best) return std::string();
  return prompt::describe(catalog_.at(*best).title);
}

std::string StubModel::generate(std::string_view prefix, std::span<const std::string> stop,
                                int max_tokens) const {
  check_generate_args(max_tokens);
  std::string raw;
  if (prefix.ends_with(prompt::kSuggestMarker)) {
    const std::string_view body = prefix.substr(0, prefix.size() - prompt::kSuggestMarker.size());
    const auto at = body.rfind(prompt::kNoiseMarker);
    std::string noise;
    if (at != std::string_view::npos) {
      noise = prompt::read_until_closing_quote(std::string(body.substr(at + prompt::kNoiseMarker.size())) + "\"");
    }
    const auto title = suggest(parse_window(body), noise);
    if (!title.empty()) raw = prompt::escape(title) + "\"\n";
  } else if (prefix.ends_with(prompt::kNoiseMarker)) {
    const Window w = parse_window(prefix);
    const auto dist = noise_distribution(w);
    if (!dist.empty()) {
      const auto k = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
      raw = prompt::escape(w.titles[k]) + std::string(prompt::kSuggestMarker);
    }
  }
  auto tokens = tokenize(raw);
  std::string text;
  for (std::size_t i = 0; i < tokens.size() && static_cast<int>(i) < max_tokens; ++i) text += tokens[i];
  return apply_stop(text, stop);
}

std::vector<double> StubModel::embed(std::string_view text) const {
  check_embed_args(text);
  std::string lower(text);
  for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  std::vector<double> v(kEmbeddingDim, 0.0);
  if (lower.size() < 3) {
    v[fnv1a(lower) % kEmbeddingDim] += 1.0;
  } else {
    for (std::size_t i = 0; i + 3 <= lower.size(); ++i) {
      v[fnv1a(std::string_view(lower).substr(i, 3)) % kEmbeddingDim] += 1.0;
    }
  }
  normalize(v);
  return v;
}

}  // namespace seqdenoise::lm
