#include "seqdenoise/denoiser.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "seqdenoise/error.hpp"
#include "seqdenoise/hashing.hpp"

namespace seqdenoise::denoise {

std::string_view to_string(ProbabilityMode mode) {
  return mode == ProbabilityMode::kFirstToken ? "first-token" : "full-product";
}

std::string_view to_string(CorrectionMode mode) {
  switch (mode) {
    case CorrectionMode::kReplace: return "replace";
    case CorrectionMode::kDeleteOnly: return "delete-only";
    case CorrectionMode::kPopularityCompletion: return "popularity-completion";
    case CorrectionMode::kRawResponse: return "raw-response";
  }
  return "replace";
}

std::string_view to_string(Targets targets) {
  switch (targets) {
    case Targets::kTrain: return "train";
    case Targets::kTest: return "test";
    case Targets::kBoth: return "both";
  }
  return "both";
}

ProbabilityMode parse_probability_mode(std::string_view text) {
  if (text == "first-token") return ProbabilityMode::kFirstToken;
  if (text == "full-product") return ProbabilityMode::kFullProduct;
  throw ConfigError("unknown probability mode '" + std::string(text) + "'");
}

CorrectionMode parse_correction_mode(std::string_view text) {
  if (text == "replace") return CorrectionMode::kReplace;
  if (text == "delete-only") return CorrectionMode::kDeleteOnly;
  if (text == "popularity-completion") return CorrectionMode::kPopularityCompletion;
  if (text == "raw-response") return CorrectionMode::kRawResponse;
  throw ConfigError("unknown correction mode '" + std::string(text) + "'");
}

Targets parse_targets(std::string_view text) {
  if (text == "train") return Targets::kTrain;
  if (text == "test") return Targets::kTest;
  if (text == "both") return Targets::kBoth;
  throw ConfigError("unknown denoise targets '" + std::string(text) + "'");
}

void DenoiseConfig::validate() const {
  if (!(eta_quantile >= 0.0 && eta_quantile <= 1.0)) {
    throw ConfigError("eta_quantile must lie in [0, 1]");
  }
  if (b_cap < 1) throw ConfigError("b_cap must be >= 1");
  if (max_suggestion_tokens < 1) throw ConfigError("max_suggestion_tokens must be >= 1");
}

json DenoiseConfig::to_json() const {
  return json{{"eta_quantile", eta_quantile},
              {"b_cap", b_cap},
              {"probability_mode", to_string(probability_mode)},
              {"correction_mode", to_string(correction_mode)},
              {"seed", seed},
              {"max_suggestion_tokens", max_suggestion_tokens}};
}

DenoiseConfig DenoiseConfig::from_json(const json& j) {
  DenoiseConfig c;
  c.eta_quantile = j.value("eta_quantile", c.eta_quantile);
  c.b_cap = j.value("b_cap", c.b_cap);
  c.probability_mode =
      parse_probability_mode(j.value("probability_mode", std::string(to_string(c.probability_mode))));
  c.correction_mode =
      parse_correction_mode(j.value("correction_mode", std::string(to_string(c.correction_mode))));
  c.seed = j.value("seed", c.seed);
  c.max_suggestion_tokens = j.value("max_suggestion_tokens", c.max_suggestion_tokens);
  return c;
}

std::vector<std::size_t> NoiseAssessment::flagged_positions() const {
  std::vector<std::size_t> out;
  for (const auto& p : positions) {
    if (p.flagged) out.push_back(p.position);
  }
  return out;
}

json NoiseAssessment::to_json() const {
  json rows = json::array();
  if (!scored) {
    rows.push_back(json{{"window", window_ref}, {"position", nullptr}, {"failure", failure}});
    return rows;
  }
  for (const auto& p : positions) {
    rows.push_back(json{{"window", window_ref},
                        {"position", p.position},
                        {"p_noise", p.p_noise},
                        {"flagged", p.flagged},
                        {"suggested", p.suggested ? json(*p.suggested) : json(nullptr)},
                        {"grounded", p.grounded ? json(*p.grounded) : json(nullptr)}});
  }
  return rows;
}

std::vector<json> assessment_rows(std::span<const NoiseAssessment> assessments) {
  std::vector<json> rows;
  for (const auto& a : assessments) {
    for (auto& row : a.to_json()) rows.push_back(std::move(row));
  }
  return rows;
}

void write_assessments(const std::filesystem::path& path,
                       std::span<const NoiseAssessment> assessments) {
  write_atomic(path, to_jsonl(assessment_rows(assessments)));
}

std::vector<NoiseAssessment> read_assessments(const std::filesystem::path& path,
                                              std::span<const SequenceWindow> windows) {
  std::unordered_map<std::string, std::size_t> lengths;
  for (const auto& w : windows) lengths[w.ref()] = w.items.size();
  std::vector<NoiseAssessment> out;
  std::unordered_map<std::string, std::size_t> by_ref;
  for_each_jsonl(path, [&](const json& row, std::size_t line) {
    const auto ref = row.at("window").get<std::string>();
    auto [it, inserted] = by_ref.try_emplace(ref, out.size());
    if (inserted) {
      NoiseAssessment a;
      a.window_ref = ref;
      auto len = lengths.find(ref);
      if (len == lengths.end()) {
        throw ValidationError(path.string() + ":" + std::to_string(line) + ": window " + ref +
                              " not in dataset");
      }
      a.window_length = len->second;
      a.scored = !row.at("position").is_null();
      a.failure = row.value("failure", std::string());
      out.push_back(std::move(a));
    }
    if (row.at("position").is_null()) return;
    PositionAssessment p;
    p.position = row.at("position").get<std::size_t>();
    p.p_noise = row.at("p_noise").get<double>();
    p.flagged = row.at("flagged").get<bool>();
    if (!row.at("suggested").is_null()) p.suggested = row.at("suggested").get<std::string>();
    if (!row.at("grounded").is_null()) p.grounded = row.at("grounded").get<std::string>();
    out[it->second].positions.push_back(std::move(p));
  });
  return out;
}

namespace {

struct WindowScores {
  std::vector<PositionScore> scores;
  std::vector<std::string> first_tokens;
};

WindowScores score_window_detailed(const SequenceWindow& window, const prompt::PromptBundle& bundle,
                                   const ItemCatalog& catalog, const lm::LanguageModel& backend,
                                   ProbabilityMode mode) {
  if (window.items.empty()) throw PreconditionError("cannot score an empty window");
  WindowScores out;
  const auto inputs = window.inputs();
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto continuation = prompt::escape(prompt::describe(catalog.title(inputs[k])));
    const auto tokens = backend.score_continuation(bundle.scoring_prefix, continuation);
    if (tokens.empty()) throw CapabilityError("backend returned no tokens");
    double logp = tokens.front().logprob;
    if (mode == ProbabilityMode::kFullProduct) {
      logp = 0.0;
      for (const auto& t : tokens) logp += t.logprob;
    }
    out.scores.push_back({k, std::clamp(std::exp(logp), 0.0, 1.0)});
    out.first_tokens.push_back(tokens.front().text);
  }
  return out;
}

bool has_first_token_collision(const SequenceWindow& window, const WindowScores& s) {
  const auto inputs = window.inputs();
  std::unordered_map<std::string, std::string> seen;  // first token -> item
  for (std::size_t k = 0; k < s.first_tokens.size(); ++k) {
    auto [it, inserted] = seen.try_emplace(s.first_tokens[k], inputs[k]);
    if (!inserted && it->second != inputs[k]) return true;
  }
  return false;
}

}  // namespace

std::vector<PositionScore> score_window(const SequenceWindow& window,
                                        const prompt::PromptBundle& bundle,
                                        const ItemCatalog& catalog,
                                        const lm::LanguageModel& backend, ProbabilityMode mode) {
  return score_window_detailed(window, bundle, catalog, backend, mode).scores;
}

double select_eta(std::span<const double> scores, double quantile) {
  if (scores.empty()) throw PreconditionError("select_eta: no scores");
  if (!(quantile >= 0.0 && quantile <= 1.0)) {
    throw PreconditionError("select_eta: quantile must lie in [0, 1]");
  }
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  if (quantile >= 1.0) return std::nextafter(sorted.back(), std::numeric_limits<double>::infinity());
  if (quantile <= 0.0) return std::nextafter(sorted.front(), -std::numeric_limits<double>::infinity());
  const double h = quantile * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<std::size_t> flag(std::span<const PositionScore> scores, double eta, int b) {
  if (b < 1) throw PreconditionError("flag: b must be >= 1");
  std::vector<PositionScore> candidates;
  for (const auto& s : scores) {
    if (s.p_noise > eta) candidates.push_back(s);
  }
  if (candidates.size() > static_cast<std::size_t>(b)) {
    std::sort(candidates.begin(), candidates.end(), [](const PositionScore& a, const PositionScore& c) {
      if (a.p_noise != c.p_noise) return a.p_noise > c.p_noise;
      return a.position < c.position;
    });
    candidates.resize(static_cast<std::size_t>(b));
  }
  std::vector<std::size_t> out;
  for (const auto& c : candidates) out.push_back(c.position);
  std::sort(out.begin(), out.end());
  return out;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

GroundingIndex::GroundingIndex(const ItemCatalog& catalog, const lm::LanguageModel& backend)
    : rows_(catalog.size()) {
  std::vector<std::vector<double>> rows(rows_);
  parallel_for(rows_, backend.max_parallel(), [&](std::size_t i) {
    rows[i] = backend.embed(prompt::describe(catalog.at(i).title));
  });
  dim_ = rows_ == 0 ? 0 : rows.front().size();
  matrix_.reserve(rows_ * dim_);
  for (auto& r : rows) {
    if (r.size() != dim_) throw CapabilityError("embedding dimension changed between calls");
    lm::normalize(r);
    matrix_.insert(matrix_.end(), r.begin(), r.end());
  }
}

std::optional<std::size_t> GroundingIndex::nearest(std::span<const double> embedding,
                                                   std::span<const std::size_t> excluded) const {
  if (embedding.size() != dim_) throw PreconditionError("grounding: embedding dimension mismatch");
  double norm = 0.0;
  for (double x : embedding) norm += x * x;
  norm = norm > 0.0 ? std::sqrt(norm) : 1.0;
  std::optional<std::size_t> best;
  double best_distance = 0.0;
  for (std::size_t i = 0; i < rows_; ++i) {
    if (std::find(excluded.begin(), excluded.end(), i) != excluded.end()) continue;
    double dot = 0.0;
    const double* row = matrix_.data() + i * dim_;
    for (std::size_t d = 0; d < dim_; ++d) dot += row[d] * embedding[d];
    const double distance = 1.0 - dot / norm;
    if (!best || distance < best_distance) {
      best = i;
      best_distance = distance;
    }
  }
  return best;
}

std::vector<Suggestion> suggest_and_ground(const SequenceWindow& window,
                                           std::span<const std::size_t> flagged,
                                           const prompt::PromptBundle& bundle,
                                           const ItemCatalog& catalog,
                                           const lm::LanguageModel& backend,
                                           const GroundingIndex& index, int max_tokens) {
  static const std::vector<std::string> kStop = {"\n"};
  std::vector<Suggestion> out;
  for (std::size_t position : flagged) {
    if (position + 1 >= window.items.size()) {
      throw PreconditionError("the prediction target of " + window.ref() + " cannot be corrected");
    }
    Suggestion s;
    s.position = position;
    const auto& noisy = window.items[position];
    try {
      const auto generated =
          backend.generate(bundle.suggestion_prefix(prompt::describe(catalog.title(noisy))), kStop,
                           max_tokens);
      s.text = prompt::read_until_closing_quote(generated);
      while (!s.text.empty() && std::isspace(static_cast<unsigned char>(s.text.back()))) s.text.pop_back();
      if (s.text.empty()) throw BackendUnavailable("empty suggestion");
      const auto embedding = backend.embed(s.text);
      const std::size_t excluded[] = {catalog.index_of(noisy)};
      if (auto nearest = index.nearest(embedding, excluded)) s.grounded = catalog.at(*nearest).id;
    } catch (const Error& e) {
      s.failure = e.what();
    }
    out.push_back(std::move(s));
  }
  return out;
}

PopularitySampler::PopularitySampler(const ItemCatalog& catalog,
                                     std::span<const SequenceWindow> train_windows)
    : catalog_(&catalog), counts_(catalog.size(), 0) {
  for (const auto& w : train_windows) {
    for (const auto& id : w.items) {
      if (auto idx = catalog.find(id)) ++counts_[*idx];
    }
  }
  std::uint64_t total = 0;
  for (auto c : counts_) {
    total += c;
    cumulative_.push_back(total);
  }
  if (total == 0) throw PreconditionError("popularity sampler needs at least one training interaction");
}

ItemId PopularitySampler::sample(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint64_t> pick(0, cumulative_.back() - 1);
  const auto r = pick(rng);
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), r);
  return catalog_->at(static_cast<std::size_t>(it - cumulative_.begin())).id;
}

std::optional<SequenceWindow> apply_corrections(const SequenceWindow& window,
                                                const NoiseAssessment& assessment,
                                                CorrectionMode mode,
                                                const PopularitySampler* popularity,
                                                std::uint64_t seed) {
  if (assessment.window_ref != window.ref()) {
    throw PreconditionError("assessment " + assessment.window_ref + " does not belong to " + window.ref());
  }
  SequenceWindow out = window;
  std::vector<bool> remove(window.items.size(), false);
  for (const auto& p : assessment.positions) {
    if (!p.flagged) continue;
    if (p.position + 1 >= window.items.size()) {
      throw PreconditionError("the prediction target of " + window.ref() + " cannot be corrected");
    }
    switch (mode) {
      case CorrectionMode::kReplace:
      case CorrectionMode::kRawResponse:
        if (p.grounded) {
          out.items[p.position] = *p.grounded;
        } else {
          remove[p.position] = true;
        }
        break;
      case CorrectionMode::kDeleteOnly:
        remove[p.position] = true;
        break;
      case CorrectionMode::kPopularityCompletion:
        if (popularity == nullptr) throw ConfigError("popularity completion needs a sampler");
        out.items[p.position] = popularity->sample(derive_seed(seed, window.ref(), p.position));
        break;
    }
  }
  if (std::find(remove.begin(), remove.end(), true) != remove.end()) {
    std::vector<ItemId> kept;
    for (std::size_t i = 0; i < out.items.size(); ++i) {
      if (!remove[i]) kept.push_back(std::move(out.items[i]));
    }
    out.items = std::move(kept);
  }
  if (out.items.size() < 2) return std::nullopt;
  return out;
}

json DenoiseReport::to_json() const {
  return json{{"targets", targets},
              {"probability_mode", probability_mode},
              {"correction_mode", correction_mode},
              {"eta_quantile", eta_quantile},
              {"eta", eta ? json(*eta) : json(nullptr)},
              {"b_cap", b_cap},
              {"windows_total", windows_total},
              {"windows_targeted", windows_targeted},
              {"windows_scored", windows_scored},
              {"windows_unscored", windows_unscored},
              {"positions_scored", positions_scored},
              {"positions_flagged", positions_flagged},
              {"windows_modified", windows_modified},
              {"windows_dropped", windows_dropped},
              {"generation_failures", generation_failures},
              {"hallucinated_responses", hallucinated_responses},
              {"first_token_collisions", first_token_collisions},
              {"failures", failures}};
}

namespace {

bool is_targeted(const SequenceWindow& w, Targets targets) {
  switch (targets) {
    case Targets::kTrain: return w.split == Split::kTrain;
    case Targets::kTest: return w.split == Split::kTest;
    case Targets::kBoth: return w.split == Split::kTrain || w.split == Split::kTest;
  }
  return false;
}

}  // namespace

DenoiseResult run_denoise(std::span<const SequenceWindow> windows, const ItemCatalog& catalog,
                          const lm::LanguageModel& backend, const DenoiseConfig& config,
                          Targets targets, const PopularitySampler* popularity,
                          const GroundingIndex* grounding) {
  config.validate();
  if (config.correction_mode == CorrectionMode::kPopularityCompletion && popularity == nullptr) {
    throw ConfigError("popularity completion needs a popularity sampler");
  }

  DenoiseResult result;
  auto& report = result.report;
  report.targets = std::string(to_string(targets));
  report.probability_mode = std::string(to_string(config.probability_mode));
  report.correction_mode = std::string(to_string(config.correction_mode));
  report.eta_quantile = config.eta_quantile;
  report.b_cap = config.b_cap;
  report.windows_total = windows.size();

  std::vector<std::size_t> targeted;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (is_targeted(windows[i], targets) && windows[i].items.size() >= 2) targeted.push_back(i);
  }
  report.windows_targeted = targeted.size();

  const std::size_t workers = backend.max_parallel();
  std::vector<NoiseAssessment> assessments(targeted.size());
  std::vector<prompt::PromptBundle> bundles(targeted.size());
  std::vector<WindowScores> scores(targeted.size());
  std::vector<std::size_t> hallucinated(targeted.size(), 0);

  parallel_for(targeted.size(), workers, [&](std::size_t t) {
    const auto& w = windows[targeted[t]];
    auto& a = assessments[t];
    a.window_ref = w.ref();
    a.window_length = w.items.size();
    try {
      bundles[t] = prompt::build_prompt_bundle(w, catalog);
      if (config.correction_mode == CorrectionMode::kRawResponse) {
        static const std::vector<std::string> kStop = {"\n"};
        const auto generated = backend.generate(bundles[t].scoring_prefix, kStop,
                                                config.max_suggestion_tokens);
        const auto title = prompt::read_until_closing_quote(generated);
        const auto inputs = w.inputs();
        int matched = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          PositionAssessment p;
          p.position = k;
          if (matched < config.b_cap && prompt::describe(catalog.title(inputs[k])) == title) {
            p.flagged = true;
            p.p_noise = 1.0;
            ++matched;
          }
          a.positions.push_back(std::move(p));
        }
        if (matched == 0) hallucinated[t] = 1;
      } else {
        scores[t] = score_window_detailed(w, bundles[t], catalog, backend, config.probability_mode);
        for (const auto& s : scores[t].scores) a.positions.push_back({s.position, s.p_noise, false, std::nullopt, std::nullopt});
      }
      a.scored = true;
    } catch (const Error& e) {
      a.scored = false;
      a.failure = e.what();
      a.positions.clear();
    }
  });

  for (std::size_t t = 0; t < targeted.size(); ++t) {
    const auto& a = assessments[t];
    if (!a.scored) {
      ++report.windows_unscored;
      report.failures.push_back(a.window_ref + ": " + a.failure);
      continue;
    }
    ++report.windows_scored;
    report.positions_scored += a.positions.size();
    report.hallucinated_responses += hallucinated[t];
    if (!scores[t].first_tokens.empty() && has_first_token_collision(windows[targeted[t]], scores[t])) {
      ++report.first_token_collisions;
    }
  }

  if (config.correction_mode != CorrectionMode::kRawResponse) {
    std::vector<double> pool;
    for (const auto& a : assessments) {
      for (const auto& p : a.positions) pool.push_back(p.p_noise);
    }
    if (!pool.empty()) {
      const double eta = select_eta(pool, config.eta_quantile);
      report.eta = eta;
      for (std::size_t t = 0; t < targeted.size(); ++t) {
        auto& a = assessments[t];
        if (!a.scored) continue;
        for (std::size_t position : flag(scores[t].scores, eta, config.b_cap)) {
          a.positions[position].flagged = true;
        }
      }
    }
  }

  const bool needs_grounding = config.correction_mode == CorrectionMode::kReplace ||
                               config.correction_mode == CorrectionMode::kRawResponse;
  std::optional<GroundingIndex> owned_index;
  if (needs_grounding && grounding == nullptr) {
    bool any_flag = false;
    for (const auto& a : assessments) any_flag = any_flag || !a.flagged_positions().empty();
    if (any_flag) {
      owned_index.emplace(catalog, backend);
      grounding = &*owned_index;
    }
  }

  if (needs_grounding && grounding != nullptr) {
    parallel_for(targeted.size(), workers, [&](std::size_t t) {
      auto& a = assessments[t];
      const auto flagged = a.flagged_positions();
      if (flagged.empty()) return;
      const auto suggestions = suggest_and_ground(windows[targeted[t]], flagged, bundles[t], catalog,
                                                  backend, *grounding, config.max_suggestion_tokens);
      for (const auto& s : suggestions) {
        auto& p = a.positions[s.position];
        if (!s.text.empty()) p.suggested = s.text;
        p.grounded = s.grounded;
      }
    });
  }

  // Application is sequential so the output order and report are stable.
  std::vector<std::optional<std::size_t>> assessment_of(windows.size());
  for (std::size_t t = 0; t < targeted.size(); ++t) assessment_of[targeted[t]] = t;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (!assessment_of[i]) {
      result.windows.push_back(windows[i]);
      continue;
    }
    const auto& a = assessments[*assessment_of[i]];
    for (const auto& p : a.positions) {
      if (!p.flagged) continue;
      ++report.positions_flagged;
      if (needs_grounding && !p.grounded) {
        ++report.generation_failures;
        report.failures.push_back(a.window_ref + ": position " + std::to_string(p.position) +
                                  " has no grounded suggestion; deleted instead");
      }
    }
    auto corrected = apply_corrections(windows[i], a, config.correction_mode, popularity, config.seed);
    if (!corrected) {
      ++report.windows_dropped;
      report.failures.push_back(a.window_ref + ": dropped, fewer than 2 items remain");
      continue;
    }
    if (corrected->items != windows[i].items) ++report.windows_modified;
    result.windows.push_back(std::move(*corrected));
  }
  result.assessments = std::move(assessments);
  return result;
}

}  // namespace seqdenoise::denoise
