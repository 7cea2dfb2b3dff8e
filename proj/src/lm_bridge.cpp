#include "seqdenoise/lm_bridge.hpp"

#include <cmath>
#include <fstream>
#include <mutex>
#include <unordered_map>

#include "seqdenoise/error.hpp"
#include "seqdenoise/hashing.hpp"

namespace seqdenoise::lm {

void BackendConfig::validate() const {
  if (max_parallel_requests < 1) throw ConfigError("max_parallel_requests must be >= 1");
  if (retry_budget < 0) throw ConfigError("retry_budget must be >= 0");
  if (kind == BackendKind::kRemote && endpoint_url.empty()) {
    throw ConfigError("remote backend requires endpoint_url");
  }
}

json BackendConfig::to_json() const {
  return json{{"kind", kind == BackendKind::kRemote ? "remote" : "stub"},
              {"endpoint_url", endpoint_url},
              {"model_name", model_name},
              {"embedding_model", embedding_model},
              {"request_timeout_ms", request_timeout.count()},
              {"max_parallel_requests", max_parallel_requests},
              {"retry_budget", retry_budget},
              {"backoff_base_ms", backoff_base.count()},
              {"api_key_env_var", api_key_env_var},
              {"request_log", request_log.string()}};
}

BackendConfig BackendConfig::from_json(const json& j) {
  BackendConfig c;
  const auto kind = j.value("kind", std::string("stub"));
  if (kind == "remote") {
    c.kind = BackendKind::kRemote;
  } else if (kind == "stub") {
    c.kind = BackendKind::kStub;
  } else {
    throw ConfigError("unknown backend kind '" + kind + "'");
  }
  c.endpoint_url = j.value("endpoint_url", c.endpoint_url);
  c.model_name = j.value("model_name", c.model_name);
  c.embedding_model = j.value("embedding_model", c.embedding_model);
  c.request_timeout = std::chrono::milliseconds(j.value("request_timeout_ms", c.request_timeout.count()));
  c.max_parallel_requests = j.value("max_parallel_requests", c.max_parallel_requests);
  c.retry_budget = j.value("retry_budget", c.retry_budget);
  c.backoff_base = std::chrono::milliseconds(j.value("backoff_base_ms", c.backoff_base.count()));
  c.api_key_env_var = j.value("api_key_env_var", c.api_key_env_var);
  c.request_log = j.value("request_log", std::string());
  return c;
}

void check_score_args(std::string_view prefix, std::string_view continuation) {
  if (prefix.empty()) throw PreconditionError("score_continuation: empty prefix");
  if (continuation.empty()) throw PreconditionError("score_continuation: empty continuation");
}

void check_generate_args(int max_tokens) {
  if (max_tokens < 1) throw PreconditionError("generate: max_tokens must be >= 1");
}

void check_embed_args(std::string_view text) {
  if (text.empty()) throw PreconditionError("embed: empty text");
}

std::string apply_stop(std::string_view text, std::span<const std::string> stop) {
  std::size_t cut = text.size();
  for (const auto& s : stop) {
    if (s.empty()) continue;
    auto at = text.find(s);
    if (at != std::string_view::npos && at < cut) cut = at;
  }
  return std::string(text.substr(0, cut));
}

void normalize(std::vector<double>& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) return;
  for (double& x : v) x /= norm;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw PreconditionError("cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

std::string request_digest(const json& request) { return digest(request.dump()); }

namespace {

json score_request(std::string_view prefix, std::string_view continuation) {
  return json{{"op", "score"}, {"prefix", prefix}, {"continuation", continuation}};
}

json generate_request(std::string_view prefix, std::span<const std::string> stop, int max_tokens) {
  return json{{"op", "generate"},
              {"prefix", prefix},
              {"stop", std::vector<std::string>(stop.begin(), stop.end())},
              {"max_tokens", max_tokens}};
}

json embed_request(std::string_view text) { return json{{"op", "embed"}, {"text", text}}; }

json tokens_to_json(const std::vector<TokenLogprob>& tokens) {
  json arr = json::array();
  for (const auto& t : tokens) arr.push_back(json{{"text", t.text}, {"logprob", t.logprob}});
  return arr;
}

std::vector<TokenLogprob> tokens_from_json(const json& arr) {
  std::vector<TokenLogprob> out;
  for (const auto& t : arr) {
    out.push_back({t.at("text").get<std::string>(), t.at("logprob").get<double>()});
  }
  return out;
}

class Recorder final : public LanguageModel {
 public:
  Recorder(std::shared_ptr<const LanguageModel> inner, const std::filesystem::path& path)
      : inner_(std::move(inner)), out_(path, std::ios::app) {
    if (!out_) throw IoError("cannot open replay file " + path.string());
  }

  std::vector<TokenLogprob> score_continuation(std::string_view prefix,
                                               std::string_view continuation) const override {
    auto result = inner_->score_continuation(prefix, continuation);
    record(score_request(prefix, continuation), tokens_to_json(result));
    return result;
  }

  std::string generate(std::string_view prefix, std::span<const std::string> stop,
                       int max_tokens) const override {
    auto result = inner_->generate(prefix, stop, max_tokens);
    record(generate_request(prefix, stop, max_tokens), result);
    return result;
  }

  std::vector<double> embed(std::string_view text) const override {
    auto result = inner_->embed(text);
    record(embed_request(text), result);
    return result;
  }

  std::size_t max_parallel() const override { return inner_->max_parallel(); }

 private:
  void record(const json& request, const json& response) const {
    json line{{"digest", request_digest(request)}, {"request", request}, {"response", response}};
    std::lock_guard lock(mutex_);
    out_ << line.dump() << '\n';
    out_.flush();
  }

  std::shared_ptr<const LanguageModel> inner_;
  mutable std::mutex mutex_;
  mutable std::ofstream out_;
};

class Replayer final : public LanguageModel {
 public:
  explicit Replayer(const std::filesystem::path& path) {
    for_each_jsonl(path, [&](const json& row, std::size_t) {
      responses_[row.at("digest").get<std::string>()] = row.at("response");
    });
  }

  std::vector<TokenLogprob> score_continuation(std::string_view prefix,
                                               std::string_view continuation) const override {
    check_score_args(prefix, continuation);
    return tokens_from_json(lookup(score_request(prefix, continuation)));
  }

  std::string generate(std::string_view prefix, std::span<const std::string> stop,
                       int max_tokens) const override {
    check_generate_args(max_tokens);
    return lookup(generate_request(prefix, stop, max_tokens)).get<std::string>();
  }

  std::vector<double> embed(std::string_view text) const override {
    check_embed_args(text);
    return lookup(embed_request(text)).get<std::vector<double>>();
  }

  std::size_t max_parallel() const override { return 8; }

 private:
  const json& lookup(const json& request) const {
    auto it = responses_.find(request_digest(request));
    if (it == responses_.end()) {
      throw BackendUnavailable("request " + request_digest(request) + " not in replay file");
    }
    return it->second;
  }

  std::unordered_map<std::string, json> responses_;
};

}  // namespace

std::unique_ptr<LanguageModel> make_recorder(std::shared_ptr<const LanguageModel> inner,
                                             const std::filesystem::path& replay_file) {
  return std::make_unique<Recorder>(std::move(inner), replay_file);
}

std::unique_ptr<LanguageModel> make_replayer(const std::filesystem::path& replay_file) {
  return std::make_unique<Replayer>(replay_file);
}

}  // namespace seqdenoise::lm
