// Completions-style HTTP adapter. Scoring uses `echo: true` so the server
// returns log-probabilities of the prompt tokens, from which the tokens that
// cover the continuation are selected.

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <regex>
#include <semaphore>
#include <thread>

#include "seqdenoise/error.hpp"
#include "seqdenoise/lm_bridge.hpp"

namespace seqdenoise::lm {

namespace {

struct Endpoint {
  std::string origin;     // scheme://host[:port]
  std::string base_path;  // e.g. /v1 (no trailing slash)
};

Endpoint parse_endpoint(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw ConfigError("malformed endpoint url '" + url + "'");
  Endpoint e{m[1].str(), m[2].matched ? m[2].str() : std::string()};
  while (!e.base_path.empty() && e.base_path.back() == '/') e.base_path.pop_back();
  return e;
}

class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<>& sem) : sem_(sem) { sem_.acquire(); }
  ~SlotGuard() { sem_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<>& sem_;
};

class RemoteModel final : public LanguageModel {
 public:
  explicit RemoteModel(BackendConfig config)
      : config_(std::move(config)),
        endpoint_(parse_endpoint(config_.endpoint_url)),
        slots_(static_cast<std::ptrdiff_t>(config_.max_parallel_requests)) {
    config_.validate();
    if (config_.embedding_model.empty()) config_.embedding_model = config_.model_name;
    if (const char* key = std::getenv(config_.api_key_env_var.c_str()); key != nullptr) {
      api_key_ = key;
    }
  }

  std::vector<TokenLogprob> score_continuation(std::string_view prefix,
                                               std::string_view continuation) const override {
    check_score_args(prefix, continuation);
    const std::string prompt = std::string(prefix) + std::string(continuation);
    json request{{"model", config_.model_name}, {"prompt", prompt}, {"max_tokens", 1},
                 {"logprobs", 1},   {"echo", true},      {"temperature", 0}};
    json response = post("/completions", request);

    const json* logprobs = nullptr;
    try {
      logprobs = &response.at("choices").at(0).at("logprobs");
    } catch (const json::exception&) {
      throw CapabilityError("backend response carries no logprobs");
    }
    if (logprobs->is_null() || !logprobs->contains("tokens") ||
        !logprobs->contains("token_logprobs")) {
      throw CapabilityError("backend does not return prompt token logprobs");
    }
    const auto& tokens = logprobs->at("tokens");
    const auto& values = logprobs->at("token_logprobs");

    std::vector<TokenLogprob> out;
    std::size_t offset = 0;
    const std::size_t begin = prefix.size();
    const std::size_t end = prompt.size();
    for (std::size_t i = 0; i < tokens.size() && offset < end; ++i) {
      const auto text = tokens.at(i).get<std::string>();
      const std::size_t tok_begin = offset;
      const std::size_t tok_end = offset + text.size();
      offset = tok_end;
      if (tok_end <= begin) continue;
      if (values.at(i).is_null()) throw CapabilityError("missing logprob for continuation token");
      const std::size_t from = std::max(tok_begin, begin);
      const std::size_t to = std::min(tok_end, end);
      // A token straddling the prefix boundary keeps its logprob but only
      // contributes the continuation part of its text.
      out.push_back({prompt.substr(from, to - from), std::min(0.0, values.at(i).get<double>())});
    }
    std::string joined;
    for (const auto& t : out) joined += t.text;
    if (joined != continuation) {
      throw CapabilityError("echoed tokens do not reassemble the continuation");
    }
    return out;
  }

  std::string generate(std::string_view prefix, std::span<const std::string> stop,
                       int max_tokens) const override {
    check_generate_args(max_tokens);
    json request{{"model", config_.model_name},
                 {"prompt", prefix},
                 {"max_tokens", max_tokens},
                 {"echo", false},
                 {"temperature", 0}};
    if (!stop.empty()) request["stop"] = std::vector<std::string>(stop.begin(), stop.end());
    json response = post("/completions", request);
    try {
      return apply_stop(response.at("choices").at(0).at("text").get<std::string>(), stop);
    } catch (const json::exception& e) {
      throw BackendUnavailable(std::string("malformed completion response: ") + e.what());
    }
  }

  std::vector<double> embed(std::string_view text) const override {
    check_embed_args(text);
    json request{{"model", config_.embedding_model}, {"input", text}};
    json response = post("/embeddings", request);
    std::vector<double> v;
    try {
      v = response.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw CapabilityError(std::string("malformed embedding response: ") + e.what());
    }
    if (v.empty()) throw CapabilityError("backend returned an empty embedding");
    normalize(v);
    return v;
  }

  std::size_t max_parallel() const override { return config_.max_parallel_requests; }

 private:
  json post(const std::string& route, const json& request) const {
    SlotGuard slot(slots_);
    const std::string body = request.dump();
    const std::string digest = request_digest(request);
    std::string last_error;
    for (int attempt = 0; attempt <= config_.retry_budget; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(config_.backoff_base * (1LL << (attempt - 1)));
      }
      httplib::Client client(endpoint_.origin);
      const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(config_.request_timeout);
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_write_timeout(timeout);
      httplib::Headers headers;
      if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

      auto result = client.Post(endpoint_.base_path + route, headers, body, "application/json");
      if (!result) {
        last_error = "transport error: " + httplib::to_string(result.error());
        log(digest, attempt, -1);
        continue;
      }
      log(digest, attempt, result->status);
      if (result->status == 429 || result->status >= 500) {
        last_error = "HTTP " + std::to_string(result->status);
        continue;
      }
      if (result->status >= 400) {
        const std::string msg = "HTTP " + std::to_string(result->status) + ": " + result->body;
        if (result->body.find("logprob") != std::string::npos ||
            result->body.find("echo") != std::string::npos) {
          throw CapabilityError(msg);
        }
        throw BackendUnavailable(msg);
      }
      try {
        return json::parse(result->body);
      } catch (const json::parse_error& e) {
        throw BackendUnavailable(std::string("unparseable backend response: ") + e.what());
      }
    }
    throw BackendUnavailable("request " + digest + " failed after " +
                             std::to_string(config_.retry_budget + 1) + " attempts: " + last_error);
  }

  void log(const std::string& digest, int attempt, int status) const {
    if (config_.request_log.empty()) return;
    json line{{"digest", digest}, {"attempt", attempt}, {"status", status}};
    std::lock_guard lock(log_mutex_);
    std::ofstream out(config_.request_log, std::ios::app);
    out << line.dump() << '\n';
  }

  BackendConfig config_;
  Endpoint endpoint_;
  std::string api_key_;
  mutable std::counting_semaphore<> slots_;
  mutable std::mutex log_mutex_;
};

}  // namespace

std::unique_ptr<LanguageModel> make_remote(const BackendConfig& config) {
  config.validate();
  return std::make_unique<RemoteModel>(config);
}

}  // namespace seqdenoise::lm
