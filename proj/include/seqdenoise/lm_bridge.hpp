#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seqdenoise/jsonl.hpp"

namespace seqdenoise::lm {

struct TokenLogprob {
  std::string text;
  double logprob = 0.0;  // natural log, <= 0
};

/// The three model capabilities the denoiser needs. Implementations must be
/// safe to call concurrently from several threads.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  /// Per-token log-probabilities of `continuation` given `prefix`. The token
  /// texts concatenate to `continuation` exactly.
  virtual std::vector<TokenLogprob> score_continuation(std::string_view prefix,
                                                       std::string_view continuation) const = 0;

  /// Greedy generation, truncated before the first occurrence of any stop
  /// string and limited to `max_tokens` tokens.
  virtual std::string generate(std::string_view prefix, std::span<const std::string> stop,
                               int max_tokens) const = 0;

  /// Unit-normalized embedding of fixed dimension.
  virtual std::vector<double> embed(std::string_view text) const = 0;

  /// Number of requests callers may usefully keep in flight.
  virtual std::size_t max_parallel() const { return 1; }
};

enum class BackendKind { kRemote, kStub };

struct BackendConfig {
  BackendKind kind = BackendKind::kStub;
  std::string endpoint_url;  // e.g. http://localhost:8000/v1
  std::string model_name;
  std::string embedding_model;  // defaults to model_name
  std::chrono::milliseconds request_timeout{60000};
  std::size_t max_parallel_requests = 4;
  int retry_budget = 3;
  std::chrono::milliseconds backoff_base{200};
  std::string api_key_env_var = "SEQDENOISE_API_KEY";
  std::filesystem::path request_log;  // optional JSONL of (digest, attempt, status)

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
  json to_json() const;
  static BackendConfig from_json(const json& j);
};

/// Checks shared by every backend; throws PreconditionError.
void check_score_args(std::string_view prefix, std::string_view continuation);
void check_generate_args(int max_tokens);
void check_embed_args(std::string_view text);

/// Cuts `text` before the earliest occurrence of any stop string.
std::string apply_stop(std::string_view text, std::span<const std::string> stop);

void normalize(std::vector<double>& v);
double cosine(std::span<const double> a, std::span<const double> b);

/// OpenAI-style completions/embeddings client (see remote.cpp).
std::unique_ptr<LanguageModel> make_remote(const BackendConfig& config);

/// Decorator that appends every request/response pair to a JSONL replay file.
std::unique_ptr<LanguageModel> make_recorder(std::shared_ptr<const LanguageModel> inner,
                                             const std::filesystem::path& replay_file);

/// Serves responses from a replay file; unknown requests raise
/// BackendUnavailable.
std::unique_ptr<LanguageModel> make_replayer(const std::filesystem::path& replay_file);

/// Digest identifying a request for replay lookup.
std::string request_digest(const json& request);

}  // namespace seqdenoise::lm
