#include <gtest/gtest.h>
#include <httplib.h>

#include <atomic>
#include <cmath>
#include <thread>

#include "seqdenoise/error.hpp"
#include "seqdenoise/lm_bridge.hpp"
#include "seqdenoise/prompt.hpp"
#include "seqdenoise/stub_backend.hpp"
#include "support.hpp"

namespace seqdenoise::lm {
namespace {

// Category 0: c0..c11, category 1: d0..d3. Titles start with unique words.
struct StubFixture {
  ItemCatalog catalog;
  std::vector<int> categories;

  StubFixture() {
    for (int i = 0; i < 12; ++i) {
      catalog.add("c" + std::to_string(i), "Alpha" + std::to_string(i) + " Drama Film");
      categories.push_back(0);
    }
    for (int i = 0; i < 4; ++i) {
      catalog.add("d" + std::to_string(i), "Beta" + std::to_string(i) + " Horror Film");
      categories.push_back(1);
    }
  }
};

SequenceWindow ten_plus_target(const std::string& odd) {
  std::vector<ItemId> items;
  for (int i = 0; i < 9; ++i) items.push_back("c" + std::to_string(i));
  items.insert(items.begin() + 4, odd);
  items.push_back("c9");
  return testing::make_window("u", items);
}

TEST(Stub, OneMismatchInTenMatchesSoftmax) {
  StubFixture f;
  const StubModel stub(f.catalog, f.categories, {});
  const auto w = ten_plus_target("d0");
  const auto bundle = prompt::build_prompt_bundle(w, f.catalog);
  const double e4 = std::exp(4.0);
  for (std::size_t k = 0; k < 10; ++k) {
    const auto desc = prompt::escape(f.catalog.title(w.items[k]));
    const auto tokens = stub.score_continuation(bundle.scoring_prefix, desc);
    ASSERT_FALSE(tokens.empty());
    const double p = std::exp(tokens[0].logprob);
    const double expected = k == 4 ? e4 / (e4 + 9.0) : 1.0 / (e4 + 9.0);
    EXPECT_NEAR(p, expected, 1e-12) << k;
    for (std::size_t j = 1; j < tokens.size(); ++j) EXPECT_EQ(tokens[j].logprob, 0.0);
  }
  EXPECT_NEAR(std::exp(4.0) / (std::exp(4.0) + 9.0), 0.8585, 5e-5);
  EXPECT_NEAR(1.0 / (std::exp(4.0) + 9.0), 0.01572, 5e-6);
}

TEST(Stub, TokensReassembleContinuation) {
  StubFixture f;
  const StubModel stub(f.catalog, f.categories, {});
  const std::string cont = "Alpha3 Drama  Film\tx";
  const auto tokens = stub.score_continuation("prefix", cont);
  std::string joined;
  for (const auto& t : tokens) {
    EXPECT_FALSE(t.text.empty());
    EXPECT_LE(t.logprob, 0.0);
    joined += t.text;
  }
  EXPECT_EQ(joined, cont);
}

TEST(Stub, AnyPrefixSingleTokenScoreIsProbability) {
  StubFixture f;
  const StubModel stub(f.catalog, f.categories, {});
  const auto tokens = stub.score_continuation("anything", "A");
  ASSERT_EQ(tokens.size(), 1u);
  const double p = std::exp(tokens[0].logprob);
  EXPECT_GT(p, 0.0);
  EXPECT_LE(p, 1.0);
  EXPECT_EQ(tokens[0].logprob, std::log(StubModel::kFloorProbability));
}

TEST(Stub, EmptyArgumentsRejected) {
  StubFixture f;
  const StubModel stub(f.catalog, f.categories, {});
  EXPECT_THROW(stub.score_continuation("p", ""), PreconditionError);
  EXPECT_THROW(stub.score_continuation("", "x"), PreconditionError);
  EXPECT_THROW(stub.generate("p", {}, 0), PreconditionError);
  EXPECT_THROW(stub.embed(""), PreconditionError);
}

TEST(Stub, SuggestionIsHighestAffinitySameCategoryItem) {
  StubFixture f;
  // c10 follows c3 twice and precedes c5 once; c11 follows c3 once.
  std::vector<InteractionSequence> reference = {
      testing::make_sequence("r1", {"c3", "c10", "c5"}),
      testing::make_sequence("r2", {"c3", "c10"}),
      testing::make_sequence("r3", {"c3", "c11"}),
      testing::make_sequence("r4", {"c11", "c11", "c11", "c11"}),
  };
  const StubModel stub(f.catalog, f.categories, reference);
  // Window: c0..c3, d0, c5.. ; d0 sits between c3 and c5.
  std::vector<ItemId> items = {"c0", "c1", "c2", "c3", "d0", "c5", "c6", "c7", "c8", "c9"};
  const auto w = testing::make_window("u", items);
  const auto bundle = prompt::build_prompt_bundle(w, f.catalog);
  const std::vector<std::string> stop = {"\""};
  const auto text = stub.generate(bundle.suggestion_prefix(f.catalog.title("d0")), stop, 64);
  // Affinity: c10 = adj(c3,c10)=2 + adj(c10,c5)=1 = 3; c11 = 1 (+0); c4 = 0.
  EXPECT_EQ(text, f.catalog.title("c10"));
}

TEST(Stub, NoiseGenerationNamesMismatchedTitle) {
  StubFixture f;
  const StubModel stub(f.catalog, f.categories, {});
  const auto w = ten_plus_target("d2");
  const auto bundle = prompt::build_prompt_bundle(w, f.catalog);
  const std::vector<std::string> stop = {"\""};
  EXPECT_EQ(stub.generate(bundle.scoring_prefix, stop, 64), f.catalog.title("d2"));
  EXPECT_EQ(stub.generate(bundle.scoring_prefix, stop, 1), "Beta2");
}

TEST(Stub, EmbeddingContract) {
  StubFixture f;
  const StubModel stub(f.catalog, f.categories, {});
  const auto a = stub.embed("Alien");
  EXPECT_EQ(a, stub.embed("Alien"));
  EXPECT_EQ(a.size(), StubModel::kEmbeddingDim);
  double norm = 0.0;
  for (double x : a) norm += x * x;
  EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-6);
  EXPECT_GT(cosine(a, stub.embed("Alien ")), cosine(a, stub.embed("Toy Story")));
}

TEST(Stop, CutsAtEarliestStop) {
  const std::vector<std::string> stop = {"\""};
  EXPECT_EQ(apply_stop("Alien\" extra", stop), "Alien");
  const std::vector<std::string> two = {"x", "\n"};
  EXPECT_EQ(apply_stop("ab\ncx", two), "ab");
  EXPECT_EQ(apply_stop("none", {}), "none");
}

TEST(Config, Validation) {
  BackendConfig c;
  c.kind = BackendKind::kRemote;
  EXPECT_THROW(c.validate(), ConfigError);
  c.endpoint_url = "http://localhost:1/v1";
  EXPECT_NO_THROW(c.validate());
  c.max_parallel_requests = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  BackendConfig d;
  d.kind = BackendKind::kRemote;
  d.endpoint_url = "http://h:2/v1";
  d.retry_budget = 5;
  const auto back = BackendConfig::from_json(d.to_json());
  EXPECT_EQ(back.endpoint_url, d.endpoint_url);
  EXPECT_EQ(back.retry_budget, 5);
  EXPECT_EQ(back.kind, BackendKind::kRemote);
}

/// Minimal completions server. Prompt tokens are the stub tokenizer's tokens;
/// each prompt token gets logprob -0.1 * (index + 1), the first gets null.
class FakeServer {
 public:
  std::atomic<int> hits{0};
  std::atomic<int> failures_before_success{0};
  std::atomic<int> in_flight{0};
  std::atomic<int> max_in_flight{0};
  std::atomic<int> delay_ms{0};
  bool reject_logprobs = false;
  std::string generation = "Alien\" extra";
  std::string last_auth;
  json last_request;
  std::mutex mu;

  FakeServer() {
    server_.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
      Track t(*this);
      const auto body = json::parse(req.body);
      {
        std::lock_guard lock(mu);
        last_request = body;
        last_auth = req.get_header_value("Authorization");
      }
      if (failures_before_success.load() > 0) {
        --failures_before_success;
        res.status = 503;
        return;
      }
      if (reject_logprobs && body.value("echo", false)) {
        res.status = 400;
        res.set_content(R"({"error":"echo with logprobs is not supported"})", "application/json");
        return;
      }
      json choice;
      if (body.value("echo", false)) {
        const auto prompt = body.at("prompt").get<std::string>();
        const auto tokens = StubModel::tokenize(prompt);
        json values = json::array();
        for (std::size_t i = 0; i < tokens.size(); ++i) {
          values.push_back(i == 0 ? json(nullptr) : json(-0.1 * static_cast<double>(i + 1)));
        }
        json all_tokens = tokens;
        all_tokens.push_back(" next");
        values.push_back(-1.0);
        choice = {{"text", prompt + " next"}, {"logprobs", {{"tokens", all_tokens}, {"token_logprobs", values}}}};
      } else {
        choice = {{"text", generation}, {"logprobs", nullptr}};
      }
      res.set_content(json{{"choices", json::array({choice})}}.dump(), "application/json");
    });
    server_.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
      Track t(*this);
      {
        std::lock_guard lock(mu);
        last_auth = req.get_header_value("Authorization");
      }
      if (failures_before_success.load() > 0) {
        --failures_before_success;
        res.status = 503;
        return;
      }
      res.set_content(R"({"data":[{"embedding":[3.0,4.0]}]})", "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~FakeServer() {
    server_.stop();
    thread_.join();
  }

  BackendConfig config() const {
    BackendConfig c;
    c.kind = BackendKind::kRemote;
    c.endpoint_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
    c.model_name = "m";
    c.backoff_base = std::chrono::milliseconds(1);
    c.retry_budget = 3;
    c.request_timeout = std::chrono::milliseconds(5000);
    return c;
  }

 private:
  struct Track {
    explicit Track(FakeServer& s) : s(s) {
      ++s.hits;
      const int now = ++s.in_flight;
      int prev = s.max_in_flight.load();
      while (now > prev && !s.max_in_flight.compare_exchange_weak(prev, now)) {
      }
      if (s.delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(s.delay_ms.load()));
    }
    ~Track() { --s.in_flight; }
    FakeServer& s;
  };

  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST(Remote, ScoresContinuationTokensOnly) {
  FakeServer server;
  const auto model = make_remote(server.config());
  const auto tokens = model->score_continuation("Noise Items: \"", "Alpha3 Drama");
  ASSERT_EQ(tokens.size(), 2u);
  // Prompt tokens: `Noise`, ` Items:`, ` "Alpha3`, ` Drama`. The third
  // straddles the boundary and is trimmed to its continuation part.
  EXPECT_EQ(tokens[0].text, "Alpha3");
  EXPECT_DOUBLE_EQ(tokens[0].logprob, -0.3);
  EXPECT_EQ(tokens[1].text, " Drama");
  EXPECT_DOUBLE_EQ(tokens[1].logprob, -0.4);
  std::lock_guard lock(server.mu);
  EXPECT_EQ(server.last_request.at("echo"), true);
  EXPECT_EQ(server.last_request.at("temperature"), 0);
  EXPECT_EQ(server.last_request.at("model"), "m");
}

TEST(Remote, GenerateAppliesStop) {
  FakeServer server;
  const auto model = make_remote(server.config());
  const std::vector<std::string> stop = {"\""};
  EXPECT_EQ(model->generate("p", stop, 8), "Alien");
  std::lock_guard lock(server.mu);
  EXPECT_EQ(server.last_request.at("echo"), false);
  EXPECT_EQ(server.last_request.at("stop"), json::array({"\""}));
  EXPECT_EQ(server.last_request.at("max_tokens"), 8);
}

TEST(Remote, EmbeddingIsNormalized) {
  FakeServer server;
  const auto model = make_remote(server.config());
  const auto v = model->embed("x");
  ASSERT_EQ(v.size(), 2u);
  EXPECT_DOUBLE_EQ(v[0], 0.6);
  EXPECT_DOUBLE_EQ(v[1], 0.8);
}

TEST(Remote, RetriesOn503ThenSucceeds) {
  FakeServer server;
  server.failures_before_success = 2;
  const auto model = make_remote(server.config());
  EXPECT_EQ(model->generate("p", {}, 4), "Alien\" extra");
  EXPECT_EQ(server.hits.load(), 3);
}

TEST(Remote, ExhaustedRetriesAreBackendUnavailable) {
  FakeServer server;
  server.failures_before_success = 100;
  auto cfg = server.config();
  cfg.retry_budget = 2;
  const auto model = make_remote(cfg);
  EXPECT_THROW(model->generate("p", {}, 4), BackendUnavailable);
  EXPECT_EQ(server.hits.load(), 3);
}

TEST(Remote, UnreachableServerIsBackendUnavailable) {
  BackendConfig c;
  c.kind = BackendKind::kRemote;
  c.endpoint_url = "http://127.0.0.1:1/v1";
  c.retry_budget = 1;
  c.backoff_base = std::chrono::milliseconds(1);
  c.request_timeout = std::chrono::milliseconds(500);
  EXPECT_THROW(make_remote(c)->embed("x"), BackendUnavailable);
}

TEST(Remote, MissingLogprobSupportIsCapabilityError) {
  FakeServer server;
  server.reject_logprobs = true;
  const auto model = make_remote(server.config());
  EXPECT_THROW(model->score_continuation("p", "x"), CapabilityError);
}

TEST(Remote, SendsBearerKeyFromEnvironment) {
  FakeServer server;
  auto cfg = server.config();
  cfg.api_key_env_var = "SEQDENOISE_TEST_KEY";
  ::setenv("SEQDENOISE_TEST_KEY", "sekrit", 1);
  make_remote(cfg)->embed("x");
  ::unsetenv("SEQDENOISE_TEST_KEY");
  std::lock_guard lock(server.mu);
  EXPECT_EQ(server.last_auth, "Bearer sekrit");
}

TEST(Remote, ParallelCapIsEnforced) {
  FakeServer server;
  server.delay_ms = 30;
  auto cfg = server.config();
  cfg.max_parallel_requests = 2;
  const auto model = make_remote(cfg);
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) threads.emplace_back([&] { model->embed("x"); });
  for (auto& t : threads) t.join();
  EXPECT_LE(server.max_in_flight.load(), 2);
  EXPECT_EQ(server.hits.load(), 8);
}

TEST(Remote, RequestLogRecordsDigests) {
  FakeServer server;
  testing::TempDir dir;
  auto cfg = server.config();
  cfg.request_log = dir / "log.jsonl";
  server.failures_before_success = 1;
  make_remote(cfg)->embed("x");
  const auto rows = read_jsonl(dir / "log.jsonl");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].at("status"), 503);
  EXPECT_EQ(rows[1].at("status"), 200);
  EXPECT_EQ(rows[0].at("digest"), rows[1].at("digest"));
}

TEST(Replay, RecordThenReplayWithoutBackend) {
  StubFixture f;
  testing::TempDir dir;
  auto stub = std::make_shared<StubModel>(f.catalog, f.categories, std::vector<InteractionSequence>{});
  const auto w = ten_plus_target("d1");
  const auto bundle = prompt::build_prompt_bundle(w, f.catalog);
  const std::vector<std::string> stop = {"\""};
  std::vector<TokenLogprob> scored;
  std::string generated;
  std::vector<double> embedded;
  {
    const auto recorder = make_recorder(stub, dir / "replay.jsonl");
    scored = recorder->score_continuation(bundle.scoring_prefix, "Beta1 Horror Film");
    generated = recorder->generate(bundle.scoring_prefix, stop, 16);
    embedded = recorder->embed("Alien");
  }
  const auto replayer = make_replayer(dir / "replay.jsonl");
  const auto again = replayer->score_continuation(bundle.scoring_prefix, "Beta1 Horror Film");
  ASSERT_EQ(again.size(), scored.size());
  for (std::size_t i = 0; i < again.size(); ++i) {
    EXPECT_EQ(again[i].text, scored[i].text);
    EXPECT_EQ(again[i].logprob, scored[i].logprob);
  }
  EXPECT_EQ(replayer->generate(bundle.scoring_prefix, stop, 16), generated);
  EXPECT_EQ(replayer->embed("Alien"), embedded);
  EXPECT_THROW(replayer->embed("never recorded"), BackendUnavailable);
}

}  // namespace
}  // namespace seqdenoise::lm
