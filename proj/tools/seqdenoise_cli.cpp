// Command-line entry point: one subcommand per pipeline stage.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "seqdenoise/error.hpp"
#include "seqdenoise/pipeline.hpp"

namespace {

using seqdenoise::json;
namespace pl = seqdenoise::pipeline;
namespace dn = seqdenoise::denoise;

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequence denoising pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string work_dir;
  std::string backend;
  std::string replay;
  app.add_option("--config", config_path, "JSON pipeline config");
  app.add_option("--seed", seed, "Run seed (overrides config)");
  app.add_option("--work-dir", work_dir, "Work directory (overrides config)");
  app.add_option("--backend", backend, "Language model backend")->check(CLI::IsMember({"remote", "stub"}));
  app.add_option("--replay", replay, "Replay file: replayed if present, recorded otherwise");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic categorized corpus");
  auto* ingest = app.add_subcommand("ingest", "Segment and split interactions");
  auto* inject = app.add_subcommand("inject", "Build noisy datasets with ground truth");
  std::vector<double> alphas;
  inject->add_option("--alpha", alphas, "Noise ratios (overrides config)");

  auto* corpus = app.add_subcommand("corpus", "Emit the instruction-tuning corpus");
  std::optional<std::size_t> corpus_size;
  corpus->add_option("--size", corpus_size, "Number of examples (overrides config)");

  auto* denoise = app.add_subcommand("denoise", "Score, flag and correct a dataset variant");
  std::string variant;
  std::string targets = "both";
  std::string mode;
  std::string prob_mode;
  std::optional<double> quantile;
  std::optional<int> b_cap;
  std::string output;
  denoise->add_option("--variant", variant, "Dataset variant to denoise")->required();
  denoise->add_option("--targets", targets, "Splits to correct")
      ->check(CLI::IsMember({"train", "test", "both"}));
  denoise->add_option("--mode", mode, "Correction mode")
      ->check(CLI::IsMember({"replace", "delete-only", "popularity-completion", "raw-response"}));
  denoise->add_option("--probability", prob_mode, "Probability mode")
      ->check(CLI::IsMember({"first-token", "full-product"}));
  denoise->add_option("--quantile", quantile, "Threshold quantile");
  denoise->add_option("--b", b_cap, "Per-window flag cap");
  denoise->add_option("--output", output, "Output variant name");

  auto* eval = app.add_subcommand("eval", "Evaluate recommenders on a dataset variant");
  std::string eval_variant;
  bool ranks = false;
  eval->add_option("--variant", eval_variant, "Dataset variant")->required();
  eval->add_flag("--ranks", ranks, "Also write per-window ranks as CSV");

  auto* report = app.add_subcommand("report", "Summarize all evaluation reports");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    print_error("usage_error", e.what());
    return 2;
  }

  try {
    auto config = config_path.empty() ? pl::PipelineConfig{} : pl::PipelineConfig::load(config_path);
    if (seed) config.seed = *seed;
    if (!work_dir.empty()) config.work_dir = work_dir;
    if (!backend.empty()) {
      config.backend.kind =
          backend == "remote" ? seqdenoise::lm::BackendKind::kRemote : seqdenoise::lm::BackendKind::kStub;
    }
    if (!alphas.empty()) config.alphas = alphas;
    if (corpus_size) config.corpus_size = *corpus_size;
    if (!mode.empty()) config.denoise.correction_mode = dn::parse_correction_mode(mode);
    if (!prob_mode.empty()) config.denoise.probability_mode = dn::parse_probability_mode(prob_mode);
    if (quantile) config.denoise.eta_quantile = *quantile;
    if (b_cap) config.denoise.b_cap = *b_cap;
    config.validate();

    json out;
    if (*synth) {
      out = pl::cmd_synth(config);
    } else if (*ingest) {
      out = pl::cmd_ingest(config);
    } else if (*inject) {
      out = pl::cmd_inject(config);
    } else if (*corpus) {
      out = pl::cmd_corpus(config);
    } else if (*denoise) {
      pl::DenoiseRequest request;
      request.variant = variant;
      request.targets = dn::parse_targets(targets);
      if (!output.empty()) request.output = output;
      if (!replay.empty()) request.replay = replay;
      out = pl::cmd_denoise(config, request);
    } else if (*eval) {
      out = pl::cmd_eval(config, eval_variant, ranks);
    } else if (*report) {
      out = pl::cmd_report(config);
    }
    std::cout << out.dump(2) << '\n';
    return 0;
  } catch (const seqdenoise::Error& e) {
    print_error(e.kind(), e.what());
  } catch (const std::exception& e) {
    print_error("internal_error", e.what());
  }
  return 1;
}
