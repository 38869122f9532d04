#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "lud/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"lexical-unit look-ahead decoding pipeline"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  app.add_option("--config", config_path, "pipeline config file (defaults apply when omitted)")
      ->check(CLI::ExistingFile);

  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<int> k;
  app.add_option("--seed", seed, "override every stage seed (per-stage seeds derived from it)");
  app.add_option("--alpha", alpha, "override the unit-identification threshold");
  app.add_option("--beta", beta, "override the decode acceptance threshold");
  app.add_option("--k", k, "override the look-ahead window");

  auto* c_gen = app.add_subcommand("gen_corpus", "generate the train and held-out datasets");
  auto* c_ft = app.add_subcommand("finetune", "fine-tune the model on the corpus");
  auto* c_id = app.add_subcommand("identify", "trace teacher-forced probabilities and mark units");
  auto* c_re = app.add_subcommand("reconfigure", "build PAD-substituted instances and audit them");
  auto* c_ct = app.add_subcommand("continual_train", "train on the mixed dataset D' = D + Dbar");
  auto* c_de = app.add_subcommand("decode", "decode the held-out prompts at one threshold");
  bool force_ar = false;
  c_de->add_flag("--force-ar", force_ar, "bypass look-ahead: one token per forward");
  auto* c_sw = app.add_subcommand("sweep", "decode across the beta grid and tabulate");
  auto* c_rp = app.add_subcommand("report", "render the generation report from saved traces");

  CLI11_PARSE(app, argc, argv);

  try {
    lud::PipelineConfig cfg =
        config_path ? lud::PipelineConfig::from_file(*config_path) : lud::PipelineConfig{};
    lud::apply_overrides(cfg, lud::Overrides{seed, alpha, beta, k});

    if (c_gen->parsed()) lud::cmd_gen_corpus(cfg);
    if (c_ft->parsed()) lud::cmd_finetune(cfg);
    if (c_id->parsed()) lud::cmd_identify(cfg);
    if (c_re->parsed()) lud::cmd_reconfigure(cfg);
    if (c_ct->parsed()) lud::cmd_continual_train(cfg);
    if (c_de->parsed()) lud::cmd_decode(cfg, cfg.decode_beta, force_ar);
    if (c_sw->parsed()) lud::cmd_sweep(cfg);
    if (c_rp->parsed()) lud::cmd_report(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
