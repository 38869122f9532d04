#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "lud/corpus.hpp"
#include "lud/model.hpp"

namespace lud {

struct TrainPhaseConfig {
  int epochs = 1;
  double lr = 1e-3;
  int batch_size = 16;
  std::uint64_t seed = 0;
};

// One declarative config drives every stage; each field can be set in the
// config file and a few can be overridden per invocation.
struct PipelineConfig {
  std::filesystem::path run_dir = "runs/demo";

  CorpusKind corpus_kind = CorpusKind::kTemplatedCode;
  std::size_t n_items = 400;
  std::size_t heldout_items = 100;
  std::uint64_t corpus_seed = 1;

  ModelConfig model;  // vocab_size is filled from the corpus at fine-tune time

  TrainPhaseConfig finetune{30, 1e-3, 16, 11};
  TrainPhaseConfig continual{10, 5e-4, 16, 13};

  double alpha = 0.85;                                  // unit identification threshold
  int k = 10;                                           // look-ahead window
  std::vector<double> betas = {0.75, 0.85, 0.90, 0.95, 0.99};  // sweep grid, ascending
  double decode_beta = 0.90;                            // single-decode default
  int max_new_tokens = 72;
  bool repetition_check = true;

  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig from_file(const std::filesystem::path& path);
  void validate() const;
};

struct Overrides {
  std::optional<std::uint64_t> seed;  // re-seeds every stage deterministically
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<int> k;
};

void apply_overrides(PipelineConfig& cfg, const Overrides& overrides);

// Artifact locations under one run directory.
struct RunPaths {
  explicit RunPaths(const std::filesystem::path& run_dir);
  std::filesystem::path run_dir;
  std::filesystem::path corpus;        // training items + vocabulary
  std::filesystem::path heldout;       // held-out prompts, same vocabulary
  std::filesystem::path ft_ckpt;       // fine-tuned model
  std::filesystem::path ft_log;        // fine-tune loss history
  std::filesystem::path traces;        // teacher-forced probability traces
  std::filesystem::path units;         // identified units per item
  std::filesystem::path unit_stats;    // aggregate unit statistics
  std::filesystem::path dbar;          // PAD-reconfigured instances
  std::filesystem::path lud_ckpt;      // continually trained model
  std::filesystem::path continual_log;
  std::filesystem::path decode_dir;    // per-label trace files
  std::filesystem::path sweep_json;    // deterministic sweep table
  std::filesystem::path sweep_txt;     // human table incl. timing-derived columns (volatile)
  std::filesystem::path timings;       // wall-time measurements (volatile)
  std::filesystem::path report_dir;
  std::filesystem::path manifest;      // artifact -> content hash
};

// Stage commands. Artifacts land under cfg.run_dir; byte-stable outputs are
// hashed into manifest.json (wall-time measurements are volatile and stay
// out). A missing upstream artifact raises an error naming the command that
// produces it. Any invariant violation throws, which the CLI maps to a
// nonzero exit.
void cmd_gen_corpus(const PipelineConfig& cfg);
void cmd_finetune(const PipelineConfig& cfg);
void cmd_identify(const PipelineConfig& cfg);
void cmd_reconfigure(const PipelineConfig& cfg);
void cmd_continual_train(const PipelineConfig& cfg);

struct DecodeRunResult {
  std::string label;
  double beta = 0.0;    // meaningless when force_ar
  bool force_ar = false;
  double fcr_value = 0.0;
  double war_value = 0.0;  // vs the AR baseline decoded in the same invocation
  double exact_match_rate = 0.0;
  double mean_token_f1 = 0.0;
  std::size_t n_tokens = 0;
  std::size_t n_forwards = 0;
};

DecodeRunResult cmd_decode(const PipelineConfig& cfg, double beta, bool force_ar);

struct SweepResult {
  std::vector<DecodeRunResult> rows;       // betas ascending, then force_ar
  double repetition_cost = 0.0;            // relative wall-time cost of the repetition rule
  nlohmann::json repetition_off_row;       // extra decode at decode_beta with the check off
};

SweepResult cmd_sweep(const PipelineConfig& cfg);
void cmd_report(const PipelineConfig& cfg);

}  // namespace lud
