#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lud/model.hpp"
#include "lud/vocabulary.hpp"

namespace lud {

struct DecodeConfig {
  double beta = 0.9;            // acceptance threshold, in (0, 1]
  bool force_ar = false;        // sentinel: bypass look-ahead entirely (one token per forward)
  int k = 10;                   // look-ahead window: total tokens proposed per forward
  int max_new_tokens = 64;
  bool repetition_check = true;

  void validate() const;
};

enum class HaltReason { kThreshold, kRepetitionId, kRepetitionSuffix, kWindowEnd, kEos };
std::string to_string(HaltReason reason);
HaltReason halt_reason_from_string(const std::string& s);

enum class StopCause { kEos, kMaxNewTokens, kContextOverflow };
std::string to_string(StopCause cause);
StopCause stop_cause_from_string(const std::string& s);

// Per-position argmax over the last k distributions of one forward pass.
struct LookaheadProposal {
  std::vector<TokenId> tokens;
  std::vector<double> probs;
};

struct DecodeStep {
  int forward_index = 0;  // 0-based forward-pass counter within the generation
  LookaheadProposal proposal;
  int accepted_len = 1;
  HaltReason halt_reason = HaltReason::kThreshold;
};

struct DecodeTrace {
  std::vector<TokenId> prompt_ids;
  std::vector<DecodeStep> steps;
  std::vector<TokenId> output_ids;  // includes the EOS token when one stopped the run
  StopCause stop = StopCause::kMaxNewTokens;
  double wall_seconds = 0.0;  // generation loop only; volatile, never serialized
};

// One forward over context + (k-1) PADs; reads the last k distributions,
// argmax per position with ties broken toward the lowest token id.
// Throws when context + k - 1 exceeds the model's max_seq_len.
LookaheadProposal propose_block(const CausalLM& model, std::span<const TokenId> context_ids,
                                int k);

struct SpanDecision {
  int accepted_len = 1;
  HaltReason halt_reason = HaltReason::kThreshold;
};

// Longest proposal prefix with every probability >= beta, floored at one
// token; with the repetition check on, additionally truncates before the
// first in-prefix token that equals its predecessor (repetition_id) or whose
// string the predecessor's string ends with (repetition_suffix).
SpanDecision accept_span(const LookaheadProposal& proposal, double beta, const Vocabulary& vocab,
                         bool repetition_check);

// Look-ahead generation loop: propose, accept, append, until EOS lands inside
// an accepted span (truncate there and stop) or the budget runs out. With
// force_ar set, every forward proposes exactly one token, making the run
// bit-identical to decode_ar.
DecodeTrace decode_lud(const CausalLM& model, std::span<const TokenId> prompt_ids,
                       const Vocabulary& vocab, const DecodeConfig& config);

// Plain greedy baseline: one token per forward.
DecodeTrace decode_ar(const CausalLM& model, std::span<const TokenId> prompt_ids,
                      int max_new_tokens);

// Line-delimited trace records (steps nested per prompt) for replay and
// report rendering without the model. wall_seconds is intentionally absent:
// saved traces are byte-stable across reruns.
void save_decode_traces(const std::vector<DecodeTrace>& traces,
                        const std::filesystem::path& path);
std::vector<DecodeTrace> load_decode_traces(const std::filesystem::path& path);

}  // namespace lud
