#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "lud/decode.hpp"
#include "lud/vocabulary.hpp"

namespace lud {

struct DecodeStats {
  std::size_t n_tokens = 0;    // generated tokens
  std::size_t n_forwards = 0;  // forward passes spent generating them
  double wall_seconds = 0.0;
};

DecodeStats stats_from_trace(const DecodeTrace& trace);
// element-wise sums; the aggregate over a prompt set
DecodeStats pooled_stats(const std::vector<DecodeTrace>& traces);

// Forward compression: fraction of forward passes saved vs one per token.
// Throws on an empty generation.
double fcr(const DecodeStats& stats);

// Wall-time acceleration from per-token times; negative when slower.
// Throws on non-positive inputs.
double war(double t_ar_per_token, double t_lud_per_token);

struct QualityTally {
  long g = 0;  // better
  long s = 0;  // same
  long b = 0;  // worse
};

// (g + s) / (b + s); throws when b + s == 0 (undefined).
double quality_ratio(const QualityTally& tally);

struct AgreementRecord {
  bool exact_match = false;
  std::size_t prefix_match_len = 0;
  double token_f1 = 0.0;  // over token multisets
};

// How closely a look-ahead generation tracks the greedy baseline for the
// same model and prompt.
AgreementRecord ar_agreement(const DecodeTrace& lud_trace, const DecodeTrace& ar_trace);

struct AgreementSummary {
  double exact_match_rate = 0.0;
  double mean_prefix_len = 0.0;
  double mean_token_f1 = 0.0;
};

AgreementSummary summarize_agreement(const std::vector<AgreementRecord>& records);

struct SpanHistogram {
  std::vector<std::size_t> accepted_len_counts;     // index i holds the count for length i+1
  std::map<std::string, std::size_t> halt_reasons;  // partition of total_steps
  std::size_t total_steps = 0;
};

// Distribution of accepted span lengths (1..k) with a halt-reason breakdown.
SpanHistogram span_histogram(const std::vector<DecodeTrace>& traces, int k);

// External judge scores for one example under both presentation orders.
// score_a belongs to the system under test, score_b to the baseline.
struct ScoreRecord {
  std::string example_id;
  double a_order1 = 0.0, b_order1 = 0.0;
  double a_order2 = 0.0, b_order2 = 0.0;
};

std::vector<ScoreRecord> load_score_file(const std::filesystem::path& path);

// Order-swap means per example, then better/same/worse counts.
QualityTally tally_scores(const std::vector<ScoreRecord>& records);

// Writes <dir>/summary.json (the summary object, pretty-printed) and
// <dir>/report.html rendering each generation with spans color-coded by the
// forward pass that produced them. Deterministic in its inputs.
void emit_report(const std::vector<DecodeTrace>& traces, const Vocabulary& vocab,
                 const nlohmann::json& summary, const std::filesystem::path& dir);

}  // namespace lud
