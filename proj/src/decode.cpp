#include "lud/decode.hpp"

#include <chrono>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace lud {
namespace {

// first occurrence of the maximum == lowest token id on ties
void argmax_row(const Matrix& probs, Eigen::Index row, TokenId& token, double& prob) {
  TokenId best = 0;
  double best_p = probs(row, 0);
  for (Eigen::Index j = 1; j < probs.cols(); ++j) {
    if (probs(row, j) > best_p) {
      best_p = probs(row, j);
      best = static_cast<TokenId>(j);
    }
  }
  token = best;
  prob = best_p;
}

}  // namespace

void DecodeConfig::validate() const {
  if (k < 1) throw std::invalid_argument("decode config: k must be >= 1");
  if (max_new_tokens < 1)
    throw std::invalid_argument("decode config: max_new_tokens must be >= 1");
  if (!force_ar && !(beta > 0.0 && beta <= 1.0))
    throw std::invalid_argument("decode config: beta must lie in (0, 1]");
}

std::string to_string(HaltReason reason) {
  switch (reason) {
    case HaltReason::kThreshold: return "threshold";
    case HaltReason::kRepetitionId: return "repetition_id";
    case HaltReason::kRepetitionSuffix: return "repetition_suffix";
    case HaltReason::kWindowEnd: return "window_end";
    case HaltReason::kEos: return "eos";
  }
  throw std::logic_error("unreachable halt reason");
}

HaltReason halt_reason_from_string(const std::string& s) {
  if (s == "threshold") return HaltReason::kThreshold;
  if (s == "repetition_id") return HaltReason::kRepetitionId;
  if (s == "repetition_suffix") return HaltReason::kRepetitionSuffix;
  if (s == "window_end") return HaltReason::kWindowEnd;
  if (s == "eos") return HaltReason::kEos;
  throw std::invalid_argument("unknown halt reason: " + s);
}

std::string to_string(StopCause cause) {
  switch (cause) {
    case StopCause::kEos: return "eos";
    case StopCause::kMaxNewTokens: return "max_new_tokens";
    case StopCause::kContextOverflow: return "context_overflow";
  }
  throw std::logic_error("unreachable stop cause");
}

StopCause stop_cause_from_string(const std::string& s) {
  if (s == "eos") return StopCause::kEos;
  if (s == "max_new_tokens") return StopCause::kMaxNewTokens;
  if (s == "context_overflow") return StopCause::kContextOverflow;
  throw std::invalid_argument("unknown stop cause: " + s);
}

LookaheadProposal propose_block(const CausalLM& model, std::span<const TokenId> context_ids,
                                int k) {
  if (k < 1) throw std::invalid_argument("propose_block: k must be >= 1");
  if (context_ids.empty()) throw std::invalid_argument("propose_block: empty context");
  const std::size_t input_len = context_ids.size() + static_cast<std::size_t>(k) - 1;
  if (input_len > static_cast<std::size_t>(model.config().max_seq_len))
    throw std::runtime_error("propose_block: context of " +
                             std::to_string(context_ids.size()) + " plus window " +
                             std::to_string(k) + " exceeds max_seq_len " +
                             std::to_string(model.config().max_seq_len));

  std::vector<TokenId> input(context_ids.begin(), context_ids.end());
  input.insert(input.end(), static_cast<std::size_t>(k) - 1, Vocabulary::kPadId);
  const Matrix probs = model.forward(input);

  LookaheadProposal proposal;
  proposal.tokens.resize(static_cast<std::size_t>(k));
  proposal.probs.resize(static_cast<std::size_t>(k));
  const Eigen::Index t_len = probs.rows();
  for (int j = 0; j < k; ++j)
    argmax_row(probs, t_len - k + j, proposal.tokens[static_cast<std::size_t>(j)],
               proposal.probs[static_cast<std::size_t>(j)]);
  return proposal;
}

SpanDecision accept_span(const LookaheadProposal& proposal, double beta, const Vocabulary& vocab,
                         bool repetition_check) {
  const std::size_t k = proposal.tokens.size();
  if (k == 0) throw std::invalid_argument("accept_span: empty proposal");
  if (proposal.probs.size() != k)
    throw std::invalid_argument("accept_span: tokens/probs size mismatch");

  // longest prefix with every probability >= beta, floored at one token
  std::size_t prefix = 0;
  while (prefix < k && proposal.probs[prefix] >= beta) ++prefix;
  std::size_t accepted = std::max<std::size_t>(1, prefix);
  HaltReason reason = accepted == k ? HaltReason::kWindowEnd : HaltReason::kThreshold;

  if (repetition_check) {
    for (std::size_t i = 1; i < accepted; ++i) {
      if (proposal.tokens[i] == proposal.tokens[i - 1]) {
        accepted = i;
        reason = HaltReason::kRepetitionId;
        break;
      }
      const std::string prev = vocab.token_string(proposal.tokens[i - 1]);
      const std::string cur = vocab.token_string(proposal.tokens[i]);
      if (prev.size() > cur.size() && prev.ends_with(cur)) {
        accepted = i;
        reason = HaltReason::kRepetitionSuffix;
        break;
      }
    }
  }
  return SpanDecision{static_cast<int>(accepted), reason};
}

DecodeTrace decode_lud(const CausalLM& model, std::span<const TokenId> prompt_ids,
                       const Vocabulary& vocab, const DecodeConfig& config) {
  config.validate();
  DecodeTrace trace;
  trace.prompt_ids.assign(prompt_ids.begin(), prompt_ids.end());
  trace.stop = StopCause::kMaxNewTokens;

  std::vector<TokenId> context;
  context.reserve(1 + prompt_ids.size() + static_cast<std::size_t>(config.max_new_tokens));
  context.push_back(Vocabulary::kBosId);
  context.insert(context.end(), prompt_ids.begin(), prompt_ids.end());

  const auto max_seq = static_cast<std::size_t>(model.config().max_seq_len);
  const auto t0 = std::chrono::steady_clock::now();
  int generated = 0;
  int forward_index = 0;

  while (generated < config.max_new_tokens) {
    if (context.size() > max_seq) {
      trace.stop = StopCause::kContextOverflow;
      break;
    }
    const int remaining = config.max_new_tokens - generated;
    int window = config.force_ar ? 1 : std::min(config.k, remaining);
    window = std::min(window, static_cast<int>(max_seq - context.size()) + 1);

    const LookaheadProposal proposal = propose_block(model, context, window);
    SpanDecision decision = config.force_ar
                                ? SpanDecision{1, HaltReason::kWindowEnd}
                                : accept_span(proposal, config.beta, vocab,
                                              config.repetition_check);

    // EOS inside the accepted span: keep it, drop the rest, stop
    bool hit_eos = false;
    for (int i = 0; i < decision.accepted_len; ++i) {
      if (proposal.tokens[static_cast<std::size_t>(i)] == Vocabulary::kEosId) {
        decision.accepted_len = i + 1;
        decision.halt_reason = HaltReason::kEos;
        hit_eos = true;
        break;
      }
    }

    for (int i = 0; i < decision.accepted_len; ++i) {
      context.push_back(proposal.tokens[static_cast<std::size_t>(i)]);
      trace.output_ids.push_back(proposal.tokens[static_cast<std::size_t>(i)]);
    }
    generated += decision.accepted_len;
    trace.steps.push_back(
        DecodeStep{forward_index, proposal, decision.accepted_len, decision.halt_reason});
    ++forward_index;

    if (hit_eos) {
      trace.stop = StopCause::kEos;
      break;
    }
  }
  trace.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return trace;
}

DecodeTrace decode_ar(const CausalLM& model, std::span<const TokenId> prompt_ids,
                      int max_new_tokens) {
  if (max_new_tokens < 1) throw std::invalid_argument("decode_ar: max_new_tokens must be >= 1");
  DecodeTrace trace;
  trace.prompt_ids.assign(prompt_ids.begin(), prompt_ids.end());
  trace.stop = StopCause::kMaxNewTokens;

  std::vector<TokenId> context;
  context.reserve(1 + prompt_ids.size() + static_cast<std::size_t>(max_new_tokens));
  context.push_back(Vocabulary::kBosId);
  context.insert(context.end(), prompt_ids.begin(), prompt_ids.end());

  const auto max_seq = static_cast<std::size_t>(model.config().max_seq_len);
  const auto t0 = std::chrono::steady_clock::now();

  for (int step = 0; step < max_new_tokens; ++step) {
    if (context.size() > max_seq) {
      trace.stop = StopCause::kContextOverflow;
      break;
    }
    const Matrix probs = model.forward(context);
    TokenId token;
    double prob;
    argmax_row(probs, probs.rows() - 1, token, prob);

    const bool is_eos = token == Vocabulary::kEosId;
    trace.steps.push_back(DecodeStep{step, LookaheadProposal{{token}, {prob}}, 1,
                                     is_eos ? HaltReason::kEos : HaltReason::kWindowEnd});
    trace.output_ids.push_back(token);
    context.push_back(token);
    if (is_eos) {
      trace.stop = StopCause::kEos;
      break;
    }
  }
  trace.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return trace;
}

void save_decode_traces(const std::vector<DecodeTrace>& traces,
                        const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_decode_traces: cannot open " + path.string());
  for (const auto& trace : traces) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& step : trace.steps)
      steps.push_back({{"forward_index", step.forward_index},
                       {"tokens", step.proposal.tokens},
                       {"probs", step.proposal.probs},
                       {"accepted_len", step.accepted_len},
                       {"halt_reason", to_string(step.halt_reason)}});
    nlohmann::json rec{{"prompt_ids", trace.prompt_ids},
                       {"output_ids", trace.output_ids},
                       {"stop", to_string(trace.stop)},
                       {"steps", std::move(steps)}};
    out << rec.dump() << '\n';
  }
  if (!out) throw std::runtime_error("save_decode_traces: write failed for " + path.string());
}

std::vector<DecodeTrace> load_decode_traces(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_decode_traces: cannot open " + path.string());
  std::vector<DecodeTrace> traces;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      DecodeTrace trace;
      trace.prompt_ids = j.at("prompt_ids").get<std::vector<TokenId>>();
      trace.output_ids = j.at("output_ids").get<std::vector<TokenId>>();
      trace.stop = stop_cause_from_string(j.at("stop").get<std::string>());
      for (const auto& js : j.at("steps")) {
        DecodeStep step;
        step.forward_index = js.at("forward_index").get<int>();
        step.proposal.tokens = js.at("tokens").get<std::vector<TokenId>>();
        step.proposal.probs = js.at("probs").get<std::vector<double>>();
        step.accepted_len = js.at("accepted_len").get<int>();
        step.halt_reason = halt_reason_from_string(js.at("halt_reason").get<std::string>());
        trace.steps.push_back(std::move(step));
      }
      traces.push_back(std::move(trace));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ": line " + std::to_string(line_no) +
                               ": malformed trace record: " + e.what());
    }
  }
  return traces;
}

}  // namespace lud
