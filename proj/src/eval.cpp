#include "lud/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

namespace lud {

DecodeStats stats_from_trace(const DecodeTrace& trace) {
  return DecodeStats{trace.output_ids.size(), trace.steps.size(), trace.wall_seconds};
}

DecodeStats pooled_stats(const std::vector<DecodeTrace>& traces) {
  DecodeStats pooled;
  for (const auto& trace : traces) {
    pooled.n_tokens += trace.output_ids.size();
    pooled.n_forwards += trace.steps.size();
    pooled.wall_seconds += trace.wall_seconds;
  }
  return pooled;
}

double fcr(const DecodeStats& stats) {
  if (stats.n_tokens == 0) throw std::invalid_argument("fcr: no generated tokens");
  return static_cast<double>(stats.n_tokens - stats.n_forwards) /
         static_cast<double>(stats.n_tokens);
}

double war(double t_ar_per_token, double t_lud_per_token) {
  if (!(t_ar_per_token > 0.0) || !(t_lud_per_token > 0.0))
    throw std::invalid_argument("war: per-token times must be positive");
  return (t_ar_per_token - t_lud_per_token) / t_ar_per_token;
}

double quality_ratio(const QualityTally& tally) {
  if (tally.b + tally.s == 0)
    throw std::invalid_argument("quality_ratio: undefined when worse + same == 0");
  return static_cast<double>(tally.g + tally.s) / static_cast<double>(tally.b + tally.s);
}

AgreementRecord ar_agreement(const DecodeTrace& lud_trace, const DecodeTrace& ar_trace) {
  const auto& a = lud_trace.output_ids;
  const auto& b = ar_trace.output_ids;
  AgreementRecord rec;
  rec.exact_match = a == b;

  const std::size_t limit = std::min(a.size(), b.size());
  while (rec.prefix_match_len < limit && a[rec.prefix_match_len] == b[rec.prefix_match_len])
    ++rec.prefix_match_len;

  if (a.empty() && b.empty()) {
    rec.token_f1 = 1.0;
  } else if (a.empty() || b.empty()) {
    rec.token_f1 = 0.0;
  } else {
    std::map<TokenId, std::size_t> counts;
    for (const auto id : a) ++counts[id];
    std::size_t overlap = 0;
    std::map<TokenId, std::size_t> seen;
    for (const auto id : b) {
      const auto it = counts.find(id);
      if (it != counts.end() && seen[id] < it->second) {
        ++seen[id];
        ++overlap;
      }
    }
    rec.token_f1 = 2.0 * static_cast<double>(overlap) / static_cast<double>(a.size() + b.size());
  }
  return rec;
}

AgreementSummary summarize_agreement(const std::vector<AgreementRecord>& records) {
  AgreementSummary summary;
  if (records.empty()) return summary;
  for (const auto& rec : records) {
    summary.exact_match_rate += rec.exact_match ? 1.0 : 0.0;
    summary.mean_prefix_len += static_cast<double>(rec.prefix_match_len);
    summary.mean_token_f1 += rec.token_f1;
  }
  const auto n = static_cast<double>(records.size());
  summary.exact_match_rate /= n;
  summary.mean_prefix_len /= n;
  summary.mean_token_f1 /= n;
  return summary;
}

SpanHistogram span_histogram(const std::vector<DecodeTrace>& traces, int k) {
  if (k < 1) throw std::invalid_argument("span_histogram: k must be >= 1");
  SpanHistogram hist;
  hist.accepted_len_counts.assign(static_cast<std::size_t>(k), 0);
  for (const auto reason : {HaltReason::kThreshold, HaltReason::kRepetitionId,
                            HaltReason::kRepetitionSuffix, HaltReason::kWindowEnd,
                            HaltReason::kEos})
    hist.halt_reasons[to_string(reason)] = 0;

  for (const auto& trace : traces) {
    for (const auto& step : trace.steps) {
      if (step.accepted_len < 1 || step.accepted_len > k)
        throw std::invalid_argument("span_histogram: accepted length " +
                                    std::to_string(step.accepted_len) +
                                    " outside [1, " + std::to_string(k) + "]");
      ++hist.accepted_len_counts[static_cast<std::size_t>(step.accepted_len) - 1];
      ++hist.halt_reasons[to_string(step.halt_reason)];
      ++hist.total_steps;
    }
  }
  return hist;
}

std::vector<ScoreRecord> load_score_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_score_file: cannot open " + path.string());
  std::vector<ScoreRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ScoreRecord rec;
      rec.example_id = j.at("example_id").get<std::string>();
      const auto& o1 = j.at("order1");
      const auto& o2 = j.at("order2");
      if (o1.size() != 2 || o2.size() != 2)
        throw std::runtime_error("each order needs exactly two scores");
      rec.a_order1 = o1[0].get<double>();
      rec.b_order1 = o1[1].get<double>();
      rec.a_order2 = o2[0].get<double>();
      rec.b_order2 = o2[1].get<double>();
      records.push_back(std::move(rec));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ": line " + std::to_string(line_no) +
                               ": malformed score record: " + e.what());
    }
  }
  return records;
}

QualityTally tally_scores(const std::vector<ScoreRecord>& records) {
  QualityTally tally;
  for (const auto& rec : records) {
    const double mean_a = (rec.a_order1 + rec.a_order2) / 2.0;
    const double mean_b = (rec.b_order1 + rec.b_order2) / 2.0;
    if (mean_a > mean_b)
      ++tally.g;
    else if (mean_a < mean_b)
      ++tally.b;
    else
      ++tally.s;
  }
  return tally;
}

namespace {

std::string escape_html(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (const char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string format_prob(double p) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", p);
  return buf;
}

constexpr const char* kReportCss = R"(
body { font-family: sans-serif; margin: 2em; background: #fafafa; color: #222; }
pre, code, .output { font-family: monospace; white-space: pre-wrap; }
.trace { border: 1px solid #ccc; border-radius: 4px; padding: 0.8em; margin: 1em 0; background: #fff; }
.prompt { color: #555; margin-bottom: 0.4em; }
.meta { color: #777; font-size: 0.85em; margin-top: 0.4em; }
.output span { border-radius: 2px; }
.c0 { background: #cfe8ff; } .c1 { background: #d9f2d9; } .c2 { background: #ffe3c2; }
.c3 { background: #f2d9f2; } .c4 { background: #fff3b0; } .c5 { background: #d9f2f2; }
.c6 { background: #ffd6d6; } .c7 { background: #e3e3ff; }
)";

}  // namespace

void emit_report(const std::vector<DecodeTrace>& traces, const Vocabulary& vocab,
                 const nlohmann::json& summary, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "summary.json", std::ios::binary | std::ios::trunc);
    if (!out)
      throw std::runtime_error("emit_report: cannot open " + (dir / "summary.json").string());
    out << summary.dump(2) << '\n';
    if (!out)
      throw std::runtime_error("emit_report: write failed for " +
                               (dir / "summary.json").string());
  }

  std::string html;
  html += "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n";
  html += "<title>generation report</title>\n<style>";
  html += kReportCss;
  html += "</style>\n</head>\n<body>\n<h1>Generation report</h1>\n";
  html += "<section id=\"summary\">\n<h2>Summary</h2>\n<pre>";
  html += escape_html(summary.dump(2));
  html += "</pre>\n</section>\n<section id=\"traces\">\n<h2>Generations (";
  html += std::to_string(traces.size());
  html += ")</h2>\n";

  for (const auto& trace : traces) {
    html += "<div class=\"trace\">\n<div class=\"prompt\">prompt: <code>";
    html += escape_html(vocab.detokenize(trace.prompt_ids));
    html += "</code></div>\n<div class=\"output\">";
    for (const auto& step : trace.steps) {
      const std::vector<TokenId> accepted(
          step.proposal.tokens.begin(),
          step.proposal.tokens.begin() + step.accepted_len);
      std::string title = "forward " + std::to_string(step.forward_index) + " | len " +
                          std::to_string(step.accepted_len) + " | " +
                          to_string(step.halt_reason) + " | p=[";
      for (int i = 0; i < step.accepted_len; ++i) {
        if (i > 0) title += ", ";
        title += format_prob(step.proposal.probs[static_cast<std::size_t>(i)]);
      }
      title += "]";
      html += "<span class=\"c" + std::to_string(step.forward_index % 8) + "\" title=\"";
      html += escape_html(title);
      html += "\">";
      html += escape_html(vocab.detokenize(accepted));
      html += "</span>";
    }
    html += "</div>\n<div class=\"meta\">stop: ";
    html += to_string(trace.stop);
    html += " | tokens: " + std::to_string(trace.output_ids.size());
    html += " | forwards: " + std::to_string(trace.steps.size());
    html += "</div>\n</div>\n";
  }
  html += "</section>\n</body>\n</html>\n";

  std::ofstream out(dir / "report.html", std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::runtime_error("emit_report: cannot open " + (dir / "report.html").string());
  out << html;
  if (!out)
    throw std::runtime_error("emit_report: write failed for " + (dir / "report.html").string());
}

}  // namespace lud
