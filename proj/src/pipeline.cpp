#include "lud/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "lud/decode.hpp"
#include "lud/eval.hpp"
#include "lud/identify.hpp"
#include "lud/reconfigure.hpp"
#include "lud/util.hpp"

namespace lud {
namespace {

nlohmann::json read_json_file(const std::filesystem::path& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(what + ": cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(what + ": " + path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void require_artifact(const std::filesystem::path& path, const std::string& cmd,
                      const std::string& producer) {
  if (!std::filesystem::exists(path))
    throw std::runtime_error(cmd + ": missing " + path.string() + "; run `" + producer +
                             "` first");
}

// Byte-stable artifacts get content hashes; wall-time measurements (timings,
// sweep.txt) are volatile by nature and stay out of the manifest.
void update_manifest(const RunPaths& rp, const std::vector<std::filesystem::path>& artifacts) {
  nlohmann::json manifest = nlohmann::json::object();
  if (std::filesystem::exists(rp.manifest))
    manifest = read_json_file(rp.manifest, "manifest");
  for (const auto& artifact : artifacts) {
    const auto rel = std::filesystem::relative(artifact, rp.run_dir).generic_string();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64_file(artifact)));
    manifest[rel] = buf;
  }
  write_json_file(rp.manifest, manifest);
}

void update_timings(const RunPaths& rp, const std::string& key, const nlohmann::json& entry) {
  nlohmann::json timings = nlohmann::json::object();
  if (std::filesystem::exists(rp.timings))
    timings = read_json_file(rp.timings, "timings");
  timings[key] = entry;
  write_json_file(rp.timings, timings);
}

std::string beta_label(double beta) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", beta);
  return std::string("beta_") + buf;
}

TrainPhaseConfig phase_from_json(const nlohmann::json& j, const TrainPhaseConfig& defaults) {
  TrainPhaseConfig phase = defaults;
  phase.epochs = j.value("epochs", phase.epochs);
  phase.lr = j.value("lr", phase.lr);
  phase.batch_size = j.value("batch_size", phase.batch_size);
  phase.seed = j.value("seed", phase.seed);
  return phase;
}

void check_vocab_compat(const CausalLM& model, const Corpus& corpus, const std::string& cmd) {
  if (model.config().vocab_size != static_cast<int>(corpus.vocabulary.size()))
    throw std::runtime_error(cmd + ": checkpoint was trained with vocab_size " +
                             std::to_string(model.config().vocab_size) +
                             " but the dataset vocabulary has " +
                             std::to_string(corpus.vocabulary.size()) + " entries");
}

std::vector<TrainingBatchItem> ar_instances(const Corpus& corpus) {
  std::vector<TrainingBatchItem> instances;
  instances.reserve(corpus.items.size());
  for (const auto& item : corpus.items)
    instances.push_back(make_ar_instance(item, corpus.vocabulary));
  return instances;
}

struct DecodePass {
  std::vector<DecodeTrace> traces;
  double wall_seconds = 0.0;  // sum of per-prompt generation loops
};

DecodePass run_decode(const CausalLM& model, const Corpus& heldout, const Vocabulary& vocab,
                      const DecodeConfig& dc) {
  DecodePass pass;
  pass.traces.reserve(heldout.items.size());
  for (const auto& item : heldout.items) {
    pass.traces.push_back(decode_lud(model, item.prompt_ids, vocab, dc));
    pass.wall_seconds += pass.traces.back().wall_seconds;
  }
  return pass;
}

DecodePass run_decode_ar(const CausalLM& model, const Corpus& heldout, int max_new_tokens) {
  DecodePass pass;
  pass.traces.reserve(heldout.items.size());
  for (const auto& item : heldout.items) {
    pass.traces.push_back(decode_ar(model, item.prompt_ids, max_new_tokens));
    pass.wall_seconds += pass.traces.back().wall_seconds;
  }
  return pass;
}

struct LabeledEval {
  DecodeRunResult row;
  SpanHistogram histogram;
};

LabeledEval evaluate_pass(const std::string& label, double beta, bool force_ar, int k,
                          const DecodePass& pass, const DecodePass& ar_pass) {
  LabeledEval ev;
  ev.row.label = label;
  ev.row.beta = beta;
  ev.row.force_ar = force_ar;

  const DecodeStats stats = pooled_stats(pass.traces);
  const DecodeStats ar_stats = pooled_stats(ar_pass.traces);
  ev.row.n_tokens = stats.n_tokens;
  ev.row.n_forwards = stats.n_forwards;
  ev.row.fcr_value = fcr(stats);
  ev.row.war_value = war(ar_pass.wall_seconds / static_cast<double>(ar_stats.n_tokens),
                         pass.wall_seconds / static_cast<double>(stats.n_tokens));

  std::vector<AgreementRecord> agreement;
  agreement.reserve(pass.traces.size());
  for (std::size_t i = 0; i < pass.traces.size(); ++i)
    agreement.push_back(ar_agreement(pass.traces[i], ar_pass.traces[i]));
  const AgreementSummary summary = summarize_agreement(agreement);
  ev.row.exact_match_rate = summary.exact_match_rate;
  ev.row.mean_token_f1 = summary.mean_token_f1;

  ev.histogram = span_histogram(pass.traces, force_ar ? 1 : k);
  return ev;
}

nlohmann::json row_to_json(const LabeledEval& ev) {
  nlohmann::json hist_json = nlohmann::json::object();
  for (const auto& [reason, count] : ev.histogram.halt_reasons) hist_json[reason] = count;
  nlohmann::json j{{"label", ev.row.label},
                   {"force_ar", ev.row.force_ar},
                   {"fcr", ev.row.fcr_value},
                   {"exact_match_rate", ev.row.exact_match_rate},
                   {"mean_token_f1", ev.row.mean_token_f1},
                   {"n_tokens", ev.row.n_tokens},
                   {"n_forwards", ev.row.n_forwards},
                   {"accepted_len_counts", ev.histogram.accepted_len_counts},
                   {"halt_reasons", hist_json}};
  if (!ev.row.force_ar) j["beta"] = ev.row.beta;
  return j;
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  PipelineConfig cfg;
  cfg.run_dir = j.value("run_dir", cfg.run_dir.string());
  if (j.contains("corpus")) {
    const auto& jc = j.at("corpus");
    if (jc.contains("kind")) cfg.corpus_kind = corpus_kind_from_string(jc.at("kind"));
    cfg.n_items = jc.value("n_items", cfg.n_items);
    cfg.heldout_items = jc.value("heldout_items", cfg.heldout_items);
    cfg.corpus_seed = jc.value("seed", cfg.corpus_seed);
  }
  if (j.contains("model")) {
    const auto& jm = j.at("model");
    cfg.model.n_layers = jm.value("n_layers", cfg.model.n_layers);
    cfg.model.d_model = jm.value("d_model", cfg.model.d_model);
    cfg.model.n_heads = jm.value("n_heads", cfg.model.n_heads);
    cfg.model.max_seq_len = jm.value("max_seq_len", cfg.model.max_seq_len);
    cfg.model.seed = jm.value("seed", cfg.model.seed);
  }
  if (j.contains("finetune")) cfg.finetune = phase_from_json(j.at("finetune"), cfg.finetune);
  if (j.contains("continual")) cfg.continual = phase_from_json(j.at("continual"), cfg.continual);
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.k = j.value("k", cfg.k);
  if (j.contains("betas")) cfg.betas = j.at("betas").get<std::vector<double>>();
  cfg.decode_beta = j.value("decode_beta", cfg.decode_beta);
  cfg.max_new_tokens = j.value("max_new_tokens", cfg.max_new_tokens);
  cfg.repetition_check = j.value("repetition_check", cfg.repetition_check);
  cfg.validate();
  return cfg;
}

PipelineConfig PipelineConfig::from_file(const std::filesystem::path& path) {
  return from_json(read_json_file(path, "config"));
}

void PipelineConfig::validate() const {
  if (n_items < 1) throw std::invalid_argument("config: corpus.n_items must be >= 1");
  if (heldout_items < 1)
    throw std::invalid_argument("config: corpus.heldout_items must be >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("config: alpha must lie in (0, 1]");
  if (k < 1) throw std::invalid_argument("config: k must be >= 1");
  if (max_new_tokens < 1) throw std::invalid_argument("config: max_new_tokens must be >= 1");
  if (!(decode_beta > 0.0 && decode_beta <= 1.0))
    throw std::invalid_argument("config: decode_beta must lie in (0, 1]");
  if (betas.empty()) throw std::invalid_argument("config: betas must be non-empty");
  for (std::size_t i = 0; i < betas.size(); ++i) {
    if (!(betas[i] > 0.0 && betas[i] <= 1.0))
      throw std::invalid_argument("config: betas must lie in (0, 1]");
    if (i > 0 && betas[i] <= betas[i - 1])
      throw std::invalid_argument("config: betas must be strictly ascending");
  }
  for (const auto* phase : {&finetune, &continual}) {
    if (phase->epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    if (phase->batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (!(phase->lr > 0.0)) throw std::invalid_argument("config: lr must be positive");
  }
}

void apply_overrides(PipelineConfig& cfg, const Overrides& overrides) {
  if (overrides.seed) {
    cfg.corpus_seed = *overrides.seed;
    cfg.model.seed = *overrides.seed + 1;
    cfg.finetune.seed = *overrides.seed + 2;
    cfg.continual.seed = *overrides.seed + 3;
  }
  if (overrides.alpha) cfg.alpha = *overrides.alpha;
  if (overrides.beta) cfg.decode_beta = *overrides.beta;
  if (overrides.k) cfg.k = *overrides.k;
  cfg.validate();
}

RunPaths::RunPaths(const std::filesystem::path& dir)
    : run_dir(dir),
      corpus(dir / "corpus.jsonl"),
      heldout(dir / "heldout.jsonl"),
      ft_ckpt(dir / "ft.ckpt"),
      ft_log(dir / "ft_log.json"),
      traces(dir / "traces.jsonl"),
      units(dir / "units.jsonl"),
      unit_stats(dir / "unit_stats.json"),
      dbar(dir / "dbar.jsonl"),
      lud_ckpt(dir / "lud.ckpt"),
      continual_log(dir / "continual_log.json"),
      decode_dir(dir / "decode"),
      sweep_json(dir / "sweep.json"),
      sweep_txt(dir / "sweep.txt"),
      timings(dir / "timings.json"),
      report_dir(dir / "report"),
      manifest(dir / "manifest.json") {}

void cmd_gen_corpus(const PipelineConfig& cfg) {
  cfg.validate();
  const RunPaths rp(cfg.run_dir);
  const Corpus full =
      generate_synthetic_corpus(cfg.corpus_kind, cfg.n_items + cfg.heldout_items,
                                cfg.corpus_seed);
  Corpus train_part{full.vocabulary, {}, full.entropy_class};
  train_part.items.assign(full.items.begin(),
                          full.items.begin() + static_cast<std::ptrdiff_t>(cfg.n_items));
  Corpus held_part{full.vocabulary, {}, full.entropy_class};
  held_part.items.assign(full.items.begin() + static_cast<std::ptrdiff_t>(cfg.n_items),
                         full.items.end());
  save_dataset(train_part, rp.corpus);
  save_dataset(held_part, rp.heldout);
  update_manifest(rp, {rp.corpus, rp.heldout});
  std::cout << "[gen_corpus] " << to_string(cfg.corpus_kind) << ": " << train_part.items.size()
            << " train + " << held_part.items.size() << " held-out items, vocab "
            << full.vocabulary.size() << " -> " << rp.corpus.string() << '\n';
}

void cmd_finetune(const PipelineConfig& cfg) {
  cfg.validate();
  const RunPaths rp(cfg.run_dir);
  require_artifact(rp.corpus, "finetune", "gen_corpus");
  const Corpus corpus = load_dataset(rp.corpus);

  ModelConfig mc = cfg.model;
  mc.vocab_size = static_cast<int>(corpus.vocabulary.size());
  CausalLM model(mc);

  const auto instances = ar_instances(corpus);
  const TrainOptions opts{cfg.finetune.epochs, cfg.finetune.lr, cfg.finetune.batch_size,
                          cfg.finetune.seed};
  const auto history = train(model, instances, opts);

  save_checkpoint(model, rp.ft_ckpt);
  write_json_file(rp.ft_log, nlohmann::json{{"phase", "finetune"}, {"loss", history}});
  update_manifest(rp, {rp.ft_ckpt, rp.ft_log});
  std::cout << "[finetune] " << instances.size() << " instances, " << opts.epochs
            << " epochs: loss " << history.front() << " -> " << history.back() << '\n';
}

void cmd_identify(const PipelineConfig& cfg) {
  cfg.validate();
  const RunPaths rp(cfg.run_dir);
  require_artifact(rp.corpus, "identify", "gen_corpus");
  require_artifact(rp.ft_ckpt, "identify", "finetune");
  const Corpus corpus = load_dataset(rp.corpus);
  const CausalLM model = load_checkpoint(rp.ft_ckpt);
  check_vocab_compat(model, corpus, "identify");

  std::vector<ProbabilityTrace> traces;
  std::vector<std::string> item_ids;
  std::vector<std::vector<LexicalUnit>> units_per_item;
  traces.reserve(corpus.items.size());
  for (const auto& item : corpus.items) {
    traces.push_back(teacher_forced_probs(model, item, corpus.vocabulary));
    item_ids.push_back(item.item_id);
    units_per_item.push_back(identify_units(traces.back(), cfg.alpha));
  }
  save_traces(traces, rp.traces);
  save_units(item_ids, units_per_item, rp.units);

  const UnitStatistics stats = unit_statistics(units_per_item);
  nlohmann::json multi_hist = nlohmann::json::object();
  for (const auto& [len, count] : stats.multi_length_histogram)
    multi_hist[std::to_string(len)] = count;
  write_json_file(rp.unit_stats,
                  nlohmann::json{{"alpha", cfg.alpha},
                                 {"multi_count", stats.multi_count},
                                 {"singleton_count", stats.singleton_count},
                                 {"mean_multi_length", stats.mean_multi_length},
                                 {"multi_length_histogram", multi_hist}});
  update_manifest(rp, {rp.traces, rp.units, rp.unit_stats});
  std::cout << "[identify] alpha " << cfg.alpha << ": " << stats.multi_count << " multi + "
            << stats.singleton_count << " singleton units, mean multi length "
            << stats.mean_multi_length << '\n';
}

void cmd_reconfigure(const PipelineConfig& cfg) {
  cfg.validate();
  const RunPaths rp(cfg.run_dir);
  require_artifact(rp.corpus, "reconfigure", "gen_corpus");
  require_artifact(rp.units, "reconfigure", "identify");
  const Corpus corpus = load_dataset(rp.corpus);
  const auto item_units = load_units(rp.units);
  if (item_units.size() != corpus.items.size())
    throw std::runtime_error("reconfigure: " + rp.units.string() + " covers " +
                             std::to_string(item_units.size()) + " items, corpus has " +
                             std::to_string(corpus.items.size()));

  std::vector<ReconfiguredInstance> dbar;
  std::size_t violations = 0;
  std::string first_violation;
  for (std::size_t i = 0; i < corpus.items.size(); ++i) {
    const auto& item = corpus.items[i];
    if (item_units[i].item_id != item.item_id)
      throw std::runtime_error("reconfigure: unit record " + std::to_string(i) + " is for " +
                               item_units[i].item_id + ", corpus item is " + item.item_id);
    auto instances = reconfigure_item(item, item_units[i].units);
    const auto report =
        audit_loss_once(item, make_ar_instance(item, corpus.vocabulary), instances);
    if (!report.ok()) {
      violations += report.violations.size();
      if (first_violation.empty()) first_violation = report.violations.front();
    }
    for (auto& inst : instances) dbar.push_back(std::move(inst));
  }
  if (violations > 0)
    throw std::runtime_error("reconfigure: audit found " + std::to_string(violations) +
                             " violations; first: " + first_violation);

  save_reconfigured(dbar, rp.dbar);
  update_manifest(rp, {rp.dbar});
  std::cout << "[reconfigure] " << dbar.size() << " PAD instances from "
            << corpus.items.size() << " items; audit clean\n";
}

void cmd_continual_train(const PipelineConfig& cfg) {
  cfg.validate();
  const RunPaths rp(cfg.run_dir);
  require_artifact(rp.corpus, "continual_train", "gen_corpus");
  require_artifact(rp.dbar, "continual_train", "reconfigure");
  require_artifact(rp.ft_ckpt, "continual_train", "finetune");
  const Corpus corpus = load_dataset(rp.corpus);
  const auto dbar = load_reconfigured(rp.dbar);
  CausalLM model = load_checkpoint(rp.ft_ckpt);
  check_vocab_compat(model, corpus, "continual_train");

  const auto mixed = build_mixed_dataset(ar_instances(corpus), dbar, cfg.continual.seed);
  const TrainOptions opts{cfg.continual.epochs, cfg.continual.lr, cfg.continual.batch_size,
                          cfg.continual.seed};
  const auto history = train(model, mixed, opts);

  save_checkpoint(model, rp.lud_ckpt);
  write_json_file(rp.continual_log,
                  nlohmann::json{{"phase", "continual"},
                                 {"mixed_size", mixed.size()},
                                 {"dbar_size", dbar.size()},
                                 {"loss", history}});
  update_manifest(rp, {rp.lud_ckpt, rp.continual_log});
  std::cout << "[continual_train] D' of " << mixed.size() << " (" << dbar.size()
            << " PAD instances), " << opts.epochs << " epochs: loss " << history.front()
            << " -> " << history.back() << '\n';
}

DecodeRunResult cmd_decode(const PipelineConfig& cfg, double beta, bool force_ar) {
  cfg.validate();
  const RunPaths rp(cfg.run_dir);
  require_artifact(rp.heldout, "decode", "gen_corpus");
  require_artifact(rp.lud_ckpt, "decode", "continual_train");
  const Corpus heldout = load_dataset(rp.heldout);
  const CausalLM model = load_checkpoint(rp.lud_ckpt);
  check_vocab_compat(model, heldout, "decode");

  DecodeConfig dc{beta, force_ar, cfg.k, cfg.max_new_tokens, cfg.repetition_check};
  dc.validate();
  const DecodePass pass = run_decode(model, heldout, heldout.vocabulary, dc);
  const DecodePass ar_pass = run_decode_ar(model, heldout, cfg.max_new_tokens);

  const std::string label = force_ar ? "force_ar" : beta_label(beta);
  save_decode_traces(pass.traces, rp.decode_dir / (label + ".jsonl"));
  save_decode_traces(ar_pass.traces, rp.decode_dir / "ar.jsonl");

  const LabeledEval ev = evaluate_pass(label, beta, force_ar, cfg.k, pass, ar_pass);
  update_timings(rp, label,
                 nlohmann::json{{"wall_seconds", pass.wall_seconds},
                                {"n_tokens", ev.row.n_tokens},
                                {"war_vs_ar", ev.row.war_value}});
  update_timings(rp, "ar",
                 nlohmann::json{{"wall_seconds", ar_pass.wall_seconds},
                                {"n_tokens", pooled_stats(ar_pass.traces).n_tokens}});
  update_manifest(rp, {rp.decode_dir / (label + ".jsonl"), rp.decode_dir / "ar.jsonl"});
  std::cout << "[decode] " << label << ": FCR " << ev.row.fcr_value << ", WAR "
            << ev.row.war_value << ", exact-match " << ev.row.exact_match_rate << " over "
            << heldout.items.size() << " prompts\n";
  return ev.row;
}

SweepResult cmd_sweep(const PipelineConfig& cfg) {
  cfg.validate();
  const RunPaths rp(cfg.run_dir);
  require_artifact(rp.heldout, "sweep", "gen_corpus");
  require_artifact(rp.lud_ckpt, "sweep", "continual_train");
  const Corpus heldout = load_dataset(rp.heldout);
  const CausalLM model = load_checkpoint(rp.lud_ckpt);
  check_vocab_compat(model, heldout, "sweep");

  const DecodePass ar_pass = run_decode_ar(model, heldout, cfg.max_new_tokens);
  save_decode_traces(ar_pass.traces, rp.decode_dir / "ar.jsonl");
  std::vector<std::filesystem::path> written{rp.decode_dir / "ar.jsonl"};
  update_timings(rp, "ar",
                 nlohmann::json{{"wall_seconds", ar_pass.wall_seconds},
                                {"n_tokens", pooled_stats(ar_pass.traces).n_tokens}});

  SweepResult result;
  nlohmann::json rows_json = nlohmann::json::array();

  auto one_pass = [&](double beta, bool force_ar, bool repetition_check,
                      const std::string& label) {
    DecodeConfig dc{beta, force_ar, cfg.k, cfg.max_new_tokens, repetition_check};
    dc.validate();
    const DecodePass pass = run_decode(model, heldout, heldout.vocabulary, dc);
    save_decode_traces(pass.traces, rp.decode_dir / (label + ".jsonl"));
    written.push_back(rp.decode_dir / (label + ".jsonl"));
    LabeledEval ev = evaluate_pass(label, beta, force_ar, cfg.k, pass, ar_pass);
    update_timings(rp, label,
                   nlohmann::json{{"wall_seconds", pass.wall_seconds},
                                  {"n_tokens", ev.row.n_tokens},
                                  {"war_vs_ar", ev.row.war_value}});
    return std::pair<LabeledEval, double>(std::move(ev), pass.wall_seconds);
  };

  double wall_at_decode_beta = 0.0;
  for (const double beta : cfg.betas) {
    auto [ev, wall] = one_pass(beta, false, cfg.repetition_check, beta_label(beta));
    if (beta == cfg.decode_beta) wall_at_decode_beta = wall;
    rows_json.push_back(row_to_json(ev));
    result.rows.push_back(ev.row);
  }
  {
    auto [ev, wall] = one_pass(1.0, true, cfg.repetition_check, "force_ar");
    (void)wall;
    rows_json.push_back(row_to_json(ev));
    result.rows.push_back(ev.row);
  }

  // the repetition rule's wall-time cost: decode_beta with the check forced
  // on vs forced off (the grid measurement is reused when it already ran
  // with the check on)
  {
    const double ref_beta = cfg.decode_beta;
    double wall_on = cfg.repetition_check ? wall_at_decode_beta : 0.0;
    if (wall_on == 0.0) {
      auto [ev_on, w] = one_pass(ref_beta, false, true, "rep_on");
      (void)ev_on;
      wall_on = w;
    }
    auto [ev_off, wall_off] = one_pass(ref_beta, false, false, "norep");
    result.repetition_off_row = row_to_json(ev_off);
    result.repetition_off_row["beta"] = ref_beta;
    result.repetition_cost = (wall_on - wall_off) / wall_off;
    update_timings(rp, "repetition_rule",
                   nlohmann::json{{"beta", ref_beta},
                                  {"wall_seconds_check_on", wall_on},
                                  {"wall_seconds_check_off", wall_off},
                                  {"relative_cost", result.repetition_cost}});
  }

  // invariant: FCR non-increasing across ascending betas, exactly 0 at force_ar
  for (std::size_t i = 1; i < result.rows.size(); ++i) {
    if (result.rows[i].fcr_value > result.rows[i - 1].fcr_value + 1e-12)
      throw std::runtime_error("sweep: FCR increased from " + result.rows[i - 1].label +
                               " to " + result.rows[i].label);
  }
  if (result.rows.back().fcr_value != 0.0)
    throw std::runtime_error("sweep: force_ar FCR must be exactly 0, got " +
                             std::to_string(result.rows.back().fcr_value));

  write_json_file(rp.sweep_json, nlohmann::json{{"k", cfg.k},
                                                {"max_new_tokens", cfg.max_new_tokens},
                                                {"repetition_check", cfg.repetition_check},
                                                {"rows", rows_json},
                                                {"repetition_off", result.repetition_off_row}});
  written.push_back(rp.sweep_json);

  // human-readable table; WAR is a fresh measurement, so this file is volatile
  {
    std::ofstream out(rp.sweep_txt, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("sweep: cannot open " + rp.sweep_txt.string());
    char line[160];
    std::snprintf(line, sizeof(line), "%-12s %8s %8s %12s %10s\n", "label", "FCR", "WAR",
                  "exact_match", "token_f1");
    out << line;
    for (const auto& row : result.rows) {
      std::snprintf(line, sizeof(line), "%-12s %8.4f %8.4f %12.4f %10.4f\n",
                    row.label.c_str(), row.fcr_value, row.war_value, row.exact_match_rate,
                    row.mean_token_f1);
      out << line;
    }
    std::snprintf(line, sizeof(line), "repetition rule relative wall cost: %.4f\n",
                  result.repetition_cost);
    out << line;
  }

  update_manifest(rp, written);
  std::cout << "[sweep] " << result.rows.size() << " rows -> " << rp.sweep_json.string()
            << " (FCR " << result.rows.front().fcr_value << " at "
            << result.rows.front().label << " down to 0 at force_ar)\n";
  return result;
}

void cmd_report(const PipelineConfig& cfg) {
  cfg.validate();
  const RunPaths rp(cfg.run_dir);
  require_artifact(rp.heldout, "report", "gen_corpus");
  require_artifact(rp.sweep_json, "report", "sweep");
  const Corpus heldout = load_dataset(rp.heldout);
  const nlohmann::json sweep = read_json_file(rp.sweep_json, "report");

  // render the decode run closest to the configured beta, falling back to the
  // first sweep row
  std::string label = beta_label(cfg.decode_beta);
  if (!std::filesystem::exists(rp.decode_dir / (label + ".jsonl")))
    label = sweep.at("rows").at(0).at("label").get<std::string>();
  const auto trace_path = rp.decode_dir / (label + ".jsonl");
  require_artifact(trace_path, "report", "sweep");
  const auto traces = load_decode_traces(trace_path);

  constexpr std::size_t kMaxRendered = 20;
  const std::vector<DecodeTrace> rendered(
      traces.begin(),
      traces.begin() + static_cast<std::ptrdiff_t>(std::min(kMaxRendered, traces.size())));

  nlohmann::json summary{{"rendered_label", label},
                         {"rendered_traces", rendered.size()},
                         {"total_traces", traces.size()},
                         {"sweep", sweep}};
  if (std::filesystem::exists(rp.timings))
    summary["timings"] = read_json_file(rp.timings, "report");

  emit_report(rendered, heldout.vocabulary, summary, rp.report_dir);
  update_manifest(rp, {rp.report_dir / "summary.json", rp.report_dir / "report.html"});
  std::cout << "[report] rendered " << rendered.size() << " of " << traces.size()
            << " generations (" << label << ") -> "
            << (rp.report_dir / "report.html").string() << '\n';
}

}  // namespace lud
