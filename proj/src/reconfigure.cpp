#include "lud/reconfigure.hpp"

#include <fstream>
#include <random>
#include <stdexcept>

#include "json.hpp"

#include "lud/util.hpp"
#include "lud/vocabulary.hpp"

namespace lud {
namespace {

void check_partition(const TokenizedItem& item, const std::vector<LexicalUnit>& units) {
  std::size_t cursor = 0;
  for (std::size_t u = 0; u < units.size(); ++u) {
    const auto& unit = units[u];
    if (unit.start != cursor)
      throw std::invalid_argument("reconfigure: units do not partition item " + item.item_id +
                                  ": unit " + std::to_string(u) + " starts at " +
                                  std::to_string(unit.start) + ", expected " +
                                  std::to_string(cursor));
    if (unit.length == 0)
      throw std::invalid_argument("reconfigure: zero-length unit in item " + item.item_id);
    if (unit.kind == UnitKind::kMulti && unit.length < 2)
      throw std::invalid_argument("reconfigure: multi unit of length 1 in item " + item.item_id);
    if (unit.kind == UnitKind::kSingleton && unit.length != 1)
      throw std::invalid_argument("reconfigure: singleton unit of length " +
                                  std::to_string(unit.length) + " in item " + item.item_id);
    cursor += unit.length;
  }
  if (cursor != item.target_ids.size())
    throw std::invalid_argument("reconfigure: units cover " + std::to_string(cursor) +
                                " of " + std::to_string(item.target_ids.size()) +
                                " target tokens in item " + item.item_id);
}

}  // namespace

std::vector<ReconfiguredInstance> reconfigure_item(const TokenizedItem& item,
                                                   const std::vector<LexicalUnit>& units) {
  check_partition(item, units);
  const std::size_t p = item.prompt_ids.size();
  std::vector<ReconfiguredInstance> out;
  for (const auto& unit : units) {
    if (unit.kind != UnitKind::kMulti) continue;
    const std::size_t s = unit.start;
    const std::size_t len = unit.length;

    // input: BOS + prompt + target[0..s) + (len-1) PADs standing on the
    // positions of target[s..s+len-1); the final unit token is never input
    std::vector<TokenId> input;
    input.reserve(1 + p + s + len - 1);
    input.push_back(Vocabulary::kBosId);
    input.insert(input.end(), item.prompt_ids.begin(), item.prompt_ids.end());
    input.insert(input.end(), item.target_ids.begin(),
                 item.target_ids.begin() + static_cast<std::ptrdiff_t>(s));
    input.insert(input.end(), len - 1, Vocabulary::kPadId);

    // position p+s+i predicts target[s+i]: the first unit token from real
    // context alone, the rest across PADs that carry position only
    std::vector<std::int32_t> labels(input.size(), kIgnoreLabel);
    for (std::size_t i = 0; i < len; ++i) labels[p + s + i] = item.target_ids[s + i];

    ReconfiguredInstance inst;
    inst.data = TrainingBatchItem::create(std::move(input), std::move(labels));
    inst.source = UnitSource{item.item_id, s, len};
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<TrainingBatchItem> build_mixed_dataset(const std::vector<TrainingBatchItem>& d,
                                                   const std::vector<ReconfiguredInstance>& dbar,
                                                   std::uint64_t seed) {
  std::vector<TrainingBatchItem> mixed;
  mixed.reserve(d.size() + dbar.size());
  mixed.insert(mixed.end(), d.begin(), d.end());
  for (const auto& inst : dbar) mixed.push_back(inst.data);
  std::mt19937_64 rng(seed);
  deterministic_shuffle(mixed, rng);
  return mixed;
}

AuditReport audit_loss_once(const TokenizedItem& item, const TrainingBatchItem& d_entry,
                            const std::vector<ReconfiguredInstance>& dbar_instances) {
  AuditReport report;
  const std::size_t p = item.prompt_ids.size();
  const std::size_t n = item.target_ids.size();
  report.supervision_counts.assign(n, 0);

  // The prediction made at input position t is for absolute position t+1;
  // target[j] sits at absolute position 1+p+j, so a supervised label at
  // input position t refers to target index t-p in every instance kind.
  auto tally = [&](const TrainingBatchItem& entry, const std::string& what) {
    for (std::size_t t = 0; t < entry.label_ids.size(); ++t) {
      if (entry.label_ids[t] == kIgnoreLabel) continue;
      if (t < p || t - p >= n) {
        report.violations.push_back(what + ": supervised position " + std::to_string(t) +
                                    " falls outside the target");
        continue;
      }
      const std::size_t idx = t - p;
      if (entry.label_ids[t] != item.target_ids[idx]) {
        report.violations.push_back(what + ": label at target position " + std::to_string(idx) +
                                    " does not match the original token");
        continue;
      }
      ++report.supervision_counts[idx];
    }
  };

  tally(d_entry, "D entry for " + item.item_id);

  for (std::size_t i = 0; i < dbar_instances.size(); ++i) {
    const auto& inst = dbar_instances[i];
    const std::string what =
        "instance " + std::to_string(i) + " of " + item.item_id;
    if (inst.source.item_id != item.item_id) {
      report.violations.push_back(what + ": source item mismatch (" + inst.source.item_id + ")");
      continue;
    }
    const std::size_t s = inst.source.start;
    const std::size_t len = inst.source.length;
    if (s + len > n) {
      report.violations.push_back(what + ": unit extends past the target");
      continue;
    }

    // truncation: exactly BOS + prompt + s prefix tokens + (len-1) PADs
    const std::size_t expect_len = 1 + p + s + len - 1;
    if (inst.data.input_ids.size() != expect_len)
      report.violations.push_back(what + ": input length " +
                                  std::to_string(inst.data.input_ids.size()) + ", expected " +
                                  std::to_string(expect_len) +
                                  " (instance must end at its unit)");

    std::size_t supervised = 0;
    for (const auto label : inst.data.label_ids)
      if (label != kIgnoreLabel) ++supervised;
    if (supervised != len)
      report.violations.push_back(what + ": " + std::to_string(supervised) +
                                  " supervised positions for a unit of length " +
                                  std::to_string(len));

    // context integrity and PAD-position correspondence: PADs appear exactly
    // at the absolute positions of target[s..s+len-1)
    for (std::size_t t = 0; t < inst.data.input_ids.size(); ++t) {
      const TokenId id = inst.data.input_ids[t];
      TokenId expected;
      if (t == 0)
        expected = Vocabulary::kBosId;
      else if (t <= p)
        expected = item.prompt_ids[t - 1];
      else if (t < 1 + p + s)
        expected = item.target_ids[t - 1 - p];
      else
        expected = Vocabulary::kPadId;
      if (id != expected) {
        report.violations.push_back(what + ": input position " + std::to_string(t) +
                                    (id == Vocabulary::kPadId
                                         ? " holds PAD outside the unit region"
                                         : " does not match the source item"));
      }
    }
    tally(inst.data, what);
  }

  for (std::size_t idx = 0; idx < n; ++idx)
    if (report.supervision_counts[idx] == 0)
      report.violations.push_back("target position " + std::to_string(idx) + " of " +
                                  item.item_id + " is never supervised");
  return report;
}

void save_reconfigured(const std::vector<ReconfiguredInstance>& instances,
                       const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_reconfigured: cannot open " + path.string());
  for (const auto& inst : instances) {
    nlohmann::json rec{{"item_id", inst.source.item_id},
                       {"start", inst.source.start},
                       {"length", inst.source.length},
                       {"input_ids", inst.data.input_ids},
                       {"label_ids", inst.data.label_ids}};
    out << rec.dump() << '\n';
  }
  if (!out) throw std::runtime_error("save_reconfigured: write failed for " + path.string());
}

std::vector<ReconfiguredInstance> load_reconfigured(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_reconfigured: cannot open " + path.string());
  std::vector<ReconfiguredInstance> instances;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ReconfiguredInstance inst;
      inst.source.item_id = j.at("item_id").get<std::string>();
      inst.source.start = j.at("start").get<std::size_t>();
      inst.source.length = j.at("length").get<std::size_t>();
      inst.data = TrainingBatchItem::create(j.at("input_ids").get<std::vector<TokenId>>(),
                                            j.at("label_ids").get<std::vector<std::int32_t>>());
      instances.push_back(std::move(inst));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ": line " + std::to_string(line_no) +
                               ": malformed record: " + e.what());
    }
  }
  return instances;
}

}  // namespace lud
