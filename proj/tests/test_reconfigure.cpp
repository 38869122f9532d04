#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <map>
#include <vector>

#include "lud/identify.hpp"
#include "lud/model.hpp"
#include "lud/reconfigure.hpp"
#include "lud/util.hpp"

using namespace lud;

namespace {

constexpr TokenId kPad = Vocabulary::kPadId;
constexpr TokenId kBos = Vocabulary::kBosId;

LexicalUnit unit(std::size_t start, std::size_t length) {
  LexicalUnit u;
  u.start = start;
  u.length = length;
  u.kind = length >= 2 ? UnitKind::kMulti : UnitKind::kSingleton;
  return u;
}

// prompt [10, 11], target [20, 21, 22, 23]
TokenizedItem sample_item() {
  return TokenizedItem{"item-x", {10, 11}, {20, 21, 22, 23}};
}

}  // namespace

TEST_CASE("a mid-target multi unit yields one padded instance") {
  const auto item = sample_item();
  const std::vector<LexicalUnit> units = {unit(0, 1), unit(1, 2), unit(3, 1)};
  const auto instances = reconfigure_item(item, units);

  REQUIRE(instances.size() == 1);  // only the multi unit produces an instance
  const auto& inst = instances[0];
  CHECK(inst.source.item_id == "item-x");
  CHECK(inst.source.start == 1);
  CHECK(inst.source.length == 2);

  // BOS, prompt, target prefix before the unit, one PAD standing in for the
  // unit's second token; nothing after the unit survives.
  CHECK(inst.data.input_ids == std::vector<TokenId>{kBos, 10, 11, 20, kPad});
  CHECK(inst.data.label_ids == std::vector<std::int32_t>{-1, -1, -1, 21, 22});
}

TEST_CASE("a whole-target multi unit pads every position after the first") {
  const auto item = sample_item();
  const auto instances = reconfigure_item(item, {unit(0, 4)});
  REQUIRE(instances.size() == 1);
  const auto& inst = instances[0];
  CHECK(inst.data.input_ids == std::vector<TokenId>{kBos, 10, 11, kPad, kPad, kPad});
  CHECK(inst.data.label_ids == std::vector<std::int32_t>{-1, -1, 20, 21, 22, 23});
}

TEST_CASE("all-singleton partitions yield no instances") {
  const auto item = sample_item();
  const auto instances =
      reconfigure_item(item, {unit(0, 1), unit(1, 1), unit(2, 1), unit(3, 1)});
  CHECK(instances.empty());
}

TEST_CASE("padded instances satisfy the positional invariants") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    // random item and a random valid partition
    TokenizedItem item;
    item.item_id = "gen";
    const std::size_t p = 1 + uniform_index(rng, 5);
    const std::size_t n = 2 + uniform_index(rng, 10);
    for (std::size_t i = 0; i < p; ++i)
      item.prompt_ids.push_back(static_cast<TokenId>(3 + uniform_index(rng, 40)));
    for (std::size_t i = 0; i < n; ++i)
      item.target_ids.push_back(static_cast<TokenId>(3 + uniform_index(rng, 40)));

    std::vector<LexicalUnit> units;
    std::size_t cursor = 0;
    while (cursor < n) {
      const std::size_t len = std::min(n - cursor, 1 + uniform_index(rng, 4));
      units.push_back(unit(cursor, len));
      cursor += len;
    }

    for (const auto& inst : reconfigure_item(item, units)) {
      const std::size_t s = inst.source.start;
      const std::size_t len = inst.source.length;
      REQUIRE(inst.data.input_ids.size() == 1 + p + s + len - 1);

      // PADs occupy exactly the absolute positions of the replaced tokens.
      for (std::size_t t = 0; t < inst.data.input_ids.size(); ++t) {
        const bool is_pad_slot = t > 1 + p + s - 1;  // after the unit's first token's predecessor
        CHECK((inst.data.input_ids[t] == kPad) == is_pad_slot);
      }
      // Labels cover the unit's tokens and nothing else.
      for (std::size_t t = 0; t < inst.data.label_ids.size(); ++t) {
        if (t >= p + s) {
          CHECK(inst.data.label_ids[t] == item.target_ids[t - p]);
        } else {
          CHECK(inst.data.label_ids[t] == kIgnoreLabel);
        }
      }
    }
  }
}

TEST_CASE("reconfigure rejects unit lists that do not partition the target") {
  const auto item = sample_item();
  SUBCASE("gap") {
    CHECK_THROWS_WITH_AS(reconfigure_item(item, {unit(0, 1), unit(2, 2)}),
                         doctest::Contains("partition"), std::invalid_argument);
  }
  SUBCASE("short coverage") {
    CHECK_THROWS_WITH_AS(reconfigure_item(item, {unit(0, 2)}), doctest::Contains("cover"),
                         std::invalid_argument);
  }
  SUBCASE("kind inconsistent with length") {
    auto bad = unit(0, 4);
    bad.kind = UnitKind::kSingleton;
    CHECK_THROWS_WITH_AS(reconfigure_item(item, {bad}), doctest::Contains("singleton"),
                         std::invalid_argument);
    auto short_multi = unit(0, 1);
    short_multi.kind = UnitKind::kMulti;
    CHECK_THROWS_WITH_AS(reconfigure_item(item, {short_multi, unit(1, 3)}),
                         doctest::Contains("multi"), std::invalid_argument);
  }
}

TEST_CASE("the audit confirms every target position is supervised") {
  const auto item = sample_item();
  const auto vocab_free_bos = kBos;  // AR entry built by hand to stay vocabulary-free
  TrainingBatchItem d_entry;
  d_entry.input_ids = {vocab_free_bos, 10, 11, 20, 21, 22};
  d_entry.label_ids = {-1, -1, 20, 21, 22, 23};

  const std::vector<LexicalUnit> units = {unit(0, 1), unit(1, 2), unit(3, 1)};
  const auto dbar = reconfigure_item(item, units);
  const auto report = audit_loss_once(item, d_entry, dbar);

  CHECK(report.ok());
  REQUIRE(report.supervision_counts.size() == 4);
  CHECK(report.supervision_counts[0] == 1);  // singleton: AR entry only
  CHECK(report.supervision_counts[1] == 2);  // multi: AR entry + padded instance
  CHECK(report.supervision_counts[2] == 2);
  CHECK(report.supervision_counts[3] == 1);

  SUBCASE("a corrupted label is reported") {
    auto broken = dbar;
    broken[0].data.label_ids[3] = 99;
    const auto bad = audit_loss_once(item, d_entry, broken);
    CHECK_FALSE(bad.ok());
    REQUIRE_FALSE(bad.violations.empty());
    CHECK(bad.violations[0].find("label") != std::string::npos);
  }
  SUBCASE("a displaced PAD is reported") {
    auto broken = dbar;
    std::swap(broken[0].data.input_ids[3], broken[0].data.input_ids[4]);
    CHECK_FALSE(audit_loss_once(item, d_entry, broken).ok());
  }
  SUBCASE("a foreign source item is reported") {
    auto broken = dbar;
    broken[0].source.item_id = "item-y";
    const auto bad = audit_loss_once(item, d_entry, broken);
    CHECK_FALSE(bad.ok());
    CHECK(bad.violations[0].find("item-y") != std::string::npos);
  }
}

TEST_CASE("mixing keeps every instance exactly once in a seeded order") {
  const auto item = sample_item();
  std::vector<TrainingBatchItem> d = {
      TrainingBatchItem::create({kBos, 10, 11, 20, 21, 22}, {-1, -1, 20, 21, 22, 23})};
  for (TokenId v = 12; v < 18; ++v)
    d.push_back(TrainingBatchItem::create({kBos, v, 13}, {-1, 5, 2}));
  const auto dbar = reconfigure_item(item, {unit(0, 2), unit(2, 2)});
  REQUIRE(dbar.size() == 2);

  const auto mixed = build_mixed_dataset(d, dbar, 99);
  CHECK(mixed.size() == d.size() + dbar.size());

  auto key = [](const TrainingBatchItem& it) {
    std::string s;
    for (auto id : it.input_ids) s += std::to_string(id) + ",";
    s += "|";
    for (auto id : it.label_ids) s += std::to_string(id) + ",";
    return s;
  };
  std::map<std::string, int> want, got;
  for (const auto& it : d) ++want[key(it)];
  for (const auto& it : dbar) ++want[key(it.data)];
  for (const auto& it : mixed) ++got[key(it)];
  CHECK(want == got);

  SUBCASE("the order is deterministic in the seed") {
    const auto again = build_mixed_dataset(d, dbar, 99);
    REQUIRE(again.size() == mixed.size());
    for (std::size_t i = 0; i < mixed.size(); ++i) {
      CHECK(again[i].input_ids == mixed[i].input_ids);
      CHECK(again[i].label_ids == mixed[i].label_ids);
    }
    const auto reseeded = build_mixed_dataset(d, dbar, 100);
    bool any_diff = false;
    for (std::size_t i = 0; i < mixed.size(); ++i)
      any_diff = any_diff || reseeded[i].input_ids != mixed[i].input_ids;
    CHECK(any_diff);
  }
}

TEST_CASE("reconfigured instances round trip through their file format") {
  const auto item = sample_item();
  const auto dbar = reconfigure_item(item, {unit(0, 2), unit(2, 2)});
  const auto dir = std::filesystem::temp_directory_path() / "lud_reconfigure_tests";
  std::filesystem::create_directories(dir);
  const auto path = dir / "dbar.jsonl";

  save_reconfigured(dbar, path);
  const auto loaded = load_reconfigured(path);
  REQUIRE(loaded.size() == dbar.size());
  for (std::size_t i = 0; i < dbar.size(); ++i) {
    CHECK(loaded[i].source.item_id == dbar[i].source.item_id);
    CHECK(loaded[i].source.start == dbar[i].source.start);
    CHECK(loaded[i].source.length == dbar[i].source.length);
    CHECK(loaded[i].data.input_ids == dbar[i].data.input_ids);
    CHECK(loaded[i].data.label_ids == dbar[i].data.label_ids);
  }

  SUBCASE("malformed records carry a line number") {
    write_text_file(path, "{broken\n");
    CHECK_THROWS_WITH_AS(load_reconfigured(path), doctest::Contains("line 1"),
                         std::runtime_error);
  }
}
