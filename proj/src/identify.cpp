#include "lud/identify.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "lud/util.hpp"

namespace lud {

std::string to_string(UnitKind kind) {
  return kind == UnitKind::kMulti ? "multi" : "singleton";
}

std::vector<LexicalUnit> identify_units(const ProbabilityTrace& trace, double alpha) {
  if (!(alpha > 0.0) || alpha > 1.0)
    throw std::invalid_argument("identify_units: alpha must be in (0, 1], got " +
                                std::to_string(alpha));
  if (trace.probs.empty())
    throw std::invalid_argument("identify_units: empty trace for item " + trace.item_id);

  const auto& p = trace.probs;
  std::vector<LexicalUnit> units;
  std::size_t i = 0;
  while (i < p.size()) {
    if (p[i] >= alpha) {
      std::size_t j = i;
      while (j < p.size() && p[j] >= alpha) ++j;
      const std::size_t run = j - i;
      if (run >= 2) {
        LexicalUnit u;
        u.start = i;
        u.length = run;
        u.kind = UnitKind::kMulti;
        u.probs.assign(p.begin() + static_cast<std::ptrdiff_t>(i),
                       p.begin() + static_cast<std::ptrdiff_t>(j));
        units.push_back(std::move(u));
        i = j;
        continue;
      }
      // An isolated high-confidence position stays auto-regressive.
    }
    LexicalUnit u;
    u.start = i;
    u.length = 1;
    u.kind = UnitKind::kSingleton;
    u.probs = {p[i]};
    units.push_back(std::move(u));
    ++i;
  }
  return units;
}

UnitStatistics unit_statistics(const std::vector<std::vector<LexicalUnit>>& all_units) {
  UnitStatistics stats;
  std::size_t multi_token_total = 0;
  for (const auto& units : all_units) {
    for (const auto& u : units) {
      if (u.kind == UnitKind::kMulti) {
        ++stats.multi_count;
        multi_token_total += u.length;
        ++stats.multi_length_histogram[u.length];
      } else {
        ++stats.singleton_count;
        ++stats.singleton_length_histogram[u.length];
      }
    }
  }
  stats.mean_multi_length =
      stats.multi_count == 0
          ? 0.0
          : static_cast<double>(multi_token_total) / static_cast<double>(stats.multi_count);
  return stats;
}

void save_traces(const std::vector<ProbabilityTrace>& traces,
                 const std::filesystem::path& path) {
  std::ostringstream out;
  for (const auto& t : traces) {
    nlohmann::json rec{{"item_id", t.item_id}, {"probs", t.probs}};
    out << rec.dump() << "\n";
  }
  write_text_file(path, out.str());
}

std::vector<ProbabilityTrace> load_traces(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path.string());
  std::vector<ProbabilityTrace> traces;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      ProbabilityTrace t;
      t.item_id = j.at("item_id").get<std::string>();
      t.probs = j.at("probs").get<std::vector<double>>();
      for (double v : t.probs) {
        if (!(v >= 0.0 && v <= 1.0))
          throw std::runtime_error("probability out of [0,1]: " + std::to_string(v));
      }
      traces.push_back(std::move(t));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ": line " + std::to_string(line_no) +
                               ": malformed trace record: " + e.what());
    }
  }
  return traces;
}

void save_units(const std::vector<std::string>& item_ids,
                const std::vector<std::vector<LexicalUnit>>& units_per_item,
                const std::filesystem::path& path) {
  if (item_ids.size() != units_per_item.size())
    throw std::invalid_argument("save_units: item_ids and units size mismatch");
  std::ostringstream out;
  for (std::size_t i = 0; i < item_ids.size(); ++i) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& u : units_per_item[i]) {
      arr.push_back({{"start", u.start}, {"length", u.length}, {"kind", to_string(u.kind)}});
    }
    nlohmann::json rec{{"item_id", item_ids[i]}, {"units", arr}};
    out << rec.dump() << "\n";
  }
  write_text_file(path, out.str());
}

std::vector<ItemUnits> load_units(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open units file: " + path.string());
  std::vector<ItemUnits> result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      ItemUnits iu;
      iu.item_id = j.at("item_id").get<std::string>();
      for (const auto& uj : j.at("units")) {
        LexicalUnit u;
        u.start = uj.at("start").get<std::size_t>();
        u.length = uj.at("length").get<std::size_t>();
        const auto kind = uj.at("kind").get<std::string>();
        if (kind == "multi") {
          u.kind = UnitKind::kMulti;
        } else if (kind == "singleton") {
          u.kind = UnitKind::kSingleton;
        } else {
          throw std::runtime_error("unknown unit kind: " + kind);
        }
        iu.units.push_back(std::move(u));
      }
      result.push_back(std::move(iu));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ": line " + std::to_string(line_no) +
                               ": malformed units record: " + e.what());
    }
  }
  return result;
}

}  // namespace lud
