#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace lud {

// Teacher-forced ground-truth probabilities, one per target position.
struct ProbabilityTrace {
  std::string item_id;
  std::vector<double> probs;
};

enum class UnitKind { kMulti, kSingleton };

std::string to_string(UnitKind kind);

// A contiguous target span. Units for one item partition [0, target_len).
struct LexicalUnit {
  std::size_t start = 0;
  std::size_t length = 0;
  UnitKind kind = UnitKind::kSingleton;
  std::vector<double> probs;  // the trace slice covered by the span
};

// Maximal runs of positions with prob >= alpha of length >= 2 become multi
// units; every other position is a singleton. Alpha must lie in (0, 1].
std::vector<LexicalUnit> identify_units(const ProbabilityTrace& trace, double alpha);

struct UnitStatistics {
  std::size_t multi_count = 0;
  std::size_t singleton_count = 0;
  double mean_multi_length = 0.0;
  // Histograms keyed by unit length (singletons all land in bin 1).
  std::map<std::size_t, std::size_t> multi_length_histogram;
  std::map<std::size_t, std::size_t> singleton_length_histogram;
  std::size_t total_units() const { return multi_count + singleton_count; }
};

UnitStatistics unit_statistics(const std::vector<std::vector<LexicalUnit>>& all_units);

// Trace file: one {item_id, probs} record per line.
void save_traces(const std::vector<ProbabilityTrace>& traces,
                 const std::filesystem::path& path);
std::vector<ProbabilityTrace> load_traces(const std::filesystem::path& path);

// Units file: one {item_id, units:[{start,length,kind}]} record per line.
void save_units(const std::vector<std::string>& item_ids,
                const std::vector<std::vector<LexicalUnit>>& units_per_item,
                const std::filesystem::path& path);
struct ItemUnits {
  std::string item_id;
  std::vector<LexicalUnit> units;  // probs slices are not persisted
};
std::vector<ItemUnits> load_units(const std::filesystem::path& path);

}  // namespace lud
