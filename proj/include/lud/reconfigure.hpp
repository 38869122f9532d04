#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lud/corpus.hpp"
#include "lud/identify.hpp"
#include "lud/model.hpp"

namespace lud {

struct UnitSource {
  std::string item_id;
  std::size_t start = 0;   // first target position covered by the unit
  std::size_t length = 0;  // unit length in tokens
};

// One PAD-substituted training instance derived from a multi-token unit.
struct ReconfiguredInstance {
  TrainingBatchItem data;
  UnitSource source;
};

// Emits one instance per multi-token unit: the unit's tokens after the first
// are replaced by PADs occupying the exact positions of the tokens they stand
// in for, nothing after the unit is kept, and only the unit's tokens carry
// labels. Singleton units emit nothing (the original item stays in the mix).
// Throws if the units do not partition the item's target.
std::vector<ReconfiguredInstance> reconfigure_item(const TokenizedItem& item,
                                                   const std::vector<LexicalUnit>& units);

// D' = D + Dbar, then one seed-deterministic shuffle. No deduplication.
std::vector<TrainingBatchItem> build_mixed_dataset(const std::vector<TrainingBatchItem>& d,
                                                   const std::vector<ReconfiguredInstance>& dbar,
                                                   std::uint64_t seed);

struct AuditReport {
  std::vector<int> supervision_counts;  // per target position, across D entry + Dbar
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

// Cross-checks one item against its derived instances: every target position
// supervised at least once, labels decode back to the original tokens, PADs
// sit exactly on the positions of the tokens they replace, and instances
// carry nothing after their unit.
AuditReport audit_loss_once(const TokenizedItem& item, const TrainingBatchItem& d_entry,
                            const std::vector<ReconfiguredInstance>& dbar_instances);

// Line-delimited records mirroring the dataset format, with source metadata
// so audits can trace each instance back to (item, unit).
void save_reconfigured(const std::vector<ReconfiguredInstance>& instances,
                       const std::filesystem::path& path);
std::vector<ReconfiguredInstance> load_reconfigured(const std::filesystem::path& path);

}  // namespace lud
