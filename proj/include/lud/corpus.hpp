#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lud/vocabulary.hpp"

namespace lud {

// One (prompt, target) example as token ids. The target always ends with EOS
// and neither sequence may contain PAD.
struct TokenizedItem {
  std::string item_id;
  std::vector<TokenId> prompt_ids;
  std::vector<TokenId> target_ids;
};

struct Corpus {
  Vocabulary vocabulary;
  std::vector<TokenizedItem> items;
  std::string entropy_class;  // "low" or "high"
};

enum class CorpusKind { kTemplatedCode, kTemplatedText };

std::string to_string(CorpusKind kind);
CorpusKind corpus_kind_from_string(const std::string& s);

// Deterministic in (kind, n_items, seed). templated_code items follow a small
// grammar whose targets are a fixed function of the prompt; templated_text
// items fill template slots with high-variability words drawn independently
// of the prompt.
Corpus generate_synthetic_corpus(CorpusKind kind, std::size_t n_items, std::uint64_t seed);

// Checks the corpus invariants (no PAD anywhere, targets end with EOS, ids in
// range); throws naming the offending item.
void validate_corpus(const Corpus& corpus);

// Line-delimited records, vocabulary in a header record on line 1.
void save_dataset(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_dataset(const std::filesystem::path& path);

}  // namespace lud
