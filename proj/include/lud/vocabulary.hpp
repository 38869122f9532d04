#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace lud {

using TokenId = std::int32_t;

enum class TokenizerMode { kChar, kWord };

std::string to_string(TokenizerMode mode);
TokenizerMode tokenizer_mode_from_string(const std::string& s);

// Token table with [PAD]/[BOS]/[EOS] pinned at indices 0/1/2. tokenize never
// emits the special ids; detokenize(tokenize(s)) == s for any s over the
// alphabet the vocabulary was built from.
class Vocabulary {
 public:
  static constexpr TokenId kPadId = 0;
  static constexpr TokenId kBosId = 1;
  static constexpr TokenId kEosId = 2;
  static constexpr std::size_t kNumSpecial = 3;

  Vocabulary() = default;

  // Collects the symbol set of `texts` (single characters in char mode,
  // whitespace-preserving segments in word mode), sorts it, and appends it
  // after the three reserved ids. Throws if the combined alphabet is empty.
  static Vocabulary build(const std::vector<std::string>& texts, TokenizerMode mode);

  std::vector<TokenId> tokenize(const std::string& text) const;
  std::string detokenize(std::span<const TokenId> ids) const;

  const std::string& token_string(TokenId id) const;
  const std::vector<std::string>& token_strings() const { return tokens_; }

  std::size_t size() const { return tokens_.size(); }
  TokenizerMode mode() const { return mode_; }
  TokenId pad_id() const { return pad_id_; }
  TokenId bos_id() const { return bos_id_; }
  TokenId eos_id() const { return eos_id_; }
  bool is_special(TokenId id) const {
    return id == pad_id_ || id == bos_id_ || id == eos_id_;
  }

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

  bool operator==(const Vocabulary& other) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> symbol_to_id_;  // non-special only
  TokenizerMode mode_ = TokenizerMode::kChar;
  TokenId pad_id_ = kPadId;
  TokenId bos_id_ = kBosId;
  TokenId eos_id_ = kEosId;
};

// Splits text into tokenizer symbols: one entry per character in char mode;
// in word mode maximal non-whitespace runs plus individual whitespace chars.
std::vector<std::string> segment_text(const std::string& text, TokenizerMode mode);

}  // namespace lud
