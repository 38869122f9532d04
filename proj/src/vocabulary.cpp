#include "lud/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace lud {

namespace {

constexpr const char* kPadString = "[PAD]";
constexpr const char* kBosString = "[BOS]";
constexpr const char* kEosString = "[EOS]";

bool is_space_byte(char c) {
  return std::isspace(static_cast<unsigned char>(c)) != 0;
}

}  // namespace

std::string to_string(TokenizerMode mode) {
  return mode == TokenizerMode::kChar ? "char" : "word";
}

TokenizerMode tokenizer_mode_from_string(const std::string& s) {
  if (s == "char") return TokenizerMode::kChar;
  if (s == "word") return TokenizerMode::kWord;
  throw std::invalid_argument("unknown tokenizer mode: " + s);
}

std::vector<std::string> segment_text(const std::string& text, TokenizerMode mode) {
  std::vector<std::string> out;
  if (mode == TokenizerMode::kChar) {
    out.reserve(text.size());
    for (char c : text) out.emplace_back(1, c);
    return out;
  }
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_space_byte(text[i])) {
      out.emplace_back(1, text[i]);
      ++i;
    } else {
      std::size_t j = i;
      while (j < text.size() && !is_space_byte(text[j])) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    }
  }
  return out;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts, TokenizerMode mode) {
  std::set<std::string> symbols;
  for (const auto& text : texts) {
    for (auto& sym : segment_text(text, mode)) symbols.insert(std::move(sym));
  }
  if (symbols.empty())
    throw std::invalid_argument("build_vocabulary: empty alphabet (no symbols in input texts)");

  Vocabulary v;
  v.mode_ = mode;
  v.tokens_ = {kPadString, kBosString, kEosString};
  v.tokens_.reserve(kNumSpecial + symbols.size());
  for (const auto& sym : symbols) {
    const TokenId id = static_cast<TokenId>(v.tokens_.size());
    v.tokens_.push_back(sym);
    v.symbol_to_id_.emplace(sym, id);
  }
  return v;
}

std::vector<TokenId> Vocabulary::tokenize(const std::string& text) const {
  std::vector<TokenId> ids;
  for (const auto& sym : segment_text(text, mode_)) {
    auto it = symbol_to_id_.find(sym);
    if (it == symbol_to_id_.end())
      throw std::runtime_error("tokenize: symbol not in vocabulary: '" + sym + "'");
    ids.push_back(it->second);
  }
  return ids;
}

std::string Vocabulary::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) out += token_string(id);
  return out;
}

const std::string& Vocabulary::token_string(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw std::out_of_range("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

nlohmann::json Vocabulary::to_json() const {
  return nlohmann::json{{"tokens", tokens_},
                        {"pad_id", pad_id_},
                        {"bos_id", bos_id_},
                        {"eos_id", eos_id_},
                        {"mode", to_string(mode_)}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  Vocabulary v;
  v.tokens_ = j.at("tokens").get<std::vector<std::string>>();
  v.pad_id_ = j.at("pad_id").get<TokenId>();
  v.bos_id_ = j.at("bos_id").get<TokenId>();
  v.eos_id_ = j.at("eos_id").get<TokenId>();
  v.mode_ = tokenizer_mode_from_string(j.at("mode").get<std::string>());

  const auto n = static_cast<TokenId>(v.tokens_.size());
  auto in_range = [n](TokenId id) { return id >= 0 && id < n; };
  if (!in_range(v.pad_id_) || !in_range(v.bos_id_) || !in_range(v.eos_id_))
    throw std::runtime_error("vocabulary: special id out of range");
  if (v.pad_id_ == v.bos_id_ || v.pad_id_ == v.eos_id_ || v.bos_id_ == v.eos_id_)
    throw std::runtime_error("vocabulary: special ids must be distinct");

  for (std::size_t i = kNumSpecial; i < v.tokens_.size(); ++i)
    v.symbol_to_id_.emplace(v.tokens_[i], static_cast<TokenId>(i));
  return v;
}

bool Vocabulary::operator==(const Vocabulary& other) const {
  return tokens_ == other.tokens_ && mode_ == other.mode_ &&
         pad_id_ == other.pad_id_ && bos_id_ == other.bos_id_ &&
         eos_id_ == other.eos_id_;
}

}  // namespace lud
