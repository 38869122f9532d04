#include "lud/corpus.hpp"

#include <array>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "lud/util.hpp"

namespace lud {

namespace {

struct RawItem {
  std::string prompt;
  std::string target;
};

const std::array<std::string, 8> kFnNames = {"add", "sub", "mul", "mod",
                                             "mix", "gap", "dot", "acc"};
// Fixed name -> operator association; two names per operator.
const char* op_for_name(const std::string& name) {
  if (name == "add" || name == "mix") return "+";
  if (name == "sub" || name == "gap") return "-";
  if (name == "mul" || name == "dot") return "*";
  return "%";
}

const std::array<std::string, 8> kVars = {"a", "b", "c", "d", "n", "m", "x", "y"};

RawItem make_code_item(std::mt19937_64& rng) {
  RawItem item;
  if (uniform_index(rng, 10) < 6) {
    const std::string& name = kFnNames[uniform_index(rng, kFnNames.size())];
    const std::string& v1 = kVars[uniform_index(rng, kVars.size())];
    std::string v2 = kVars[uniform_index(rng, kVars.size())];
    while (v2 == v1) v2 = kVars[uniform_index(rng, kVars.size())];
    item.prompt = "make " + name + " " + v1 + " " + v2;
    item.target = "def " + name + "(" + v1 + ", " + v2 + "):\n    return " +
                  v1 + " " + op_for_name(name) + " " + v2 + "\n";
  } else {
    const std::string& v = kVars[uniform_index(rng, kVars.size())];
    const char digit = static_cast<char>('2' + uniform_index(rng, 8));
    item.prompt = "loop " + v + " " + std::string(1, digit);
    item.target = "for " + v + " in range(" + std::string(1, digit) +
                  "):\n    total += " + v + "\n";
  }
  return item;
}

const std::array<std::string, 10> kTopics = {
    "weather", "market", "garden", "travel", "music",
    "sport",   "dinner", "school", "winter", "summer"};
const std::array<std::string, 16> kAdjs = {
    "quick", "bizarre", "quiet", "jolly", "vexed", "fuzzy", "grim",  "lazy",
    "proud", "shy",     "zesty", "odd",   "brave", "calm",  "eager", "fancy"};
const std::array<std::string, 16> kNouns = {
    "fox",    "judge",  "wizard", "zebra",  "pilot", "baker", "queen", "knight",
    "puzzle", "jigsaw", "banjo",  "sphinx", "quartz", "lynx", "gnome", "vixen"};
const std::array<std::string, 12> kVerbs = {
    "admires", "follows", "questions", "examines", "juggles",  "vexes",
    "boxes",   "mixes",   "dazzles",   "rebukes",  "pacifies", "charms"};
const std::array<std::string, 10> kTails = {
    "today",  "with zeal",  "by dawn", "in june", "at dusk",
    "on cue", "every week", "for fun", "with joy", "quite often"};
const std::array<std::string, 10> kPlainVerbs = {
    "jump",   "vanish",  "whisper", "quarrel", "zigzag",
    "fidget", "wobble",  "sparkle", "grumble", "hustle"};

RawItem make_text_item(std::mt19937_64& rng) {
  RawItem item;
  const std::string& topic = kTopics[uniform_index(rng, kTopics.size())];
  const char digit = static_cast<char>('0' + uniform_index(rng, 10));
  item.prompt = "tell " + topic + " " + std::string(1, digit);
  // Slot fillers are drawn independently of the prompt.
  if (uniform_index(rng, 2) == 0) {
    const std::string& adj = kAdjs[uniform_index(rng, kAdjs.size())];
    const std::string& noun = kNouns[uniform_index(rng, kNouns.size())];
    const std::string& verb = kVerbs[uniform_index(rng, kVerbs.size())];
    const std::string& obj = kNouns[uniform_index(rng, kNouns.size())];
    const std::string& tail = kTails[uniform_index(rng, kTails.size())];
    const char* art = uniform_index(rng, 2) == 0 ? "the " : "a ";
    item.target = art + adj + " " + noun + " " + verb + " the " + obj + " " +
                  tail + ".\n";
  } else {
    const std::string& noun = kNouns[uniform_index(rng, kNouns.size())];
    const std::string& verb = kPlainVerbs[uniform_index(rng, kPlainVerbs.size())];
    const std::string& tail = kTails[uniform_index(rng, kTails.size())];
    item.target = "maybe the " + noun + " will " + verb + " " + tail + ".\n";
  }
  return item;
}

}  // namespace

std::string to_string(CorpusKind kind) {
  return kind == CorpusKind::kTemplatedCode ? "templated_code" : "templated_text";
}

CorpusKind corpus_kind_from_string(const std::string& s) {
  if (s == "templated_code") return CorpusKind::kTemplatedCode;
  if (s == "templated_text") return CorpusKind::kTemplatedText;
  throw std::invalid_argument("unknown corpus kind: " + s);
}

Corpus generate_synthetic_corpus(CorpusKind kind, std::size_t n_items, std::uint64_t seed) {
  if (n_items == 0)
    throw std::invalid_argument("generate_synthetic_corpus: n_items must be >= 1");

  std::mt19937_64 rng(seed);
  std::vector<RawItem> raw;
  raw.reserve(n_items);
  for (std::size_t i = 0; i < n_items; ++i) {
    raw.push_back(kind == CorpusKind::kTemplatedCode ? make_code_item(rng)
                                                     : make_text_item(rng));
  }

  std::vector<std::string> texts;
  texts.reserve(2 * raw.size());
  for (const auto& r : raw) {
    texts.push_back(r.prompt);
    texts.push_back(r.target);
  }

  Corpus corpus;
  corpus.vocabulary = Vocabulary::build(texts, TokenizerMode::kChar);
  corpus.entropy_class = kind == CorpusKind::kTemplatedCode ? "low" : "high";

  const std::string prefix = to_string(kind);
  corpus.items.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    TokenizedItem item;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "-%05zu", i);
    item.item_id = prefix + buf;
    item.prompt_ids = corpus.vocabulary.tokenize(raw[i].prompt);
    item.target_ids = corpus.vocabulary.tokenize(raw[i].target);
    item.target_ids.push_back(corpus.vocabulary.eos_id());
    corpus.items.push_back(std::move(item));
  }
  validate_corpus(corpus);
  return corpus;
}

void validate_corpus(const Corpus& corpus) {
  const auto vocab_size = static_cast<TokenId>(corpus.vocabulary.size());
  const TokenId pad = corpus.vocabulary.pad_id();
  const TokenId eos = corpus.vocabulary.eos_id();
  for (const auto& item : corpus.items) {
    auto check_ids = [&](const std::vector<TokenId>& ids, const char* field) {
      for (TokenId id : ids) {
        if (id < 0 || id >= vocab_size)
          throw std::runtime_error("corpus item " + item.item_id + ": " + field +
                                   " id out of range: " + std::to_string(id));
        if (id == pad)
          throw std::runtime_error("corpus item " + item.item_id + ": " + field +
                                   " contains PAD");
      }
    };
    check_ids(item.prompt_ids, "prompt_ids");
    check_ids(item.target_ids, "target_ids");
    if (item.target_ids.empty() || item.target_ids.back() != eos)
      throw std::runtime_error("corpus item " + item.item_id +
                               ": target_ids must end with EOS");
  }
}

void save_dataset(const Corpus& corpus, const std::filesystem::path& path) {
  std::ostringstream out;
  nlohmann::json header{{"entropy_class", corpus.entropy_class},
                        {"vocabulary", corpus.vocabulary.to_json()}};
  out << header.dump() << "\n";
  for (const auto& item : corpus.items) {
    nlohmann::json rec{{"item_id", item.item_id},
                       {"prompt_ids", item.prompt_ids},
                       {"target_ids", item.target_ids}};
    out << rec.dump() << "\n";
  }
  write_text_file(path, out.str());
}

Corpus load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path.string());

  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error(path.string() + ": line " + std::to_string(line_no) +
                               ": malformed record: " + e.what());
    }
    try {
      if (!have_header) {
        corpus.entropy_class = j.at("entropy_class").get<std::string>();
        corpus.vocabulary = Vocabulary::from_json(j.at("vocabulary"));
        have_header = true;
      } else {
        TokenizedItem item;
        item.item_id = j.at("item_id").get<std::string>();
        item.prompt_ids = j.at("prompt_ids").get<std::vector<TokenId>>();
        item.target_ids = j.at("target_ids").get<std::vector<TokenId>>();
        corpus.items.push_back(std::move(item));
      }
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path.string() + ": line " + std::to_string(line_no) +
                               ": malformed record: " + e.what());
    }
  }
  if (!have_header)
    throw std::runtime_error(path.string() + ": line 1: missing corpus header record");
  validate_corpus(corpus);
  return corpus;
}

}  // namespace lud
