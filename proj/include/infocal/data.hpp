#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "infocal/batch.hpp"
#include "infocal/predictor.hpp"

namespace infocal {

/// Token strings <-> ids. Id 0 is <pad>, id 1 is <unk>.
class Vocab {
 public:
  static constexpr const char* kPad = "<pad>";
  static constexpr const char* kUnk = "<unk>";

  Vocab() : Vocab(std::vector<std::string>{kPad, kUnk}) {}

  explicit Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < 2 || tokens_[0] != kPad || tokens_[1] != kUnk)
      throw DataError("vocab must start with <pad> and <unk>");
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (tokens_[i].empty()) throw DataError("vocab entry " + std::to_string(i) + " is empty");
      if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
        throw DataError("duplicate vocab entry '" + tokens_[i] + "'");
    }
  }

  TokenId add(const std::string& token) {
    if (auto it = index_.find(token); it != index_.end()) return it->second;
    const auto id = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(token);
    index_.emplace(token, id);
    return id;
  }

  std::optional<TokenId> find(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  TokenId id_or_unk(const std::string& token) const { return find(token).value_or(kUnkId); }

  const std::string& token(TokenId id) const {
    expects(id >= 0 && static_cast<std::size_t>(id) < tokens_.size(), "token id outside vocabulary");
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// FNV-1a over the token list; recorded in checkpoints to catch mismatches.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& t : tokens_) {
      for (char c : t) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
      h = (h ^ 0x0a) * 1099511628211ull;
    }
    return h;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& t : tokens_) out << t << "\n";
  }

  static Vocab load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open vocab " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      tokens.push_back(line);
    }
    return Vocab(std::move(tokens));
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

struct Instance {
  std::vector<TokenId> tokens;
  double label = 0;  // class id, or score in [0, 1]
  std::optional<std::vector<std::uint8_t>> rationale;

  friend bool operator==(const Instance&, const Instance&) = default;
};

using Dataset = std::vector<Instance>;

struct LoadReport {
  std::size_t instances = 0;
  std::size_t tokens = 0;
  std::size_t unknown_tokens = 0;
};

inline nlohmann::json instance_to_json(const Instance& inst, const Vocab& vocab, TaskMode mode) {
  nlohmann::json j;
  auto& toks = j["tokens"] = nlohmann::json::array();
  for (auto id : inst.tokens) toks.push_back(vocab.token(id));
  if (mode == TaskMode::classification) j["label"] = static_cast<std::int64_t>(inst.label);
  else j["label"] = inst.label;
  if (inst.rationale) j["rationale"] = *inst.rationale;
  return j;
}

inline void save_jsonl(const Dataset& data, const Vocab& vocab, TaskMode mode, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& inst : data) out << instance_to_json(inst, vocab, mode).dump() << "\n";
}

/// Reads one instance per line. Token strings missing from `vocab` become
/// <unk> and are counted in `report`.
inline Dataset load_jsonl(const std::filesystem::path& path, const Vocab& vocab, LoadReport* report = nullptr) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  Dataset data;
  LoadReport local;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(lineno, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(lineno, "record is not an object");
    if (!j.contains("tokens") || !j["tokens"].is_array() || j["tokens"].empty())
      throw ParseError(lineno, "missing or empty 'tokens' array");
    if (!j.contains("label") || !j["label"].is_number()) throw ParseError(lineno, "missing numeric 'label'");
    Instance inst;
    for (const auto& t : j["tokens"]) {
      if (!t.is_string()) throw ParseError(lineno, "tokens must be strings");
      auto id = vocab.find(t.get<std::string>());
      if (!id) ++local.unknown_tokens;
      inst.tokens.push_back(id.value_or(kUnkId));
    }
    local.tokens += inst.tokens.size();
    inst.label = j["label"].get<double>();
    if (j.contains("rationale") && !j["rationale"].is_null()) {
      const auto& r = j["rationale"];
      if (!r.is_array() || r.size() != inst.tokens.size())
        throw ParseError(lineno, "'rationale' must be a 0/1 array as long as 'tokens'");
      std::vector<std::uint8_t> mask;
      for (const auto& v : r) {
        if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1))
          throw ParseError(lineno, "'rationale' entries must be 0 or 1");
        mask.push_back(static_cast<std::uint8_t>(v.get<int>()));
      }
      inst.rationale = std::move(mask);
    }
    data.push_back(std::move(inst));
  }
  local.instances = data.size();
  if (report) *report = local;
  return data;
}

// ---------------------------------------------------------------------------
// Synthetic corpora with planted rationales
// ---------------------------------------------------------------------------

struct SyntheticSpec {
  std::size_t vocab_size = 200;
  std::size_t num_classes = 4;
  TaskMode mode = TaskMode::classification;
  std::size_t keyphrase_min_len = 2;
  std::size_t keyphrase_max_len = 4;
  std::size_t keyphrases_per_class = 5;
  std::size_t min_len = 15;
  std::size_t max_len = 30;
  double filler_zipf = 1.0;   // filler ranks drawn with p(k) ~ 1 / k^s
  double noise_rate = 0.1;    // chance of a negated keyphrase of another class
  std::size_t sentiment_tokens = 12;  // regression: size of each polarity pool
  std::size_t n_train = 2000;
  std::size_t n_dev = 200;
  std::size_t n_test = 200;
  std::uint64_t seed = 7;
};

struct SyntheticCorpus {
  Vocab vocab;
  std::vector<std::vector<TokenId>> keyphrases;  // classification: all keyphrases
  std::vector<std::size_t> keyphrase_class;      // class of each keyphrase
  std::vector<TokenId> positive_tokens, negative_tokens;  // regression pools
  TokenId negation = kUnkId;
  Dataset train, dev, test;
};

inline constexpr const char* kNegationToken = "<not>";

namespace detail {

inline void validate(const SyntheticSpec& s) {
  expects(s.keyphrase_min_len >= 1 && s.keyphrase_min_len <= s.keyphrase_max_len,
          "synthetic: keyphrase length range is empty");
  expects(s.min_len >= 1 && s.min_len <= s.max_len, "synthetic: sequence length range is empty");
  expects(s.keyphrase_max_len <= s.min_len, "synthetic: keyphrase longer than the shortest sequence");
  expects(s.noise_rate >= 0.0 && s.noise_rate <= 1.0, "synthetic: noise rate must lie in [0, 1]");
  if (s.mode == TaskMode::classification) {
    expects(s.num_classes >= 2, "synthetic: need at least two classes");
    expects(s.keyphrases_per_class >= 1, "synthetic: need at least one keyphrase per class");
    const std::size_t reserved = 3 + s.num_classes * s.keyphrases_per_class * s.keyphrase_max_len;
    expects(s.vocab_size >= reserved + 8, "synthetic: vocabulary too small for the keyphrase inventory");
  } else {
    expects(s.sentiment_tokens >= 1, "synthetic: need sentiment tokens");
    expects(s.vocab_size >= 3 + 2 * s.sentiment_tokens + 8, "synthetic: vocabulary too small");
  }
}

}  // namespace detail

/// Generates train/dev/test splits. Classification: every class owns a
/// disjoint set of keyphrase tokens; each instance plants exactly one of its
/// class's keyphrases (the gold rationale) among Zipf-distributed filler, and
/// with probability `noise_rate` also a negated keyphrase of another class
/// ("<not>" followed by the phrase), which is not part of the rationale.
/// Regression: the keyphrase is a run of polarity tokens and the label is the
/// fraction of positive tokens in it.
inline SyntheticCorpus generate(const SyntheticSpec& spec) {
  detail::validate(spec);
  SyntheticCorpus c;
  std::mt19937_64 layout_rng(spec.seed);
  c.negation = c.vocab.add(kNegationToken);
  auto next_token = [&c]() { return c.vocab.add("w" + std::to_string(c.vocab.size())); };

  if (spec.mode == TaskMode::classification) {
    std::uniform_int_distribution<std::size_t> len(spec.keyphrase_min_len, spec.keyphrase_max_len);
    for (std::size_t k = 0; k < spec.num_classes; ++k)
      for (std::size_t j = 0; j < spec.keyphrases_per_class; ++j) {
        std::vector<TokenId> phrase(len(layout_rng));
        for (auto& id : phrase) id = next_token();
        c.keyphrases.push_back(std::move(phrase));
        c.keyphrase_class.push_back(k);
      }
  } else {
    for (std::size_t i = 0; i < spec.sentiment_tokens; ++i) c.positive_tokens.push_back(next_token());
    for (std::size_t i = 0; i < spec.sentiment_tokens; ++i) c.negative_tokens.push_back(next_token());
  }
  std::vector<TokenId> fillers;
  while (c.vocab.size() < spec.vocab_size) fillers.push_back(next_token());

  // Structural check: keyphrase vocabularies are class-disjoint.
  {
    std::unordered_map<TokenId, std::size_t> owner;
    for (std::size_t i = 0; i < c.keyphrases.size(); ++i)
      for (auto id : c.keyphrases[i]) {
        auto [it, fresh] = owner.emplace(id, c.keyphrase_class[i]);
        expects(fresh || it->second == c.keyphrase_class[i], "synthetic: keyphrase tokens shared across classes");
      }
  }

  std::vector<double> filler_weights(fillers.size());
  for (std::size_t r = 0; r < fillers.size(); ++r)
    filler_weights[r] = 1.0 / std::pow(static_cast<double>(r + 1), spec.filler_zipf);
  std::discrete_distribution<std::size_t> filler_dist(filler_weights.begin(), filler_weights.end());

  std::set<std::vector<TokenId>> seen;
  auto make_split = [&](std::size_t count, std::uint64_t split_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(split_id)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::size_t> length(spec.min_len, spec.max_len);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Dataset out;
    out.reserve(count);
    while (out.size() < count) {
      Instance inst;
      const std::size_t n = length(rng);
      inst.tokens.resize(n);
      for (auto& id : inst.tokens) id = fillers[filler_dist(rng)];
      std::vector<std::uint8_t> gold(n, 0);
      std::vector<TokenId> phrase;
      if (spec.mode == TaskMode::classification) {
        const std::size_t label = out.size() % spec.num_classes;
        inst.label = static_cast<double>(label);
        std::uniform_int_distribution<std::size_t> which(0, spec.keyphrases_per_class - 1);
        phrase = c.keyphrases[label * spec.keyphrases_per_class + which(rng)];
      } else {
        std::uniform_int_distribution<std::size_t> len(spec.keyphrase_min_len, spec.keyphrase_max_len);
        std::uniform_int_distribution<std::size_t> pool(0, spec.sentiment_tokens - 1);
        phrase.resize(len(rng));
        std::size_t positives = 0;
        for (auto& id : phrase) {
          const bool pos = unit(rng) < 0.5;
          positives += pos;
          id = pos ? c.positive_tokens[pool(rng)] : c.negative_tokens[pool(rng)];
        }
        inst.label = static_cast<double>(positives) / static_cast<double>(phrase.size());
      }
      std::uniform_int_distribution<std::size_t> start(0, n - phrase.size());
      const std::size_t at = start(rng);
      for (std::size_t i = 0; i < phrase.size(); ++i) {
        inst.tokens[at + i] = phrase[i];
        gold[at + i] = 1;
      }
      if (spec.mode == TaskMode::classification && unit(rng) < spec.noise_rate) {
        std::uniform_int_distribution<std::size_t> other(0, c.keyphrases.size() - 1);
        std::size_t k = other(rng);
        while (c.keyphrase_class[k] == static_cast<std::size_t>(inst.label)) k = other(rng);
        const auto& distractor = c.keyphrases[k];
        const std::size_t span = distractor.size() + 1;
        // Free slots that leave at least one filler between the two phrases.
        std::vector<std::size_t> slots;
        for (std::size_t s = 0; s + span <= n; ++s)
          if (s + span < at || s > at + phrase.size()) slots.push_back(s);
        if (!slots.empty()) {
          std::uniform_int_distribution<std::size_t> slot(0, slots.size() - 1);
          const std::size_t s = slots[slot(rng)];
          inst.tokens[s] = c.negation;
          std::copy(distractor.begin(), distractor.end(), inst.tokens.begin() + static_cast<std::ptrdiff_t>(s + 1));
        }
      }
      inst.rationale = std::move(gold);
      if (!seen.insert(inst.tokens).second) continue;
      out.push_back(std::move(inst));
    }
    std::shuffle(out.begin(), out.end(), rng);
    return out;
  };
  c.train = make_split(spec.n_train, 0);
  c.dev = make_split(spec.n_dev, 1);
  c.test = make_split(spec.n_test, 2);
  return c;
}

inline nlohmann::json synthetic_spec_to_json(const SyntheticSpec& s) {
  return {{"vocab_size", s.vocab_size},
          {"num_classes", s.num_classes},
          {"mode", task_mode_name(s.mode)},
          {"keyphrase_min_len", s.keyphrase_min_len},
          {"keyphrase_max_len", s.keyphrase_max_len},
          {"keyphrases_per_class", s.keyphrases_per_class},
          {"min_len", s.min_len},
          {"max_len", s.max_len},
          {"filler_zipf", s.filler_zipf},
          {"noise_rate", s.noise_rate},
          {"sentiment_tokens", s.sentiment_tokens},
          {"n_train", s.n_train},
          {"n_dev", s.n_dev},
          {"n_test", s.n_test},
          {"seed", s.seed}};
}

}  // namespace infocal
