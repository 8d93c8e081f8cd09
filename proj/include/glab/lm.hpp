#pragma once

// Count-based autoregressive reference model.
//
// P(s) = prod_i P(t_i | t_<i), with each conditional estimated by a
// Witten-Bell interpolated n-gram:
//
//   P_k(w | h) = (c(h w) + T(h) P_{k-1}(w | h')) / (c(h) + T(h))
//
// where T(h) is the number of distinct continuations of h and h' drops the
// oldest token of h. Unseen contexts back off unchanged. The bottom level is
// the maximum-likelihood unigram mixed with a uniform floor of total mass
// kUniformFloor over every predictable token.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "glab/error.hpp"
#include "glab/synthgen.hpp"
#include "json.hpp"

namespace glab::lm {

using TokenId = std::int32_t;

inline constexpr TokenId kBos = 0;  // sentence start, context only
inline constexpr TokenId kEos = 1;  // sentence end
inline constexpr TokenId kUnk = 2;
inline constexpr double kUniformFloor = 1e-8;

/// Lowercases ASCII letters, splits on whitespace and emits every ASCII
/// punctuation character as its own token. Non-ASCII bytes are kept as word
/// characters.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      tokens.emplace_back(1, raw);
    } else {
      current += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
    }
  }
  flush();
  return tokens;
}

inline std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

inline bool is_sentence_end(const std::string& token) { return token == "." || token == "!" || token == "?"; }

/// Splits a token stream into sentences at '.', '!' and '?' (kept with their sentence).
inline std::vector<std::vector<std::string>> split_sentences(const std::vector<std::string>& tokens) {
  std::vector<std::vector<std::string>> out;
  std::vector<std::string> current;
  for (const auto& t : tokens) {
    current.push_back(t);
    if (is_sentence_end(t)) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

/// Id <-> string table. Ids 0..2 are reserved for <s>, </s> and <unk>; words
/// get ids in order of first appearance.
class Vocabulary {
 public:
  Vocabulary() : words_{"<s>", "</s>", "<unk>"} {
    for (std::size_t i = 0; i < words_.size(); ++i) index_[words_[i]] = static_cast<TokenId>(i);
  }

  TokenId add(const std::string& word) {
    auto [it, inserted] = index_.try_emplace(word, static_cast<TokenId>(words_.size()));
    if (inserted) words_.push_back(word);
    return it->second;
  }

  TokenId id(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& word) const { return index_.count(word) != 0; }
  const std::string& word(TokenId id) const { return words_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  std::vector<TokenId> encode(const std::vector<std::string>& tokens) const {
    std::vector<TokenId> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
  }

  std::vector<std::string> decode(std::span<const TokenId> ids) const {
    std::vector<std::string> out;
    for (TokenId i : ids) out.push_back(word(i));
    return out;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

struct ContextStats {
  std::uint64_t total = 0;                      // c(h)
  std::map<TokenId, std::uint64_t> followers;  // w -> c(h w)

  std::size_t distinct() const { return followers.size(); }
  friend bool operator==(const ContextStats&, const ContextStats&) = default;
};

/// k-gram counts for k = 1..order, keyed by context (0..order-1 tokens).
struct NgramTable {
  int order = 0;
  Vocabulary vocabulary;
  std::map<std::vector<TokenId>, ContextStats> contexts;

  /// c(context w) for the full k-gram `ngram` = context + w.
  std::uint64_t count(std::span<const TokenId> ngram) const {
    if (ngram.empty()) return 0;
    auto it = contexts.find(std::vector<TokenId>(ngram.begin(), ngram.end() - 1));
    if (it == contexts.end()) return 0;
    auto f = it->second.followers.find(ngram.back());
    return f == it->second.followers.end() ? 0 : f->second;
  }

  std::uint64_t context_count(std::span<const TokenId> context) const {
    auto it = contexts.find(std::vector<TokenId>(context.begin(), context.end()));
    return it == contexts.end() ? 0 : it->second.total;
  }

  /// Tokens that can be predicted: everything but <s>.
  std::size_t predictable_size() const { return vocabulary.size() - 1; }

  friend bool operator==(const NgramTable& a, const NgramTable& b) {
    return a.order == b.order && a.vocabulary == b.vocabulary && a.contexts == b.contexts;
  }
};

inline void check_order(int order) {
  if (order < 1) throw_invalid("n-gram order must be >= 1, got " + std::to_string(order));
}

/// Adds the k-gram counts of one sentence (order-1 <s> pads, </s> appended).
inline void add_sentence(NgramTable& table, std::span<const TokenId> sentence) {
  std::vector<TokenId> padded(static_cast<std::size_t>(table.order - 1), kBos);
  padded.insert(padded.end(), sentence.begin(), sentence.end());
  padded.push_back(kEos);
  const auto pad = static_cast<std::size_t>(table.order - 1);
  for (std::size_t i = pad; i < padded.size(); ++i) {
    for (std::size_t k = 0; k < static_cast<std::size_t>(table.order); ++k) {
      std::vector<TokenId> context(padded.begin() + static_cast<std::ptrdiff_t>(i - k),
                                   padded.begin() + static_cast<std::ptrdiff_t>(i));
      auto& stats = table.contexts[context];
      ++stats.total;
      ++stats.followers[padded[i]];
    }
  }
}

inline NgramTable train_ngram(const std::vector<std::vector<std::string>>& sentences, int order) {
  check_order(order);
  if (sentences.empty()) throw_invalid("cannot train on an empty corpus");
  NgramTable table;
  table.order = order;
  for (const auto& s : sentences) {
    for (const auto& w : s) table.vocabulary.add(w);
  }
  for (const auto& s : sentences) {
    if (s.empty()) continue;
    const auto ids = table.vocabulary.encode(s);
    add_sentence(table, ids);
  }
  return table;
}

inline NgramTable train_ngram(const Corpus& corpus, int order) { return train_ngram(corpus.sentences, order); }

/// Conditional distribution over the whole vocabulary (entry kBos is 0).
/// Only the last order-1 tokens of `context` are used.
inline std::vector<double> next_token_dist(const NgramTable& table, std::span<const TokenId> context) {
  const std::size_t v = table.vocabulary.size();
  std::vector<double> dist(v, 0.0);

  const double uniform = kUniformFloor / static_cast<double>(table.predictable_size());
  const auto root = table.contexts.find({});
  const double n = root == table.contexts.end() ? 0.0 : static_cast<double>(root->second.total);
  for (std::size_t w = 0; w < v; ++w) {
    if (static_cast<TokenId>(w) == kBos) continue;
    dist[w] = n > 0.0 ? uniform : 1.0 / static_cast<double>(table.predictable_size());
  }
  if (n > 0.0) {
    for (const auto& [w, c] : root->second.followers) {
      dist[static_cast<std::size_t>(w)] += (1.0 - kUniformFloor) * static_cast<double>(c) / n;
    }
  }

  const std::size_t usable = std::min(context.size(), static_cast<std::size_t>(table.order - 1));
  std::vector<TokenId> h;
  for (std::size_t k = 1; k <= usable; ++k) {
    h.assign(context.end() - static_cast<std::ptrdiff_t>(k), context.end());
    auto it = table.contexts.find(h);
    if (it == table.contexts.end()) continue;  // unseen: keep the lower-order distribution
    const auto& stats = it->second;
    const double total = static_cast<double>(stats.total);
    const double types = static_cast<double>(stats.distinct());
    const double denom = total + types;
    for (double& p : dist) p *= types / denom;
    for (const auto& [w, c] : stats.followers) dist[static_cast<std::size_t>(w)] += static_cast<double>(c) / denom;
  }
  return dist;
}

/// Natural-log probability of `seq` after `order-1` sentence-start pads. An
/// end marker, if wanted, must be part of `seq`.
inline double sequence_logprob(const NgramTable& table, std::span<const TokenId> seq) {
  if (seq.empty()) throw_invalid("sequence_logprob of an empty sequence");
  std::vector<TokenId> history(static_cast<std::size_t>(table.order - 1), kBos);
  double total = 0.0;
  for (TokenId t : seq) {
    total += std::log(next_token_dist(table, history)[static_cast<std::size_t>(t)]);
    history.push_back(t);
  }
  return total;
}

/// log P(suffix | padded prefix).
inline double conditional_logprob(const NgramTable& table, std::span<const TokenId> prefix,
                                  std::span<const TokenId> suffix) {
  std::vector<TokenId> history(static_cast<std::size_t>(table.order - 1), kBos);
  history.insert(history.end(), prefix.begin(), prefix.end());
  double total = 0.0;
  for (TokenId t : suffix) {
    total += std::log(next_token_dist(table, history)[static_cast<std::size_t>(t)]);
    history.push_back(t);
  }
  return total;
}

/// argmax over predictable tokens, lowest id on ties.
inline TokenId argmax_token(const std::vector<double>& dist) {
  TokenId best = kEos;
  for (std::size_t w = 0; w < dist.size(); ++w) {
    if (static_cast<TokenId>(w) == kBos) continue;
    if (dist[w] > dist[static_cast<std::size_t>(best)]) best = static_cast<TokenId>(w);
  }
  return best;
}

/// Appends argmax tokens to `prefix` until </s> or max_len new tokens; returns
/// the appended tokens without the end marker.
inline std::vector<TokenId> greedy_complete(const NgramTable& table, std::span<const TokenId> prefix, int max_len) {
  if (max_len < 1) throw_invalid("greedy_complete needs max_len >= 1");
  std::vector<TokenId> history(prefix.begin(), prefix.end());
  std::vector<TokenId> out;
  for (int i = 0; i < max_len; ++i) {
    const TokenId next = argmax_token(next_token_dist(table, history));
    if (next == kEos) break;
    out.push_back(next);
    history.push_back(next);
  }
  return out;
}

/// Product of the conditionals of `target` given `prefix` and the target's own
/// earlier tokens. No sentence-start padding is added.
inline double completion_prob(const NgramTable& table, std::span<const TokenId> prefix,
                              std::span<const TokenId> target) {
  if (target.empty()) throw_invalid("completion target is empty");
  std::vector<TokenId> history(prefix.begin(), prefix.end());
  double p = 1.0;
  for (TokenId t : target) {
    p *= next_token_dist(table, history)[static_cast<std::size_t>(t)];
    history.push_back(t);
  }
  return p;
}

// ---------------------------------------------------------------------------
// JSON: {"order": n, "vocabulary": [...], "counts": [{"ngram": [...], "count": c}, ...]}
// Records list every k-gram (context + follower) once, in key order.
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const NgramTable& table) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& [context, stats] : table.contexts) {
    for (const auto& [w, c] : stats.followers) {
      std::vector<TokenId> ngram = context;
      ngram.push_back(w);
      records.push_back({{"ngram", ngram}, {"count", c}});
    }
  }
  return {{"order", table.order}, {"vocabulary", table.vocabulary.words()}, {"counts", records}};
}

inline NgramTable ngram_from_json(const nlohmann::json& j) {
  NgramTable table;
  table.order = j.at("order").get<int>();
  check_order(table.order);
  const auto words = j.at("vocabulary").get<std::vector<std::string>>();
  if (words.size() < 3 || words[0] != "<s>" || words[1] != "</s>" || words[2] != "<unk>") {
    throw_io("n-gram vocabulary must start with <s>, </s>, <unk>");
  }
  for (std::size_t i = 3; i < words.size(); ++i) table.vocabulary.add(words[i]);
  if (table.vocabulary.size() != words.size()) throw_io("n-gram vocabulary has duplicates");
  for (const auto& rec : j.at("counts")) {
    auto ngram = rec.at("ngram").get<std::vector<TokenId>>();
    const auto c = rec.at("count").get<std::uint64_t>();
    if (ngram.empty() || static_cast<int>(ngram.size()) > table.order) throw_io("bad n-gram record length");
    for (TokenId t : ngram) {
      if (t < 0 || static_cast<std::size_t>(t) >= words.size()) throw_io("n-gram record id out of range");
    }
    const TokenId w = ngram.back();
    ngram.pop_back();
    auto& stats = table.contexts[ngram];
    stats.followers[w] += c;
    stats.total += c;
  }
  return table;
}

}  // namespace glab::lm
