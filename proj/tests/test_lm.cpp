#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "glab/lm.hpp"
#include "glab/synthgen.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace glab;
using namespace glab::lm;

namespace {

using Sentences = std::vector<std::vector<std::string>>;

std::vector<LadderEntry> text_ladder() {
  return {{{"once", "in", "a", "blue"}, "moon", 0.9, {"sky", "car", "shirt"}},
          {{"put", "words", "in", "someone", "s"}, "mouth", 0.74, {"hands", "head", "notes"}},
          {{"the", "tip", "of", "the"}, "iceberg", 0.5, {"spear", "tongue", "pen"}},
          {{"play", "it", "by"}, "ear", 0.37, {"yourself"}},
          {{"a", "piece", "of"}, "cake", 0.1, {"paper", "advice", "land"}}};
}

const NgramTable& ladder_table() {
  static const NgramTable table = [] {
    CorpusOptions opt;
    opt.seed = 99;
    return train_ngram(gen_idiom_corpus(text_ladder(), opt), 4);
  }();
  return table;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST(Tokenize, Empty) { EXPECT_TRUE(tokenize("").empty()); }

TEST(Tokenize, SplitsPunctuationAndLowercases) {
  EXPECT_EQ(tokenize("Play it by ear."), (std::vector<std::string>{"play", "it", "by", "ear", "."}));
  EXPECT_EQ(tokenize("  Hi,there!  "), (std::vector<std::string>{"hi", ",", "there", "!"}));
}

TEST(Tokenize, IdempotentOnDetokenized) {
  const auto once = tokenize("Once in a Blue moon, we said: \"why?\"");
  EXPECT_EQ(tokenize(detokenize(once)), once);
}

TEST(Tokenize, SentenceBoundaries) {
  const auto s = split_sentences(tokenize("a b. c d! e"));
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0], (std::vector<std::string>{"a", "b", "."}));
  EXPECT_EQ(s[2], (std::vector<std::string>{"e"}));
}

TEST(TrainNgram, HandCounts) {
  const auto table = train_ngram(Sentences{{"a", "b"}}, 2);
  const auto a = table.vocabulary.id("a");
  const auto b = table.vocabulary.id("b");
  EXPECT_EQ(table.count(std::vector<TokenId>{a, b}), 1u);
  EXPECT_EQ(table.count(std::vector<TokenId>{a}), 1u);
  EXPECT_EQ(table.context_count(std::vector<TokenId>{a}), 1u);
  EXPECT_EQ(table.count(std::vector<TokenId>{kBos, a}), 1u);
  EXPECT_EQ(table.count(std::vector<TokenId>{b, kEos}), 1u);
}

TEST(TrainNgram, UnsmoothedRatio) {
  const auto table = train_ngram(Sentences{{"a", "b"}, {"a", "b"}, {"a", "c"}}, 2);
  const auto a = table.vocabulary.id("a");
  const auto b = table.vocabulary.id("b");
  const double ratio = static_cast<double>(table.count(std::vector<TokenId>{a, b})) /
                       static_cast<double>(table.context_count(std::vector<TokenId>{a}));
  EXPECT_DOUBLE_EQ(ratio, 2.0 / 3.0);
}

TEST(TrainNgram, DeterministicAndCountsBounded) {
  const auto& t = ladder_table();
  CorpusOptions opt;
  opt.seed = 99;
  EXPECT_EQ(train_ngram(gen_idiom_corpus(text_ladder(), opt), 4), t);
  for (const auto& [context, stats] : t.contexts) {
    std::uint64_t sum_followers = 0;
    for (const auto& [w, c] : stats.followers) {
      EXPECT_LE(c, stats.total);
      sum_followers += c;
    }
    EXPECT_EQ(sum_followers, stats.total);
  }
}

TEST(TrainNgram, BadArguments) {
  EXPECT_GLAB_ERROR(train_ngram(Sentences{{"a"}}, 0), invalid_argument);
  EXPECT_GLAB_ERROR(train_ngram(Sentences{}, 2), invalid_argument);
}

TEST(NextTokenDist, Normalized) {
  const auto& t = ladder_table();
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<TokenId> ctx;
    const int len = static_cast<int>(rng.uniform_int(0, 5));
    for (int i = 0; i < len; ++i) {
      ctx.push_back(static_cast<TokenId>(rng.uniform_int(0, static_cast<std::int64_t>(t.vocabulary.size()) - 1)));
    }
    const auto d = next_token_dist(t, ctx);
    EXPECT_NEAR(sum(d), 1.0, 1e-9);
    EXPECT_EQ(d[kBos], 0.0);
    for (double p : d) EXPECT_GE(p, 0.0);
  }
}

TEST(NextTokenDist, MatchesReferenceRecursion) {
  const Sentences corpus{{"a", "b", "c"}, {"a", "b", "d"}, {"b", "c"}, {"c", "a", "b", "c"}, {"d"}};
  const auto table = train_ngram(corpus, 3);
  const oracles::WittenBellReference ref(corpus, 3);
  const std::vector<std::vector<std::string>> histories{
      {}, {"<s>", "<s>"}, {"a"}, {"a", "b"}, {"x", "b"}, {"c", "a"}, {"d", "d"}, {"b", "c", "a", "b"}};
  for (const auto& h : histories) {
    std::vector<TokenId> ids;
    for (const auto& w : h) ids.push_back(w == "<s>" ? kBos : table.vocabulary.id(w));
    const auto d = next_token_dist(table, ids);
    for (std::size_t w = 1; w < table.vocabulary.size(); ++w) {
      const auto& word = table.vocabulary.word(static_cast<TokenId>(w));
      auto h_ref = h;
      for (auto& x : h_ref) {
        if (x == "x") x = "<unk>";
      }
      EXPECT_NEAR(d[w], ref.prob(word, h_ref), 1e-12) << word;
    }
  }
}

TEST(NextTokenDist, UnseenContextBacksOff) {
  const auto table = train_ngram(Sentences{{"a", "b"}, {"b", "c"}}, 3);
  const auto a = table.vocabulary.id("a");
  const auto c = table.vocabulary.id("c");
  // (c, a) never occurs, so the trigram level adds nothing over P(. | a).
  EXPECT_EQ(next_token_dist(table, std::vector<TokenId>{c, a}), next_token_dist(table, std::vector<TokenId>{a}));
  EXPECT_EQ(next_token_dist(table, std::vector<TokenId>{kUnk}), next_token_dist(table, std::vector<TokenId>{}));
}

TEST(NextTokenDist, LadderRungNearPlannedFrequency) {
  const auto& t = ladder_table();
  const auto ctx = t.vocabulary.encode({"play", "it", "by"});
  EXPECT_NEAR(next_token_dist(t, ctx)[static_cast<std::size_t>(t.vocabulary.id("ear"))], 0.37, 0.05);
}

TEST(SequenceLogprob, RepeatedSentenceNearCertain) {
  const Sentences corpus(1000, std::vector<std::string>{"a", "b", "c"});
  const auto table = train_ngram(corpus, 4);
  const auto ids = table.vocabulary.encode({"a", "b", "c", "</s>"});
  const double lp = sequence_logprob(table, ids);
  EXPECT_LT(lp, 0.0);
  EXPECT_GT(lp, 4.0 * std::log(0.99));
  std::vector<TokenId> perm(ids.begin(), ids.end() - 1);
  std::sort(perm.begin(), perm.end());
  while (std::next_permutation(perm.begin(), perm.end())) {
    auto with_end = perm;
    with_end.push_back(kEos);
    EXPECT_LT(sequence_logprob(table, with_end), lp);
  }
}

TEST(SequenceLogprob, TotalMassTwoWords) {
  const auto table = train_ngram(Sentences{{"a", "b"}, {"b"}, {"a", "a", "b"}}, 2);
  EXPECT_NEAR(oracles::enumerate_total_mass(table, 3), 1.0, 1e-6);
}

TEST(SequenceLogprob, TotalMassFiveTokens) {
  const auto table = train_ngram(Sentences{{"a", "b", "c"}, {"b", "a"}, {"c"}, {"a", "b", "b", "c"}}, 3);
  ASSERT_EQ(table.predictable_size(), 5u);  // a b c </s> <unk>
  EXPECT_NEAR(oracles::enumerate_total_mass(table, 4), 1.0, 1e-6);
}

TEST(SequenceLogprob, ChainRuleDecomposition) {
  const auto& t = ladder_table();
  const auto seq = t.vocabulary.encode({"we", "once", "in", "a", "blue", "moon", "river"});
  for (std::size_t split = 1; split < seq.size(); ++split) {
    const std::span<const TokenId> all(seq);
    EXPECT_NEAR(sequence_logprob(t, all),
                sequence_logprob(t, all.first(split)) + conditional_logprob(t, all.first(split), all.subspan(split)),
                1e-12);
  }
}

TEST(SequenceLogprob, FiniteForUnseenAndRejectsEmpty) {
  const auto& t = ladder_table();
  EXPECT_TRUE(std::isfinite(sequence_logprob(t, std::vector<TokenId>{kUnk, kUnk, kEos})));
  EXPECT_GLAB_ERROR(sequence_logprob(t, std::vector<TokenId>{}), invalid_argument);
}

TEST(GreedyComplete, LadderCompletesMouth) {
  const auto& t = ladder_table();
  const auto out = greedy_complete(t, t.vocabulary.encode({"put", "words", "in", "someone", "s"}), 1);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(t.vocabulary.word(out[0]), "mouth");
}

TEST(GreedyComplete, DominantDistractorWins) {
  const auto& t = ladder_table();
  const auto out = greedy_complete(t, t.vocabulary.encode({"play", "it", "by"}), 1);
  EXPECT_EQ(t.vocabulary.word(out.at(0)), "yourself");
}

TEST(GreedyComplete, TieGoesToLowestId) {
  const auto table = train_ngram(Sentences{{"x", "z"}, {"x", "y"}}, 2);
  const auto out = greedy_complete(table, table.vocabulary.encode({"x"}), 1);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(table.vocabulary.word(out[0]), "z");  // z was seen first, so it has the lower id
  EXPECT_LT(table.vocabulary.id("z"), table.vocabulary.id("y"));
}

TEST(GreedyComplete, StopsAtEndMarkerAndIsDeterministic) {
  const auto table = train_ngram(Sentences(5, std::vector<std::string>{"a", "b", "c"}), 3);
  const auto prefix = table.vocabulary.encode({"a"});
  const auto out = greedy_complete(table, prefix, 10);
  EXPECT_EQ(table.vocabulary.decode(out), (std::vector<std::string>{"b", "c"}));
  EXPECT_EQ(greedy_complete(table, prefix, 10), out);
  EXPECT_EQ(greedy_complete(table, prefix, 1).size(), 1u);
  EXPECT_GLAB_ERROR(greedy_complete(table, prefix, 0), invalid_argument);
}

TEST(CompletionProb, SingleTokenIsDistEntry) {
  const auto& t = ladder_table();
  const auto prefix = t.vocabulary.encode({"the", "tip", "of", "the"});
  const auto target = t.vocabulary.encode({"iceberg"});
  EXPECT_EQ(completion_prob(t, prefix, target), next_token_dist(t, prefix)[static_cast<std::size_t>(target[0])]);
}

TEST(CompletionProb, BoundedByEachConditional) {
  const auto& t = ladder_table();
  const auto prefix = t.vocabulary.encode({"once", "in"});
  const auto target = t.vocabulary.encode({"a", "blue", "moon"});
  const double p = completion_prob(t, prefix, target);
  std::vector<TokenId> history = prefix;
  for (TokenId w : target) {
    EXPECT_LE(p, next_token_dist(t, history)[static_cast<std::size_t>(w)]);
    history.push_back(w);
  }
  EXPECT_GLAB_ERROR(completion_prob(t, prefix, std::vector<TokenId>{}), invalid_argument);
}

TEST(CompletionProb, TracksCorpusRates) {
  CorpusOptions opt;
  opt.seed = 99;
  const auto ladder = text_ladder();
  const auto corpus = gen_idiom_corpus(ladder, opt);
  const auto& t = ladder_table();
  const auto rates = oracles::ladder_rates(corpus.sentences, ladder);
  std::vector<double> probs;
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    const auto& e = ladder[i];
    const double p = completion_prob(t, t.vocabulary.encode(e.prefix), t.vocabulary.encode({e.target}));
    EXPECT_NEAR(p, rates[i].target / static_cast<double>(rates[i].occurrences), 0.05) << e.target;
    probs.push_back(p);
  }
  EXPECT_TRUE(std::is_sorted(probs.rbegin(), probs.rend()));
}

TEST(NgramJson, RoundTrip) {
  const auto& t = ladder_table();
  const auto back = ngram_from_json(nlohmann::json::parse(to_json(t).dump()));
  EXPECT_EQ(back, t);
}

TEST(NgramJson, RejectsMalformed) {
  auto j = to_json(train_ngram(Sentences{{"a"}}, 2));
  j["counts"].push_back({{"ngram", {0, 1, 2}}, {"count", 1}});
  EXPECT_GLAB_ERROR(ngram_from_json(j), io);
}
