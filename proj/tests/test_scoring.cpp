#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "glab/random.hpp"
#include "glab/scoring.hpp"
#include "test_util.hpp"

using namespace glab;

namespace {

Histogram<int> random_histogram(Rng& rng) {
  std::vector<int> values;
  const int n = static_cast<int>(rng.uniform_int(1, 60));
  const int span = static_cast<int>(rng.uniform_int(1, 12));
  for (int i = 0; i < n; ++i) values.push_back(static_cast<int>(rng.uniform_int(0, span)));
  return histogram(values);
}

}  // namespace

TEST(Histogram, Normalized) {
  const auto h = histogram(std::vector<int>{2, 2, 10, 10});
  EXPECT_EQ(h.bins, (std::map<int, double>{{2, 0.5}, {10, 0.5}}));
  EXPECT_EQ(h.sample_size, 4u);
  EXPECT_EQ(h.support(), (std::vector<int>{2, 10}));
}

TEST(Histogram, Delta) {
  const auto h = histogram(std::vector<int>(9, 3));
  EXPECT_EQ(h.bins, (std::map<int, double>{{3, 1.0}}));
}

TEST(Histogram, SumsToOne) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) EXPECT_NEAR(random_histogram(rng).total(), 1.0, 1e-9);
}

TEST(Histogram, EmptyRejected) {
  EXPECT_GLAB_ERROR(histogram(std::vector<int>{}), invalid_argument);
}

TEST(KlDivergence, SelfIsZero) {
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const auto h = random_histogram(rng);
    EXPECT_EQ(kl_divergence(h, h), 0.0);
  }
}

TEST(KlDivergence, HandValue) {
  Histogram<std::string> p{{{"a", 1.0}}, 1};
  Histogram<std::string> q{{{"a", 0.5}, {"b", 0.5}}, 2};
  // P floored to {1, 1e-9}/(1 + 1e-9); the b term is ~1e-9 * ln(2e-9).
  EXPECT_NEAR(kl_divergence(p, q, 1e-9), std::log(2.0), 1e-7);
}

TEST(KlDivergence, NonNegativeAndFinite) {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const auto p = random_histogram(rng);
    const auto q = random_histogram(rng);
    const double kl = kl_divergence(p, q);
    EXPECT_GE(kl, 0.0);
    EXPECT_TRUE(std::isfinite(kl));
  }
}

TEST(KlDivergence, FloorMustBePositive) {
  const auto h = histogram(std::vector<int>{1});
  EXPECT_GLAB_ERROR(kl_divergence(h, h, 0.0), invalid_argument);
}

TEST(TotalVariation, Identities) {
  const auto p = histogram(std::vector<int>{1, 2});
  EXPECT_EQ(total_variation(p, p), 0.0);
  EXPECT_EQ(total_variation(histogram(std::vector<int>{1}), histogram(std::vector<int>{2})), 1.0);
  EXPECT_DOUBLE_EQ(total_variation(p, histogram(std::vector<int>{1})), 0.5);
}

TEST(TotalVariation, Bounded) {
  Rng rng(4);
  for (int i = 0; i < 500; ++i) {
    const double tv = total_variation(random_histogram(rng), random_histogram(rng));
    EXPECT_GE(tv, 0.0);
    EXPECT_LE(tv, 1.0);
  }
}

TEST(Spearman, PerfectOrders) {
  EXPECT_DOUBLE_EQ(*spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0);
  EXPECT_DOUBLE_EQ(*spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0);
}

TEST(Spearman, HandComputed) {
  // Ranks (1,2,3) vs (1,3,2): 1 - 6*2/(3*8) = 0.5.
  EXPECT_NEAR(*spearman({1, 2, 3}, {1, 3, 2}), 0.5, 1e-12);
}

TEST(Spearman, TiesUseAverageRanks) {
  EXPECT_EQ(average_ranks({5, 1, 5, 3}), (std::vector<double>{3.5, 1.0, 3.5, 2.0}));
  // Ranks (1, 2.5, 2.5, 4) vs (1, 2, 3, 4): 4.5 / sqrt(4.5 * 5).
  EXPECT_NEAR(*spearman({1, 2, 2, 3}, {1, 2, 3, 4}), 3.0 / std::sqrt(10.0), 1e-12);
}

TEST(Spearman, DegenerateIsEmpty) {
  EXPECT_FALSE(spearman({1, 1, 1}, {1, 2, 3}).has_value());
}

TEST(Spearman, BadInput) {
  EXPECT_GLAB_ERROR(spearman({1, 2}, {1, 2, 3}), invalid_argument);
  EXPECT_GLAB_ERROR(spearman({1}, {1}), invalid_argument);
}

TEST(Wilson, ReferenceInterval) {
  const auto iv = wilson_interval(37, 100);
  EXPECT_NEAR(iv.lo, 0.281, 1e-3);
  EXPECT_NEAR(iv.hi, 0.468, 1e-3);
}

TEST(Wilson, ClosedFormOracle) {
  // Wilson bounds are the roots of (p - phat)^2 = z^2 p (1 - p) / n.
  for (std::uint64_t n : {1u, 7u, 50u, 200u}) {
    for (std::uint64_t k = 0; k <= n; k += std::max<std::uint64_t>(1, n / 7)) {
      const auto iv = wilson_interval(k, n);
      const double phat = static_cast<double>(k) / static_cast<double>(n);
      const double z2 = kZ95 * kZ95;
      const double a = 1.0 + z2 / static_cast<double>(n);
      const double b = -(2.0 * phat + z2 / static_cast<double>(n));
      const double c = phat * phat;
      const double disc = std::sqrt(std::max(0.0, b * b - 4.0 * a * c));
      EXPECT_NEAR(iv.lo, (-b - disc) / (2.0 * a), 1e-12);
      EXPECT_NEAR(iv.hi, (-b + disc) / (2.0 * a), 1e-12);
    }
  }
}

TEST(GenericityScore, TrialExtremes) {
  const auto all = genericity_score("circle", TrialEvidence{20, 20});
  EXPECT_EQ(all.score, 1.0);
  EXPECT_EQ(all.interval.hi, 1.0);
  EXPECT_EQ(genericity_score("circle", TrialEvidence{0, 20}).score, 0.0);
  EXPECT_GLAB_ERROR(genericity_score("circle", TrialEvidence{0, 0}), invalid_argument);
}

TEST(GenericityScore, TrialReference) {
  const auto s = genericity_score("x", TrialEvidence{37, 100});
  EXPECT_EQ(s.basis, ScoreBasis::reproduction_rate);
  EXPECT_DOUBLE_EQ(s.score, 0.37);
  EXPECT_EQ(s.sample_size, 100u);
  EXPECT_LE(s.interval.lo, s.score);
  EXPECT_GE(s.interval.hi, s.score);
}

TEST(GenericityScore, TextIsGeometricMean) {
  const auto s = genericity_score("ear", CompletionEvidence{0.25, 2, 10});
  EXPECT_EQ(s.basis, ScoreBasis::completion_probability);
  EXPECT_DOUBLE_EQ(s.score, 0.5);
  EXPECT_EQ(s.interval.lo, s.score);
  EXPECT_EQ(s.interval.hi, s.score);
}

TEST(GenericityScore, Monotone) {
  for (std::uint64_t k = 1; k <= 50; ++k) {
    EXPECT_GT(genericity_score("e", TrialEvidence{k, 50}).score, genericity_score("e", TrialEvidence{k - 1, 50}).score);
  }
  EXPECT_GT(genericity_score("e", CompletionEvidence{0.6, 1, 0}).score,
            genericity_score("e", CompletionEvidence{0.5, 1, 0}).score);
}

TEST(RankElements, TiesByIdAndOrderIndependent) {
  std::vector<GenericityScore> scores{genericity_score("b", TrialEvidence{5, 10}),
                                      genericity_score("a", TrialEvidence{5, 10}),
                                      genericity_score("c", TrialEvidence{9, 10}),
                                      genericity_score("d", TrialEvidence{1, 10})};
  const auto ranked = rank_elements(scores);
  std::vector<std::string> ids;
  for (const auto& s : ranked) ids.push_back(s.element);
  EXPECT_EQ(ids, (std::vector<std::string>{"c", "a", "b", "d"}));
  std::reverse(scores.begin(), scores.end());
  EXPECT_EQ(rank_elements(scores), ranked);
  EXPECT_EQ(rank_elements({scores[0]}), std::vector<GenericityScore>{scores[0]});
}

TEST(RankElements, MixedBasesRejected) {
  EXPECT_GLAB_ERROR(rank_elements({genericity_score("a", TrialEvidence{1, 2}),
                                   genericity_score("b", CompletionEvidence{0.5, 1, 0})}),
                    invalid_argument);
}

TEST(Serialization, HistogramRoundTripAndCsv) {
  const auto train = histogram(std::vector<int>{2, 10});
  const auto gen = histogram(std::vector<int>{2, 2, 3, 10});
  EXPECT_EQ(histogram_from_json(to_json(gen)), gen);
  EXPECT_EQ(histograms_csv(train, gen), "count,train,generated\n2,0.5,0.5\n3,0,0.25\n10,0.5,0.25\n");
}

TEST(Serialization, ScoresCsvQuotes) {
  const auto csv = scores_csv({genericity_score("a,b", TrialEvidence{1, 2})});
  EXPECT_NE(csv.find("\"a,b\",reproduction-rate,0.5,"), std::string::npos);
}
