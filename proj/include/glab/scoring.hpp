#pragma once

// Distribution statistics and genericity scores.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "glab/error.hpp"
#include "json.hpp"

namespace glab {

template <typename Key>
struct Histogram {
  std::map<Key, double> bins;  // key -> probability, keys ordered
  std::size_t sample_size = 0;

  double mass(const Key& k) const {
    auto it = bins.find(k);
    return it == bins.end() ? 0.0 : it->second;
  }

  std::vector<Key> support() const {
    std::vector<Key> keys;
    for (const auto& [k, p] : bins) keys.push_back(k);
    return keys;
  }

  double total() const {
    double t = 0.0;
    for (const auto& [k, p] : bins) t += p;
    return t;
  }

  friend bool operator==(const Histogram&, const Histogram&) = default;
};

template <typename Key>
Histogram<Key> histogram(const std::vector<Key>& values) {
  if (values.empty()) throw_invalid("histogram of an empty sample");
  std::map<Key, std::size_t> counts;
  for (const Key& v : values) ++counts[v];
  Histogram<Key> h;
  h.sample_size = values.size();
  for (const auto& [k, c] : counts) h.bins[k] = static_cast<double>(c) / static_cast<double>(values.size());
  return h;
}

namespace detail {

template <typename Key>
std::vector<Key> union_support(const Histogram<Key>& p, const Histogram<Key>& q) {
  std::vector<Key> keys = p.support();
  for (const auto& [k, v] : q.bins) {
    if (!p.bins.count(k)) keys.push_back(k);
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

// Values over `keys`, each raised to at least `floor`, then renormalized.
template <typename Key>
std::vector<double> floored(const Histogram<Key>& h, const std::vector<Key>& keys, double floor) {
  std::vector<double> v;
  v.reserve(keys.size());
  for (const Key& k : keys) v.push_back(std::max(h.mass(k), floor));
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  for (double& x : v) x /= total;
  return v;
}

}  // namespace detail

inline constexpr double kDefaultKlFloor = 1e-9;

/// KL(P || Q) in nats over the union of supports. Masses below `floor` are
/// raised to it and both sides renormalized, which keeps the value finite
/// when Q misses part of P's support.
template <typename Key>
double kl_divergence(const Histogram<Key>& p, const Histogram<Key>& q, double floor = kDefaultKlFloor) {
  if (!(floor > 0.0)) throw_invalid("kl floor must be positive");
  const auto keys = detail::union_support(p, q);
  const auto pv = detail::floored(p, keys, floor);
  const auto qv = detail::floored(q, keys, floor);
  double kl = 0.0;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (pv[i] != qv[i]) kl += pv[i] * std::log(pv[i] / qv[i]);
  }
  return std::max(0.0, kl);
}

template <typename Key>
double total_variation(const Histogram<Key>& p, const Histogram<Key>& q) {
  double sum = 0.0;
  for (const Key& k : detail::union_support(p, q)) sum += std::abs(p.mass(k) - q.mass(k));
  return std::clamp(0.5 * sum, 0.0, 1.0);
}

/// 1-based ranks, ties sharing the average of their positions.
inline std::vector<double> average_ranks(const std::vector<double>& xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&xs](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

/// Spearman rank correlation (Pearson correlation of average ranks).
/// Empty when either side has no rank variance.
inline std::optional<double> spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw_invalid("spearman: length mismatch");
  if (xs.size() < 2) throw_invalid("spearman needs at least 2 pairs");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const Interval&, const Interval&) = default;
};

inline constexpr double kZ95 = 1.959963984540054;

/// Wilson score interval for k successes in n trials.
inline Interval wilson_interval(std::uint64_t k, std::uint64_t n, double z = kZ95) {
  if (n == 0) throw_invalid("wilson interval needs n >= 1");
  if (k > n) throw_invalid("wilson interval needs k <= n");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  Interval iv{std::max(0.0, center - half), std::min(1.0, center + half)};
  iv.lo = std::min(iv.lo, p);
  iv.hi = std::max(iv.hi, p);
  return iv;
}

enum class ScoreBasis { completion_probability, reproduction_rate };

inline const char* to_string(ScoreBasis b) {
  return b == ScoreBasis::completion_probability ? "completion-probability" : "reproduction-rate";
}

/// Language-model evidence: probability of the element's completion and its
/// length in tokens. `sample_size` is the number of times the prompt was seen
/// in training, reported for context.
struct CompletionEvidence {
  double probability = 0.0;
  std::size_t token_count = 1;
  std::size_t sample_size = 0;
};

/// Sampling or inpainting evidence: k of n generations exhibit the element.
struct TrialEvidence {
  std::uint64_t successes = 0;
  std::uint64_t trials = 0;
};

using Evidence = std::variant<CompletionEvidence, TrialEvidence>;

struct GenericityScore {
  std::string element;
  double score = 0.0;
  ScoreBasis basis = ScoreBasis::reproduction_rate;
  std::size_t sample_size = 0;
  Interval interval;

  friend bool operator==(const GenericityScore&, const GenericityScore&) = default;
};

/// Text basis: geometric-mean per-token probability of the completion (the
/// interval collapses to the point). Image basis: k/n with a Wilson 95% interval.
inline GenericityScore genericity_score(const std::string& element, const Evidence& evidence) {
  GenericityScore s;
  s.element = element;
  if (const auto* text = std::get_if<CompletionEvidence>(&evidence)) {
    if (text->token_count == 0) throw_invalid("completion evidence needs at least one token");
    if (!(text->probability >= 0.0 && text->probability <= 1.0)) throw_invalid("completion probability outside [0, 1]");
    s.basis = ScoreBasis::completion_probability;
    s.score = std::pow(text->probability, 1.0 / static_cast<double>(text->token_count));
    s.sample_size = text->sample_size;
    s.interval = {s.score, s.score};
    return s;
  }
  const auto& trial = std::get<TrialEvidence>(evidence);
  if (trial.trials == 0) throw_invalid("trial evidence with n = 0");
  s.basis = ScoreBasis::reproduction_rate;
  s.score = static_cast<double>(trial.successes) / static_cast<double>(trial.trials);
  s.sample_size = trial.trials;
  s.interval = wilson_interval(trial.successes, trial.trials);
  return s;
}

/// Descending by score, ties by element id. Scores must share one basis.
inline std::vector<GenericityScore> rank_elements(std::vector<GenericityScore> scores) {
  if (scores.empty()) throw_invalid("nothing to rank");
  for (const auto& s : scores) {
    if (s.basis != scores.front().basis) throw_invalid("cannot rank scores with different bases together");
  }
  std::sort(scores.begin(), scores.end(), [](const GenericityScore& a, const GenericityScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.element < b.element;
  });
  return scores;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const GenericityScore& s) {
  return {{"element", s.element},
          {"score", s.score},
          {"basis", to_string(s.basis)},
          {"sample_size", s.sample_size},
          {"interval", {s.interval.lo, s.interval.hi}}};
}

template <typename Key>
nlohmann::json to_json(const Histogram<Key>& h) {
  nlohmann::json bins = nlohmann::json::object();
  for (const auto& [k, p] : h.bins) {
    std::ostringstream key;
    key << k;
    bins[key.str()] = p;
  }
  return {{"bins", bins}, {"sample_size", h.sample_size}};
}

inline Histogram<int> histogram_from_json(const nlohmann::json& j) {
  Histogram<int> h;
  h.sample_size = j.at("sample_size").get<std::size_t>();
  for (const auto& [k, v] : j.at("bins").items()) h.bins[std::stoi(k)] = v.get<double>();
  return h;
}

namespace detail {

inline std::string csv_number(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace detail

/// "count,train,generated" rows over the union support.
inline std::string histograms_csv(const Histogram<int>& train, const Histogram<int>& generated) {
  std::string out = "count,train,generated\n";
  for (int k : detail::union_support(train, generated)) {
    out += std::to_string(k) + "," + detail::csv_number(train.mass(k)) + "," +
           detail::csv_number(generated.mass(k)) + "\n";
  }
  return out;
}

inline std::string scores_csv(const std::vector<GenericityScore>& scores) {
  std::string out = "element,basis,score,ci_lo,ci_hi,sample_size\n";
  for (const auto& s : scores) {
    std::string element = s.element;
    if (element.find_first_of(",\"") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : element) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
      element = quoted + "\"";
    }
    out += element + "," + to_string(s.basis) + "," + detail::csv_number(s.score) + "," +
           detail::csv_number(s.interval.lo) + "," + detail::csv_number(s.interval.hi) + "," +
           std::to_string(s.sample_size) + "\n";
  }
  return out;
}

}  // namespace glab
