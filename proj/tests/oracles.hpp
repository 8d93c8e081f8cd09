#pragma once

// Independent reference computations used by the tests. Nothing here calls the
// code path it is meant to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "glab/lm.hpp"
#include "glab/nnlite.hpp"
#include "glab/synthgen.hpp"

namespace glab::oracles {

namespace nn = glab::nn;

// Loss used by the gradient checks: L = sum_j c_j * y_j for fixed weights c.
inline double probe_loss(const nn::MlpParams& p, const std::vector<double>& x, const std::vector<double>& c) {
  const auto [y, cache] = nn::mlp_forward(p, x);
  double l = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) l += c[j] * y[j];
  return l;
}

// Max relative error between analytic gradients and central differences,
// |num - ana| / max(|num|, |ana|, 1e-6), over every parameter.
inline double gradient_check(nn::MlpParams params, const std::vector<double>& x, const std::vector<double>& c,
                             double h = 1e-5) {
  const auto [y, cache] = nn::mlp_forward(params, x);
  const nn::MlpGrads g = nn::mlp_backward(params, cache, c);
  double worst = 0.0;
  auto check = [&](double& slot, double analytic) {
    const double keep = slot;
    slot = keep + h;
    const double up = probe_loss(params, x, c);
    slot = keep - h;
    const double down = probe_loss(params, x, c);
    slot = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    worst = std::max(worst, rel);
  };
  for (std::size_t k = 0; k < params.num_layers(); ++k) {
    for (Eigen::Index i = 0; i < params.weights[k].rows(); ++i) {
      for (Eigen::Index j = 0; j < params.weights[k].cols(); ++j) check(params.weights[k](i, j), g.weights[k](i, j));
    }
    for (Eigen::Index j = 0; j < params.biases[k].size(); ++j) check(params.biases[k](j), g.biases[k](j));
  }
  return worst;
}

struct LadderCount {
  int occurrences = 0;
  int target = 0;
};

// Scans raw sentences for each prefix and tallies what follows it.
inline std::vector<LadderCount> ladder_rates(const std::vector<std::vector<std::string>>& sentences,
                                             const std::vector<LadderEntry>& ladder) {
  std::vector<LadderCount> out(ladder.size());
  for (std::size_t e = 0; e < ladder.size(); ++e) {
    const auto& prefix = ladder[e].prefix;
    for (const auto& s : sentences) {
      for (std::size_t i = 0; i + prefix.size() < s.size(); ++i) {
        if (std::equal(prefix.begin(), prefix.end(), s.begin() + static_cast<std::ptrdiff_t>(i))) {
          ++out[e].occurrences;
          out[e].target += s[i + prefix.size()] == ladder[e].target;
        }
      }
    }
  }
  return out;
}

// Witten-Bell reference written from the textbook recursion, counting k-grams
// directly from padded string sentences.
class WittenBellReference {
 public:
  WittenBellReference(const std::vector<std::vector<std::string>>& sentences, int order) : order_(order) {
    for (const auto& s : sentences) {
      std::vector<std::string> padded(static_cast<std::size_t>(order - 1), "<s>");
      padded.insert(padded.end(), s.begin(), s.end());
      padded.push_back("</s>");
      for (const auto& w : s) words_.insert(w);
      for (std::size_t i = static_cast<std::size_t>(order - 1); i < padded.size(); ++i) {
        for (int k = 0; k < order; ++k) {
          std::vector<std::string> h(padded.begin() + static_cast<std::ptrdiff_t>(i) - k,
                                     padded.begin() + static_cast<std::ptrdiff_t>(i));
          ++counts_[h][padded[i]];
        }
      }
    }
    words_.insert("</s>");
    words_.insert("<unk>");
  }

  double prob(const std::string& w, std::vector<std::string> history) const {
    if (static_cast<int>(history.size()) > order_ - 1) {
      history.erase(history.begin(), history.end() - (order_ - 1));
    }
    return level(w, history, history.size());
  }

 private:
  double level(const std::string& w, const std::vector<std::string>& history, std::size_t k) const {
    const std::vector<std::string> h(history.end() - static_cast<std::ptrdiff_t>(k), history.end());
    auto it = counts_.find(h);
    if (k == 0) {
      double n = 0.0;
      for (const auto& [x, c] : it->second) n += c;
      const auto f = it->second.find(w);
      const double c = f == it->second.end() ? 0.0 : f->second;
      return 1e-8 / static_cast<double>(words_.size()) + (1.0 - 1e-8) * c / n;
    }
    const double lower = level(w, history, k - 1);
    if (it == counts_.end()) return lower;
    double n = 0.0;
    for (const auto& [x, c] : it->second) n += c;
    const double types = static_cast<double>(it->second.size());
    const auto f = it->second.find(w);
    const double c = f == it->second.end() ? 0.0 : f->second;
    return (c + types * lower) / (n + types);
  }

  int order_;
  std::set<std::string> words_;
  std::map<std::vector<std::string>, std::map<std::string, double>> counts_;
};

// Walks every token sequence of length <= max_len over the predictable
// vocabulary, stopping a branch at </s>. Returns the mass of terminated
// sequences plus the mass of branches cut at max_len, which must equal 1.
inline double enumerate_total_mass(const lm::NgramTable& table, int max_len) {
  double total = 0.0;
  std::vector<lm::TokenId> seq;
  std::function<void()> walk = [&] {
    const double mass = std::exp(lm::sequence_logprob(table, seq));
    if (seq.back() == lm::kEos || static_cast<int>(seq.size()) == max_len) {
      total += mass;
      return;
    }
    for (std::size_t w = 1; w < table.vocabulary.size(); ++w) {
      seq.push_back(static_cast<lm::TokenId>(w));
      walk();
      seq.pop_back();
    }
  };
  for (std::size_t w = 1; w < table.vocabulary.size(); ++w) {
    seq = {static_cast<lm::TokenId>(w)};
    walk();
  }
  return total;
}

}  // namespace glab::oracles
