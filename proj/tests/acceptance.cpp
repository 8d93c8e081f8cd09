// Acceptance run: one PASS/FAIL line per criterion on stdout, progress on
// stderr. Exit status is nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "glab/lm.hpp"
#include "glab/nnlite.hpp"
#include "glab/probes.hpp"
#include "glab/random.hpp"
#include "glab/scoring.hpp"
#include "glab/synthgen.hpp"
#include "glab/vision.hpp"
#include "oracles.hpp"

using namespace glab;
using namespace glab::probes;

namespace {

constexpr std::uint64_t kSeed = 7;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << "  " << name << ":" << o.detail.str() << std::endl;
  if (!o.pass) ++failures;
}

void run_criterion(int id, const std::string& name, const std::function<void(Outcome&)>& body) {
  std::cerr << "[acceptance] criterion " << id << " " << name << " ..." << std::endl;
  Outcome o;
  try {
    body(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << " [exception: " << e.what() << "]";
  }
  report(id, name, o);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

ProbeConfig base(ProbeKind kind) {
  ProbeConfig c;
  c.kind = kind;
  c.seed = kSeed;
  return c;
}

ProbeConfig image_ladder_config() {
  auto c = base(ProbeKind::ladder);
  c.basis = LadderBasis::image;
  c.images.count_distribution = {{1, 0.4}, {4, 0.3}, {7, 0.2}, {10, 0.1}};
  c.sampling.samples = 400;
  return c;
}

ProbeConfig inpainting_config(double p) {
  auto c = base(ProbeKind::inpainting);
  c.occupancy.occupancy = p;
  return c;
}

// Reports produced along the way, rerun by criterion 7.
std::vector<std::pair<ProbeConfig, std::string>> produced;
bool known_pixels_exact = true;
std::size_t inpaintings_checked = 0;

GenericityReport run_and_keep(const ProbeConfig& c) {
  auto r = run_probe(c);
  produced.emplace_back(c, report_text(r));
  return r;
}

}  // namespace

int main() {
  run_criterion(1, "circle-bias reproduction", [](Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = run_and_keep(base(ProbeKind::distribution));
    const double elapsed = seconds_since(t0);
    const auto& gen = *r.generated_histogram;
    const double m2 = gen.mass(2);
    const double m10 = gen.mass(10);
    double other_max = 0.0;
    bool unseen = false;
    for (const auto& [k, p] : gen.bins) {
      if (k == 2 || k == 10) continue;
      other_max = std::max(other_max, p);
      unseen = unseen || p > 0.0;
    }
    o.detail << " mass(2)=" << fmt(m2) << " mass(10)=" << fmt(m10) << " combined=" << fmt(m2 + m10)
             << " max_other=" << fmt(other_max) << " unseen_counts=" << (unseen ? "yes" : "no")
             << " runtime=" << fmt(elapsed, 1) << "s";
    o.require(m2 + m10 >= 0.5, "combined mass >= 0.5");
    o.require(m2 > other_max && m10 > other_max, "2 and 10 exceed every other count");
    o.require(unseen, "some generated count outside {2,10}");
    o.require(elapsed <= 15 * 60, "runtime <= 15 min");
  });

  run_criterion(2, "idiom-frequency fidelity", [](Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = run_and_keep(base(ProbeKind::completion));
    const double elapsed = seconds_since(t0);
    for (const auto& row : r.completions) {
      o.detail << " " << fmt(row.planned_frequency, 2) << "->" << fmt(row.completion_prob);
      o.require(std::abs(row.completion_prob - row.planned_frequency) <= 0.05,
                "'" + row.idiom + "' within 0.05 of its rung");
    }
    o.detail << " runtime=" << fmt(elapsed, 2) << "s";
    o.require(r.completions.size() == 5, "five rungs");
    o.require(elapsed <= 30, "runtime <= 30 s");
  });

  run_criterion(3, "frequency-reproduction monotonicity", [](Outcome& o) {
    const auto text = run_and_keep(base(ProbeKind::ladder));
    const auto image = run_and_keep(image_ladder_config());
    const auto& tr = text.correlation->rho;
    const auto& ir = image.correlation->rho;
    o.detail << " text_rho=" << (tr ? fmt(*tr) : "tie-degenerate") << " image_rho=" << (ir ? fmt(*ir) : "tie-degenerate")
             << " image_shares=";
    for (double v : image.correlation->measured) o.detail << fmt(v, 3) << "/";
    o.require(tr && *tr == 1.0, "text rho = 1");
    o.require(ir && *ir >= 0.9, "image rho >= 0.9");
    o.require(image.generated_histogram->sample_size == 400, "400 image samples");
  });

  run_criterion(4, "inpainting bias", [](Outcome& o) {
    std::map<double, double> rate;
    for (double p : {0.0, 0.1, 0.9, 1.0}) {
      std::cerr << "[acceptance]   occupancy " << p << std::endl;
      const auto c = inpainting_config(p);
      const auto synth = synthesize(c);
      const auto model = train_models(c, synth);
      const auto g = generate(c, model);
      const Mask known = inpainting_mask(c);
      for (std::size_t i = 0; i < g.images.size(); ++i) {
        for (std::size_t px = 0; px < known.size(); ++px) {
          if (known[px] && g.images[i].values[px] != g.inputs[i].values[px]) known_pixels_exact = false;
        }
      }
      inpaintings_checked += g.images.size();
      const auto r = build_report(c, synth, model, measure(c, g.images));
      if (p == 0.9) produced.emplace_back(c, report_text(r));
      rate[p] = r.scores.front().score;
      o.detail << " rate(p=" << p << ")=" << fmt(rate[p], 3);
    }
    o.require(rate[0.0] < 0.15, "rate(p=0) < 0.15");
    o.require(rate[1.0] > 0.85, "rate(p=1) > 0.85");
    o.require(rate[0.1] < rate[0.9], "rate(p=0.1) < rate(p=0.9)");
  });

  run_criterion(5, "numerical core", [](Outcome& o) {
    Rng rng(kSeed);
    double worst = 0.0;
    for (int net = 0; net < 20; ++net) {
      std::vector<int> sizes{static_cast<int>(rng.uniform_int(1, 6))};
      const int depth = static_cast<int>(rng.uniform_int(1, 3));
      for (int l = 0; l < depth; ++l) sizes.push_back(static_cast<int>(rng.uniform_int(1, 6)));
      const auto params = nn::mlp_init(sizes, rng.next_u64());
      std::vector<double> x(static_cast<std::size_t>(sizes.front()));
      std::vector<double> c(static_cast<std::size_t>(sizes.back()));
      for (double& v : x) v = rng.normal();
      for (double& v : c) v = rng.normal();
      worst = std::max(worst, oracles::gradient_check(params, x, c, 1e-5));
    }
    auto p = nn::mlp_init({5, 4, 3}, kSeed);
    const auto original = p;
    auto state = nn::AdamState::fresh(p);
    const auto zero = nn::zeros_like(p);
    for (int i = 0; i < 100; ++i) nn::adam_step(p, zero, state);
    const bool fixed = p == original;
    o.detail << " max_rel_grad_error=" << worst << " adam_zero_grad_fixed_point=" << (fixed ? "exact" : "moved");
    o.require(worst < 1e-4, "gradient error < 1e-4");
    o.require(fixed, "Adam leaves parameters unchanged on zero gradients");
  });

  run_criterion(6, "probability soundness", [](Outcome& o) {
    CorpusOptions opt;
    opt.seed = kSeed;
    const auto table = lm::train_ngram(gen_idiom_corpus(default_idiom_ladder(), opt), 4);
    double worst_sum = 0.0;
    std::size_t contexts = 0;
    for (const auto& [ctx, stats] : table.contexts) {
      const auto dist = lm::next_token_dist(table, ctx);
      double s = 0.0;
      for (double v : dist) s += v;
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
      ++contexts;
    }
    const auto small = lm::train_ngram(
        std::vector<std::vector<std::string>>{{"a", "b", "c"}, {"b", "a"}, {"c"}, {"a", "b", "b", "c"}}, 3);
    const double mass = oracles::enumerate_total_mass(small, 4);
    Rng rng(kSeed);
    auto random_hist = [&] {
      std::vector<int> v;
      const int n = static_cast<int>(rng.uniform_int(1, 50));
      const int span = static_cast<int>(rng.uniform_int(0, 12));
      for (int i = 0; i < n; ++i) v.push_back(static_cast<int>(rng.uniform_int(0, span)));
      return histogram(v);
    };
    int identity_failures = 0;
    for (int i = 0; i < 1000; ++i) {
      const auto p = random_hist();
      const auto q = random_hist();
      const double kl = kl_divergence(p, q);
      const double tv = total_variation(p, q);
      if (kl_divergence(p, p) != 0.0 || total_variation(p, p) != 0.0) ++identity_failures;
      if (!(kl >= 0.0) || !std::isfinite(kl) || !(tv >= 0.0 && tv <= 1.0)) ++identity_failures;
    }
    o.detail << " contexts=" << contexts << " max|sum-1|=" << worst_sum << " vocab=" << small.predictable_size()
             << " total_mass=" << fmt(mass, 12) << " divergence_violations=" << identity_failures;
    o.require(worst_sum <= 1e-9, "conditionals sum to 1 +- 1e-9");
    o.require(small.predictable_size() <= 5 && std::abs(mass - 1.0) <= 1e-6, "total mass 1 +- 1e-6");
    o.require(identity_failures == 0, "KL/TV identities on 1000 pairs");
  });

  run_criterion(7, "measurement exactness", [](Outcome& o) {
    int errors = 0;
    DatasetSpec lattice;
    lattice.count_distribution.clear();
    for (int k = 0; k <= 10; ++k) lattice.count_distribution[k] = 1.0 / 11.0;
    lattice.count_distribution[10] = 1.0 - 10.0 / 11.0;
    lattice.seed = kSeed;
    for (std::size_t i = 0; i < 500; ++i) {
      const auto item = gen_dataset_item(lattice, i);
      if (count_circles(item.image).count != item.true_count) ++errors;
    }
    Rng rng(kSeed);
    for (int i = 0; i < 500; ++i) {
      const int n = static_cast<int>(rng.uniform_int(0, 10));
      if (count_circles(rasterize(gen_circle_scene(n, {32, 32}, {2, 4}, rng))).count != n) ++errors;
    }
    int mismatched = 0;
    for (const auto& [config, text] : produced) {
      std::cerr << "[acceptance]   rerun " << to_string(config.kind) << " " << config_hash(config) << std::endl;
      if (report_text(run_probe(config)) != text) ++mismatched;
    }
    o.detail << " count_errors=" << errors << "/1000 known_pixels=" << (known_pixels_exact ? "exact" : "changed")
             << " (" << inpaintings_checked << " inpaintings) reruns_identical=" << produced.size() - mismatched << "/"
             << produced.size();
    o.require(errors == 0, "zero counting errors");
    o.require(known_pixels_exact && inpaintings_checked > 0, "inpainting keeps known pixels");
    o.require(mismatched == 0 && !produced.empty(), "byte-identical reports on rerun");
  });

  std::cout << (failures == 0 ? "ALL CRITERIA PASS" : std::to_string(failures) + " CRITERIA FAIL") << std::endl;
  return failures == 0 ? 0 : 1;
}
