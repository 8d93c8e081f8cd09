#pragma once

// Experiment pipelines.
//
// Every probe runs the same four stages: synthesize the training world, train
// a model on it, generate from the model, and report. Each stage has a pure
// in-memory form plus save/load functions for its artifacts, so a run can be
// stopped after any stage and resumed from the files.
//
// Run directory layout:
//   config.json                 resolved probe config
//   dataset/manifest.json       image probes: per-item file and label
//   dataset/NNNNN.pgm
//   corpus/corpus.txt           text probes: one sentence per line
//   corpus/idioms.json
//   model/denoiser.glnn         nnlite checkpoint
//   model/denoiser.json         sidecar (dims, layer sizes, schedule)
//   model/training.json         loss curve
//   model/ngram.json            text probes
//   inputs/NNNNN.pgm            inpainting test images
//   samples/NNNNN.pgm           generated images
//   samples/index.json          per-sample file and measurement
//   report.json, histograms.csv, scores.csv

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "glab/diffusion.hpp"
#include "glab/error.hpp"
#include "glab/image.hpp"
#include "glab/lm.hpp"
#include "glab/nnlite.hpp"
#include "glab/random.hpp"
#include "glab/scoring.hpp"
#include "glab/synthgen.hpp"
#include "glab/vision.hpp"
#include "json.hpp"

namespace glab::probes {

namespace fs = std::filesystem;
using nlohmann::json;

enum class ProbeKind { distribution, inpainting, completion, ladder };
enum class LadderBasis { text, image };

inline const char* to_string(ProbeKind k) {
  switch (k) {
    case ProbeKind::distribution: return "distribution";
    case ProbeKind::inpainting: return "inpainting";
    case ProbeKind::completion: return "completion";
    case ProbeKind::ladder: return "ladder";
  }
  return "?";
}

inline std::optional<ProbeKind> parse_probe_kind(const std::string& s) {
  for (ProbeKind k : {ProbeKind::distribution, ProbeKind::inpainting, ProbeKind::completion, ProbeKind::ladder}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

inline const char* to_string(LadderBasis b) { return b == LadderBasis::text ? "text" : "image"; }

struct DiffusionSettings {
  std::vector<int> hidden{256, 256, 256, 256};
  int embedding_dim = 32;
  int steps = diffusion::kDefaultSteps;
  double beta_min = diffusion::kDefaultBetaMin;
  double beta_max = diffusion::kDefaultBetaMax;
  int epochs = 200;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double ema_decay = 0.0;
  bool cosine_decay = true;

  friend bool operator==(const DiffusionSettings&, const DiffusionSettings&) = default;
};

struct SamplingSettings {
  int samples = 500;
  int inpaintings = 200;
  double threshold = kDefaultInkThreshold;
  int min_area = kDefaultMinArea;
  int max_len = 3;

  friend bool operator==(const SamplingSettings&, const SamplingSettings&) = default;
};

/// Everything a probe run depends on. Stage seeds are derived from `seed`;
/// the seed fields inside `images`, `occupancy` and `corpus` are ignored.
struct ProbeConfig {
  ProbeKind kind = ProbeKind::distribution;
  LadderBasis basis = LadderBasis::text;
  std::uint64_t seed = 0;
  DatasetSpec images;
  OccupancySpec occupancy;
  std::vector<LadderEntry> ladder = default_idiom_ladder();
  CorpusOptions corpus;
  int order = 4;
  DiffusionSettings model;
  SamplingSettings sampling;

  bool uses_images() const {
    return kind == ProbeKind::distribution || kind == ProbeKind::inpainting ||
           (kind == ProbeKind::ladder && basis == LadderBasis::image);
  }

  Canvas canvas() const { return kind == ProbeKind::inpainting ? occupancy.canvas : images.canvas; }

  void validate() const {
    if (uses_images()) {
      if (kind == ProbeKind::inpainting) {
        occupancy.validate();
      } else {
        images.validate();
      }
      if (model.hidden.empty()) throw_invalid("model.hidden needs at least one layer");
      for (int h : model.hidden) {
        if (h < 1) throw_invalid("model.hidden sizes must be >= 1");
      }
      if (model.embedding_dim < 2 || model.embedding_dim % 2 != 0) {
        throw_invalid("model.embedding_dim must be even and >= 2");
      }
      diffusion::make_schedule(model.steps, model.beta_min, model.beta_max);
      if (model.epochs < 0 || model.batch_size < 1) throw_invalid("model.epochs >= 0 and model.batch_size >= 1");
      if (!(model.learning_rate > 0.0)) throw_invalid("model.learning_rate must be positive");
      if (!(model.ema_decay >= 0.0 && model.ema_decay < 1.0)) throw_invalid("model.ema_decay must lie in [0, 1)");
      if (sampling.samples < 1 || sampling.inpaintings < 1) throw_invalid("sample counts must be >= 1");
      if (!(sampling.threshold > 0.0 && sampling.threshold < 1.0)) throw_invalid("threshold must lie in (0, 1)");
      if (sampling.min_area < 1) throw_invalid("min_area must be >= 1");
      if (kind == ProbeKind::ladder && images.count_distribution.size() < 2) {
        throw_invalid("a ladder needs at least 2 rungs");
      }
    } else {
      if (ladder.empty()) throw_invalid("idiom ladder is empty");
      if (kind == ProbeKind::ladder && ladder.size() < 2) throw_invalid("a ladder needs at least 2 rungs");
      lm::check_order(order);
      if (corpus.size < 1) throw_invalid("corpus size must be >= 1");
      if (sampling.max_len < 1) throw_invalid("max_len must be >= 1");
    }
  }
};

// ---------------------------------------------------------------------------
// Config echo
// ---------------------------------------------------------------------------

namespace detail {

inline json distribution_json(const std::map<int, double>& d) {
  json j = json::object();
  for (const auto& [k, p] : d) j[std::to_string(k)] = p;
  return j;
}

inline json geometry_json(Canvas canvas, RadiusRange radii, int pitch) {
  return {{"width", canvas.width},
          {"height", canvas.height},
          {"radius_min", radii.min},
          {"radius_max", radii.max},
          {"lattice_pitch", pitch}};
}

inline std::string join_tokens(const std::vector<std::string>& tokens) { return lm::detokenize(tokens); }

}  // namespace detail

/// Resolved config as a JSON document (the report's config echo). Only the
/// sections relevant to the probe kind are emitted.
inline json to_json(const ProbeConfig& c) {
  json dataset;
  json model;
  json sampling;
  if (c.uses_images()) {
    if (c.kind == ProbeKind::inpainting) {
      const auto& o = c.occupancy;
      dataset = detail::geometry_json(o.canvas, o.radii, o.lattice_pitch);
      dataset["size"] = o.dataset_size;
      dataset["occupancy"] = o.occupancy;
      dataset["region"] = {o.region.x, o.region.y, o.region.w, o.region.h};
      dataset["background_counts"] = detail::distribution_json(o.background_counts);
      sampling = {{"inpaintings", c.sampling.inpaintings}};
    } else {
      const auto& d = c.images;
      dataset = detail::geometry_json(d.canvas, d.radii, d.lattice_pitch);
      dataset["size"] = d.dataset_size;
      dataset["count_distribution"] = detail::distribution_json(d.count_distribution);
      sampling = {{"samples", c.sampling.samples}};
    }
    sampling["threshold"] = c.sampling.threshold;
    sampling["min_area"] = c.sampling.min_area;
    const auto& m = c.model;
    model = {{"hidden", m.hidden},
             {"embedding_dim", m.embedding_dim},
             {"steps", m.steps},
             {"beta_min", m.beta_min},
             {"beta_max", m.beta_max},
             {"epochs", m.epochs},
             {"batch_size", m.batch_size},
             {"learning_rate", m.learning_rate},
             {"ema_decay", m.ema_decay},
             {"lr_schedule", m.cosine_decay ? "cosine" : "constant"}};
  } else {
    json ladder = json::array();
    for (const auto& e : c.ladder) {
      ladder.push_back({{"prefix", detail::join_tokens(e.prefix)},
                        {"target", e.target},
                        {"frequency", e.frequency},
                        {"distractors", e.distractors}});
    }
    dataset = {{"ladder", ladder},
               {"size", c.corpus.size},
               {"idiom_share", c.corpus.idiom_share},
               {"fillers", c.corpus.fillers},
               {"filler_min_len", c.corpus.filler_min_len},
               {"filler_max_len", c.corpus.filler_max_len}};
    model = {{"order", c.order}};
    sampling = {{"max_len", c.sampling.max_len}};
  }
  if (c.kind == ProbeKind::ladder) dataset["basis"] = to_string(c.basis);
  return {{"probe", to_string(c.kind)}, {"seed", c.seed}, {"dataset", dataset}, {"model", model}, {"sampling", sampling}};
}

/// 16 hex digits of FNV-1a over the canonical (sorted-key, compact) echo.
inline std::string config_hash(const ProbeConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json(c).dump())));
  return buf;
}

// ---------------------------------------------------------------------------
// Stage 1: synthesize
// ---------------------------------------------------------------------------

struct SynthOutput {
  std::vector<ImageGrid> images;
  /// Circle count per image, or 1/0 region occupancy for the inpainting probe.
  std::vector<int> labels;
  Corpus corpus;
};

inline SynthOutput synthesize(const ProbeConfig& c) {
  SynthOutput out;
  if (c.kind == ProbeKind::inpainting) {
    OccupancySpec spec = c.occupancy;
    spec.seed = derive_seed(c.seed, "dataset");
    for (auto& item : gen_occupancy_dataset(spec)) {
      out.images.push_back(std::move(item.image));
      out.labels.push_back(item.occupied ? 1 : 0);
    }
  } else if (c.uses_images()) {
    DatasetSpec spec = c.images;
    spec.seed = derive_seed(c.seed, "dataset");
    for (auto& item : gen_image_dataset(spec)) {
      out.images.push_back(std::move(item.image));
      out.labels.push_back(item.true_count);
    }
  } else {
    CorpusOptions opt = c.corpus;
    opt.seed = derive_seed(c.seed, "corpus");
    out.corpus = gen_idiom_corpus(c.ladder, opt);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stage 2: train
// ---------------------------------------------------------------------------

struct TrainedModel {
  std::optional<diffusion::DenoiserModel> denoiser;
  diffusion::NoiseSchedule schedule;
  std::vector<double> loss_curve;
  std::optional<lm::NgramTable> ngram;
};

inline diffusion::NoiseSchedule schedule_for(const ProbeConfig& c) {
  return diffusion::make_schedule(c.model.steps, c.model.beta_min, c.model.beta_max);
}

inline TrainedModel train_models(const ProbeConfig& c, const SynthOutput& synth,
                                 const std::function<void(int, double)>& on_epoch = {}) {
  TrainedModel out;
  if (!c.uses_images()) {
    out.ngram = lm::train_ngram(synth.corpus, c.order);
    return out;
  }
  diffusion::DenoiserConfig dc;
  dc.width = c.canvas().width;
  dc.height = c.canvas().height;
  dc.embedding_dim = c.model.embedding_dim;
  dc.hidden = c.model.hidden;
  out.schedule = schedule_for(c);
  diffusion::TrainOptions opt;
  opt.epochs = c.model.epochs;
  opt.batch_size = c.model.batch_size;
  opt.adam.learning_rate = c.model.learning_rate;
  opt.ema_decay = c.model.ema_decay;
  opt.cosine_decay = c.model.cosine_decay;
  opt.seed = derive_seed(c.seed, "train");
  auto result = diffusion::train(diffusion::make_denoiser(dc, derive_seed(c.seed, "init")), synth.images,
                                 out.schedule, opt, on_epoch);
  out.denoiser = std::move(result.model);
  out.loss_curve = std::move(result.loss_curve);
  return out;
}

// ---------------------------------------------------------------------------
// Stage 3: generate
// ---------------------------------------------------------------------------

struct Generations {
  std::vector<ImageGrid> images;  // samples, or inpaintings
  std::vector<ImageGrid> inputs;  // inpainting test images before masking
};

/// Rounds every pixel to the 8-bit grid used by the PGM files, so images
/// measured in memory and images read back from disk are identical.
inline ImageGrid quantize8(ImageGrid img) {
  for (double& v : img.values) v = to_gray8(v) / 255.0;
  return img;
}

/// Known-pixel mask for the inpainting probe: everything outside the region.
inline Mask inpainting_mask(const ProbeConfig& c) {
  const Canvas canvas = c.occupancy.canvas;
  return c.occupancy.region.to_mask(canvas.width, canvas.height).inverted();
}

/// Test images for the inpainting probe: scenes with a circle inside the
/// region plus background circles, drawn from their own stream.
inline std::vector<ImageGrid> inpainting_inputs(const ProbeConfig& c) {
  OccupancySpec spec = c.occupancy;
  spec.occupancy = 1.0;
  spec.seed = derive_seed(c.seed, "test-scenes");
  std::vector<ImageGrid> out;
  for (int i = 0; i < c.sampling.inpaintings; ++i) out.push_back(gen_occupancy_item(spec, static_cast<std::size_t>(i)).image);
  return out;
}

inline Generations generate(const ProbeConfig& c, const TrainedModel& m, int jobs = 1) {
  Generations out;
  if (!c.uses_images()) return out;
  if (!m.denoiser) throw_invalid("generate: no trained denoiser");
  if (c.kind == ProbeKind::inpainting) {
    out.inputs = inpainting_inputs(c);
    out.images = diffusion::inpaint_batch(*m.denoiser, m.schedule, out.inputs, inpainting_mask(c),
                                          derive_seed(c.seed, "inpaint"), jobs);
  } else {
    out.images = diffusion::sample(*m.denoiser, m.schedule, static_cast<std::size_t>(c.sampling.samples),
                                   derive_seed(c.seed, "sample"), jobs);
  }
  for (auto& img : out.images) img = quantize8(std::move(img));
  return out;
}

/// Circle count per sample, or 1/0 region fill per inpainting.
inline std::vector<int> measure(const ProbeConfig& c, const std::vector<ImageGrid>& images) {
  std::vector<int> out;
  out.reserve(images.size());
  if (c.kind == ProbeKind::inpainting) {
    const Mask region = c.occupancy.region.to_mask(c.occupancy.canvas.width, c.occupancy.canvas.height);
    for (const auto& img : images) {
      out.push_back(region_occupied(img, region, c.sampling.threshold, c.sampling.min_area) ? 1 : 0);
    }
  } else {
    for (const auto& img : images) out.push_back(count_circles(img, c.sampling.threshold, c.sampling.min_area).count);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stage 4: report
// ---------------------------------------------------------------------------

struct Divergences {
  double kl_train_generated = 0.0;
  double kl_generated_train = 0.0;
  double total_variation = 0.0;
};

struct ElementFrequency {
  std::string element;
  double training_frequency = 0.0;
  double reproduction = 0.0;
};

struct CompletionRow {
  std::string idiom;  // prefix
  std::string target;
  double planned_frequency = 0.0;
  double empirical_frequency = 0.0;
  int occurrences = 0;
  double completion_prob = 0.0;
  std::string greedy_completion;
  bool greedy_matches_target = false;
};

struct Correlation {
  std::vector<double> planned;
  std::vector<double> measured;
  std::optional<double> rho;  // empty when tie-degenerate
};

struct GenericityReport {
  ProbeKind kind = ProbeKind::distribution;
  json config;
  std::string config_hash;
  std::optional<Histogram<int>> train_histogram;
  std::optional<Histogram<int>> generated_histogram;
  std::optional<Divergences> divergences;
  std::vector<GenericityScore> scores;  // ranked
  std::vector<ElementFrequency> elements;
  std::vector<CompletionRow> completions;
  std::optional<Correlation> correlation;
  std::vector<double> loss_curve;

  const GenericityScore* score(const std::string& element) const {
    for (const auto& s : scores) {
      if (s.element == element) return &s;
    }
    return nullptr;
  }
};

/// Element id for a circle count.
inline std::string count_element(int count) { return "count=" + std::to_string(count); }
inline constexpr const char* kRegionElement = "circle-in-region";

namespace detail {

inline double empirical_share(const std::vector<int>& values, int key) {
  const auto hits = std::count(values.begin(), values.end(), key);
  return static_cast<double>(hits) / static_cast<double>(values.size());
}

inline void image_report(const ProbeConfig& c, const std::vector<int>& train_labels, const std::vector<int>& measured,
                         GenericityReport& r) {
  if (measured.empty()) throw_invalid("report: no measurements");
  r.train_histogram = histogram(train_labels);
  r.generated_histogram = histogram(measured);
  r.divergences = Divergences{kl_divergence(*r.train_histogram, *r.generated_histogram),
                              kl_divergence(*r.generated_histogram, *r.train_histogram),
                              total_variation(*r.train_histogram, *r.generated_histogram)};
  const auto n = static_cast<std::uint64_t>(measured.size());
  if (c.kind == ProbeKind::inpainting) {
    const auto fills = static_cast<std::uint64_t>(std::count(measured.begin(), measured.end(), 1));
    r.scores.push_back(genericity_score(kRegionElement, TrialEvidence{fills, n}));
    r.elements.push_back({kRegionElement, empirical_share(train_labels, 1), r.scores.back().score});
    return;
  }
  std::map<int, bool> keys;
  for (int k : r.train_histogram->support()) keys[k] = true;
  for (int k : r.generated_histogram->support()) keys[k] = true;
  for (const auto& [k, unused] : keys) {
    const auto hits = static_cast<std::uint64_t>(std::count(measured.begin(), measured.end(), k));
    r.scores.push_back(genericity_score(count_element(k), TrialEvidence{hits, n}));
    r.elements.push_back({count_element(k), r.train_histogram->mass(k), r.scores.back().score});
  }
  if (c.kind == ProbeKind::ladder) {
    Correlation corr;
    for (const auto& [k, p] : c.images.count_distribution) {
      corr.planned.push_back(p);
      corr.measured.push_back(empirical_share(measured, k));
    }
    corr.rho = spearman(corr.planned, corr.measured);
    r.correlation = corr;
  }
}

inline void text_report(const ProbeConfig& c, const Corpus& corpus, const lm::NgramTable& table,
                        GenericityReport& r) {
  Correlation corr;
  for (std::size_t i = 0; i < c.ladder.size(); ++i) {
    const auto& e = c.ladder[i];
    const auto prefix = table.vocabulary.encode(e.prefix);
    const auto target = table.vocabulary.encode(lm::tokenize(e.target));
    CompletionRow row;
    row.idiom = join_tokens(e.prefix);
    row.target = e.target;
    row.planned_frequency = e.frequency;
    for (const auto& stats : corpus.idioms) {
      if (stats.idiom == row.idiom) {
        row.empirical_frequency = stats.empirical_rate();
        row.occurrences = stats.occurrences;
      }
    }
    row.completion_prob = lm::completion_prob(table, prefix, target);
    const auto greedy = lm::greedy_complete(table, prefix, std::max<int>(c.sampling.max_len, 1));
    const auto words = table.vocabulary.decode(greedy);
    row.greedy_completion = join_tokens(words);
    row.greedy_matches_target = words.size() >= target.size() &&
                                std::equal(target.begin(), target.end(), greedy.begin());
    r.scores.push_back(genericity_score(row.idiom + " " + row.target,
                                        CompletionEvidence{row.completion_prob, target.size(),
                                                           static_cast<std::size_t>(row.occurrences)}));
    corr.planned.push_back(e.frequency);
    corr.measured.push_back(r.scores.back().score);
    r.completions.push_back(std::move(row));
  }
  if (c.kind == ProbeKind::ladder) {
    corr.rho = spearman(corr.planned, corr.measured);
    r.correlation = corr;
  }
}

}  // namespace detail

/// Assembles the report from persisted or in-memory stage outputs. Image
/// probes need the training labels and the measurements; text probes need the
/// corpus statistics and the n-gram table.
inline GenericityReport build_report(const ProbeConfig& c, const SynthOutput& synth, const TrainedModel& model,
                                     const std::vector<int>& measured) {
  GenericityReport r;
  r.kind = c.kind;
  r.config = to_json(c);
  r.config_hash = config_hash(c);
  r.loss_curve = model.loss_curve;
  if (c.uses_images()) {
    detail::image_report(c, synth.labels, measured, r);
  } else {
    if (!model.ngram) throw_invalid("report: no n-gram table");
    detail::text_report(c, synth.corpus, *model.ngram, r);
  }
  r.scores = rank_elements(std::move(r.scores));
  return r;
}

inline json to_json(const GenericityReport& r) {
  json j;
  j["probe"] = to_string(r.kind);
  j["config"] = r.config;
  j["config_hash"] = r.config_hash;
  json scores = json::array();
  for (const auto& s : r.scores) scores.push_back(glab::to_json(s));
  j["scores"] = scores;
  if (r.train_histogram) {
    j["histograms"] = {{"train", glab::to_json(*r.train_histogram)},
                       {"generated", glab::to_json(*r.generated_histogram)}};
  }
  if (r.divergences) {
    j["divergences"] = {{"kl_train_generated", r.divergences->kl_train_generated},
                        {"kl_generated_train", r.divergences->kl_generated_train},
                        {"total_variation", r.divergences->total_variation},
                        {"kl_floor", kDefaultKlFloor}};
  }
  if (!r.elements.empty()) {
    json el = json::array();
    for (const auto& e : r.elements) {
      el.push_back({{"element", e.element}, {"training_frequency", e.training_frequency}, {"reproduction_rate", e.reproduction}});
    }
    j["elements"] = el;
  }
  if (!r.completions.empty()) {
    json rows = json::array();
    for (const auto& c : r.completions) {
      rows.push_back({{"idiom", c.idiom},
                      {"target", c.target},
                      {"planned_frequency", c.planned_frequency},
                      {"empirical_frequency", c.empirical_frequency},
                      {"occurrences", c.occurrences},
                      {"completion_prob", c.completion_prob},
                      {"greedy_completion", c.greedy_completion},
                      {"greedy_matches_target", c.greedy_matches_target}});
    }
    j["completions"] = rows;
    j["language_model"] = {{"smoothing", "witten-bell"}, {"uniform_floor", lm::kUniformFloor}};
  }
  if (r.correlation) {
    json corr = {{"planned", r.correlation->planned}, {"measured", r.correlation->measured}};
    if (r.correlation->rho) {
      corr["spearman"] = *r.correlation->rho;
      corr["status"] = "ok";
    } else {
      corr["status"] = "tie-degenerate";
    }
    j["correlation"] = corr;
  }
  if (!r.loss_curve.empty()) {
    j["training"] = {{"epochs", r.loss_curve.size()}, {"final_loss", r.loss_curve.back()}};
  }
  if (r.train_histogram) {
    const auto& s = r.config.at("sampling");
    j["measurement"] = {{"connectivity", 4}, {"threshold", s.at("threshold")}, {"min_area", s.at("min_area")}};
  }
  return j;
}

/// Canonical text: sorted keys, two-space indent, trailing newline.
inline std::string report_text(const GenericityReport& r) { return to_json(r).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

namespace detail {

inline std::string item_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05zu.pgm", i);
  return buf;
}

inline void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_io("cannot write " + path.string());
  out << text;
  if (!out) throw_io("failed writing " + path.string());
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw_io("malformed JSON in " + path.string() + ": " + e.what());
  }
}

template <typename Fn>
auto guard_json(const fs::path& path, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw_io("unexpected content in " + path.string() + ": " + e.what());
  }
}

inline void write_images(const fs::path& dir, const std::vector<ImageGrid>& images) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < images.size(); ++i) write_pgm(dir / item_name(i), images[i]);
}

}  // namespace detail

inline void save_config(const fs::path& run_dir, const ProbeConfig& c) {
  detail::write_text(run_dir / "config.json", to_json(c).dump(2) + "\n");
}

inline void save_synth(const fs::path& run_dir, const ProbeConfig& c, const SynthOutput& s) {
  if (c.uses_images()) {
    const char* label = c.kind == ProbeKind::inpainting ? "occupied" : "true_count";
    json items = json::array();
    for (std::size_t i = 0; i < s.images.size(); ++i) {
      items.push_back({{"file", detail::item_name(i)}, {label, s.labels[i]}});
    }
    detail::write_images(run_dir / "dataset", s.images);
    detail::write_text(run_dir / "dataset" / "manifest.json",
                       json{{"spec", to_json(c).at("dataset")}, {"items", items}}.dump(2) + "\n");
  } else {
    detail::write_text(run_dir / "corpus" / "corpus.txt", corpus_to_text(s.corpus));
    json idioms = json::array();
    for (const auto& st : s.corpus.idioms) {
      idioms.push_back({{"idiom", st.idiom},
                        {"target", st.target},
                        {"planned_frequency", st.planned_frequency},
                        {"occurrences", st.occurrences},
                        {"target_completions", st.target_completions}});
    }
    detail::write_text(run_dir / "corpus" / "idioms.json", idioms.dump(2) + "\n");
  }
}

inline SynthOutput load_synth(const fs::path& run_dir, const ProbeConfig& c) {
  SynthOutput s;
  if (c.uses_images()) {
    const fs::path dir = run_dir / "dataset";
    const json manifest = detail::read_json(dir / "manifest.json");
    const char* label = c.kind == ProbeKind::inpainting ? "occupied" : "true_count";
    detail::guard_json(dir / "manifest.json", [&] {
      for (const auto& item : manifest.at("items")) {
        s.images.push_back(read_pgm(dir / item.at("file").get<std::string>()));
        s.labels.push_back(item.at(label).get<int>());
      }
      return 0;
    });
    if (s.images.empty()) throw_io("dataset manifest lists no images");
  } else {
    const fs::path dir = run_dir / "corpus";
    std::istringstream lines(detail::read_text(dir / "corpus.txt"));
    std::string line;
    while (std::getline(lines, line)) {
      auto tokens = lm::tokenize(line);
      if (!tokens.empty()) s.corpus.sentences.push_back(std::move(tokens));
    }
    const json idioms = detail::read_json(dir / "idioms.json");
    detail::guard_json(dir / "idioms.json", [&] {
      for (const auto& st : idioms) {
        s.corpus.idioms.push_back({st.at("idiom").get<std::string>(), st.at("target").get<std::string>(),
                                   st.at("planned_frequency").get<double>(), st.at("occurrences").get<int>(),
                                   st.at("target_completions").get<int>()});
      }
      return 0;
    });
  }
  return s;
}

inline void save_model(const fs::path& run_dir, const TrainedModel& m) {
  const fs::path dir = run_dir / "model";
  fs::create_directories(dir);
  if (m.denoiser) {
    nn::save_checkpoint(dir / "denoiser.glnn", m.denoiser->mlp);
    detail::write_text(dir / "denoiser.json", diffusion::sidecar_json(*m.denoiser, m.schedule).dump(2) + "\n");
    detail::write_text(dir / "training.json", json{{"loss_curve", m.loss_curve}}.dump(2) + "\n");
  }
  if (m.ngram) detail::write_text(dir / "ngram.json", lm::to_json(*m.ngram).dump() + "\n");
}

inline TrainedModel load_model(const fs::path& run_dir, const ProbeConfig& c) {
  const fs::path dir = run_dir / "model";
  TrainedModel m;
  if (c.uses_images()) {
    auto loaded = diffusion::model_from_files(detail::read_json(dir / "denoiser.json"),
                                              nn::load_checkpoint(dir / "denoiser.glnn"));
    m.denoiser = std::move(loaded.model);
    m.schedule = std::move(loaded.schedule);
    const json training = detail::read_json(dir / "training.json");
    m.loss_curve = detail::guard_json(dir / "training.json",
                                      [&] { return training.at("loss_curve").get<std::vector<double>>(); });
  } else {
    const json j = detail::read_json(dir / "ngram.json");
    m.ngram = detail::guard_json(dir / "ngram.json", [&] { return lm::ngram_from_json(j); });
  }
  return m;
}

inline void save_generations(const fs::path& run_dir, const ProbeConfig& c, const Generations& g,
                             const std::vector<int>& measured) {
  if (!c.uses_images()) return;
  const char* label = c.kind == ProbeKind::inpainting ? "filled" : "count";
  json items = json::array();
  for (std::size_t i = 0; i < g.images.size(); ++i) {
    items.push_back({{"file", detail::item_name(i)}, {label, measured[i]}});
  }
  detail::write_images(run_dir / "samples", g.images);
  if (!g.inputs.empty()) detail::write_images(run_dir / "inputs", g.inputs);
  detail::write_text(run_dir / "samples" / "index.json", json{{"items", items}}.dump(2) + "\n");
}

/// Reads the generated images back and re-measures them.
inline std::vector<int> load_measurements(const fs::path& run_dir, const ProbeConfig& c) {
  if (!c.uses_images()) return {};
  const fs::path dir = run_dir / "samples";
  const json index = detail::read_json(dir / "index.json");
  std::vector<ImageGrid> images;
  detail::guard_json(dir / "index.json", [&] {
    for (const auto& item : index.at("items")) images.push_back(read_pgm(dir / item.at("file").get<std::string>()));
    return 0;
  });
  if (images.empty()) throw_io("sample index lists no images");
  return measure(c, images);
}

inline void save_report(const fs::path& run_dir, const GenericityReport& r) {
  detail::write_text(run_dir / "report.json", report_text(r));
  detail::write_text(run_dir / "scores.csv", scores_csv(r.scores));
  if (r.train_histogram) {
    detail::write_text(run_dir / "histograms.csv", histograms_csv(*r.train_histogram, *r.generated_histogram));
  }
}

// ---------------------------------------------------------------------------
// Whole pipelines
// ---------------------------------------------------------------------------

struct RunOptions {
  int jobs = 1;
  /// When set, every stage persists its artifacts here.
  std::optional<fs::path> run_dir;
  std::function<void(int, double)> on_epoch;
  std::function<void(const std::string&)> on_stage;
};

/// Re-labels errors with the pipeline stage they came from.
template <typename Fn>
auto run_stage(const std::string& name, const RunOptions& opt, Fn&& fn) {
  if (opt.on_stage) opt.on_stage(name);
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), "stage '" + name + "': " + e.what());
  }
}

inline GenericityReport run_probe(const ProbeConfig& c, const RunOptions& opt = {}) {
  c.validate();
  if (opt.run_dir) save_config(*opt.run_dir, c);
  const SynthOutput synth = run_stage("synth", opt, [&] {
    auto s = synthesize(c);
    if (opt.run_dir) save_synth(*opt.run_dir, c, s);
    return s;
  });
  const TrainedModel model = run_stage("train", opt, [&] {
    auto m = train_models(c, synth, opt.on_epoch);
    if (opt.run_dir) save_model(*opt.run_dir, m);
    return m;
  });
  const std::vector<int> measured = run_stage("generate", opt, [&] {
    const Generations g = generate(c, model, opt.jobs);
    auto values = measure(c, g.images);
    if (opt.run_dir) save_generations(*opt.run_dir, c, g, values);
    return values;
  });
  return run_stage("report", opt, [&] {
    auto r = build_report(c, synth, model, measured);
    if (opt.run_dir) save_report(*opt.run_dir, r);
    return r;
  });
}

namespace detail {

inline GenericityReport run_kind(ProbeKind expected, const ProbeConfig& c, const RunOptions& opt) {
  if (c.kind != expected) {
    throw_invalid(std::string("expected a ") + to_string(expected) + " probe config, got " + to_string(c.kind));
  }
  return run_probe(c, opt);
}

}  // namespace detail

/// Trains on the circle world, samples, and compares count histograms.
inline GenericityReport run_distribution_probe(const ProbeConfig& c, const RunOptions& opt = {}) {
  return detail::run_kind(ProbeKind::distribution, c, opt);
}

/// Trains on scenes whose region is occupied with the configured rate and
/// reports how often inpainting refills the masked region.
inline GenericityReport run_inpainting_probe(const ProbeConfig& c, const RunOptions& opt = {}) {
  return detail::run_kind(ProbeKind::inpainting, c, opt);
}

/// Trains the n-gram model on the idiom corpus and reports completion
/// probabilities and greedy completions.
inline GenericityReport run_completion_probe(const ProbeConfig& c, const RunOptions& opt = {}) {
  return detail::run_kind(ProbeKind::completion, c, opt);
}

/// Spearman correlation between planned rung frequencies and measured
/// reproduction scores, on the text or the image basis.
inline GenericityReport run_frequency_ladder(const ProbeConfig& c, const RunOptions& opt = {}) {
  return detail::run_kind(ProbeKind::ladder, c, opt);
}

}  // namespace glab::probes
