#pragma once

// Controlled training worlds: circle scenes on a white canvas and idiom
// corpora with a planned completion-frequency ladder. Everything here is a
// pure function of its arguments and the seed / stream it is handed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "glab/error.hpp"
#include "glab/image.hpp"
#include "glab/random.hpp"

namespace glab {

struct Canvas {
  int width = 32;
  int height = 32;
};

struct RadiusRange {
  int min = 2;
  int max = 4;
};

/// Half-open pixel rectangle [x, x+w) x [y, y+h).
struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  Mask to_mask(int width, int height) const { return Mask::rectangle(width, height, x, y, w, h); }
  bool contains_pixel(int px, int py) const { return px >= x && px < x + w && py >= y && py < y + h; }
  friend bool operator==(const Rect&, const Rect&) = default;
};

struct Circle {
  double cx = 0.0;
  double cy = 0.0;
  int radius = 0;

  /// Pixel (px, py) is inked when its center lies within the radius.
  bool covers_pixel(int px, int py) const {
    const double dx = px + 0.5 - cx;
    const double dy = py + 0.5 - cy;
    return dx * dx + dy * dy <= static_cast<double>(radius) * radius;
  }

  friend bool operator==(const Circle&, const Circle&) = default;
};

struct CircleScene {
  Canvas canvas;
  std::vector<Circle> circles;
};

/// Where circle centers may land.
///
/// With lattice_pitch == 0 centers are continuous and uniform over the
/// positions that keep the disc inside the canvas. With a positive pitch,
/// centers are drawn uniformly from the cell centers of a pitch x pitch grid.
/// `keep_out` rejects any circle that would ink a pixel of the rectangle;
/// `inside` requires the whole disc to sit inside it.
struct PlacementRules {
  int lattice_pitch = 0;
  std::optional<Rect> keep_out;
  std::optional<Rect> inside;
};

inline constexpr int kMaxPlacementAttempts = 10'000;

inline bool fits_canvas(const Circle& c, const Canvas& canvas) {
  return c.cx - c.radius >= 0.0 && c.cy - c.radius >= 0.0 && c.cx + c.radius <= canvas.width &&
         c.cy + c.radius <= canvas.height;
}

/// Pairwise rule: center distance strictly greater than r_i + r_j + 1.
inline bool separated(const Circle& a, const Circle& b) {
  const double gap = a.radius + b.radius + 1.0;
  const double dx = a.cx - b.cx;
  const double dy = a.cy - b.cy;
  return dx * dx + dy * dy > gap * gap;
}

inline bool inks_rect(const Circle& c, const Rect& r) {
  const int x0 = std::max(r.x, static_cast<int>(std::floor(c.cx - c.radius)) - 1);
  const int x1 = std::min(r.x + r.w, static_cast<int>(std::ceil(c.cx + c.radius)) + 1);
  const int y0 = std::max(r.y, static_cast<int>(std::floor(c.cy - c.radius)) - 1);
  const int y1 = std::min(r.y + r.h, static_cast<int>(std::ceil(c.cy + c.radius)) + 1);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      if (c.covers_pixel(x, y)) return true;
    }
  }
  return false;
}

inline bool disc_inside_rect(const Circle& c, const Rect& r) {
  return c.cx - c.radius >= r.x && c.cy - c.radius >= r.y && c.cx + c.radius <= r.x + r.w &&
         c.cy + c.radius <= r.y + r.h;
}

namespace detail {

inline Circle propose_circle(const Canvas& canvas, RadiusRange radii, const PlacementRules& rules, Rng& rng) {
  Circle c;
  c.radius = static_cast<int>(rng.uniform_int(radii.min, radii.max));
  if (rules.lattice_pitch > 0) {
    const int cols = canvas.width / rules.lattice_pitch;
    const int rows = canvas.height / rules.lattice_pitch;
    c.cx = rules.lattice_pitch * (static_cast<double>(rng.uniform_int(0, cols - 1)) + 0.5);
    c.cy = rules.lattice_pitch * (static_cast<double>(rng.uniform_int(0, rows - 1)) + 0.5);
  } else {
    c.cx = rng.uniform(c.radius, canvas.width - c.radius);
    c.cy = rng.uniform(c.radius, canvas.height - c.radius);
  }
  return c;
}

}  // namespace detail

/// Adds one circle to `scene` by rejection sampling; capacity error after
/// kMaxPlacementAttempts rejected proposals.
inline void place_circle(CircleScene& scene, RadiusRange radii, const PlacementRules& rules, Rng& rng) {
  for (int attempt = 0; attempt < kMaxPlacementAttempts; ++attempt) {
    const Circle c = detail::propose_circle(scene.canvas, radii, rules, rng);
    if (!fits_canvas(c, scene.canvas)) continue;
    if (rules.keep_out && inks_rect(c, *rules.keep_out)) continue;
    if (rules.inside && !disc_inside_rect(c, *rules.inside)) continue;
    const bool clear = std::all_of(scene.circles.begin(), scene.circles.end(),
                                   [&c](const Circle& other) { return separated(c, other); });
    if (!clear) continue;
    scene.circles.push_back(c);
    return;
  }
  throw_capacity("could not place circle " + std::to_string(scene.circles.size() + 1) + " on a " +
                 std::to_string(scene.canvas.width) + "x" + std::to_string(scene.canvas.height) + " canvas after " +
                 std::to_string(kMaxPlacementAttempts) + " attempts");
}

inline void check_geometry(const Canvas& canvas, RadiusRange radii) {
  if (canvas.width < 1 || canvas.height < 1) throw_invalid("canvas dimensions must be positive");
  if (radii.min < 1 || radii.max < radii.min) throw_invalid("radius range must satisfy 1 <= min <= max");
  if (2 * radii.max > std::min(canvas.width, canvas.height)) throw_capacity("radius too large for canvas");
}

inline CircleScene gen_circle_scene(int count, Canvas canvas, RadiusRange radii, Rng& rng,
                                    const PlacementRules& rules = {}) {
  if (count < 0) throw_invalid("circle count must be non-negative");
  check_geometry(canvas, radii);
  CircleScene scene{canvas, {}};
  scene.circles.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) place_circle(scene, radii, rules, rng);
  return scene;
}

/// Hard-edge render: 0 where the pixel center lies within a circle, 1 elsewhere.
inline ImageGrid rasterize(const CircleScene& scene) {
  ImageGrid img(scene.canvas.width, scene.canvas.height, 1.0);
  for (const Circle& c : scene.circles) {
    const int x0 = std::max(0, static_cast<int>(std::floor(c.cx - c.radius)) - 1);
    const int x1 = std::min(img.width, static_cast<int>(std::ceil(c.cx + c.radius)) + 1);
    const int y0 = std::max(0, static_cast<int>(std::floor(c.cy - c.radius)) - 1);
    const int y1 = std::min(img.height, static_cast<int>(std::ceil(c.cy + c.radius)) + 1);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        if (c.covers_pixel(x, y)) img.at(x, y) = 0.0;
      }
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Image datasets
// ---------------------------------------------------------------------------

struct DatasetSpec {
  std::map<int, double> count_distribution{{2, 0.5}, {10, 0.5}};
  int dataset_size = 2000;
  Canvas canvas;
  RadiusRange radii{2, 3};
  int lattice_pitch = 8;
  std::uint64_t seed = 0;

  void validate() const {
    if (dataset_size < 1) throw_invalid("dataset_size must be >= 1");
    if (count_distribution.empty()) throw_invalid("count_distribution is empty");
    double total = 0.0;
    for (const auto& [count, p] : count_distribution) {
      if (count < 0) throw_invalid("circle counts must be non-negative");
      if (!(p >= 0.0)) throw_invalid("count proportions must be non-negative");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) throw_invalid("count proportions must sum to 1");
    if (lattice_pitch < 0) throw_invalid("lattice_pitch must be >= 0");
    check_geometry(canvas, radii);
  }
};

struct LabeledImage {
  ImageGrid image;
  int true_count = 0;
  CircleScene scene;
};

/// Inverse-CDF draw from a count distribution (keys in ascending order).
inline int draw_count(const std::map<int, double>& distribution, Rng& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  int last = distribution.begin()->first;
  for (const auto& [count, p] : distribution) {
    cumulative += p;
    if (p > 0.0) last = count;
    if (u < cumulative) return count;
  }
  return last;
}

/// Item i uses stream derive_seed(spec.seed, i), so items are independent of
/// generation order.
inline LabeledImage gen_dataset_item(const DatasetSpec& spec, std::size_t index) {
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(index)));
  const int count = draw_count(spec.count_distribution, rng);
  PlacementRules rules;
  rules.lattice_pitch = spec.lattice_pitch;
  CircleScene scene = gen_circle_scene(count, spec.canvas, spec.radii, rng, rules);
  ImageGrid image = rasterize(scene);
  return LabeledImage{std::move(image), count, std::move(scene)};
}

inline std::vector<LabeledImage> gen_image_dataset(const DatasetSpec& spec) {
  spec.validate();
  std::vector<LabeledImage> out;
  out.reserve(static_cast<std::size_t>(spec.dataset_size));
  for (int i = 0; i < spec.dataset_size; ++i) out.push_back(gen_dataset_item(spec, static_cast<std::size_t>(i)));
  return out;
}

/// Scenes for the inpainting probe: `background_count` circles kept clear of
/// `region`, plus, with probability `occupancy`, one circle fully inside it.
struct OccupancySpec {
  Rect region{4, 4, 10, 10};
  double occupancy = 0.5;
  std::map<int, double> background_counts{{3, 1.0}};
  int dataset_size = 2000;
  Canvas canvas;
  RadiusRange radii{2, 3};
  int lattice_pitch = 8;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(occupancy >= 0.0 && occupancy <= 1.0)) throw_invalid("occupancy must lie in [0, 1]");
    DatasetSpec probe{background_counts, dataset_size, canvas, radii, lattice_pitch, seed};
    probe.validate();
    if (region.w < 1 || region.h < 1 || region.x < 0 || region.y < 0 || region.x + region.w > canvas.width ||
        region.y + region.h > canvas.height) {
      throw_invalid("occupancy region must be a non-empty rectangle inside the canvas");
    }
  }
};

struct OccupancyItem {
  ImageGrid image;
  bool occupied = false;
  CircleScene scene;
};

inline OccupancyItem gen_occupancy_item(const OccupancySpec& spec, std::size_t index) {
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(index)));
  const bool occupied = rng.uniform() < spec.occupancy;
  const int background = draw_count(spec.background_counts, rng);
  CircleScene scene{spec.canvas, {}};
  if (occupied) {
    PlacementRules inside;
    inside.lattice_pitch = spec.lattice_pitch;
    inside.inside = spec.region;
    place_circle(scene, spec.radii, inside, rng);
  }
  PlacementRules outside;
  outside.lattice_pitch = spec.lattice_pitch;
  outside.keep_out = spec.region;
  for (int i = 0; i < background; ++i) place_circle(scene, spec.radii, outside, rng);
  ImageGrid image = rasterize(scene);
  return OccupancyItem{std::move(image), occupied, std::move(scene)};
}

inline std::vector<OccupancyItem> gen_occupancy_dataset(const OccupancySpec& spec) {
  spec.validate();
  std::vector<OccupancyItem> out;
  out.reserve(static_cast<std::size_t>(spec.dataset_size));
  for (int i = 0; i < spec.dataset_size; ++i) out.push_back(gen_occupancy_item(spec, static_cast<std::size_t>(i)));
  return out;
}

// ---------------------------------------------------------------------------
// Idiom corpora
// ---------------------------------------------------------------------------

struct LadderEntry {
  std::vector<std::string> prefix;
  std::string target;
  double frequency = 0.0;
  std::vector<std::string> distractors;
};

struct IdiomStats {
  std::string idiom;  // prefix tokens joined by spaces
  std::string target;
  double planned_frequency = 0.0;
  int occurrences = 0;
  int target_completions = 0;

  double empirical_rate() const { return occurrences == 0 ? 0.0 : static_cast<double>(target_completions) / occurrences; }
};

struct Corpus {
  std::vector<std::vector<std::string>> sentences;
  std::vector<IdiomStats> idioms;
};

/// Generic carrier words; disjoint from the idiom vocabulary used by the probes.
inline const std::vector<std::string>& default_fillers() {
  static const std::vector<std::string> words{
      "we",     "they",   "she",    "he",     "you",    "i",      "people", "friends", "neighbors", "children",
      "often",  "rarely", "always", "never",  "today",  "later",  "again",  "still",   "maybe",     "really",
      "walked", "talked", "waited", "smiled", "looked", "worked", "stayed", "moved",   "cooked",    "laughed",
      "near",   "around", "after",  "before", "during", "with",   "without","across", "beside",    "behind",
      "river",  "market", "garden", "station","kitchen","window", "street", "evening", "morning",   "winter"};
  return words;
}

/// Five rungs spanning 0.1..0.9. "play it by" has a single distractor that
/// takes the remaining 0.63, so its greedy completion is not the target.
inline std::vector<LadderEntry> default_idiom_ladder() {
  return {{{"once", "in", "a", "blue"}, "moon", 0.9, {"sky", "car", "shirt"}},
          {{"put", "words", "in", "someone", "s"}, "mouth", 0.74, {"hands", "head", "notes"}},
          {{"the", "tip", "of", "the"}, "iceberg", 0.5, {"spear", "tongue", "pen"}},
          {{"play", "it", "by"}, "ear", 0.37, {"yourself"}},
          {{"a", "piece", "of"}, "cake", 0.1, {"paper", "advice", "land"}}};
}

struct CorpusOptions {
  int size = 5000;
  /// Share of sentences that carry an idiom, split evenly across the ladder.
  double idiom_share = 0.4;
  std::vector<std::string> fillers = default_fillers();
  int filler_min_len = 4;
  int filler_max_len = 9;
  std::uint64_t seed = 0;
};

namespace detail {

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(v[i - 1], v[j]);
  }
}

inline std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

}  // namespace detail

/// Builds the ladder corpus. For an idiom with n occurrences, exactly
/// round(p * n) of them end in the target and the rest in a distractor chosen
/// uniformly from the entry's list; positions are shuffled.
inline Corpus gen_idiom_corpus(const std::vector<LadderEntry>& ladder, const CorpusOptions& options) {
  if (ladder.empty()) throw_invalid("idiom ladder is empty");
  if (options.size < 1) throw_invalid("corpus size must be >= 1");
  if (options.fillers.empty()) throw_invalid("filler vocabulary is empty");
  if (!(options.idiom_share > 0.0 && options.idiom_share <= 1.0)) throw_invalid("idiom_share must lie in (0, 1]");
  if (options.filler_min_len < 1 || options.filler_max_len < options.filler_min_len) {
    throw_invalid("filler sentence length range is invalid");
  }
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    const auto& e = ladder[i];
    if (e.prefix.empty() || e.target.empty()) throw_invalid("ladder entries need a prefix and a target");
    if (!(e.frequency >= 0.0 && e.frequency <= 1.0)) throw_invalid("ladder frequencies must lie in [0, 1]");
    if (e.frequency < 1.0 && e.distractors.empty()) {
      throw_invalid("ladder entry '" + detail::join(e.prefix) + "' needs distractors");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (ladder[j].prefix == e.prefix) throw_invalid("duplicate ladder prefix '" + detail::join(e.prefix) + "'");
    }
  }

  Rng rng(options.seed);
  const auto idiom_total = static_cast<int>(std::lround(options.idiom_share * options.size));
  const int per_idiom = std::max(1, idiom_total / static_cast<int>(ladder.size()));

  Corpus corpus;
  struct Slot {
    int idiom = -1;  // -1 marks a filler sentence
    std::string completion;
  };
  std::vector<Slot> slots;
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    const auto& e = ladder[i];
    const auto hits = static_cast<int>(std::lround(e.frequency * per_idiom));
    IdiomStats stats{detail::join(e.prefix), e.target, e.frequency, per_idiom, hits};
    corpus.idioms.push_back(stats);
    for (int k = 0; k < per_idiom; ++k) {
      std::string completion =
          k < hits ? e.target
                   : e.distractors[static_cast<std::size_t>(
                         rng.uniform_int(0, static_cast<std::int64_t>(e.distractors.size()) - 1))];
      slots.push_back({static_cast<int>(i), std::move(completion)});
    }
  }
  while (static_cast<int>(slots.size()) < options.size) slots.push_back({-1, {}});
  detail::shuffle(slots, rng);

  auto filler = [&](int n) {
    std::vector<std::string> words;
    for (int k = 0; k < n; ++k) {
      words.push_back(options.fillers[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(options.fillers.size()) - 1))]);
    }
    return words;
  };

  corpus.sentences.reserve(slots.size());
  for (const auto& slot : slots) {
    if (slot.idiom < 0) {
      corpus.sentences.push_back(
          filler(static_cast<int>(rng.uniform_int(options.filler_min_len, options.filler_max_len))));
      continue;
    }
    // Carrier: short lead-in, the idiom, its completion, short tail.
    std::vector<std::string> sentence = filler(static_cast<int>(rng.uniform_int(1, 3)));
    const auto& prefix = ladder[static_cast<std::size_t>(slot.idiom)].prefix;
    sentence.insert(sentence.end(), prefix.begin(), prefix.end());
    sentence.push_back(slot.completion);
    const auto tail = filler(static_cast<int>(rng.uniform_int(0, 2)));
    sentence.insert(sentence.end(), tail.begin(), tail.end());
    corpus.sentences.push_back(std::move(sentence));
  }
  return corpus;
}

inline std::string corpus_to_text(const Corpus& corpus) {
  std::string out;
  for (const auto& s : corpus.sentences) {
    out += detail::join(s);
    out += '\n';
  }
  return out;
}

}  // namespace glab
