#pragma once

// Run configuration: a JSON document with top-level keys probe, seed,
// dataset, model, sampling and output_dir. Missing optional keys take the
// probe defaults; unknown keys are errors. Every violation is collected and
// reported together, each prefixed with its key path.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "glab/error.hpp"
#include "glab/probes.hpp"
#include "json.hpp"

namespace glab {

struct RunConfig {
  probes::ProbeConfig probe;
  std::string output_dir = "runs";

  /// Run directory: output_dir/<config hash>. The hash covers the probe
  /// config only, so moving the output root does not rename runs.
  std::filesystem::path run_dir() const { return std::filesystem::path(output_dir) / probes::config_hash(probe); }
};

namespace detail {

class SchemaReader {
 public:
  std::vector<std::string> errors;

  void fail(const std::string& path, const std::string& message) { errors.push_back(path + ": " + message); }

  /// Flags keys of `obj` outside `allowed`.
  void only(const nlohmann::json& obj, const std::string& path, const std::set<std::string>& allowed) {
    for (const auto& [key, unused] : obj.items()) {
      if (!allowed.count(key)) fail(join(path, key), "unknown key");
    }
  }

  const nlohmann::json* object(const nlohmann::json& parent, const std::string& path, const std::string& key) {
    if (!parent.contains(key)) return nullptr;
    const auto& v = parent.at(key);
    if (!v.is_object()) {
      fail(join(path, key), "expected an object");
      return nullptr;
    }
    return &v;
  }

  void integer(const nlohmann::json& obj, const std::string& path, const std::string& key, int& out, int min,
               int max = 1 << 30) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_number_integer()) return fail(join(path, key), "expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < min || x > max) {
      return fail(join(path, key), "must lie in [" + std::to_string(min) + ", " + std::to_string(max) + "]");
    }
    out = static_cast<int>(x);
  }

  void number(const nlohmann::json& obj, const std::string& path, const std::string& key, double& out, double lo,
              double hi, bool open_lo = false, bool open_hi = false) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_number()) return fail(join(path, key), "expected a number");
    const double x = v.get<double>();
    const bool ok = (open_lo ? x > lo : x >= lo) && (open_hi ? x < hi : x <= hi);
    if (!ok) {
      std::ostringstream range;
      range << (open_lo ? "(" : "[") << lo << ", " << hi << (open_hi ? ")" : "]");
      return fail(join(path, key), "must lie in " + range.str());
    }
    out = x;
  }

  void text(const nlohmann::json& obj, const std::string& path, const std::string& key, std::string& out) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_string() || v.get<std::string>().empty()) return fail(join(path, key), "expected a non-empty string");
    out = v.get<std::string>();
  }

  void words(const nlohmann::json& obj, const std::string& path, const std::string& key,
             std::vector<std::string>& out) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    std::vector<std::string> result;
    bool ok = v.is_array();
    if (ok) {
      for (const auto& w : v) {
        if (!w.is_string() || w.get<std::string>().empty()) {
          ok = false;
          break;
        }
        result.push_back(w.get<std::string>());
      }
    }
    if (!ok) return fail(join(path, key), "expected an array of non-empty strings");
    out = std::move(result);
  }

  void counts(const nlohmann::json& obj, const std::string& path, const std::string& key,
              std::map<int, double>& out) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    const std::string p = join(path, key);
    if (!v.is_object() || v.empty()) return fail(p, "expected a non-empty object of count -> proportion");
    std::map<int, double> result;
    double total = 0.0;
    const std::size_t before = errors.size();
    for (const auto& [k, x] : v.items()) {
      int count = -1;
      try {
        std::size_t used = 0;
        count = std::stoi(k, &used);
        if (used != k.size()) count = -1;
      } catch (const std::exception&) {
        count = -1;
      }
      if (count < 0) {
        fail(join(p, k), "keys must be non-negative integers");
        continue;
      }
      if (!x.is_number() || x.get<double>() < 0.0) {
        fail(join(p, k), "expected a non-negative number");
        continue;
      }
      result[count] = x.get<double>();
      total += x.get<double>();
    }
    if (errors.size() != before) return;
    if (std::abs(total - 1.0) > 1e-12) return fail(p, "proportions must sum to 1");
    out = std::move(result);
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }
};

inline void read_geometry(SchemaReader& r, const nlohmann::json& d, Canvas& canvas, RadiusRange& radii, int& pitch) {
  r.integer(d, "dataset", "width", canvas.width, 1, 4096);
  r.integer(d, "dataset", "height", canvas.height, 1, 4096);
  r.integer(d, "dataset", "radius_min", radii.min, 1, 1024);
  r.integer(d, "dataset", "radius_max", radii.max, 1, 1024);
  r.integer(d, "dataset", "lattice_pitch", pitch, 0, 4096);
  if (radii.max < radii.min) r.fail("dataset.radius_max", "must be >= radius_min");
}

inline void read_ladder(SchemaReader& r, const nlohmann::json& d, std::vector<LadderEntry>& out) {
  if (!d.contains("ladder")) return;
  const auto& v = d.at("ladder");
  if (!v.is_array()) return r.fail("dataset.ladder", "expected an array");
  std::vector<LadderEntry> ladder;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string path = "dataset.ladder[" + std::to_string(i) + "]";
    const auto& e = v[i];
    if (!e.is_object()) {
      r.fail(path, "expected an object");
      continue;
    }
    r.only(e, path, {"prefix", "target", "frequency", "distractors"});
    LadderEntry entry;
    std::string prefix;
    for (const char* key : {"prefix", "target", "frequency"}) {
      if (!e.contains(key)) r.fail(SchemaReader::join(path, key), "required");
    }
    r.text(e, path, "prefix", prefix);
    entry.prefix = lm::tokenize(prefix);
    r.text(e, path, "target", entry.target);
    r.number(e, path, "frequency", entry.frequency, 0.0, 1.0);
    r.words(e, path, "distractors", entry.distractors);
    if (entry.frequency < 1.0 && entry.distractors.empty() && e.contains("frequency")) {
      r.fail(SchemaReader::join(path, "distractors"), "required when frequency < 1");
    }
    ladder.push_back(std::move(entry));
  }
  out = std::move(ladder);
}

}  // namespace detail

/// Parses and validates a config document. Throws a config error listing
/// every violation.
inline RunConfig parse_config(const nlohmann::json& doc) {
  using probes::ProbeKind;
  detail::SchemaReader r;
  RunConfig cfg;
  auto& c = cfg.probe;
  if (!doc.is_object()) throw_config("config: expected a JSON object at the top level");

  r.only(doc, "", {"probe", "seed", "dataset", "model", "sampling", "output_dir"});
  if (!doc.contains("probe")) {
    r.fail("probe", "required (distribution, inpainting, completion or ladder)");
  } else if (!doc.at("probe").is_string() || !probes::parse_probe_kind(doc.at("probe").get<std::string>())) {
    r.fail("probe", "expected one of distribution, inpainting, completion, ladder");
  } else {
    c.kind = *probes::parse_probe_kind(doc.at("probe").get<std::string>());
  }
  if (!doc.contains("seed")) {
    r.fail("seed", "required");
  } else if (!doc.at("seed").is_number_integer() ||
             (!doc.at("seed").is_number_unsigned() && doc.at("seed").get<std::int64_t>() < 0)) {
    r.fail("seed", "expected a non-negative integer");
  } else {
    c.seed = doc.at("seed").get<std::uint64_t>();
  }
  r.text(doc, "", "output_dir", cfg.output_dir);

  const nlohmann::json empty = nlohmann::json::object();
  const auto* dp = r.object(doc, "", "dataset");
  const auto* mp = r.object(doc, "", "model");
  const auto* sp = r.object(doc, "", "sampling");
  const auto& d = dp ? *dp : empty;
  const auto& m = mp ? *mp : empty;
  const auto& s = sp ? *sp : empty;

  // The ladder basis decides which dataset schema applies.
  std::string basis = "text";
  if (c.kind == ProbeKind::ladder) {
    r.text(d, "dataset", "basis", basis);
    if (basis == "image") {
      c.basis = probes::LadderBasis::image;
      c.images.count_distribution = {{1, 0.4}, {4, 0.3}, {7, 0.2}, {10, 0.1}};
    } else if (basis != "text") {
      r.fail("dataset.basis", "expected text or image");
    }
  }
  const std::set<std::string> ladder_key = c.kind == ProbeKind::ladder ? std::set<std::string>{"basis"}
                                                                        : std::set<std::string>{};
  auto with = [](std::set<std::string> a, const std::set<std::string>& b) {
    a.insert(b.begin(), b.end());
    return a;
  };

  if (c.uses_images()) {
    const std::set<std::string> geometry{"width", "height", "size", "radius_min", "radius_max", "lattice_pitch"};
    if (c.kind == ProbeKind::inpainting) {
      auto& o = c.occupancy;
      r.only(d, "dataset", with(geometry, {"occupancy", "region", "background_counts"}));
      detail::read_geometry(r, d, o.canvas, o.radii, o.lattice_pitch);
      r.integer(d, "dataset", "size", o.dataset_size, 1);
      r.number(d, "dataset", "occupancy", o.occupancy, 0.0, 1.0);
      r.counts(d, "dataset", "background_counts", o.background_counts);
      if (d.contains("region")) {
        const auto& v = d.at("region");
        if (!v.is_array() || v.size() != 4 || !std::all_of(v.begin(), v.end(), [](const auto& x) {
              return x.is_number_integer();
            })) {
          r.fail("dataset.region", "expected [x, y, w, h] integers");
        } else {
          o.region = Rect{v[0].get<int>(), v[1].get<int>(), v[2].get<int>(), v[3].get<int>()};
        }
      }
      r.only(s, "sampling", {"inpaintings", "threshold", "min_area"});
      r.integer(s, "sampling", "inpaintings", c.sampling.inpaintings, 1);
    } else {
      auto& ds = c.images;
      r.only(d, "dataset", with(with(geometry, {"count_distribution"}), ladder_key));
      detail::read_geometry(r, d, ds.canvas, ds.radii, ds.lattice_pitch);
      r.integer(d, "dataset", "size", ds.dataset_size, 1);
      r.counts(d, "dataset", "count_distribution", ds.count_distribution);
      r.only(s, "sampling", {"samples", "threshold", "min_area"});
      r.integer(s, "sampling", "samples", c.sampling.samples, 1);
    }
    r.number(s, "sampling", "threshold", c.sampling.threshold, 0.0, 1.0, true, true);
    r.integer(s, "sampling", "min_area", c.sampling.min_area, 1);

    auto& ms = c.model;
    r.only(m, "model",
           {"hidden", "embedding_dim", "steps", "beta_min", "beta_max", "epochs", "batch_size", "learning_rate",
            "ema_decay", "lr_schedule"});
    if (m.contains("hidden")) {
      const auto& v = m.at("hidden");
      if (!v.is_array() || v.empty() || !std::all_of(v.begin(), v.end(), [](const auto& x) {
            return x.is_number_integer() && x.template get<std::int64_t>() >= 1 &&
                   x.template get<std::int64_t>() <= 65536;
          })) {
        r.fail("model.hidden", "expected a non-empty array of positive integers");
      } else {
        ms.hidden = v.get<std::vector<int>>();
      }
    }
    r.integer(m, "model", "embedding_dim", ms.embedding_dim, 2, 4096);
    if (ms.embedding_dim % 2 != 0) r.fail("model.embedding_dim", "must be even");
    r.integer(m, "model", "steps", ms.steps, 1, 100000);
    r.number(m, "model", "beta_min", ms.beta_min, 0.0, 1.0, true, true);
    r.number(m, "model", "beta_max", ms.beta_max, 0.0, 1.0, true, true);
    if (ms.beta_max < ms.beta_min) r.fail("model.beta_max", "must be >= beta_min");
    r.integer(m, "model", "epochs", ms.epochs, 0);
    r.integer(m, "model", "batch_size", ms.batch_size, 1);
    r.number(m, "model", "learning_rate", ms.learning_rate, 0.0, 1.0, true);
    r.number(m, "model", "ema_decay", ms.ema_decay, 0.0, 1.0, false, true);
    std::string schedule = ms.cosine_decay ? "cosine" : "constant";
    r.text(m, "model", "lr_schedule", schedule);
    if (schedule != "cosine" && schedule != "constant") r.fail("model.lr_schedule", "expected constant or cosine");
    ms.cosine_decay = schedule == "cosine";
  } else {
    auto& co = c.corpus;
    r.only(d, "dataset",
           with({"ladder", "size", "idiom_share", "fillers", "filler_min_len", "filler_max_len"}, ladder_key));
    detail::read_ladder(r, d, c.ladder);
    r.integer(d, "dataset", "size", co.size, 1);
    r.number(d, "dataset", "idiom_share", co.idiom_share, 0.0, 1.0, true);
    r.words(d, "dataset", "fillers", co.fillers);
    r.integer(d, "dataset", "filler_min_len", co.filler_min_len, 1, 1000);
    r.integer(d, "dataset", "filler_max_len", co.filler_max_len, 1, 1000);
    if (co.filler_max_len < co.filler_min_len) r.fail("dataset.filler_max_len", "must be >= filler_min_len");
    r.only(m, "model", {"order"});
    r.integer(m, "model", "order", c.order, 1, 16);
    r.only(s, "sampling", {"max_len"});
    r.integer(s, "sampling", "max_len", c.sampling.max_len, 1, 1000);
  }

  if (r.errors.empty()) {
    try {
      c.validate();
    } catch (const Error& e) {
      r.fail("config", e.what());
    }
  }
  if (!r.errors.empty()) {
    std::string message = "invalid config (" + std::to_string(r.errors.size()) + " problem" +
                          (r.errors.size() == 1 ? "" : "s") + "):";
    for (const auto& e : r.errors) message += "\n  " + e;
    throw_config(message);
  }
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw_config("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

/// Resolved config, with every default filled in.
inline nlohmann::json to_json(const RunConfig& cfg) {
  auto j = probes::to_json(cfg.probe);
  j["output_dir"] = cfg.output_dir;
  return j;
}

}  // namespace glab
