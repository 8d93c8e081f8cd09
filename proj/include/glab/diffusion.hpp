#pragma once

// Minimal denoising diffusion model over ImageGrid pixels.
//
// Forward process:  x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps, with x_0 the
// image mapped to [-1, 1].
// Reverse process:  the MLP denoiser D(x_t, t) estimates x_0; each ancestral
// step draws x_{t-1} ~ N(mu_t(x_t, D), var_t) from the Gaussian posterior
// q(x_{t-1} | x_t, x_0 = D). The noise estimate the step implies is
// eps_hat = (x_t - sqrt(abar_t) D) / sqrt(1 - abar_t).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <thread>
#include <vector>

#include "glab/error.hpp"
#include "glab/image.hpp"
#include "glab/nnlite.hpp"
#include "glab/random.hpp"
#include "json.hpp"

namespace glab::diffusion {

using nn::Matrix;

/// Pixel vector in the diffusion domain [-1, 1] (noised values leave it).
using Latent = std::vector<double>;

struct NoiseSchedule {
  int steps = 0;  // T
  double beta_min = 0.0;
  double beta_max = 0.0;
  std::vector<double> beta;       // index t-1 for t = 1..T
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // prod_{s<=t} alpha_s

  double beta_at(int t) const { return beta[static_cast<std::size_t>(t - 1)]; }
  double alpha_at(int t) const { return alpha[static_cast<std::size_t>(t - 1)]; }
  /// abar_0 = 1 by convention.
  double alpha_bar_at(int t) const { return t == 0 ? 1.0 : alpha_bar[static_cast<std::size_t>(t - 1)]; }
};

inline constexpr int kDefaultSteps = 200;
inline constexpr double kDefaultBetaMin = 1e-4;
/// abar_T is about 0.0022 at T = 200.
inline constexpr double kDefaultBetaMax = 0.06;

/// Linear betas: beta_t = beta_min + (t-1)/(T-1) (beta_max - beta_min).
inline NoiseSchedule make_schedule(int steps, double beta_min, double beta_max) {
  if (steps < 1) throw_invalid("schedule needs T >= 1");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
    throw_invalid("schedule needs 0 < beta_min <= beta_max < 1");
  }
  NoiseSchedule s;
  s.steps = steps;
  s.beta_min = beta_min;
  s.beta_max = beta_max;
  double running = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double b =
        steps == 1 ? beta_min : beta_min + static_cast<double>(t - 1) / (steps - 1) * (beta_max - beta_min);
    s.beta.push_back(b);
    s.alpha.push_back(1.0 - b);
    running *= 1.0 - b;
    s.alpha_bar.push_back(running);
  }
  return s;
}

inline double to_signed(double pixel) { return 2.0 * pixel - 1.0; }
inline double to_pixel(double signed_value) { return std::clamp((signed_value + 1.0) / 2.0, 0.0, 1.0); }

inline Latent to_latent(const ImageGrid& img) {
  Latent x(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) x[i] = to_signed(img.values[i]);
  return x;
}

inline ImageGrid to_image(std::span<const double> x, int width, int height) {
  ImageGrid img(width, height);
  for (std::size_t i = 0; i < img.size(); ++i) img.values[i] = to_pixel(x[i]);
  return img;
}

/// q(x_t | x_0) evaluated at a given noise draw.
inline Latent forward_noise(const ImageGrid& x0, int t, std::span<const double> eps, const NoiseSchedule& schedule) {
  if (t < 1 || t > schedule.steps) throw_invalid("forward_noise: t out of range");
  if (eps.size() != x0.size()) throw_invalid("forward_noise: noise shape differs from image");
  const double a = std::sqrt(schedule.alpha_bar_at(t));
  const double s = std::sqrt(1.0 - schedule.alpha_bar_at(t));
  Latent out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * to_signed(x0.values[i]) + s * eps[i];
  return out;
}

/// Sinusoidal embedding: [sin(t f_0) .. sin(t f_{h-1}), cos(t f_0) .. cos(t f_{h-1})],
/// f_i = 10000^(-i/h), h = dim/2.
inline void time_embedding(int t, std::span<double> out) {
  const std::size_t half = out.size() / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    out[i] = std::sin(t * freq);
    out[half + i] = std::cos(t * freq);
  }
}

struct DenoiserConfig {
  int width = 32;
  int height = 32;
  int embedding_dim = 32;
  std::vector<int> hidden{256, 256};
};

/// MLP over [flattened x_t, time embedding] -> estimate of x_0 (flattened).
struct DenoiserModel {
  nn::MlpParams mlp;
  int width = 32;
  int height = 32;
  int embedding_dim = 32;

  int pixels() const { return width * height; }

  void validate() const {
    if (embedding_dim < 2 || embedding_dim % 2 != 0) throw_invalid("time embedding dimension must be even and >= 2");
    if (mlp.layer_sizes.empty() || mlp.input_size() != pixels() + embedding_dim || mlp.output_size() != pixels()) {
      throw_invalid("denoiser layer sizes do not match image and embedding dimensions");
    }
  }

  friend bool operator==(const DenoiserModel&, const DenoiserModel&) = default;
};

inline DenoiserModel make_denoiser(const DenoiserConfig& config, std::uint64_t seed) {
  std::vector<int> sizes{config.width * config.height + config.embedding_dim};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(config.width * config.height);
  DenoiserModel m{nn::mlp_init(sizes, seed), config.width, config.height, config.embedding_dim};
  m.validate();
  return m;
}

/// Builds the MLP input rows [x_t | emb(t)].
inline Matrix denoiser_input(const DenoiserModel& model, const Matrix& noised, std::span<const int> steps) {
  const auto p = static_cast<Eigen::Index>(model.pixels());
  Matrix in(noised.rows(), p + model.embedding_dim);
  in.leftCols(p) = noised;
  std::vector<double> emb(static_cast<std::size_t>(model.embedding_dim));
  for (Eigen::Index r = 0; r < noised.rows(); ++r) {
    time_embedding(steps[static_cast<std::size_t>(r)], emb);
    for (int k = 0; k < model.embedding_dim; ++k) in(r, p + k) = emb[static_cast<std::size_t>(k)];
  }
  return in;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainOptions {
  int epochs = 200;
  int batch_size = 64;
  nn::AdamHyper adam{};
  /// Exponential moving average of the weights; 0 disables it. When enabled
  /// the returned model carries the averaged weights.
  double ema_decay = 0.0;
  /// Anneal the learning rate along a half cosine, from adam.learning_rate in
  /// the first epoch to 0 after the last.
  bool cosine_decay = false;
  std::uint64_t seed = 0;
};

struct TrainResult {
  DenoiserModel model;
  std::vector<double> loss_curve;  // mean per-pixel squared error, one entry per epoch
};

/// Minimizes the mean squared error between x_0 and D(x_t, t) with t uniform
/// in 1..T and fresh Gaussian noise per example. One stream drives shuffling,
/// step and noise draws, so the run is a function of the seed.
inline TrainResult train(DenoiserModel model, std::span<const ImageGrid> dataset, const NoiseSchedule& schedule,
                         const TrainOptions& options,
                         const std::function<void(int, double)>& on_epoch = {}) {
  model.validate();
  if (options.epochs < 0) throw_invalid("epochs must be >= 0");
  if (options.batch_size < 1) throw_invalid("batch_size must be >= 1");
  TrainResult result{std::move(model), {}};
  if (options.epochs == 0) return result;
  if (dataset.empty()) throw_invalid("cannot train on an empty dataset");
  DenoiserModel& m = result.model;
  for (const auto& img : dataset) {
    if (img.width != m.width || img.height != m.height) throw_invalid("dataset image dimensions differ from model");
  }

  const auto p = static_cast<Eigen::Index>(m.pixels());
  Matrix clean(static_cast<Eigen::Index>(dataset.size()), p);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (Eigen::Index k = 0; k < p; ++k) clean(static_cast<Eigen::Index>(i), k) = to_signed(dataset[i].values[static_cast<std::size_t>(k)]);
  }

  Rng rng(options.seed);
  nn::AdamState adam = nn::AdamState::fresh(m.mlp, options.adam);
  if (!(options.ema_decay >= 0.0 && options.ema_decay < 1.0)) throw_invalid("ema_decay must lie in [0, 1)");
  nn::MlpParams ema = m.mlp;
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    if (options.cosine_decay) {
      const double progress = static_cast<double>(epoch) / static_cast<double>(options.epochs);
      adam.hyper.learning_rate = options.adam.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    }
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
      const auto b = static_cast<Eigen::Index>(end - start);
      Matrix target(b, p);
      Matrix noised(b, p);
      std::vector<int> steps(static_cast<std::size_t>(b));
      for (Eigen::Index r = 0; r < b; ++r) {
        target.row(r) = clean.row(static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(r)]));
        const int t = static_cast<int>(rng.uniform_int(1, schedule.steps));
        steps[static_cast<std::size_t>(r)] = t;
        const double a = std::sqrt(schedule.alpha_bar_at(t));
        const double s = std::sqrt(1.0 - schedule.alpha_bar_at(t));
        for (Eigen::Index k = 0; k < p; ++k) noised(r, k) = a * target(r, k) + s * rng.normal();
      }
      const nn::ForwardCache cache = nn::forward_batch(m.mlp, denoiser_input(m, noised, steps));
      const Matrix diff = cache.output() - target;
      const double batch_loss = diff.squaredNorm() / static_cast<double>(b * p);
      if (!std::isfinite(batch_loss)) {
        throw_numeric("non-finite training loss in epoch " + std::to_string(epoch));
      }
      epoch_loss += batch_loss * static_cast<double>(b);
      const Matrix grad = diff * (2.0 / static_cast<double>(b * p));
      nn::adam_step(m.mlp, nn::backward_batch(m.mlp, cache, grad), adam);
      if (options.ema_decay > 0.0) {
        const double d = options.ema_decay;
        for (std::size_t k = 0; k < ema.num_layers(); ++k) {
          ema.weights[k] = d * ema.weights[k] + (1.0 - d) * m.mlp.weights[k];
          ema.biases[k] = d * ema.biases[k] + (1.0 - d) * m.mlp.biases[k];
        }
      }
    }
    epoch_loss /= static_cast<double>(order.size());
    result.loss_curve.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  if (options.ema_decay > 0.0) m.mlp = std::move(ema);
  return result;
}

// ---------------------------------------------------------------------------
// Sampling and inpainting
// ---------------------------------------------------------------------------

/// Rows processed together. Fixed so results do not depend on --jobs.
inline constexpr std::size_t kSampleChunk = 50;

namespace detail {

// x_0 estimate for every row at a common step t, clamped to [-1, 1].
inline Matrix estimate_clean(const DenoiserModel& model, const Matrix& x, int t) {
  const std::vector<int> steps(static_cast<std::size_t>(x.rows()), t);
  Matrix x0 = nn::forward_batch(model.mlp, denoiser_input(model, x, steps)).output();
  return x0.cwiseMax(-1.0).cwiseMin(1.0);
}

// One ancestral step t -> t-1 in place; noise rows come from each row's stream.
inline void reverse_step(const DenoiserModel& model, const NoiseSchedule& schedule, Matrix& x, int t,
                         std::vector<Rng>& streams) {
  const Matrix x0 = estimate_clean(model, x, t);
  const double ab = schedule.alpha_bar_at(t);
  const double ab_prev = schedule.alpha_bar_at(t - 1);
  const double beta = schedule.beta_at(t);
  const double c_clean = std::sqrt(ab_prev) * beta / (1.0 - ab);
  const double c_noisy = std::sqrt(schedule.alpha_at(t)) * (1.0 - ab_prev) / (1.0 - ab);
  x = c_clean * x0 + c_noisy * x;
  if (t > 1) {
    const double sigma = std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab));
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      Rng& rng = streams[static_cast<std::size_t>(r)];
      for (Eigen::Index k = 0; k < x.cols(); ++k) x(r, k) += sigma * rng.normal();
    }
  }
}

// Runs fn(chunk_index) for every chunk on up to `jobs` threads.
inline void for_each_chunk(std::size_t chunks, int jobs, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || chunks <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) fn(c);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < std::min(workers, chunks); ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t c = w; c < chunks; c += workers) fn(c);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

/// n ancestral samples. Sample i draws all of its noise from the stream
/// derive_seed(seed, i). The result is a function of (model, schedule, n,
/// seed) and does not depend on `jobs`.
inline std::vector<ImageGrid> sample(const DenoiserModel& model, const NoiseSchedule& schedule, std::size_t n,
                                     std::uint64_t seed, int jobs = 1) {
  model.validate();
  std::vector<ImageGrid> out(n);
  const std::size_t chunks = (n + kSampleChunk - 1) / kSampleChunk;
  detail::for_each_chunk(chunks, jobs, [&](std::size_t c) {
    const std::size_t first = c * kSampleChunk;
    const std::size_t count = std::min(kSampleChunk, n - first);
    std::vector<Rng> streams;
    for (std::size_t i = 0; i < count; ++i) streams.emplace_back(derive_seed(seed, static_cast<std::uint64_t>(first + i)));
    Matrix x(static_cast<Eigen::Index>(count), model.pixels());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (Eigen::Index k = 0; k < x.cols(); ++k) x(r, k) = streams[static_cast<std::size_t>(r)].normal();
    }
    for (int t = schedule.steps; t >= 1; --t) detail::reverse_step(model, schedule, x, t, streams);
    if (!x.allFinite()) throw_numeric("non-finite values while sampling");
    for (std::size_t i = 0; i < count; ++i) {
      const Eigen::RowVectorXd row = x.row(static_cast<Eigen::Index>(i));
      out[first + i] = to_image(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())),
                                model.width, model.height);
    }
  });
  return out;
}

/// Inpaints several images that share one mask (true = known pixel). After
/// every reverse step the known pixels are replaced by a fresh forward-noised
/// copy of the known image at the new step; the returned images equal the
/// inputs exactly on known pixels. Image i uses stream derive_seed(seed, i).
inline std::vector<ImageGrid> inpaint_batch(const DenoiserModel& model, const NoiseSchedule& schedule,
                                            std::span<const ImageGrid> known, const Mask& mask, std::uint64_t seed,
                                            int jobs = 1) {
  model.validate();
  if (mask.width != model.width || mask.height != model.height) throw_invalid("inpaint: mask shape differs from model");
  for (const auto& img : known) {
    if (img.width != model.width || img.height != model.height) throw_invalid("inpaint: image shape differs from model");
  }
  const auto p = static_cast<Eigen::Index>(model.pixels());
  std::vector<ImageGrid> out(known.size());
  const std::size_t chunks = (known.size() + kSampleChunk - 1) / kSampleChunk;

  detail::for_each_chunk(chunks, jobs, [&](std::size_t c) {
    const std::size_t first = c * kSampleChunk;
    const std::size_t count = std::min(kSampleChunk, known.size() - first);
    std::vector<Rng> streams;
    for (std::size_t i = 0; i < count; ++i) streams.emplace_back(derive_seed(seed, static_cast<std::uint64_t>(first + i)));

    Matrix clean(static_cast<Eigen::Index>(count), p);
    for (std::size_t i = 0; i < count; ++i) {
      for (Eigen::Index k = 0; k < p; ++k) {
        clean(static_cast<Eigen::Index>(i), k) = to_signed(known[first + i].values[static_cast<std::size_t>(k)]);
      }
    }
    auto overwrite_known = [&](Matrix& x, int t) {
      const double a = std::sqrt(schedule.alpha_bar_at(t));
      const double s = std::sqrt(1.0 - schedule.alpha_bar_at(t));
      for (Eigen::Index r = 0; r < x.rows(); ++r) {
        Rng& rng = streams[static_cast<std::size_t>(r)];
        for (Eigen::Index k = 0; k < p; ++k) {
          if (mask[static_cast<std::size_t>(k)]) x(r, k) = a * clean(r, k) + s * rng.normal();
        }
      }
    };

    Matrix x(static_cast<Eigen::Index>(count), p);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (Eigen::Index k = 0; k < p; ++k) x(r, k) = streams[static_cast<std::size_t>(r)].normal();
    }
    overwrite_known(x, schedule.steps);
    for (int t = schedule.steps; t >= 1; --t) {
      detail::reverse_step(model, schedule, x, t, streams);
      if (t > 1) overwrite_known(x, t - 1);
    }
    if (!x.allFinite()) throw_numeric("non-finite values while inpainting");
    for (std::size_t i = 0; i < count; ++i) {
      ImageGrid img(model.width, model.height);
      for (Eigen::Index k = 0; k < p; ++k) {
        const auto idx = static_cast<std::size_t>(k);
        img.values[idx] = mask[idx] ? known[first + i].values[idx] : to_pixel(x(static_cast<Eigen::Index>(i), k));
      }
      out[first + i] = std::move(img);
    }
  });
  return out;
}

inline ImageGrid inpaint(const DenoiserModel& model, const NoiseSchedule& schedule, const ImageGrid& known,
                         const Mask& mask, std::uint64_t seed) {
  if (mask.width != known.width || mask.height != known.height) throw_invalid("inpaint: mask shape differs from image");
  return inpaint_batch(model, schedule, std::span<const ImageGrid>(&known, 1), mask, seed).front();
}

// ---------------------------------------------------------------------------
// Checkpoint sidecar
// ---------------------------------------------------------------------------

inline nlohmann::json sidecar_json(const DenoiserModel& model, const NoiseSchedule& schedule) {
  return {{"format", "glab-denoiser"},
          {"prediction", "x0"},
          {"width", model.width},
          {"height", model.height},
          {"embedding_dim", model.embedding_dim},
          {"layer_sizes", model.mlp.layer_sizes},
          {"schedule", {{"steps", schedule.steps}, {"beta_min", schedule.beta_min}, {"beta_max", schedule.beta_max}}}};
}

struct LoadedModel {
  DenoiserModel model;
  NoiseSchedule schedule;
};

inline LoadedModel model_from_files(const nlohmann::json& sidecar, nn::MlpParams params) {
  try {
    LoadedModel out;
    out.model.mlp = std::move(params);
    out.model.width = sidecar.at("width").get<int>();
    out.model.height = sidecar.at("height").get<int>();
    out.model.embedding_dim = sidecar.at("embedding_dim").get<int>();
    const auto& s = sidecar.at("schedule");
    out.schedule = make_schedule(s.at("steps").get<int>(), s.at("beta_min").get<double>(), s.at("beta_max").get<double>());
    out.model.validate();
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw_io(std::string("bad model sidecar: ") + e.what());
  }
}

}  // namespace glab::diffusion
