#pragma once

// Dense MLP with hand-written reverse mode and Adam. Hidden layers use tanh,
// the output layer is linear. Batches are row-major in the sense that each
// row of an input matrix is one example.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "glab/error.hpp"
#include "glab/random.hpp"

namespace glab::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct MlpParams {
  std::vector<int> layer_sizes;
  std::vector<Matrix> weights;  // layer k: layer_sizes[k] x layer_sizes[k+1]
  std::vector<Vector> biases;   // layer k: layer_sizes[k+1]

  std::size_t num_layers() const { return weights.size(); }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) n += weights[k].size() + biases[k].size();
    return n;
  }

  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }

  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    if (a.layer_sizes != b.layer_sizes) return false;
    for (std::size_t k = 0; k < a.weights.size(); ++k) {
      if (a.weights[k] != b.weights[k] || a.biases[k] != b.biases[k]) return false;
    }
    return true;
  }
};

/// Gradients share the parameter layout.
using MlpGrads = MlpParams;

/// Post-activation values of every layer; activations[0] is the input and
/// activations.back() the (linear) output.
struct ForwardCache {
  std::vector<Matrix> activations;

  const Matrix& output() const { return activations.back(); }
};

inline void check_layer_sizes(std::span<const int> layer_sizes) {
  if (layer_sizes.size() < 2) throw_invalid("mlp needs at least 2 layer sizes");
  for (int s : layer_sizes) {
    if (s < 1) throw_invalid("mlp layer sizes must be positive, got " + std::to_string(s));
  }
}

/// Zero-filled parameters of the given shape.
inline MlpParams zeros_like_layout(std::span<const int> layer_sizes) {
  check_layer_sizes(layer_sizes);
  MlpParams p;
  p.layer_sizes.assign(layer_sizes.begin(), layer_sizes.end());
  for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k) {
    p.weights.push_back(Matrix::Zero(layer_sizes[k], layer_sizes[k + 1]));
    p.biases.push_back(Vector::Zero(layer_sizes[k + 1]));
  }
  return p;
}

inline MlpParams zeros_like(const MlpParams& params) { return zeros_like_layout(params.layer_sizes); }

/// Xavier-uniform weights, U(-b, b) with b = sqrt(6 / (fan_in + fan_out)); zero biases.
/// Weights are drawn layer by layer in row-major order from one stream.
inline MlpParams mlp_init(std::span<const int> layer_sizes, std::uint64_t seed) {
  MlpParams p = zeros_like_layout(layer_sizes);
  Rng rng(seed);
  for (std::size_t k = 0; k < p.weights.size(); ++k) {
    Matrix& w = p.weights[k];
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-bound, bound);
    }
  }
  return p;
}

inline MlpParams mlp_init(std::initializer_list<int> layer_sizes, std::uint64_t seed) {
  return mlp_init(std::span<const int>(layer_sizes.begin(), layer_sizes.size()), seed);
}

/// Batched forward pass; each row of `input` is one example.
inline ForwardCache forward_batch(const MlpParams& params, const Matrix& input) {
  if (input.cols() != params.input_size()) {
    throw_invalid("mlp input width " + std::to_string(input.cols()) + " != layer size " +
                  std::to_string(params.input_size()));
  }
  ForwardCache cache;
  cache.activations.reserve(params.num_layers() + 1);
  cache.activations.push_back(input);
  for (std::size_t k = 0; k < params.num_layers(); ++k) {
    Matrix z = cache.activations.back() * params.weights[k];
    z.rowwise() += params.biases[k].transpose();
    if (k + 1 < params.num_layers()) z = z.array().tanh().matrix();
    cache.activations.push_back(std::move(z));
  }
  return cache;
}

/// Batched reverse pass. Gradients are summed over the rows of `output_grad`.
inline MlpGrads backward_batch(const MlpParams& params, const ForwardCache& cache,
                               const Matrix& output_grad) {
  const std::size_t layers = params.num_layers();
  if (cache.activations.size() != layers + 1) throw_invalid("forward cache does not match network depth");
  const Matrix& out = cache.output();
  if (output_grad.rows() != out.rows() || output_grad.cols() != out.cols()) {
    throw_invalid("output gradient shape does not match forward output");
  }
  MlpGrads grads;
  grads.layer_sizes = params.layer_sizes;
  grads.weights.resize(layers);
  grads.biases.resize(layers);

  Matrix delta = output_grad;  // dL/dz for the current layer
  for (std::size_t k = layers; k-- > 0;) {
    const Matrix& input = cache.activations[k];
    grads.weights[k].noalias() = input.transpose() * delta;
    grads.biases[k] = delta.colwise().sum().transpose();
    if (k == 0) break;
    Matrix upstream = delta * params.weights[k].transpose();
    // tanh'(z) = 1 - tanh(z)^2, and activations[k] holds tanh(z).
    delta = upstream.array() * (1.0 - input.array().square());
  }
  return grads;
}

/// Single-example forward pass.
inline std::pair<std::vector<double>, ForwardCache> mlp_forward(const MlpParams& params,
                                                                std::span<const double> input) {
  if (static_cast<int>(input.size()) != params.input_size()) {
    throw_invalid("mlp input length " + std::to_string(input.size()) + " != layer size " +
                  std::to_string(params.input_size()));
  }
  Matrix row(1, static_cast<Eigen::Index>(input.size()));
  for (std::size_t i = 0; i < input.size(); ++i) row(0, static_cast<Eigen::Index>(i)) = input[i];
  ForwardCache cache = forward_batch(params, row);
  const Matrix& out = cache.output();
  std::vector<double> output(out.data(), out.data() + out.size());
  return {std::move(output), std::move(cache)};
}

inline MlpGrads mlp_backward(const MlpParams& params, const ForwardCache& cache,
                             std::span<const double> output_grad) {
  if (static_cast<int>(output_grad.size()) != params.output_size()) {
    throw_invalid("output gradient length does not match output layer");
  }
  Matrix g(1, static_cast<Eigen::Index>(output_grad.size()));
  for (std::size_t i = 0; i < output_grad.size(); ++i) g(0, static_cast<Eigen::Index>(i)) = output_grad[i];
  return backward_batch(params, cache, g);
}

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::uint64_t step_count = 0;
  MlpParams first_moment;
  MlpParams second_moment;
  AdamHyper hyper;

  static AdamState fresh(const MlpParams& params, AdamHyper hyper = {}) {
    return AdamState{0, zeros_like(params), zeros_like(params), hyper};
  }
};

inline bool all_finite(const MlpParams& p) {
  for (std::size_t k = 0; k < p.weights.size(); ++k) {
    if (!p.weights[k].allFinite() || !p.biases[k].allFinite()) return false;
  }
  return true;
}

namespace detail {

inline void adam_update(Eigen::Ref<Matrix> param, const Eigen::Ref<const Matrix>& grad,
                        Eigen::Ref<Matrix> m, Eigen::Ref<Matrix> v, const AdamHyper& h,
                        double correction1, double correction2) {
  m = h.beta1 * m + (1.0 - h.beta1) * grad;
  v = h.beta2 * v + (1.0 - h.beta2) * grad.cwiseProduct(grad);
  param.array() -= h.learning_rate * (m.array() / correction1) /
                   ((v.array() / correction2).sqrt() + h.epsilon);
}

}  // namespace detail

/// One Adam step with bias correction, applied in place.
inline void adam_step(MlpParams& params, const MlpGrads& grads, AdamState& state) {
  if (grads.layer_sizes != params.layer_sizes || state.first_moment.layer_sizes != params.layer_sizes ||
      state.second_moment.layer_sizes != params.layer_sizes) {
    throw_invalid("adam: parameter, gradient and moment shapes disagree");
  }
  if (!all_finite(grads)) throw_numeric("adam: non-finite gradient entry");

  ++state.step_count;
  const auto t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.hyper.beta1, t);
  const double c2 = 1.0 - std::pow(state.hyper.beta2, t);
  for (std::size_t k = 0; k < params.num_layers(); ++k) {
    detail::adam_update(params.weights[k], grads.weights[k], state.first_moment.weights[k],
                        state.second_moment.weights[k], state.hyper, c1, c2);
    detail::adam_update(params.biases[k], grads.biases[k], state.first_moment.biases[k],
                        state.second_moment.biases[k], state.hyper, c1, c2);
  }
}

// ---------------------------------------------------------------------------
// Checkpoint format (little-endian):
//   "GLNN"  magic, 4 bytes
//   u32     version (= 1)
//   u32     layer count L (number of layer sizes)
//   u32[L]  layer sizes
//   per weight layer k: f64[in*out] weights row-major, then f64[out] biases
// ---------------------------------------------------------------------------

inline constexpr std::array<char, 4> kCheckpointMagic{'G', 'L', 'N', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) throw_io("checkpoint truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const MlpParams& params) {
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::write_le<std::uint32_t>(out, kCheckpointVersion);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.layer_sizes.size()));
  for (int s : params.layer_sizes) detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s));
  for (std::size_t k = 0; k < params.num_layers(); ++k) {
    const Matrix& w = params.weights[k];
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) detail::write_le<double>(out, w(i, j));
    }
    for (Eigen::Index j = 0; j < params.biases[k].size(); ++j) detail::write_le<double>(out, params.biases[k](j));
  }
  if (!out) throw_io("checkpoint write failed");
}

inline MlpParams read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic) throw_io("not a GLNN checkpoint");
  const auto version = detail::read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw_io("unsupported checkpoint version " + std::to_string(version));
  const auto count = detail::read_le<std::uint32_t>(in);
  if (count < 2 || count > 4096) throw_io("corrupt checkpoint layer count");
  std::vector<int> sizes(count);
  for (auto& s : sizes) {
    const auto v = detail::read_le<std::uint32_t>(in);
    if (v == 0 || v > (1u << 24)) throw_io("corrupt checkpoint layer size");
    s = static_cast<int>(v);
  }
  MlpParams p = zeros_like_layout(sizes);
  for (std::size_t k = 0; k < p.num_layers(); ++k) {
    Matrix& w = p.weights[k];
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = detail::read_le<double>(in);
    }
    for (Eigen::Index j = 0; j < p.biases[k].size(); ++j) p.biases[k](j) = detail::read_le<double>(in);
  }
  return p;
}

inline void save_checkpoint(const std::filesystem::path& path, const MlpParams& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw_io("cannot open " + path.string() + " for writing");
  write_checkpoint(out, params);
}

inline MlpParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace glab::nn
