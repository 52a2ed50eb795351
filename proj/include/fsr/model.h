#pragma once

// Unidirectional LSTM acoustic model: num_layers LSTM layers (sigmoid gates,
// tanh candidate and output squashing, no peepholes or projection), a
// fully-connected layer with identity activation, and a softmax over the
// tied HMM states. All arithmetic is double precision.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fsr/types.h"

namespace fsr {

struct ModelConfig {
  std::uint32_t input_dim = 12;
  std::uint32_t hidden_dim = 64;
  std::uint32_t num_layers = 2;
  std::uint32_t fc_dim = 64;
  std::uint32_t num_states = 30;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Gate blocks are stacked in the order input, forget, output, candidate.
struct LstmLayer {
  RowMatrix w_in;   // 4H x in
  RowMatrix w_rec;  // 4H x H
  Vector bias;      // 4H
};

class ModelParams {
 public:
  ModelParams() = default;

  static ModelParams zeros(const ModelConfig& cfg);
  // Uniform in [-scale, scale], seeded.
  static ModelParams random(const ModelConfig& cfg, std::uint64_t seed,
                            double scale = 0.05);
  // Weight matrices uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
  static ModelParams glorot(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  std::vector<LstmLayer> layers;
  RowMatrix fc_w;   // fc_dim x H
  Vector fc_b;      // fc_dim
  RowMatrix out_w;  // K x fc_dim
  Vector out_b;     // K

  // Every parameter tensor as a flat view, in the serialization order:
  // per layer (w_in, w_rec, bias), then fc_w, fc_b, out_w, out_b.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  std::size_t num_params() const;
  bool same_shape(const ModelParams& other) const;
  bool all_finite() const;
  void set_zero();

  bool operator==(const ModelParams& other) const;

 private:
  explicit ModelParams(const ModelConfig& cfg);
  ModelConfig config_;
};

// Gradients share the parameter layout.
using Gradients = ModelParams;

class StreamState {
 public:
  explicit StreamState(const ModelConfig& cfg);
  void reset();

  std::vector<Vector> h;
  std::vector<Vector> c;
};

// One streaming step. Returns the K-dim posterior and advances `state`.
// Throws std::invalid_argument on a dimension mismatch and
// std::runtime_error if any activation becomes non-finite.
Vector forward_step(const ModelParams& params, StreamState& state,
                    std::span<const double> x);

// Repeated forward_step from a fresh state; row t holds the posterior of
// input row t.
RowMatrix forward_sequence(const ModelParams& params, const RowMatrix& inputs);

// Gradient of the summed cross-entropy -sum_t log p(labels[t] | x_1..t)
// with respect to every parameter. If `loss` is non-null it receives the
// loss value.
Gradients backward(const ModelParams& params, const RowMatrix& inputs,
                   std::span<const StateId> labels, double* loss = nullptr);
// Same gradient added onto `grad`; returns the loss.
double accumulate_gradients(const ModelParams& params, const RowMatrix& inputs,
                            std::span<const StateId> labels, Gradients& grad);

// Model file: "SDAM", u32 version, u32 input_dim, hidden_dim, num_layers,
// fc_dim, num_states, then every tensor as f64 in tensors() order
// (matrices row-major).
void save_model(std::ostream& os, const ModelParams& params);
ModelParams load_model(std::istream& is);
void save_model(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_model(const std::filesystem::path& path);
std::string serialize_model(const ModelParams& params);

}  // namespace fsr
