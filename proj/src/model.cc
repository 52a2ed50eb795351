#include "fsr/model.h"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "fsr/binary_io.h"

namespace fsr {

namespace {

constexpr std::uint32_t kModelFileVersion = 1;

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Applies the gate nonlinearities in place to a 4H pre-activation vector.
template <typename Derived>
void activate_gates(Eigen::MatrixBase<Derived>& a, Eigen::Index h) {
  for (Eigen::Index k = 0; k < 3 * h; ++k) a(k) = sigmoid(a(k));
  for (Eigen::Index k = 3 * h; k < 4 * h; ++k) a(k) = std::tanh(a(k));
}

void softmax_in_place(Eigen::Ref<Vector> v) {
  const double mx = v.maxCoeff();
  double sum = 0.0;
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    v(k) = std::exp(v(k) - mx);
    sum += v(k);
  }
  v /= sum;
}

void check_input(const ModelParams& params, std::size_t dim) {
  if (dim != params.config().input_dim) {
    throw std::invalid_argument("input dim " + std::to_string(dim) +
                                " != model input_dim " +
                                std::to_string(params.config().input_dim));
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (input_dim < 1 || hidden_dim < 1 || num_layers < 1 || fc_dim < 1 ||
      num_states < 1) {
    throw std::invalid_argument("model dimensions must all be >= 1");
  }
}

ModelParams::ModelParams(const ModelConfig& cfg) : config_(cfg) {
  cfg.validate();
  const Eigen::Index h = cfg.hidden_dim;
  layers.resize(cfg.num_layers);
  for (std::uint32_t l = 0; l < cfg.num_layers; ++l) {
    const Eigen::Index in = l == 0 ? cfg.input_dim : cfg.hidden_dim;
    layers[l].w_in.resize(4 * h, in);
    layers[l].w_rec.resize(4 * h, h);
    layers[l].bias.resize(4 * h);
  }
  fc_w.resize(cfg.fc_dim, h);
  fc_b.resize(cfg.fc_dim);
  out_w.resize(cfg.num_states, cfg.fc_dim);
  out_b.resize(cfg.num_states);
}

ModelParams ModelParams::zeros(const ModelConfig& cfg) {
  ModelParams p(cfg);
  p.set_zero();
  return p;
}

ModelParams ModelParams::random(const ModelConfig& cfg, std::uint64_t seed,
                                double scale) {
  ModelParams p(cfg);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (auto t : p.tensors()) {
    for (double& v : t) v = dist(rng);
  }
  return p;
}

ModelParams ModelParams::glorot(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p(cfg);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](RowMatrix& m) {
    const double r = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    std::uniform_real_distribution<double> dist(-r, r);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  };
  for (auto& layer : p.layers) {
    fill(layer.w_in);
    fill(layer.w_rec);
    layer.bias.setZero();
  }
  fill(p.fc_w);
  p.fc_b.setZero();
  fill(p.out_w);
  p.out_b.setZero();
  return p;
}

std::vector<std::span<double>> ModelParams::tensors() {
  std::vector<std::span<double>> out;
  auto add = [&out](auto& m) {
    out.emplace_back(m.data(), static_cast<std::size_t>(m.size()));
  };
  for (auto& layer : layers) {
    add(layer.w_in);
    add(layer.w_rec);
    add(layer.bias);
  }
  add(fc_w);
  add(fc_b);
  add(out_w);
  add(out_b);
  return out;
}

std::vector<std::span<const double>> ModelParams::tensors() const {
  std::vector<std::span<const double>> out;
  for (auto t : const_cast<ModelParams*>(this)->tensors()) out.emplace_back(t);
  return out;
}

std::size_t ModelParams::num_params() const {
  std::size_t n = 0;
  for (auto t : tensors()) n += t.size();
  return n;
}

bool ModelParams::same_shape(const ModelParams& other) const {
  // A default-constructed instance carries a config but no tensors.
  return config_ == other.config_ && layers.size() == other.layers.size() &&
         out_b.size() == other.out_b.size();
}

bool ModelParams::all_finite() const {
  for (auto t : tensors()) {
    for (double v : t) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

void ModelParams::set_zero() {
  for (auto t : tensors()) std::fill(t.begin(), t.end(), 0.0);
}

bool ModelParams::operator==(const ModelParams& other) const {
  if (!same_shape(other)) return false;
  const auto a = tensors();
  const auto b = other.tensors();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::equal(a[i].begin(), a[i].end(), b[i].begin())) return false;
  }
  return true;
}

StreamState::StreamState(const ModelConfig& cfg)
    : h(cfg.num_layers, Vector::Zero(cfg.hidden_dim)),
      c(cfg.num_layers, Vector::Zero(cfg.hidden_dim)) {}

void StreamState::reset() {
  for (auto& v : h) v.setZero();
  for (auto& v : c) v.setZero();
}

Vector forward_step(const ModelParams& params, StreamState& state,
                    std::span<const double> x) {
  const ModelConfig& cfg = params.config();
  check_input(params, x.size());
  if (state.h.size() != cfg.num_layers || state.c.size() != cfg.num_layers ||
      state.h[0].size() != cfg.hidden_dim) {
    throw std::invalid_argument("stream state does not match model config");
  }
  const Eigen::Index h = cfg.hidden_dim;

  Vector input = Eigen::Map<const Vector>(x.data(),
                                          static_cast<Eigen::Index>(x.size()));
  Vector a(4 * h);
  for (std::uint32_t l = 0; l < cfg.num_layers; ++l) {
    const LstmLayer& layer = params.layers[l];
    a.noalias() = layer.w_in * input;
    a.noalias() += layer.w_rec * state.h[l];
    a += layer.bias;
    activate_gates(a, h);
    Vector& c = state.c[l];
    c = a.segment(h, h).cwiseProduct(c) +
        a.segment(0, h).cwiseProduct(a.segment(3 * h, h));
    state.h[l] = a.segment(2 * h, h).cwiseProduct(c.array().tanh().matrix());
    input = state.h[l];
  }
  Vector z = params.fc_b;
  z.noalias() += params.fc_w * input;
  Vector post = params.out_b;
  post.noalias() += params.out_w * z;
  softmax_in_place(post);
  if (!post.allFinite() || !input.allFinite()) {
    throw std::runtime_error("non-finite activation in acoustic model");
  }
  return post;
}

RowMatrix forward_sequence(const ModelParams& params, const RowMatrix& inputs) {
  check_input(params, static_cast<std::size_t>(inputs.cols()));
  RowMatrix out(inputs.rows(), params.config().num_states);
  StreamState state(params.config());
  for (Eigen::Index t = 0; t < inputs.rows(); ++t) {
    out.row(t) = forward_step(
        params, state,
        {inputs.row(t).data(), static_cast<std::size_t>(inputs.cols())});
  }
  return out;
}

Gradients backward(const ModelParams& params, const RowMatrix& inputs,
                   std::span<const StateId> labels, double* loss) {
  Gradients grad = ModelParams::zeros(params.config());
  const double l = accumulate_gradients(params, inputs, labels, grad);
  if (loss != nullptr) *loss = l;
  return grad;
}

double accumulate_gradients(const ModelParams& params, const RowMatrix& inputs,
                            std::span<const StateId> labels, Gradients& grad) {
  const ModelConfig& cfg = params.config();
  check_input(params, static_cast<std::size_t>(inputs.cols()));
  const Eigen::Index t_len = inputs.rows();
  if (static_cast<Eigen::Index>(labels.size()) != t_len) {
    throw std::invalid_argument("label count does not match input length");
  }
  for (StateId l : labels) {
    if (l >= cfg.num_states) {
      throw std::invalid_argument("label " + std::to_string(l) +
                                  " out of range [0, " +
                                  std::to_string(cfg.num_states) + ")");
    }
  }
  const Eigen::Index h = cfg.hidden_dim;
  const std::size_t num_layers = cfg.num_layers;

  if (!grad.same_shape(params)) {
    throw std::invalid_argument("gradient buffer shape mismatch");
  }
  if (t_len == 0) return 0.0;

  // Forward pass with caches. gates[l] holds activated (i, f, o, g) per row.
  std::vector<RowMatrix> gates(num_layers), cells(num_layers),
      cell_tanh(num_layers), hidden(num_layers);
  const RowMatrix* layer_in = &inputs;
  for (std::size_t l = 0; l < num_layers; ++l) {
    const LstmLayer& layer = params.layers[l];
    RowMatrix& g = gates[l];
    g.noalias() = *layer_in * layer.w_in.transpose();
    cells[l].resize(t_len, h);
    cell_tanh[l].resize(t_len, h);
    hidden[l].resize(t_len, h);
    Vector h_prev = Vector::Zero(h);
    Vector c_prev = Vector::Zero(h);
    Vector a(4 * h);
    for (Eigen::Index t = 0; t < t_len; ++t) {
      a = g.row(t).transpose() + layer.bias;
      a.noalias() += layer.w_rec * h_prev;
      activate_gates(a, h);
      g.row(t) = a.transpose();
      const Vector c = a.segment(h, h).cwiseProduct(c_prev) +
                       a.segment(0, h).cwiseProduct(a.segment(3 * h, h));
      const Vector tc = c.array().tanh().matrix();
      cells[l].row(t) = c.transpose();
      cell_tanh[l].row(t) = tc.transpose();
      h_prev = a.segment(2 * h, h).cwiseProduct(tc);
      hidden[l].row(t) = h_prev.transpose();
      c_prev = c;
    }
    layer_in = &hidden[l];
  }
  const RowMatrix& top = hidden[num_layers - 1];
  RowMatrix z = top * params.fc_w.transpose();
  z.rowwise() += params.fc_b.transpose();
  RowMatrix dlogits = z * params.out_w.transpose();
  dlogits.rowwise() += params.out_b.transpose();
  double total = 0.0;
  for (Eigen::Index t = 0; t < t_len; ++t) {
    softmax_in_place(dlogits.row(t).transpose());
    total -= std::log(std::max(dlogits(t, labels[t]), 1e-300));
    dlogits(t, labels[t]) -= 1.0;
  }

  grad.out_w.noalias() += dlogits.transpose() * z;
  grad.out_b += dlogits.colwise().sum().transpose();
  const RowMatrix dz = dlogits * params.out_w;
  grad.fc_w.noalias() += dz.transpose() * top;
  grad.fc_b += dz.colwise().sum().transpose();
  RowMatrix dh_above = dz * params.fc_w;

  for (std::size_t li = num_layers; li-- > 0;) {
    const LstmLayer& layer = params.layers[li];
    LstmLayer& dlayer = grad.layers[li];
    const RowMatrix& g = gates[li];
    RowMatrix da(t_len, 4 * h);
    Vector dh_next = Vector::Zero(h);
    Eigen::ArrayXd dc_next = Eigen::ArrayXd::Zero(h);
    Eigen::ArrayXd dh(h), dc(h), dgate(4 * h);
    for (Eigen::Index t = t_len - 1; t >= 0; --t) {
      const auto gate = g.row(t).array();
      const auto in_g = gate.segment(0, h).transpose();
      const auto forget_g = gate.segment(h, h).transpose();
      const auto out_g = gate.segment(2 * h, h).transpose();
      const auto cand = gate.segment(3 * h, h).transpose();
      const auto tc = cell_tanh[li].row(t).array().transpose();

      dh = dh_above.row(t).array().transpose() + dh_next.array();
      dc = dc_next + dh * out_g * (1.0 - tc * tc);
      dgate.segment(0, h) = dc * cand * in_g * (1.0 - in_g);
      if (t > 0) {
        dgate.segment(h, h) = dc * cells[li].row(t - 1).array().transpose() *
                              forget_g * (1.0 - forget_g);
      } else {
        dgate.segment(h, h).setZero();
      }
      dgate.segment(2 * h, h) = dh * tc * out_g * (1.0 - out_g);
      dgate.segment(3 * h, h) = dc * in_g * (1.0 - cand * cand);
      da.row(t) = dgate.matrix().transpose();

      dh_next.noalias() = layer.w_rec.transpose() * dgate.matrix();
      dc_next = dc * forget_g;
    }
    const RowMatrix& x = li == 0 ? inputs : hidden[li - 1];
    RowMatrix h_prev = RowMatrix::Zero(t_len, h);
    if (t_len > 1) h_prev.bottomRows(t_len - 1) = hidden[li].topRows(t_len - 1);
    dlayer.w_in.noalias() += da.transpose() * x;
    dlayer.w_rec.noalias() += da.transpose() * h_prev;
    dlayer.bias += da.colwise().sum().transpose();
    if (li > 0) dh_above = da * layer.w_in;
  }
  return total;
}

void save_model(std::ostream& os, const ModelParams& params) {
  const ModelConfig& cfg = params.config();
  io::write_magic(os, "SDAM");
  io::write_u32(os, kModelFileVersion);
  io::write_u32(os, cfg.input_dim);
  io::write_u32(os, cfg.hidden_dim);
  io::write_u32(os, cfg.num_layers);
  io::write_u32(os, cfg.fc_dim);
  io::write_u32(os, cfg.num_states);
  for (auto t : params.tensors()) io::write_f64s(os, t);
}

ModelParams load_model(std::istream& is) {
  io::expect_magic(is, "SDAM");
  const std::uint32_t version = io::read_u32(is);
  if (version != kModelFileVersion) {
    throw std::runtime_error("unsupported model file version " +
                             std::to_string(version));
  }
  ModelConfig cfg;
  cfg.input_dim = io::read_u32(is);
  cfg.hidden_dim = io::read_u32(is);
  cfg.num_layers = io::read_u32(is);
  cfg.fc_dim = io::read_u32(is);
  cfg.num_states = io::read_u32(is);
  ModelParams p = ModelParams::zeros(cfg);
  for (auto t : p.tensors()) io::read_f64s(is, t);
  return p;
}

std::string serialize_model(const ModelParams& params) {
  std::ostringstream os;
  save_model(os, params);
  return os.str();
}

void save_model(const std::filesystem::path& path, const ModelParams& params) {
  io::write_file(path, serialize_model(params));
}

ModelParams load_model(const std::filesystem::path& path) {
  std::istringstream is(io::read_file(path));
  return load_model(is);
}

}  // namespace fsr
