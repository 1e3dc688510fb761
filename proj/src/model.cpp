#include "avgk/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <string>

#include "avgk/error.hpp"
#include "avgk/math_core.hpp"

namespace avgk {

std::vector<std::span<double>> ParameterSet::blocks() {
  std::vector<std::span<double>> out;
  out.reserve(layers.size() * 2);
  for (auto& l : layers) {
    out.push_back(l.weight.values());
    out.push_back(l.bias);
  }
  return out;
}

std::vector<std::span<const double>> ParameterSet::blocks() const {
  std::vector<std::span<const double>> out;
  out.reserve(layers.size() * 2);
  for (const auto& l : layers) {
    out.push_back(l.weight.values());
    out.push_back(l.bias);
  }
  return out;
}

std::size_t ParameterSet::count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out;
  out.layers.reserve(layers.size());
  for (const auto& l : layers) out.layers.emplace_back(l.in(), l.out());
  return out;
}

TwoHeadMlp::TwoHeadMlp(ModelShape shape) : shape_(std::move(shape)) {
  if (shape_.input_dim == 0) throw InvalidConfig("input dimension must be positive");
  if (shape_.num_classes < 2) throw InvalidConfig("need at least 2 classes");
  std::size_t in = shape_.input_dim;
  for (std::size_t width : shape_.hidden) {
    if (width == 0) throw InvalidConfig("hidden layer width must be positive");
    params_.layers.emplace_back(in, width);
    in = width;
  }
  params_.layers.emplace_back(in, shape_.num_classes);
  params_.layers.emplace_back(in, shape_.num_classes);
}

TwoHeadMlp TwoHeadMlp::zeros(const ModelShape& shape) { return TwoHeadMlp(shape); }

TwoHeadMlp TwoHeadMlp::initialize(const ModelShape& shape, std::uint64_t seed) {
  TwoHeadMlp model(shape);
  std::mt19937_64 rng(seed);
  for (auto& layer : model.params_.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : layer.weight.values()) w = dist(rng);
  }
  return model;
}

namespace {

// out = x W + b
Matrix affine(const Matrix& x, const DenseLayer& layer) {
  Matrix out(x.rows(), layer.out());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto o = out.row(i);
    std::copy(layer.bias.begin(), layer.bias.end(), o.begin());
    const auto xi = x.row(i);
    for (std::size_t k = 0; k < xi.size(); ++k) {
      const double a = xi[k];
      if (a == 0.0) continue;
      const auto wk = layer.weight.row(k);
      for (std::size_t j = 0; j < o.size(); ++j) o[j] += a * wk[j];
    }
  }
  return out;
}

// grad.weight += x^T g ; grad.bias += column sums of g
void accumulate_layer_grad(const Matrix& x, const Matrix& g, DenseLayer& grad) {
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto xr = x.row(r);
    const auto gr = g.row(r);
    for (std::size_t p = 0; p < xr.size(); ++p) {
      const double a = xr[p];
      if (a == 0.0) continue;
      auto wp = grad.weight.row(p);
      for (std::size_t j = 0; j < gr.size(); ++j) wp[j] += a * gr[j];
    }
    for (std::size_t j = 0; j < gr.size(); ++j) grad.bias[j] += gr[j];
  }
}

// dx += g W^T
void accumulate_input_grad(const Matrix& g, const DenseLayer& layer, Matrix& dx) {
  for (std::size_t i = 0; i < g.rows(); ++i) {
    const auto gi = g.row(i);
    auto di = dx.row(i);
    for (std::size_t p = 0; p < di.size(); ++p) {
      const auto wp = layer.weight.row(p);
      double acc = 0.0;
      for (std::size_t j = 0; j < gi.size(); ++j) acc += gi[j] * wp[j];
      di[p] += acc;
    }
  }
}

void apply_activation(Matrix& m, Activation act) {
  if (act == Activation::kTanh) {
    for (double& v : m.values()) v = std::tanh(v);
  }
}

}  // namespace

ForwardCache forward(const TwoHeadMlp& model, const Matrix& inputs) {
  if (inputs.cols() != model.shape().input_dim) {
    throw ShapeError("input has " + std::to_string(inputs.cols()) +
                     " features, model expects " + std::to_string(model.shape().input_dim));
  }
  ForwardCache cache;
  cache.trunk_inputs.reserve(model.trunk_depth());
  Matrix h = inputs;
  for (std::size_t l = 0; l < model.trunk_depth(); ++l) {
    Matrix next = affine(h, model.trunk(l));
    apply_activation(next, model.shape().activation);
    cache.trunk_inputs.push_back(std::move(h));
    h = std::move(next);
  }
  cache.z_ml = affine(h, model.head_ml());
  cache.z_sccp = affine(h, model.head_sccp());
  cache.features = std::move(h);
  return cache;
}

ParameterSet backward(const TwoHeadMlp& model, const ForwardCache& cache, const Matrix& grad_ml,
                      const Matrix& grad_sccp) {
  ParameterSet grad = model.params().zeros_like();
  const std::size_t depth = model.trunk_depth();
  const Matrix& h = cache.features;
  Matrix dh(h.rows(), h.cols());

  auto head = [&](const Matrix& g, const DenseLayer& layer, DenseLayer& out) {
    if (g.empty()) return;
    if (g.rows() != h.rows() || g.cols() != layer.out()) {
      throw ShapeError("head gradient shape does not match its logits");
    }
    accumulate_layer_grad(h, g, out);
    accumulate_input_grad(g, layer, dh);
  };
  head(grad_ml, model.head_ml(), grad.layers[depth]);
  head(grad_sccp, model.head_sccp(), grad.layers[depth + 1]);

  Matrix upstream = std::move(dh);
  for (std::size_t l = depth; l-- > 0;) {
    // Output of layer l is the input of layer l+1, or the features for the last one.
    const Matrix& out = (l + 1 < depth) ? cache.trunk_inputs[l + 1] : cache.features;
    if (model.shape().activation == Activation::kTanh) {
      auto u = upstream.values();
      const auto a = out.values();
      for (std::size_t k = 0; k < u.size(); ++k) u[k] *= 1.0 - a[k] * a[k];
    }
    accumulate_layer_grad(cache.trunk_inputs[l], upstream, grad.layers[l]);
    if (l == 0) break;
    Matrix down(upstream.rows(), model.trunk(l).in());
    accumulate_input_grad(upstream, model.trunk(l), down);
    upstream = std::move(down);
  }
  return grad;
}

SgdOptimizer::SgdOptimizer(const TwoHeadMlp& model, SgdConfig cfg)
    : cfg_(cfg), velocity_(model.params().zeros_like()) {
  if (!(cfg_.momentum >= 0.0 && cfg_.momentum < 1.0)) {
    throw InvalidConfig("momentum must lie in [0, 1)");
  }
  if (!(cfg_.weight_decay >= 0.0)) throw InvalidConfig("weight decay must be >= 0");
}

void SgdOptimizer::step(TwoHeadMlp& model, const ParameterSet& grad, double learning_rate) {
  const auto g_blocks = grad.blocks();
  for (std::size_t b = 0; b < g_blocks.size(); ++b) {
    for (double v : g_blocks[b]) {
      if (!std::isfinite(v)) {
        throw TrainingAborted("non-finite gradient in parameter block " + std::to_string(b));
      }
    }
  }
  auto p_blocks = model.params().blocks();
  auto v_blocks = velocity_.blocks();
  const double mu = cfg_.momentum;
  for (std::size_t b = 0; b < p_blocks.size(); ++b) {
    auto p = p_blocks[b];
    auto v = v_blocks[b];
    const auto g = g_blocks[b];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double d = g[k] + cfg_.weight_decay * p[k];
      v[k] = mu * v[k] + d;
      p[k] -= learning_rate * (cfg_.nesterov ? d + mu * v[k] : v[k]);
    }
  }
}

void backward_and_step(TwoHeadMlp& model, const ForwardCache& cache, const Matrix& grad_ml,
                       const Matrix& grad_sccp, SgdOptimizer& optimizer, double learning_rate) {
  optimizer.step(model, backward(model, cache, grad_ml, grad_sccp), learning_rate);
}

Matrix predict_probabilities(const TwoHeadMlp& model, const Matrix& inputs,
                             std::size_t batch_size) {
  if (batch_size == 0) throw InvalidConfig("batch size must be positive");
  const std::size_t n = inputs.rows();
  Matrix out(n, model.shape().num_classes);
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t stop = std::min(n, start + batch_size);
    Matrix batch(stop - start, inputs.cols());
    for (std::size_t i = start; i < stop; ++i) {
      std::copy(inputs.row(i).begin(), inputs.row(i).end(), batch.row(i - start).begin());
    }
    const Matrix p = softmax_rows(forward(model, batch).z_ml);
    for (std::size_t i = start; i < stop; ++i) {
      std::copy(p.row(i - start).begin(), p.row(i - start).end(), out.row(i).begin());
    }
  }
  return out;
}

namespace {

constexpr std::array<char, 8> kMagic{'A', 'V', 'G', 'K', 'C', 'K', 'P', 'T'};

void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> bytes;
  for (std::size_t i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(bytes.data(), bytes.size());
}

void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<char, 4> bytes;
  for (std::size_t i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(bytes.data(), bytes.size());
}

void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(std::istream& is) {
  std::array<unsigned char, 8> bytes;
  if (!is.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw ParseError("truncated checkpoint", 0);
  }
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> bytes;
  if (!is.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw ParseError("truncated checkpoint", 0);
  }
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

}  // namespace

// Layout: magic[8] | u32 version | u32 activation | u32 n_dims | u64 dims
// (input, hidden..., classes) | u64 seed | u64 epoch | f64 best_val_accuracy |
// f64 lambda_val | f64 parameters in declaration order. All little-endian.
void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  const ModelShape& shape = ckpt.model.shape();
  os.write(kMagic.data(), kMagic.size());
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<std::uint32_t>(shape.activation));
  put_u32(os, static_cast<std::uint32_t>(shape.hidden.size() + 2));
  put_u64(os, shape.input_dim);
  for (std::size_t w : shape.hidden) put_u64(os, w);
  put_u64(os, shape.num_classes);
  put_u64(os, ckpt.seed);
  put_u64(os, ckpt.epoch);
  put_f64(os, ckpt.best_val_accuracy);
  put_f64(os, ckpt.lambda_val);
  for (const auto block : ckpt.model.params().blocks()) {
    for (double v : block) put_f64(os, v);
  }
  if (!os) throw Error("failed to write checkpoint");
}

Checkpoint read_checkpoint(std::istream& is) {
  std::array<char, 8> magic;
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw ParseError("not a checkpoint file (bad magic)", 0);
  }
  const std::uint32_t version = get_u32(is);
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version), 0);
  }
  const std::uint32_t act = get_u32(is);
  if (act > static_cast<std::uint32_t>(Activation::kIdentity)) {
    throw ParseError("unknown activation code " + std::to_string(act), 0);
  }
  const std::uint32_t n_dims = get_u32(is);
  if (n_dims < 2 || n_dims > 64) throw ParseError("implausible layer count in checkpoint", 0);
  std::vector<std::uint64_t> dims(n_dims);
  for (auto& d : dims) d = get_u64(is);

  ModelShape shape;
  shape.activation = static_cast<Activation>(act);
  shape.input_dim = dims.front();
  shape.hidden.assign(dims.begin() + 1, dims.end() - 1);
  shape.num_classes = dims.back();

  Checkpoint ckpt;
  ckpt.model = TwoHeadMlp::zeros(shape);
  ckpt.seed = get_u64(is);
  ckpt.epoch = get_u64(is);
  ckpt.best_val_accuracy = get_f64(is);
  ckpt.lambda_val = get_f64(is);
  for (auto block : ckpt.model.params().blocks()) {
    for (double& v : block) v = get_f64(is);
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw ParseError("trailing bytes after checkpoint parameters", 0);
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  write_checkpoint(os, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

}  // namespace avgk
