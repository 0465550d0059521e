#include "fedeeg/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedeeg/bytes.hpp"
#include "fedeeg/error.hpp"
#include "fedeeg/rng.hpp"

namespace fedeeg {

namespace {

void require_same_size(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) {
    throw DimensionError("param vector length mismatch: " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
  }
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double clamp_prob(double p) { return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon); }

}  // namespace

ParamVector& ParamVector::operator+=(const ParamVector& other) {
  return add_scaled(other, 1.0);
}

ParamVector& ParamVector::operator-=(const ParamVector& other) {
  return add_scaled(other, -1.0);
}

ParamVector& ParamVector::operator*=(double factor) {
  for (double& v : values_) v *= factor;
  return *this;
}

ParamVector& ParamVector::add_scaled(const ParamVector& other, double factor) {
  require_same_size(*this, other);
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += factor * other.values_[i];
  return *this;
}

bool ParamVector::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

std::vector<std::uint8_t> ParamVector::serialize() const {
  ByteWriter w;
  w.buffer().reserve(4 + 8 * values_.size());
  w.u32(static_cast<std::uint32_t>(values_.size()));
  for (double v : values_) w.f64(v);
  return w.take();
}

ParamVector ParamVector::deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const std::uint32_t n = r.u32();
  if (r.remaining() != 8ULL * n) throw Error("param vector payload length mismatch");
  std::vector<double> v(n);
  for (auto& x : v) x = r.f64();
  return ParamVector(std::move(v));
}

ParamVector operator+(ParamVector lhs, const ParamVector& rhs) { return lhs += rhs; }
ParamVector operator-(ParamVector lhs, const ParamVector& rhs) { return lhs -= rhs; }
ParamVector operator*(double factor, ParamVector v) { return v *= factor; }

MatrixView::MatrixView(std::span<const double> d, std::size_t r, std::size_t c)
    : data(d), rows(r), cols(c) {
  if (d.size() != r * c) throw DimensionError("matrix view: data size does not match shape");
}

void Batch::validate() const {
  if (inputs.rows == 0) throw DimensionError("batch must hold at least one row");
  if (labels.size() != inputs.rows) throw DimensionError("batch labels/rows mismatch");
  for (auto y : labels) {
    if (y > 1) throw DimensionError("labels must be 0 or 1");
  }
}

void ModelConfig::validate() const {
  if (input_dim == 0) throw ConfigError("model.input_dim", "must be >= 1");
  for (auto h : hidden_dims) {
    if (h == 0) throw ConfigError("model.hidden_dims", "every width must be >= 1");
  }
  if (init_scale && (!std::isfinite(*init_scale) || *init_scale < 0.0)) {
    throw ConfigError("model.init_scale", "must be finite and non-negative");
  }
}

Mlp::Mlp(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  std::size_t fan_in = config_.input_dim;
  std::size_t offset = 0;
  auto add_layer = [&](std::size_t fan_out) {
    Layer l{fan_in, fan_out, offset, offset + fan_in * fan_out};
    offset = l.bias_offset + fan_out;
    layers_.push_back(l);
    fan_in = fan_out;
  };
  for (auto h : config_.hidden_dims) add_layer(h);
  add_layer(1);
  param_count_ = offset;
}

ParamVector Mlp::init_params() const {
  ParamVector p(param_count_);
  Rng rng(config_.seed);
  for (const auto& l : layers_) {
    const double scale =
        config_.init_scale.value_or(1.0 / std::sqrt(static_cast<double>(l.fan_in)));
    for (std::size_t i = 0; i < l.fan_in * l.fan_out; ++i) {
      p[l.weight_offset + i] = scale * (2.0 * rng.uniform() - 1.0);
    }
  }
  return p;
}

void Mlp::check_params(const ParamVector& params) const {
  if (params.size() != param_count_) {
    throw DimensionError("params length " + std::to_string(params.size()) +
                         " does not match model layout " + std::to_string(param_count_));
  }
}

void Mlp::check_inputs(MatrixView inputs) const {
  if (inputs.cols != config_.input_dim) {
    throw DimensionError("input width " + std::to_string(inputs.cols) +
                         " does not match model input_dim " +
                         std::to_string(config_.input_dim));
  }
}

void Mlp::forward_pass(const ParamVector& params, MatrixView inputs,
                       std::vector<std::vector<double>>& activations) const {
  const std::size_t rows = inputs.rows;
  const auto w = params.values();
  activations.resize(layers_.size());
  std::span<const double> prev = inputs.data;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    auto& out = activations[li];
    out.assign(rows * l.fan_out, 0.0);
    const double* weights = w.data() + l.weight_offset;
    const double* bias = w.data() + l.bias_offset;
    for (std::size_t b = 0; b < rows; ++b) {
      double* z = out.data() + b * l.fan_out;
      std::copy(bias, bias + l.fan_out, z);
      const double* x = prev.data() + b * l.fan_in;
      for (std::size_t i = 0; i < l.fan_in; ++i) {
        const double xi = x[i];
        const double* wrow = weights + i * l.fan_out;
        for (std::size_t j = 0; j < l.fan_out; ++j) z[j] += xi * wrow[j];
      }
      if (li + 1 < layers_.size()) {
        for (std::size_t j = 0; j < l.fan_out; ++j) z[j] = std::tanh(z[j]);
      }
    }
    prev = out;
  }
}

std::vector<double> Mlp::forward(const ParamVector& params, MatrixView inputs) const {
  check_params(params);
  check_inputs(inputs);
  std::vector<std::vector<double>> acts;
  forward_pass(params, inputs, acts);
  std::vector<double> probs(inputs.rows);
  for (std::size_t b = 0; b < inputs.rows; ++b) probs[b] = clamp_prob(sigmoid(acts.back()[b]));
  return probs;
}

LossAndGrad Mlp::loss_and_grad(const ParamVector& params, const Batch& batch) const {
  check_params(params);
  check_inputs(batch.inputs);
  batch.validate();
  const std::size_t rows = batch.inputs.rows;
  std::vector<std::vector<double>> acts;
  forward_pass(params, batch.inputs, acts);

  LossAndGrad out{0.0, ParamVector(param_count_)};
  const double inv_rows = 1.0 / static_cast<double>(rows);

  // d(mean loss)/d(logit) = (sigmoid(z) - y) / B. The clamp only guards the
  // logarithm; it is inactive unless |z| > ~27.6.
  std::vector<double> delta(rows);
  for (std::size_t b = 0; b < rows; ++b) {
    const double p = sigmoid(acts.back()[b]);
    const double pc = clamp_prob(p);
    const double y = batch.labels[b];
    out.loss -= y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
    delta[b] = (p - y) * inv_rows;
  }
  out.loss *= inv_rows;

  auto g = out.grad.values();
  const auto w = params.values();
  std::vector<double> prev_delta;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const Layer& l = layers_[li];
    const std::span<const double> input =
        li == 0 ? batch.inputs.data : std::span<const double>(acts[li - 1]);
    double* gw = g.data() + l.weight_offset;
    double* gb = g.data() + l.bias_offset;
    for (std::size_t b = 0; b < rows; ++b) {
      const double* d = delta.data() + b * l.fan_out;
      const double* x = input.data() + b * l.fan_in;
      for (std::size_t j = 0; j < l.fan_out; ++j) gb[j] += d[j];
      for (std::size_t i = 0; i < l.fan_in; ++i) {
        const double xi = x[i];
        double* grow = gw + i * l.fan_out;
        for (std::size_t j = 0; j < l.fan_out; ++j) grow[j] += xi * d[j];
      }
    }
    if (li == 0) break;
    // Propagate through the weights and the tanh of the previous layer.
    prev_delta.assign(rows * l.fan_in, 0.0);
    const double* weights = w.data() + l.weight_offset;
    for (std::size_t b = 0; b < rows; ++b) {
      const double* d = delta.data() + b * l.fan_out;
      const double* a = input.data() + b * l.fan_in;
      double* pd = prev_delta.data() + b * l.fan_in;
      for (std::size_t i = 0; i < l.fan_in; ++i) {
        const double* wrow = weights + i * l.fan_out;
        double s = 0.0;
        for (std::size_t j = 0; j < l.fan_out; ++j) s += wrow[j] * d[j];
        pd[i] = s * (1.0 - a[i] * a[i]);
      }
    }
    delta.swap(prev_delta);
  }
  return out;
}

ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double eta) {
  require_same_size(params, grad);
  ParamVector next = params;
  next.add_scaled(grad, -eta);
  return next;
}

}  // namespace fedeeg
