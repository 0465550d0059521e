#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace fedeeg {

// Flat parameter (or gradient) vector exchanged between clients and server.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t size, double fill = 0.0) : values_(size, fill) {}
  explicit ParamVector(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  ParamVector& operator+=(const ParamVector& other);
  ParamVector& operator-=(const ParamVector& other);
  ParamVector& operator*=(double factor);
  // this += factor * other
  ParamVector& add_scaled(const ParamVector& other, double factor);

  bool all_finite() const noexcept;
  bool operator==(const ParamVector& other) const = default;

  // u32 length (little-endian) followed by that many IEEE-754 f64 LE values.
  std::vector<std::uint8_t> serialize() const;
  static ParamVector deserialize(std::span<const std::uint8_t> bytes);

 private:
  std::vector<double> values_;
};

ParamVector operator+(ParamVector lhs, const ParamVector& rhs);
ParamVector operator-(ParamVector lhs, const ParamVector& rhs);
ParamVector operator*(double factor, ParamVector v);

// Row-major read-only matrix view.
struct MatrixView {
  std::span<const double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;

  MatrixView() = default;
  MatrixView(std::span<const double> d, std::size_t r, std::size_t c);
  std::span<const double> row(std::size_t i) const { return data.subspan(i * cols, cols); }
};

struct Batch {
  MatrixView inputs;
  std::span<const std::uint8_t> labels;  // 0 interictal, 1 preictal

  void validate() const;
};

struct ModelConfig {
  std::size_t input_dim = 256;
  std::vector<std::size_t> hidden_dims{16};
  std::uint64_t seed = 0;
  // Half-width of the uniform weight init; unset means 1/sqrt(fan_in) per layer.
  std::optional<double> init_scale;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct LossAndGrad {
  double loss = 0.0;
  ParamVector grad;
};

// Probabilities are clamped to [kProbEpsilon, 1 - kProbEpsilon] before logs.
inline constexpr double kProbEpsilon = 1e-12;

// Dense feed-forward binary classifier: tanh hidden layers, sigmoid output.
//
// Parameter layout, layer by layer: the weight matrix stored row-major as
// [fan_in][fan_out], followed by the fan_out biases. The last layer has
// fan_out = 1.
class Mlp {
 public:
  struct Layer {
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;
  };

  explicit Mlp(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }
  std::size_t input_dim() const noexcept { return config_.input_dim; }
  std::size_t param_count() const noexcept { return param_count_; }
  std::span<const Layer> layers() const noexcept { return layers_; }

  ParamVector init_params() const;

  // One probability per input row, clamped to [eps, 1 - eps].
  std::vector<double> forward(const ParamVector& params, MatrixView inputs) const;

  // Mean binary cross-entropy over the batch and its gradient.
  LossAndGrad loss_and_grad(const ParamVector& params, const Batch& batch) const;

 private:
  void check_params(const ParamVector& params) const;
  void check_inputs(MatrixView inputs) const;
  // Fills activations[l] (rows x width of layer l output) and returns logits.
  void forward_pass(const ParamVector& params, MatrixView inputs,
                    std::vector<std::vector<double>>& activations) const;

  ModelConfig config_;
  std::vector<Layer> layers_;
  std::size_t param_count_ = 0;
};

// params - eta * grad
ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double eta);

}  // namespace fedeeg
