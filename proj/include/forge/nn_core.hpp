#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace forge {

enum class Activation { Relu, Identity };

/// Fully-connected stack. Parameters live in one flat vector: every layer's
/// weight matrix (out x in, row-major) in layer order, then every bias.
struct MlpSpec {
  std::vector<std::size_t> layer_sizes;
  Activation hidden = Activation::Relu;
  Activation output = Activation::Identity;

  std::size_t layer_count() const { return layer_sizes.size() - 1; }
  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
  std::size_t fan_in(std::size_t layer) const { return layer_sizes[layer]; }
  std::size_t fan_out(std::size_t layer) const { return layer_sizes[layer + 1]; }

  std::size_t weight_count() const;
  std::size_t param_count() const;
  std::size_t weight_offset(std::size_t layer) const;
  std::size_t bias_offset(std::size_t layer) const;

  /// Throws InvalidArgument unless there are >= 2 sizes, all >= 1.
  void validate() const;

  bool operator==(const MlpSpec&) const = default;
};

/// Dense row-major matrix. Batches are stored feature-major: one row per
/// feature, one column per batch element.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct ForwardCache {
  /// activations[0] is the input, activations[L] the output.
  std::vector<Matrix> activations;
  std::vector<Matrix> pre_activations;
};

/// Weights ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), biases 0.
std::vector<double> init_params(const MlpSpec& spec, std::uint64_t seed);

Matrix mlp_forward(const MlpSpec& spec, std::span<const double> params, const Matrix& inputs,
                   ForwardCache* cache = nullptr);

/// Backpropagates grad_outputs through a cached forward pass. Parameter
/// gradients are ADDED into param_grads; input gradients are written to
/// input_grads when it is non-null.
void mlp_backward(const MlpSpec& spec, std::span<const double> params, const ForwardCache& cache,
                  const Matrix& grad_outputs, std::span<double> param_grads,
                  Matrix* input_grads = nullptr);

struct MlpGradients {
  std::vector<double> params;
  Matrix inputs;
};

MlpGradients mlp_backward(const MlpSpec& spec, std::span<const double> params,
                          const ForwardCache& cache, const Matrix& grad_outputs);

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const AdamOptions&) const = default;
};

struct AdamState {
  AdamState() = default;
  AdamState(std::size_t size, AdamOptions opts)
      : options(opts), first(size, 0.0), second(size, 0.0) {}

  AdamOptions options;
  std::uint64_t step = 0;
  /// beta^t kept as running products so that no pow() enters the update.
  double beta1_power = 1.0;
  double beta2_power = 1.0;
  std::vector<double> first;
  std::vector<double> second;

  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update, in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

struct FiniteDiffOptions {
  double step = 1e-5;
  /// Denominator floor of the relative error, so that near-zero gradients are
  /// compared in absolute terms.
  double floor = 1e-6;
  /// Check this many randomly chosen coordinates; 0 checks all of them.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

/// Max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, floor)
/// using central differences of `loss`.
double compare_with_finite_differences(const std::function<double(std::span<const double>)>& loss,
                                       std::span<const double> params,
                                       std::span<const double> analytic,
                                       const FiniteDiffOptions& options = {});

/// Gradient check of the scalar loss sum(outputs) for one MLP. The loss is
/// evaluated in extended precision so that rounding does not swamp small gradients.
double finite_diff_check(const MlpSpec& spec, std::span<const double> params, const Matrix& batch,
                         double h, const FiniteDiffOptions& options = {});

}  // namespace forge
