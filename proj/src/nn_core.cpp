#include "forge/nn_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "forge/error.hpp"
#include "forge/rng.hpp"

namespace forge {

std::size_t MlpSpec::weight_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < layer_count(); ++l) n += fan_in(l) * fan_out(l);
  return n;
}

std::size_t MlpSpec::param_count() const {
  std::size_t n = weight_count();
  for (std::size_t l = 0; l < layer_count(); ++l) n += fan_out(l);
  return n;
}

std::size_t MlpSpec::weight_offset(std::size_t layer) const {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l) off += fan_in(l) * fan_out(l);
  return off;
}

std::size_t MlpSpec::bias_offset(std::size_t layer) const {
  std::size_t off = weight_count();
  for (std::size_t l = 0; l < layer; ++l) off += fan_out(l);
  return off;
}

void MlpSpec::validate() const {
  if (layer_sizes.size() < 2) throw Error(ErrorKind::InvalidArgument, "an MLP needs at least two layers");
  for (std::size_t s : layer_sizes) {
    if (s == 0) throw Error(ErrorKind::InvalidArgument, "layer sizes must be positive");
  }
}

namespace {

// Wider vector clones of the hot loops. No FMA is enabled, so every clone
// performs the same roundings in the same order.
#if defined(__GNUC__) && defined(__x86_64__) && !defined(__clang__)
#define FORGE_VECTOR_CLONES __attribute__((target_clones("avx2", "default")))
#else
#define FORGE_VECTOR_CLONES
#endif

void check_params(const MlpSpec& spec, std::span<const double> params) {
  if (params.size() != spec.param_count()) {
    throw Error(ErrorKind::ShapeMismatch, "expected " + std::to_string(spec.param_count()) +
                                              " parameters, got " + std::to_string(params.size()));
  }
}

Activation activation_of(const MlpSpec& spec, std::size_t layer) {
  return layer + 1 == spec.layer_count() ? spec.output : spec.hidden;
}

// Register tile of up to OB outputs x BB batch columns. Every element is
// bias + w_0 x_0 + w_1 x_1 + ... accumulated in k order, whatever the tiling.
template <std::size_t OB, std::size_t BB>
void affine_tile(const double* weight, const double* bias, const double* in, double* out,
                 std::size_t n_in, std::size_t batch, std::size_t ob, std::size_t bb) {
  double acc[OB][BB];
  for (std::size_t i = 0; i < OB; ++i) {
    for (std::size_t j = 0; j < BB; ++j) acc[i][j] = i < ob ? bias[i] : 0.0;
  }
  if (ob == OB && bb == BB) {
    for (std::size_t k = 0; k < n_in; ++k) {
      const double* x = in + k * batch;
      for (std::size_t i = 0; i < OB; ++i) {
        const double w = weight[i * n_in + k];
        for (std::size_t j = 0; j < BB; ++j) acc[i][j] += w * x[j];
      }
    }
  } else {
    for (std::size_t k = 0; k < n_in; ++k) {
      const double* x = in + k * batch;
      for (std::size_t i = 0; i < ob; ++i) {
        const double w = weight[i * n_in + k];
        for (std::size_t j = 0; j < bb; ++j) acc[i][j] += w * x[j];
      }
    }
  }
  for (std::size_t i = 0; i < ob; ++i) {
    for (std::size_t j = 0; j < bb; ++j) out[i * batch + j] = acc[i][j];
  }
}

// out[o][b] = bias[o] + sum_k W[o][k] * in[k][b], summed in k order.
// A null bias means zero.
FORGE_VECTOR_CLONES void affine_raw(const double* weight, const double* bias, const double* in, double* out,
                std::size_t n_in, std::size_t n_out, std::size_t batch) {
  constexpr std::size_t OB = 4, BB = 8;
  static const double zeros[OB] = {};
  for (std::size_t b0 = 0; b0 < batch; b0 += BB) {
    const std::size_t bb = std::min(BB, batch - b0);
    for (std::size_t o0 = 0; o0 < n_out; o0 += OB) {
      const std::size_t ob = std::min(OB, n_out - o0);
      affine_tile<OB, BB>(weight + o0 * n_in, bias ? bias + o0 : zeros, in + b0, out + o0 * batch + b0, n_in, batch,
                          ob, bb);
    }
  }
}

void affine(std::span<const double> weight, std::span<const double> bias, const Matrix& in, Matrix& out) {
  affine_raw(weight.data(), bias.data(), in.data().data(), out.data().data(), in.rows(), out.rows(), in.cols());
}

// Fixed four-lane dot product: the summation order depends only on the length.
double dot4(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

// gw[o][k] += dot4(d[o], x[k]) for a 2 x 2 block, sharing the row loads.
void dot4_block(const double* d0, const double* d1, const double* x0, const double* x1, std::size_t n,
                double& g00, double& g01, double& g10, double& g11) {
  double a00[4] = {}, a01[4] = {}, a10[4] = {}, a11[4] = {};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (std::size_t j = 0; j < 4; ++j) {
      a00[j] += d0[i + j] * x0[i + j];
      a01[j] += d0[i + j] * x1[i + j];
      a10[j] += d1[i + j] * x0[i + j];
      a11[j] += d1[i + j] * x1[i + j];
    }
  }
  for (; i < n; ++i) {
    a00[0] += d0[i] * x0[i];
    a01[0] += d0[i] * x1[i];
    a10[0] += d1[i] * x0[i];
    a11[0] += d1[i] * x1[i];
  }
  g00 += (a00[0] + a00[1]) + (a00[2] + a00[3]);
  g01 += (a01[0] + a01[1]) + (a01[2] + a01[3]);
  g10 += (a10[0] + a10[1]) + (a10[2] + a10[3]);
  g11 += (a11[0] + a11[1]) + (a11[2] + a11[3]);
}

// gw[o][k] += dot4(delta[o], in[k]) over the batch.
FORGE_VECTOR_CLONES void accumulate_weight_grads(const double* dl, const double* in, double* gw, std::size_t n_out,
                                                 std::size_t n_in, std::size_t batch) {
  std::size_t o = 0;
  for (; o + 2 <= n_out; o += 2) {
    const double* d0 = dl + o * batch;
    const double* d1 = d0 + batch;
    std::size_t k = 0;
    for (; k + 2 <= n_in; k += 2) {
      dot4_block(d0, d1, in + k * batch, in + (k + 1) * batch, batch, gw[o * n_in + k], gw[o * n_in + k + 1],
                 gw[(o + 1) * n_in + k], gw[(o + 1) * n_in + k + 1]);
    }
    for (; k < n_in; ++k) {
      gw[o * n_in + k] += dot4(d0, in + k * batch, batch);
      gw[(o + 1) * n_in + k] += dot4(d1, in + k * batch, batch);
    }
  }
  for (; o < n_out; ++o) {
    for (std::size_t k = 0; k < n_in; ++k) gw[o * n_in + k] += dot4(dl + o * batch, in + k * batch, batch);
  }
}

}  // namespace

std::vector<double> init_params(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<double> params(spec.param_count(), 0.0);
  Rng rng(seed);
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(spec.fan_in(l)));
    const std::size_t off = spec.weight_offset(l);
    for (std::size_t i = 0; i < spec.fan_in(l) * spec.fan_out(l); ++i) {
      params[off + i] = rng.uniform(-bound, bound);
    }
  }
  return params;
}

Matrix mlp_forward(const MlpSpec& spec, std::span<const double> params, const Matrix& inputs,
                   ForwardCache* cache) {
  check_params(spec, params);
  if (inputs.rows() != spec.input_size()) {
    throw Error(ErrorKind::ShapeMismatch, "input width " + std::to_string(inputs.rows()) +
                                              " != " + std::to_string(spec.input_size()));
  }
  if (cache) {
    cache->activations.assign(1, inputs);
    cache->pre_activations.clear();
  }
  Matrix current = inputs;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    Matrix z(spec.fan_out(l), inputs.cols());
    affine(params.subspan(spec.weight_offset(l), spec.fan_in(l) * spec.fan_out(l)),
           params.subspan(spec.bias_offset(l), spec.fan_out(l)), current, z);
    if (cache) cache->pre_activations.push_back(z);
    if (activation_of(spec, l) == Activation::Relu) {
      for (double& v : z.data()) v = v > 0.0 ? v : 0.0;
    }
    current = std::move(z);
    if (cache) cache->activations.push_back(current);
  }
  return current;
}

void mlp_backward(const MlpSpec& spec, std::span<const double> params, const ForwardCache& cache,
                  const Matrix& grad_outputs, std::span<double> param_grads, Matrix* input_grads) {
  check_params(spec, params);
  if (param_grads.size() != params.size() || cache.pre_activations.size() != spec.layer_count() ||
      grad_outputs.rows() != spec.output_size() ||
      grad_outputs.cols() != cache.activations.front().cols()) {
    throw Error(ErrorKind::ShapeMismatch, "backward pass does not match the cached forward pass");
  }
  Matrix delta = grad_outputs;
  for (std::size_t l = spec.layer_count(); l-- > 0;) {
    const Matrix& pre = cache.pre_activations[l];
    if (activation_of(spec, l) == Activation::Relu) {
      auto d = delta.data();
      auto z = pre.data();
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (!(z[i] > 0.0)) d[i] = 0.0;  // ReLU'(0) = 0
      }
    }
    const Matrix& input = cache.activations[l];
    const std::size_t n_in = spec.fan_in(l), n_out = spec.fan_out(l), batch = input.cols();
    const double* w = params.data() + spec.weight_offset(l);
    double* gw = param_grads.data() + spec.weight_offset(l);
    double* gb = param_grads.data() + spec.bias_offset(l);
    const double* in = input.data().data();
    const double* dl = delta.data().data();
    accumulate_weight_grads(dl, in, gw, n_out, n_in, batch);
    for (std::size_t r = 0; r < n_out; ++r) {
      const double* d = dl + r * batch;
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b) s += d[b];
      gb[r] += s;
    }
    if (l == 0 && input_grads == nullptr) break;
    // below[k][b] = sum_o W[o][k] delta[o][b], summed in o order.
    Matrix below(n_in, batch);
    if (batch >= 8) {
      std::vector<double> wt(n_in * n_out);
      for (std::size_t r = 0; r < n_out; ++r) {
        for (std::size_t k = 0; k < n_in; ++k) wt[k * n_out + r] = w[r * n_in + k];
      }
      affine_raw(wt.data(), nullptr, dl, below.data().data(), n_out, n_in, batch);
    } else {
      for (std::size_t r = 0; r < n_out; ++r) {
        const double* d = dl + r * batch;
        for (std::size_t k = 0; k < n_in; ++k) {
          const double wk = w[r * n_in + k];
          double* dst = below.row(k).data();
          for (std::size_t b = 0; b < batch; ++b) dst[b] += wk * d[b];
        }
      }
    }
    delta = std::move(below);
  }
  if (input_grads) *input_grads = std::move(delta);
}

MlpGradients mlp_backward(const MlpSpec& spec, std::span<const double> params,
                          const ForwardCache& cache, const Matrix& grad_outputs) {
  MlpGradients g;
  g.params.assign(params.size(), 0.0);
  mlp_backward(spec, params, cache, grad_outputs, g.params, &g.inputs);
  return g;
}

FORGE_VECTOR_CLONES void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (params.size() != grads.size() || state.first.size() != params.size() ||
      state.second.size() != params.size()) {
    throw Error(ErrorKind::ShapeMismatch, "Adam state, parameters and gradients differ in size");
  }
  const AdamOptions& o = state.options;
  state.step += 1;
  state.beta1_power *= o.beta1;
  state.beta2_power *= o.beta2;
  const double c1 = 1.0 - state.beta1_power;
  const double c2 = 1.0 - state.beta2_power;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& m = state.first[i];
    double& v = state.second[i];
    m = o.beta1 * m + (1.0 - o.beta1) * g;
    v = o.beta2 * v + (1.0 - o.beta2) * g * g;
    const double m_hat = m / c1;
    const double v_hat = v / c2;
    params[i] -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.epsilon);
  }
}

namespace {

// Max relative error of central differences; the loss may return long double.
template <class Loss>
double max_fd_error(const Loss& loss, std::span<const double> params, std::span<const double> analytic,
                    const FiniteDiffOptions& options) {
  if (analytic.size() != params.size()) {
    throw Error(ErrorKind::ShapeMismatch, "gradient and parameter sizes differ");
  }
  std::vector<std::size_t> coords(params.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (options.max_coords != 0 && options.max_coords < coords.size()) {
    Rng rng(options.seed);
    for (std::size_t i = 0; i < options.max_coords; ++i) {
      std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
    }
    coords.resize(options.max_coords);
  }
  std::vector<double> probe(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t i : coords) {
    const double saved = probe[i];
    probe[i] = saved + options.step;
    const auto up = loss(probe);
    probe[i] = saved - options.step;
    const auto down = loss(probe);
    probe[i] = saved;
    const double numeric = static_cast<double>((up - down) / (2.0L * options.step));
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), options.floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

// Sum of the outputs evaluated in extended precision. A ReLU stack is
// piecewise linear in any single parameter, so central differences have no
// truncation error away from kinks and double rounding is the only noise.
long double extended_output_sum(const MlpSpec& spec, std::span<const double> params, const Matrix& batch) {
  std::vector<long double> current(batch.data().begin(), batch.data().end());
  std::size_t cols = batch.cols();
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const std::size_t in = spec.fan_in(l), out = spec.fan_out(l);
    const double* w = params.data() + spec.weight_offset(l);
    const double* b = params.data() + spec.bias_offset(l);
    std::vector<long double> next(out * cols);
    for (std::size_t o = 0; o < out; ++o) {
      for (std::size_t c = 0; c < cols; ++c) {
        long double z = b[o];
        for (std::size_t k = 0; k < in; ++k) z += static_cast<long double>(w[o * in + k]) * current[k * cols + c];
        next[o * cols + c] = activation_of(spec, l) == Activation::Relu && z < 0.0L ? 0.0L : z;
      }
    }
    current = std::move(next);
  }
  long double total = 0.0L;
  for (long double v : current) total += v;
  return total;
}

}  // namespace

double compare_with_finite_differences(const std::function<double(std::span<const double>)>& loss,
                                       std::span<const double> params,
                                       std::span<const double> analytic,
                                       const FiniteDiffOptions& options) {
  return max_fd_error([&](std::span<const double> p) { return loss(p); }, params, analytic, options);
}

double finite_diff_check(const MlpSpec& spec, std::span<const double> params, const Matrix& batch,
                         double h, const FiniteDiffOptions& options) {
  if (!(h >= 1e-7 && h <= 1e-3)) throw Error(ErrorKind::InvalidArgument, "step must lie in [1e-7, 1e-3]");
  ForwardCache cache;
  const Matrix out = mlp_forward(spec, params, batch, &cache);
  const Matrix ones(out.rows(), out.cols(), 1.0);
  std::vector<double> grads(params.size(), 0.0);
  mlp_backward(spec, params, cache, ones, grads);
  FiniteDiffOptions opts = options;
  opts.step = h;
  return max_fd_error([&](std::span<const double> p) { return extended_output_sum(spec, p, batch); }, params, grads,
                      opts);
}

}  // namespace forge
