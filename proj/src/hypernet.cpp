#include "forge/hypernet.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "binary.hpp"
#include "forge/error.hpp"
#include "forge/exact_sum.hpp"
#include "forge/parallel.hpp"
#include "forge/rng.hpp"

namespace forge {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::size_t kEvalChunk = 4096;
// Scale of the decoder's last-layer weights at initialization.
constexpr double kHyperInitScale = 1e-2;

std::vector<std::size_t> with_ends(std::size_t first, const std::vector<std::size_t>& middle, std::size_t last) {
  std::vector<std::size_t> sizes{first};
  sizes.insert(sizes.end(), middle.begin(), middle.end());
  sizes.push_back(last);
  return sizes;
}

struct TexelGeometry {
  HalfDiff hd;
  double cos_theta = 0.0;
  bool above_horizon = false;
};

TexelGeometry texel_geometry(std::size_t texel, const GridResolution& res) {
  TexelGeometry g;
  g.hd = angles_to_halfdiff(index_to_angles(unflatten_index(texel, res), res));
  const InOut io = halfdiff_to_io_unchecked(g.hd.h, g.hd.d);
  g.cos_theta = io.wi.z;
  g.above_horizon = io.wi.z > 0.0 && io.wo.z > 0.0;
  return g;
}

void check_samples(const SampleSet& samples) {
  if (samples.empty()) throw Error(ErrorKind::EmptySampleSet, "at least one sample is required");
}

}  // namespace

HyperModel::HyperModel(ModelConfig config, ReferenceTable reference)
    : config_(std::move(config)), reference_(std::move(reference)) {
  if (config_.latent_dim == 0) throw Error(ErrorKind::InvalidArgument, "latent dimension must be positive");
  hyponet_spec_ = {config_.hyponet_layers, Activation::Relu, Activation::Relu};
  hyponet_spec_.validate();
  if (hyponet_spec_.input_size() != kCoordinateWidth || hyponet_spec_.output_size() != 3) {
    throw Error(ErrorKind::InvalidArgument, "the hyponet maps 6 coordinates to 3 channels");
  }
  encoder_spec_ = {with_ends(kEncoderInputWidth, config_.encoder_hidden, config_.latent_dim),
                   Activation::Relu, Activation::Identity};
  encoder_spec_.validate();

  const std::size_t layers = hyponet_spec_.layer_count();
  std::size_t offset = encoder_spec_.param_count();
  for (std::size_t k = 0; k < 2 * layers; ++k) {
    const std::size_t group = k < layers ? hyponet_spec_.fan_in(k) * hyponet_spec_.fan_out(k)
                                         : hyponet_spec_.fan_out(k - layers);
    group_offsets_.push_back(k < layers ? hyponet_spec_.weight_offset(k)
                                        : hyponet_spec_.bias_offset(k - layers));
    block_specs_.push_back({with_ends(config_.latent_dim, config_.decoder_hidden, group),
                            Activation::Relu, Activation::Identity});
    block_specs_.back().validate();
    block_offsets_.push_back(offset);
    offset += block_specs_.back().param_count();
  }
  params_.assign(offset, 0.0);
}

HyperModel init_model(const ModelConfig& config, ReferenceTable reference, std::uint64_t seed) {
  HyperModel model(config, std::move(reference));
  const auto encoder = init_params(model.encoder_spec(), derive_seed(seed, 1));
  std::copy(encoder.begin(), encoder.end(), model.encoder_params().begin());

  const MlpSpec& hypo = model.hyponet_spec();
  const std::size_t layers = hypo.layer_count();
  for (std::size_t k = 0; k < model.block_count(); ++k) {
    const MlpSpec& spec = model.block_spec(k);
    auto params = init_params(spec, derive_seed(seed, 2, k));
    const std::size_t last = spec.layer_count() - 1;
    const std::size_t w_off = spec.weight_offset(last);
    for (std::size_t i = 0; i < spec.fan_in(last) * spec.fan_out(last); ++i) params[w_off + i] *= kHyperInitScale;

    // Last-layer biases: weight groups start as a uniformly initialized
    // hyponet layer, bias groups at zero, and the output bias at ln 2, the
    // mapped value of a texel that equals its reference.
    auto bias = std::span(params).subspan(spec.bias_offset(last), spec.fan_out(last));
    if (k < layers) {
      Rng rng(derive_seed(seed, 3, k));
      const double bound = std::sqrt(6.0 / static_cast<double>(hypo.fan_in(k)));
      for (double& b : bias) b = rng.uniform(-bound, bound);
    } else if (k == 2 * layers - 1) {
      std::fill(bias.begin(), bias.end(), std::numbers::ln2);
    }
    std::copy(params.begin(), params.end(), model.block_params(k).begin());
  }
  return model;
}

Matrix encoder_inputs(const SampleSet& samples) {
  Matrix x(kEncoderInputWidth, samples.size());
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const Sample& s = samples[n];
    const double row[kEncoderInputWidth] = {s.h.x, s.h.y, s.h.z, s.d.x, s.d.y,
                                            s.d.z, s.rho[0], s.rho[1], s.rho[2]};
    for (std::size_t f = 0; f < kEncoderInputWidth; ++f) x(f, n) = row[f];
  }
  return x;
}

Matrix hyponet_inputs(const SampleSet& samples) {
  Matrix x(kCoordinateWidth, samples.size());
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const Sample& s = samples[n];
    const double row[kCoordinateWidth] = {s.h.x, s.h.y, s.h.z, s.d.x, s.d.y, s.d.z};
    for (std::size_t f = 0; f < kCoordinateWidth; ++f) x(f, n) = row[f];
  }
  return x;
}

LatentEmbedding encode(const HyperModel& model, const SampleSet& samples, std::size_t threads) {
  check_samples(samples);
  const std::size_t dim = model.latent_dim();
  const std::size_t chunks = (samples.size() + kEvalChunk - 1) / kEvalChunk;
  const std::size_t wave = std::max<std::size_t>(threads, 1) * 4;
  std::vector<ExactSum> sums(dim);
  std::vector<Matrix> outputs(wave);
  for (std::size_t first = 0; first < chunks; first += wave) {
    const std::size_t count = std::min(wave, chunks - first);
    parallel_for(count, threads, [&](std::size_t i) {
      const std::size_t begin = (first + i) * kEvalChunk;
      const std::size_t end = std::min(samples.size(), begin + kEvalChunk);
      const SampleSet chunk(samples.begin() + begin, samples.begin() + end);
      outputs[i] = mlp_forward(model.encoder_spec(), model.encoder_params(), encoder_inputs(chunk));
    });
    // ExactSum is order-free, so chunk boundaries cannot change the result.
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t j = 0; j < dim; ++j) {
        for (double v : outputs[i].row(j)) sums[j].add(v);
      }
    }
  }
  LatentEmbedding z;
  z.z.resize(dim);
  const double n = static_cast<double>(samples.size());
  for (std::size_t j = 0; j < dim; ++j) z.z[j] = sums[j].value() / n;
  return z;
}

HyponetWeights decode(const HyperModel& model, const LatentEmbedding& z) {
  if (z.z.size() != model.latent_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "embedding has " + std::to_string(z.z.size()) +
                                                  " entries, model expects " +
                                                  std::to_string(model.latent_dim()));
  }
  Matrix in(model.latent_dim(), 1);
  std::copy(z.z.begin(), z.z.end(), in.data().begin());
  HyponetWeights w{model.hyponet_spec(), std::vector<double>(model.hyponet_size())};
  for (std::size_t k = 0; k < model.block_count(); ++k) {
    const Matrix out = mlp_forward(model.block_spec(k), model.block_params(k), in);
    std::copy(out.data().begin(), out.data().end(), w.values.begin() + model.group_offset(k));
  }
  return w;
}

Matrix hyponet_eval(const HyponetWeights& w, const Matrix& coords) {
  return mlp_forward(w.spec, w.values, coords);
}

LossEvaluation evaluate_loss(const HyperModel& model, std::span<const SampleSet> batch,
                             const LossWeights& weights, bool with_gradient, std::size_t threads) {
  if (batch.empty()) throw Error(ErrorKind::InvalidArgument, "loss needs at least one material");
  for (const auto& s : batch) check_samples(s);

  const std::size_t materials = batch.size();
  const std::size_t dim = model.latent_dim();
  const std::size_t hypo_size = model.hyponet_size();
  const std::size_t blocks = model.block_count();
  const double m_count = static_cast<double>(materials);
  std::size_t total_samples = 0;
  for (const auto& s : batch) total_samples += s.size();

  struct MaterialWork {
    ForwardCache encoder;
    ForwardCache hyponet;
    std::vector<double> w;
    std::vector<double> dw;
    std::vector<double> encoder_grad;
    double residual_sum = 0.0;
  };
  std::vector<MaterialWork> work(materials);
  Matrix latents(dim, materials);

  // Set encoder, one material per task.
  parallel_for(materials, threads, [&](std::size_t m) {
    const Matrix out = mlp_forward(model.encoder_spec(), model.encoder_params(), encoder_inputs(batch[m]),
                                   with_gradient ? &work[m].encoder : nullptr);
    const double n = static_cast<double>(batch[m].size());
    for (std::size_t j = 0; j < dim; ++j) {
      ExactSum sum;
      for (double v : out.row(j)) sum.add(v);
      latents(j, m) = sum.value() / n;
    }
  });

  // Decoder blocks, batched over materials.
  std::vector<ForwardCache> block_cache(blocks);
  std::vector<Matrix> block_out(blocks);
  parallel_for(blocks, threads, [&](std::size_t k) {
    block_out[k] = mlp_forward(model.block_spec(k), model.block_params(k), latents,
                               with_gradient ? &block_cache[k] : nullptr);
  });

  // Hyponet per material.
  const double inv_total = 1.0 / static_cast<double>(total_samples);
  parallel_for(materials, threads, [&](std::size_t m) {
    MaterialWork& mw = work[m];
    mw.w.resize(hypo_size);
    for (std::size_t k = 0; k < blocks; ++k) {
      const Matrix& out = block_out[k];
      for (std::size_t i = 0; i < out.rows(); ++i) mw.w[model.group_offset(k) + i] = out(i, m);
    }
    const SampleSet& samples = batch[m];
    const Matrix pred = mlp_forward(model.hyponet_spec(), mw.w, hyponet_inputs(samples),
                                    with_gradient ? &mw.hyponet : nullptr);
    Matrix grad_pred(3, samples.size());
    double sum = 0.0;
    for (std::size_t n = 0; n < samples.size(); ++n) {
      const double c = samples[n].cos_theta;
      double r[3];
      for (int ch = 0; ch < 3; ++ch) r[ch] = c * pred(ch, n) - c * samples[n].rho[ch];
      const double norm = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
      sum += norm;
      if (with_gradient && norm > 0.0) {
        for (int ch = 0; ch < 3; ++ch) grad_pred(ch, n) = c * (r[ch] / norm) * inv_total;
      }
    }
    mw.residual_sum = sum;
    if (!with_gradient) return;
    mw.dw.assign(hypo_size, 0.0);
    mlp_backward(model.hyponet_spec(), mw.w, mw.hyponet, grad_pred, mw.dw);
    const double scale = 2.0 * weights.lambda1 / (static_cast<double>(hypo_size) * m_count);
    for (std::size_t i = 0; i < hypo_size; ++i) mw.dw[i] += scale * mw.w[i];
  });

  LossEvaluation result;
  LossValue& v = result.value;
  double residual = 0.0, w_reg = 0.0, z_reg = 0.0;
  for (std::size_t m = 0; m < materials; ++m) {
    residual += work[m].residual_sum;
    double sq = 0.0;
    for (double x : work[m].w) sq += x * x;
    w_reg += sq / static_cast<double>(hypo_size);
    double zq = 0.0;
    for (std::size_t j = 0; j < dim; ++j) zq += latents(j, m) * latents(j, m);
    z_reg += zq / static_cast<double>(dim);
  }
  v.reconstruction = residual * inv_total;
  v.weights = w_reg / m_count;
  v.latent = z_reg / m_count;
  v.total = v.reconstruction + weights.lambda1 * v.weights + weights.lambda2 * v.latent;
  if (!with_gradient) return result;

  result.gradient.assign(model.params().size(), 0.0);
  std::span<double> grad(result.gradient);

  // Decoder backward: the gradient w.r.t. a block's output is the hyponet
  // gradient w.r.t. the weights that block generates.
  std::vector<Matrix> latent_grads(blocks);
  parallel_for(blocks, threads, [&](std::size_t k) {
    const MlpSpec& spec = model.block_spec(k);
    Matrix g_out(spec.output_size(), materials);
    for (std::size_t m = 0; m < materials; ++m) {
      for (std::size_t i = 0; i < spec.output_size(); ++i) g_out(i, m) = work[m].dw[model.group_offset(k) + i];
    }
    mlp_backward(spec, model.block_params(k), block_cache[k], g_out,
                 grad.subspan(model.block_param_offset(k), spec.param_count()), &latent_grads[k]);
  });
  Matrix dz(dim, materials);
  for (std::size_t k = 0; k < blocks; ++k) {
    auto src = latent_grads[k].data();
    auto dst = dz.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  const double z_scale = 2.0 * weights.lambda2 / (static_cast<double>(dim) * m_count);
  for (std::size_t i = 0; i < dz.data().size(); ++i) dz.data()[i] += z_scale * latents.data()[i];

  // Encoder backward: the mean spreads dz evenly over the samples.
  const std::size_t enc_size = model.encoder_spec().param_count();
  parallel_for(materials, threads, [&](std::size_t m) {
    const std::size_t n = batch[m].size();
    Matrix g_out(dim, n);
    for (std::size_t j = 0; j < dim; ++j) {
      const double g = dz(j, m) / static_cast<double>(n);
      for (double& x : g_out.row(j)) x = g;
    }
    work[m].encoder_grad.assign(enc_size, 0.0);
    mlp_backward(model.encoder_spec(), model.encoder_params(), work[m].encoder, g_out, work[m].encoder_grad);
  });
  for (std::size_t m = 0; m < materials; ++m) {
    for (std::size_t i = 0; i < enc_size; ++i) grad[i] += work[m].encoder_grad[i];
  }
  return result;
}

TrainResult train(std::span<const MaterialRecord> dataset, const ModelConfig& model_config,
                  const TrainConfig& config, const std::function<void(const EpochRecord&)>& on_epoch) {
  if (dataset.empty()) throw Error(ErrorKind::EmptyDataset, "training needs materials");
  if (config.epochs == 0 || config.steps_per_epoch == 0 || config.materials_per_step == 0 ||
      config.samples_per_material == 0) {
    throw Error(ErrorKind::InvalidArgument, "training counts must be at least 1");
  }
  if (!(config.loss.lambda1 >= 0.0) || !(config.loss.lambda2 >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "regularization weights must be nonnegative");
  }
  if (!(config.learning_rate > 0.0)) throw Error(ErrorKind::InvalidArgument, "learning rate must be positive");
  if (!(config.lr_final_scale > 0.0 && config.lr_final_scale <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "lr_final_scale must lie in (0, 1]");
  }

  ReferenceTable reference = compute_reference_median(dataset);
  const GridResolution res = reference.resolution();
  HyperModel model = init_model(model_config, std::move(reference), derive_seed(config.seed, 0x4d4f44));

  std::vector<TexelGeometry> geometry(res.texels());
  for (std::size_t t = 0; t < geometry.size(); ++t) geometry[t] = texel_geometry(t, res);
  // Usable texels per material, optionally cut down to a fixed random subset.
  std::vector<std::vector<std::uint32_t>> pools(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    auto& pool = pools[i];
    for (std::size_t t = 0; t < geometry.size(); ++t) {
      if (geometry[t].above_horizon && dataset[i].grid.valid(t)) pool.push_back(static_cast<std::uint32_t>(t));
    }
    if (pool.empty()) throw Error(ErrorKind::EmptyResult, dataset[i].name + " has no valid texel above the horizon");
    if (config.texels_per_material != 0 && config.texels_per_material < pool.size()) {
      Rng rng(derive_seed(config.seed, 0x7e7e1, i));
      for (std::size_t k = 0; k < config.texels_per_material; ++k) {
        std::swap(pool[k], pool[k + rng.below(pool.size() - k)]);
      }
      pool.resize(config.texels_per_material);
      std::sort(pool.begin(), pool.end());
    }
  }

  AdamState adam(model.params().size(), AdamOptions{.learning_rate = config.learning_rate});
  const std::size_t per_step = std::min(config.materials_per_step, dataset.size());
  std::vector<EpochRecord> log;
  std::uint64_t step = 0;
  const std::uint64_t total_steps = config.epochs * config.steps_per_epoch;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double loss_sum = 0.0, rec_sum = 0.0;
    for (std::size_t s = 0; s < config.steps_per_epoch; ++s, ++step) {
      std::vector<std::size_t> chosen(dataset.size());
      for (std::size_t i = 0; i < chosen.size(); ++i) chosen[i] = i;
      if (per_step < dataset.size()) {
        Rng rng(derive_seed(config.seed, 0x5e1ec7, step));
        for (std::size_t i = 0; i < per_step; ++i) std::swap(chosen[i], chosen[i + rng.below(chosen.size() - i)]);
        chosen.resize(per_step);
      }
      std::vector<SampleSet> batch(per_step);
      parallel_for(per_step, config.threads, [&](std::size_t i) {
        const MaterialRecord& material = dataset[chosen[i]];
        Rng rng(derive_seed(config.seed, step, chosen[i]));
        SampleSet& out = batch[i];
        out.reserve(config.samples_per_material);
        const auto& pool = pools[chosen[i]];
        while (out.size() < config.samples_per_material) {
          const std::size_t t = pool[rng.below(pool.size())];
          const TexelGeometry& g = geometry[t];
          Sample smp{g.hd.h, g.hd.d, {}, g.cos_theta, static_cast<std::uint32_t>(t)};
          for (int c = 0; c < 3; ++c) {
            smp.rho[c] = log_relative_map(material.grid.reflectance(c, t), model.reference().value(c, t));
          }
          out.push_back(smp);
        }
      });
      const LossEvaluation eval = evaluate_loss(model, batch, config.loss, true, config.threads);
      if (config.lr_final_scale != 1.0) {
        const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
        const double lo = config.learning_rate * config.lr_final_scale;
        adam.options.learning_rate = lo + 0.5 * (config.learning_rate - lo) * (1.0 + std::cos(std::numbers::pi * progress));
      }
      adam_step(model.params(), eval.gradient, adam);
      loss_sum += eval.value.total;
      rec_sum += eval.value.reconstruction;
    }
    const double steps = static_cast<double>(config.steps_per_epoch);
    log.push_back({epoch + 1, loss_sum / steps, rec_sum / steps});
    if (on_epoch) on_epoch(log.back());
  }
  return {std::move(model), std::move(log)};
}

BrdfGrid weights_to_grid(const HyponetWeights& w, const ReferenceTable& ref, std::size_t threads) {
  const GridResolution res = ref.resolution();
  BrdfGrid grid(res);
  const std::size_t texels = res.texels();
  const std::size_t chunks = (texels + kEvalChunk - 1) / kEvalChunk;
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t begin = c * kEvalChunk;
    const std::size_t end = std::min(texels, begin + kEvalChunk);
    Matrix coords(kCoordinateWidth, end - begin);
    for (std::size_t t = begin; t < end; ++t) {
      const HalfDiff hd = angles_to_halfdiff(index_to_angles(unflatten_index(t, res), res));
      const double row[kCoordinateWidth] = {hd.h.x, hd.h.y, hd.h.z, hd.d.x, hd.d.y, hd.d.z};
      for (std::size_t f = 0; f < kCoordinateWidth; ++f) coords(f, t - begin) = row[f];
    }
    const Matrix mapped = hyponet_eval(w, coords);
    for (std::size_t t = begin; t < end; ++t) {
      for (int ch = 0; ch < 3; ++ch) {
        grid.set_reflectance(ch, t, log_relative_unmap(mapped(ch, t - begin), ref.value(ch, t)));
      }
    }
  });
  return grid;
}

BrdfGrid reconstruct(const HyperModel& model, const SampleSet& sparse, std::size_t threads) {
  return weights_to_grid(decode(model, encode(model, sparse, threads)), model.reference(), threads);
}

LatentEmbedding compress(const HyperModel& model, const MaterialRecord& material, std::size_t n_samples,
                         std::uint64_t seed, std::size_t threads) {
  if (!(material.grid.resolution() == model.reference().resolution())) {
    throw Error(ErrorKind::ShapeMismatch, material.name + " does not match the model's grid resolution");
  }
  const auto indices = sample_uniform(n_samples, seed, material.grid.resolution());
  return encode(model, extract_samples(material.grid, model.reference(), indices), threads);
}

LatentEmbedding interpolate(const LatentEmbedding& a, const LatentEmbedding& b, double alpha) {
  if (a.z.size() != b.z.size()) throw Error(ErrorKind::DimensionMismatch, "embeddings differ in length");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::InvalidArgument, "alpha must lie in [0, 1]");
  if (alpha == 0.0) return a;
  if (alpha == 1.0) return b;
  LatentEmbedding out;
  out.z.resize(a.z.size());
  for (std::size_t i = 0; i < a.z.size(); ++i) out.z[i] = (1.0 - alpha) * a.z[i] + alpha * b.z[i];
  return out;
}

namespace {

void write_sizes(detail::ByteWriter& out, const std::vector<std::size_t>& sizes) {
  out.u32(static_cast<std::uint32_t>(sizes.size()));
  for (std::size_t s : sizes) out.u32(static_cast<std::uint32_t>(s));
}

std::vector<std::size_t> read_sizes(detail::ByteReader& in) {
  const std::uint32_t count = in.u32();
  if (count < 2 || count > 64) throw Error(ErrorKind::LengthMismatch, "implausible layer count");
  std::vector<std::size_t> sizes(count);
  for (auto& s : sizes) s = in.u32();
  return sizes;
}

std::vector<std::size_t> middle(const std::vector<std::size_t>& sizes) {
  return {sizes.begin() + 1, sizes.end() - 1};
}

}  // namespace

std::vector<std::byte> save_checkpoint(const HyperModel& model) {
  detail::ByteWriter out;
  out.tag("BHN1");
  out.u32(kCheckpointVersion);
  out.u32(static_cast<std::uint32_t>(model.latent_dim()));
  write_sizes(out, model.hyponet_spec().layer_sizes);
  write_sizes(out, model.encoder_spec().layer_sizes);
  out.u32(static_cast<std::uint32_t>(model.block_count()));
  for (std::size_t k = 0; k < model.block_count(); ++k) write_sizes(out, model.block_spec(k).layer_sizes);
  out.f64s(model.params());
  const auto& res = model.reference().resolution();
  out.u32(res.theta_h);
  out.u32(res.theta_d);
  out.u32(res.phi_d);
  for (int c = 0; c < 3; ++c) out.f64s(model.reference().plane(c));
  out.u64(out.size());
  return out.take();
}

HyperModel load_checkpoint(std::span<const std::byte> bytes) {
  detail::ByteReader in(bytes, ErrorKind::LengthMismatch);
  if (bytes.size() < 4 || in.tag(4) != "BHN1") throw Error(ErrorKind::BadMagic, "not a hypernetwork checkpoint");
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::VersionMismatch, "checkpoint version " + std::to_string(version));
  }
  ModelConfig config;
  config.latent_dim = in.u32();
  config.hyponet_layers = read_sizes(in);
  const auto encoder = read_sizes(in);
  config.encoder_hidden = middle(encoder);
  const std::uint32_t blocks = in.u32();
  std::vector<std::vector<std::size_t>> block_sizes(blocks);
  for (auto& b : block_sizes) b = read_sizes(in);
  if (!block_sizes.empty()) config.decoder_hidden = middle(block_sizes.front());

  ReferenceTable placeholder(GridResolution{1, 1, 1});
  HyperModel shape(config, placeholder);
  bool consistent = shape.encoder_spec().layer_sizes == encoder && shape.block_count() == blocks;
  for (std::size_t k = 0; consistent && k < blocks; ++k) {
    consistent = shape.block_spec(k).layer_sizes == block_sizes[k];
  }
  if (!consistent) throw Error(ErrorKind::ShapeMismatch, "checkpoint layer lists are inconsistent");

  std::vector<double> params(shape.params().size());
  in.f64s(params);
  GridResolution res;
  res.theta_h = in.u32();
  res.theta_d = in.u32();
  res.phi_d = in.u32();
  if (res.theta_h == 0 || res.theta_d == 0 || res.phi_d == 0 ||
      in.remaining() < 3 * res.texels() * sizeof(double)) {
    throw Error(ErrorKind::LengthMismatch, "reference table is truncated");
  }
  ReferenceTable reference(res);
  for (int c = 0; c < 3; ++c) in.f64s(reference.plane(c));
  const std::size_t body = in.position();
  const std::uint64_t footer = in.u64();
  if (footer != body || in.remaining() != 0) throw Error(ErrorKind::LengthMismatch, "length footer mismatch");

  HyperModel model(config, std::move(reference));
  std::copy(params.begin(), params.end(), model.params().begin());
  return model;
}

void write_embeddings(std::ostream& out, std::span<const NamedEmbedding> rows) {
  std::ostringstream line;
  line << std::setprecision(17);
  for (const auto& row : rows) {
    line.str("");
    line << row.name;
    for (double v : row.embedding.z) line << ' ' << v;
    out << line.str() << '\n';
  }
}

std::vector<NamedEmbedding> read_embeddings(std::istream& in) {
  std::vector<NamedEmbedding> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    NamedEmbedding row;
    if (!(fields >> row.name) || row.name.starts_with('#')) continue;
    for (std::string tok; fields >> tok;) {
      try {
        std::size_t used = 0;
        row.embedding.z.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": bad value '" + tok + "'");
      }
    }
    if (row.embedding.z.empty()) {
      throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": no latent values");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace forge
