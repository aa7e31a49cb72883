#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "forge/brdf_param.hpp"
#include "forge/merl_io.hpp"
#include "forge/nn_core.hpp"
#include "forge/preproc.hpp"

namespace forge {

/// Per-sample encoder input: [H, D, rho'].
inline constexpr std::size_t kEncoderInputWidth = 9;
inline constexpr std::size_t kCoordinateWidth = 6;

struct ModelConfig {
  std::size_t latent_dim = 40;
  std::vector<std::size_t> hyponet_layers{6, 60, 60, 60, 60, 3};
  std::vector<std::size_t> encoder_hidden{128, 128};
  std::vector<std::size_t> decoder_hidden{256, 256};

  bool operator==(const ModelConfig&) const = default;
};

struct LatentEmbedding {
  std::vector<double> z;

  bool operator==(const LatentEmbedding&) const = default;
};

/// Flattened parameters of one material's neural field.
struct HyponetWeights {
  MlpSpec spec;
  std::vector<double> values;
};

/// Set encoder, hypernetwork decoder and the reference table used for mapping.
///
/// All trainable parameters live in one flat vector: the encoder first, then
/// the decoder blocks in order. Decoder block k < L emits the weight matrix of
/// hyponet layer k, block L + k its bias vector (L = hyponet layer count).
class HyperModel {
 public:
  HyperModel(ModelConfig config, ReferenceTable reference);

  const ModelConfig& config() const { return config_; }
  std::size_t latent_dim() const { return config_.latent_dim; }
  const ReferenceTable& reference() const { return reference_; }

  const MlpSpec& encoder_spec() const { return encoder_spec_; }
  const MlpSpec& hyponet_spec() const { return hyponet_spec_; }
  const MlpSpec& block_spec(std::size_t k) const { return block_specs_[k]; }
  std::size_t block_count() const { return block_specs_.size(); }

  /// Length W of the generated hyponet parameter vector.
  std::size_t hyponet_size() const { return hyponet_spec_.param_count(); }
  /// Offset of block k's output inside the hyponet parameter vector.
  std::size_t group_offset(std::size_t k) const { return group_offsets_[k]; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::span<double> encoder_params() { return std::span(params_).subspan(0, encoder_spec_.param_count()); }
  std::span<const double> encoder_params() const {
    return std::span(params_).subspan(0, encoder_spec_.param_count());
  }
  std::size_t block_param_offset(std::size_t k) const { return block_offsets_[k]; }
  std::span<double> block_params(std::size_t k) {
    return std::span(params_).subspan(block_offsets_[k], block_specs_[k].param_count());
  }
  std::span<const double> block_params(std::size_t k) const {
    return std::span(params_).subspan(block_offsets_[k], block_specs_[k].param_count());
  }

  bool operator==(const HyperModel& o) const {
    return config_ == o.config_ && params_ == o.params_ && reference_ == o.reference_;
  }

 private:
  ModelConfig config_;
  ReferenceTable reference_;
  MlpSpec encoder_spec_;
  MlpSpec hyponet_spec_;
  std::vector<MlpSpec> block_specs_;
  std::vector<std::size_t> block_offsets_;
  std::vector<std::size_t> group_offsets_;
  std::vector<double> params_;
};

/// Random initialization. The last layer of every decoder block starts with
/// small weights and a bias that already describes a usable hyponet, so that
/// training begins from a sensibly scaled neural field.
HyperModel init_model(const ModelConfig& config, ReferenceTable reference, std::uint64_t seed);

Matrix encoder_inputs(const SampleSet& samples);
Matrix hyponet_inputs(const SampleSet& samples);

/// Mean of the per-sample encoder outputs. The mean is correctly rounded, so
/// z is bitwise invariant to sample order and to duplicating the set.
LatentEmbedding encode(const HyperModel& model, const SampleSet& samples, std::size_t threads = 1);

HyponetWeights decode(const HyperModel& model, const LatentEmbedding& z);

/// Mapped reflectance (3 x B) at coordinates (6 x B); nonnegative by construction.
Matrix hyponet_eval(const HyponetWeights& w, const Matrix& coords);

struct LossWeights {
  double lambda1 = 1e-2;
  double lambda2 = 1e-3;
};

struct LossValue {
  double total = 0.0;
  double reconstruction = 0.0;
  /// Mean over materials of (1/W) sum w^2.
  double weights = 0.0;
  /// Mean over materials of (1/Z) sum z^2.
  double latent = 0.0;
};

struct LossEvaluation {
  LossValue value;
  /// Gradient w.r.t. HyperModel::params(); empty unless requested.
  std::vector<double> gradient;
};

/// Training objective over one batch of materials (each a sample set whose
/// mapped values are the targets). L_rec is the mean over all samples of the
/// Euclidean norm of the cosine-weighted residual.
LossEvaluation evaluate_loss(const HyperModel& model, std::span<const SampleSet> batch,
                             const LossWeights& weights, bool with_gradient = true,
                             std::size_t threads = 1);

struct TrainConfig {
  LossWeights loss;
  std::size_t epochs = 80;
  std::size_t steps_per_epoch = 100;
  std::size_t materials_per_step = 8;
  std::size_t samples_per_material = 512;
  /// Restricts each material to a fixed random subset of this many usable
  /// texels; 0 uses all of them.
  std::size_t texels_per_material = 0;
  double learning_rate = 1e-4;
  /// Cosine decay from learning_rate to learning_rate * lr_final_scale over
  /// all steps; 1 keeps the rate constant.
  double lr_final_scale = 1.0;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double reconstruction = 0.0;
};

struct TrainResult {
  HyperModel model;
  std::vector<EpochRecord> log;
};

/// Seeded training loop. The reference table is the median of `dataset`.
/// Bit-identical output for equal inputs regardless of config.threads.
TrainResult train(std::span<const MaterialRecord> dataset, const ModelConfig& model_config,
                  const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Evaluates a neural field at every texel centre and unmaps it to reflectance.
BrdfGrid weights_to_grid(const HyponetWeights& w, const ReferenceTable& ref, std::size_t threads = 1);

/// encode -> decode -> evaluate on the model's full grid.
BrdfGrid reconstruct(const HyperModel& model, const SampleSet& sparse, std::size_t threads = 1);

/// Latent code of a material from n uniformly drawn texels.
LatentEmbedding compress(const HyperModel& model, const MaterialRecord& material,
                         std::size_t n_samples, std::uint64_t seed, std::size_t threads = 1);

/// (1 - alpha) a + alpha b; the endpoints are returned exactly.
LatentEmbedding interpolate(const LatentEmbedding& a, const LatentEmbedding& b, double alpha);

std::vector<std::byte> save_checkpoint(const HyperModel& model);
HyperModel load_checkpoint(std::span<const std::byte> bytes);

struct NamedEmbedding {
  std::string name;
  LatentEmbedding embedding;
};

/// One line per material: the name followed by the Z latent values.
void write_embeddings(std::ostream& out, std::span<const NamedEmbedding> rows);
std::vector<NamedEmbedding> read_embeddings(std::istream& in);

}  // namespace forge
