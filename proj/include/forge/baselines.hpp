#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "forge/brdf_param.hpp"
#include "forge/hypernet.hpp"
#include "forge/merl_io.hpp"
#include "forge/nn_core.hpp"
#include "forge/preproc.hpp"

namespace forge {

/// Principal components of log-relative-mapped BRDF vectors.
///
/// Feature f = channel * texels + texel, so n = 3 * texel count.
struct PcaModel {
  GridResolution resolution;
  std::size_t materials = 0;
  std::vector<double> mean;
  /// n_pc x n, orthonormal rows.
  Matrix components;
  std::vector<double> singular_values;

  std::size_t feature_count() const { return mean.size(); }
  std::size_t component_count() const { return components.rows(); }
};

/// Mapped feature vector of a grid. Invalid texels take the reference value,
/// which maps to ln 2.
std::vector<double> mapped_features(const BrdfGrid& grid, const ReferenceTable& ref);

/// Symmetric eigendecomposition by cyclic Jacobi rotations. Eigenvalues are
/// returned in descending order; column i of `vectors` belongs to value i.
struct SymmetricEigen {
  std::vector<double> values;
  Matrix vectors;
};
SymmetricEigen jacobi_eigen(const Matrix& symmetric);

/// Mean-centred PCA through the m x m Gram matrix, lifted to feature space.
PcaModel ipca_fit(std::span<const MaterialRecord> dataset, const ReferenceTable& ref, std::size_t n_pc);

std::vector<double> ipca_project(const PcaModel& model, const BrdfGrid& material, const ReferenceTable& ref);

/// Damped least-squares fit of the coefficients to sparse mapped samples.
/// The Tikhonov term is 1e-6 times the mean diagonal of the normal matrix.
std::vector<double> ipca_fit_sparse(const PcaModel& model, const SampleSet& sparse, const ReferenceTable& ref);

std::vector<double> ipca_mapped_vector(const PcaModel& model, std::span<const double> coeffs);
BrdfGrid ipca_reconstruct(const PcaModel& model, std::span<const double> coeffs, const ReferenceTable& ref);

std::vector<std::byte> save_pca(const PcaModel& model);
PcaModel load_pca(std::span<const std::byte> bytes);

struct NbrdfOptions {
  std::vector<std::size_t> layers{6, 60, 60, 60, 60, 3};
  double learning_rate = 1e-3;
};

/// Overfits a fresh neural field to one material's samples with the
/// cosine-weighted reconstruction loss. The output bias starts at the mean
/// target so that no channel begins behind the final ReLU.
HyponetWeights nbrdf_fit(const SampleSet& sparse, std::size_t steps, std::uint64_t seed,
                         const NbrdfOptions& options = {});

/// Mean over samples of || cos * (pred - target) ||_2 for one neural field.
double reconstruction_loss(const HyponetWeights& w, const SampleSet& samples);

}  // namespace forge
