#include "forge/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "binary.hpp"
#include "forge/error.hpp"

namespace forge {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_resolution(const PcaModel& model, const GridResolution& res) {
  if (!(model.resolution == res)) throw Error(ErrorKind::ShapeMismatch, "grid resolution differs from the PCA model");
}

// Modified Gram-Schmidt of row r against rows [0, r); returns the remaining norm.
double orthogonalize_row(Matrix& rows, std::size_t r) {
  auto v = rows.row(r);
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t q = 0; q < r; ++q) {
      const auto u = rows.row(q);
      const double p = dot(u, v);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= p * u[i];
    }
  }
  const double norm = std::sqrt(dot(v, v));
  if (norm > 0.0) {
    for (double& x : v) x /= norm;
  }
  return norm;
}

}  // namespace

std::vector<double> mapped_features(const BrdfGrid& grid, const ReferenceTable& ref) {
  if (!(grid.resolution() == ref.resolution())) {
    throw Error(ErrorKind::ShapeMismatch, "reference table resolution differs from grid");
  }
  const std::size_t texels = grid.texel_count();
  std::vector<double> x(3 * texels);
  for (int c = 0; c < 3; ++c) {
    const auto stored = grid.stored(c);
    for (std::size_t t = 0; t < texels; ++t) {
      const double r = ref.value(c, t);
      x[c * texels + t] = log_relative_map(stored[t] >= 0.0 ? grid.reflectance(c, t) : r, r);
    }
  }
  return x;
}

SymmetricEigen jacobi_eigen(const Matrix& symmetric) {
  const std::size_t n = symmetric.rows();
  if (symmetric.cols() != n) throw Error(ErrorKind::ShapeMismatch, "eigendecomposition needs a square matrix");
  Matrix a = symmetric;
  Matrix v(n, n);
  for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

  double scale = 0.0;
  for (double x : a.data()) scale += x * x;
  scale = std::sqrt(scale);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (std::sqrt(off) <= 1e-15 * scale || off == 0.0) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
  SymmetricEigen out{std::vector<double>(n), Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    out.values[i] = a(order[i], order[i]);
    for (std::size_t k = 0; k < n; ++k) out.vectors(k, i) = v(k, order[i]);
  }
  return out;
}

PcaModel ipca_fit(std::span<const MaterialRecord> dataset, const ReferenceTable& ref, std::size_t n_pc) {
  const std::size_t m = dataset.size();
  if (m == 0 || n_pc == 0 || n_pc > m) {
    throw Error(ErrorKind::TooFewMaterials, "need 1 <= n_pc <= m, got n_pc = " + std::to_string(n_pc) +
                                                ", m = " + std::to_string(m));
  }
  std::vector<std::vector<double>> rows;
  rows.reserve(m);
  for (const auto& mat : dataset) rows.push_back(mapped_features(mat.grid, ref));
  const std::size_t n = rows.front().size();
  double energy = 0.0;
  for (const auto& r : rows) energy += dot(r, r);

  PcaModel model;
  model.resolution = ref.resolution();
  model.materials = m;
  model.mean.assign(n, 0.0);
  for (const auto& r : rows) {
    for (std::size_t f = 0; f < n; ++f) model.mean[f] += r[f];
  }
  for (double& x : model.mean) x /= static_cast<double>(m);
  for (auto& r : rows) {
    for (std::size_t f = 0; f < n; ++f) r[f] -= model.mean[f];
  }

  Matrix gram(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j <= i; ++j) gram(i, j) = gram(j, i) = dot(rows[i], rows[j]);
  }
  const SymmetricEigen eig = jacobi_eigen(gram);
  // Directions whose singular value is below 1e-10 of the data norm are
  // centring round-off, not variation, and count as null.
  const double tol = std::max(1e-12 * std::max(eig.values.front(), 0.0), 1e-20 * energy);

  model.components = Matrix(n_pc, n);
  model.singular_values.assign(n_pc, 0.0);
  std::size_t filler = 0;
  for (std::size_t i = 0; i < n_pc; ++i) {
    auto comp = model.components.row(i);
    const double lambda = eig.values[i];
    if (lambda > tol && lambda > 0.0) {
      // v_i = A^T u_i / sigma_i
      for (std::size_t j = 0; j < m; ++j) {
        const double u = eig.vectors(j, i);
        for (std::size_t f = 0; f < n; ++f) comp[f] += u * rows[j][f];
      }
      model.singular_values[i] = std::sqrt(lambda);
      if (orthogonalize_row(model.components, i) > 0.0) continue;
      model.singular_values[i] = 0.0;
    }
    // Null direction: complete the basis with orthogonalized unit vectors.
    for (;;) {
      if (filler >= n) throw Error(ErrorKind::SingularSystem, "cannot complete the component basis");
      std::fill(comp.begin(), comp.end(), 0.0);
      comp[filler++] = 1.0;
      if (orthogonalize_row(model.components, i) > 0.5) break;
    }
  }
  return model;
}

std::vector<double> ipca_project(const PcaModel& model, const BrdfGrid& material, const ReferenceTable& ref) {
  check_resolution(model, material.resolution());
  std::vector<double> x = mapped_features(material, ref);
  for (std::size_t f = 0; f < x.size(); ++f) x[f] -= model.mean[f];
  std::vector<double> coeffs(model.component_count());
  for (std::size_t i = 0; i < coeffs.size(); ++i) coeffs[i] = dot(model.components.row(i), x);
  return coeffs;
}

std::vector<double> ipca_fit_sparse(const PcaModel& model, const SampleSet& sparse, const ReferenceTable& ref) {
  check_resolution(model, ref.resolution());
  const std::size_t k = model.component_count();
  if (sparse.size() < k) {
    throw Error(ErrorKind::Underdetermined, std::to_string(sparse.size()) + " samples for " +
                                                std::to_string(k) + " components");
  }
  const std::size_t texels = model.resolution.texels();
  Matrix normal(k, k);
  std::vector<double> rhs(k, 0.0);
  std::vector<double> row(k);
  for (const Sample& s : sparse) {
    const std::size_t t = s.texel ? *s.texel
                                  : flat_index(angles_to_index(halfdiff_to_angles({s.h, s.d}), model.resolution),
                                               model.resolution);
    if (t >= texels) throw Error(ErrorKind::ShapeMismatch, "sample texel outside the PCA grid");
    for (int c = 0; c < 3; ++c) {
      const std::size_t f = c * texels + t;
      for (std::size_t i = 0; i < k; ++i) row[i] = model.components(i, f);
      const double y = s.rho[c] - model.mean[f];
      for (std::size_t i = 0; i < k; ++i) {
        rhs[i] += row[i] * y;
        for (std::size_t j = 0; j < k; ++j) normal(i, j) += row[i] * row[j];
      }
    }
  }
  double trace = 0.0;
  for (std::size_t i = 0; i < k; ++i) trace += normal(i, i);
  const double damping = 1e-6 * (trace > 0.0 ? trace / static_cast<double>(k) : 1.0);
  for (std::size_t i = 0; i < k; ++i) normal(i, i) += damping;

  // Cholesky: normal = L L^T, L stored in the lower triangle.
  for (std::size_t j = 0; j < k; ++j) {
    double d = normal(j, j);
    for (std::size_t p = 0; p < j; ++p) d -= normal(j, p) * normal(j, p);
    if (!(d > 0.0)) throw Error(ErrorKind::SingularSystem, "normal equations are not positive definite");
    normal(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < k; ++i) {
      double s = normal(i, j);
      for (std::size_t p = 0; p < j; ++p) s -= normal(i, p) * normal(j, p);
      normal(i, j) = s / normal(j, j);
    }
  }
  std::vector<double> x(rhs);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t p = 0; p < i; ++p) x[i] -= normal(i, p) * x[p];
    x[i] /= normal(i, i);
  }
  for (std::size_t i = k; i-- > 0;) {
    for (std::size_t p = i + 1; p < k; ++p) x[i] -= normal(p, i) * x[p];
    x[i] /= normal(i, i);
  }
  return x;
}

std::vector<double> ipca_mapped_vector(const PcaModel& model, std::span<const double> coeffs) {
  if (coeffs.size() != model.component_count()) {
    throw Error(ErrorKind::ShapeMismatch, "expected " + std::to_string(model.component_count()) + " coefficients");
  }
  std::vector<double> x = model.mean;
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    const auto comp = model.components.row(i);
    for (std::size_t f = 0; f < x.size(); ++f) x[f] += coeffs[i] * comp[f];
  }
  return x;
}

BrdfGrid ipca_reconstruct(const PcaModel& model, std::span<const double> coeffs, const ReferenceTable& ref) {
  check_resolution(model, ref.resolution());
  const std::vector<double> x = ipca_mapped_vector(model, coeffs);
  BrdfGrid grid(model.resolution);
  const std::size_t texels = grid.texel_count();
  for (int c = 0; c < 3; ++c) {
    for (std::size_t t = 0; t < texels; ++t) {
      grid.set_reflectance(c, t, log_relative_unmap(x[c * texels + t], ref.value(c, t)));
    }
  }
  return grid;
}

std::vector<std::byte> save_pca(const PcaModel& model) {
  detail::ByteWriter out;
  out.tag("IPC1");
  out.u32(static_cast<std::uint32_t>(model.materials));
  out.u32(static_cast<std::uint32_t>(model.feature_count()));
  out.u32(static_cast<std::uint32_t>(model.component_count()));
  out.u32(model.resolution.theta_h);
  out.u32(model.resolution.theta_d);
  out.u32(model.resolution.phi_d);
  out.f64s(model.mean);
  out.f64s(model.components.data());
  out.f64s(model.singular_values);
  return out.take();
}

PcaModel load_pca(std::span<const std::byte> bytes) {
  detail::ByteReader in(bytes, ErrorKind::LengthMismatch);
  if (bytes.size() < 4 || in.tag(4) != "IPC1") throw Error(ErrorKind::BadMagic, "not a PCA model");
  PcaModel model;
  model.materials = in.u32();
  const std::size_t n = in.u32();
  const std::size_t k = in.u32();
  model.resolution.theta_h = in.u32();
  model.resolution.theta_d = in.u32();
  model.resolution.phi_d = in.u32();
  if (n != 3 * model.resolution.texels() || k == 0 || k > model.materials) {
    throw Error(ErrorKind::ShapeMismatch, "inconsistent PCA header");
  }
  if (in.remaining() != 8 * (n + k * n + k)) throw Error(ErrorKind::LengthMismatch, "PCA payload length");
  model.mean.resize(n);
  in.f64s(model.mean);
  model.components = Matrix(k, n);
  in.f64s(model.components.data());
  model.singular_values.resize(k);
  in.f64s(model.singular_values);
  return model;
}

double reconstruction_loss(const HyponetWeights& w, const SampleSet& samples) {
  if (samples.empty()) throw Error(ErrorKind::EmptySampleSet, "no samples");
  const Matrix pred = hyponet_eval(w, hyponet_inputs(samples));
  double sum = 0.0;
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const double c = samples[n].cos_theta;
    double sq = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
      const double r = c * pred(ch, n) - c * samples[n].rho[ch];
      sq += r * r;
    }
    sum += std::sqrt(sq);
  }
  return sum / static_cast<double>(samples.size());
}

HyponetWeights nbrdf_fit(const SampleSet& sparse, std::size_t steps, std::uint64_t seed,
                         const NbrdfOptions& options) {
  if (sparse.empty()) throw Error(ErrorKind::EmptySampleSet, "NBRDF fit needs samples");
  HyponetWeights w{{options.layers, Activation::Relu, Activation::Relu}, {}};
  w.spec.validate();
  if (w.spec.input_size() != kCoordinateWidth || w.spec.output_size() != 3) {
    throw Error(ErrorKind::InvalidArgument, "the neural field maps 6 coordinates to 3 channels");
  }
  w.values = init_params(w.spec, seed);
  const std::size_t out_bias = w.spec.bias_offset(w.spec.layer_count() - 1);
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (const Sample& s : sparse) mean += s.rho[c];
    w.values[out_bias + c] = mean / static_cast<double>(sparse.size());
  }

  const Matrix coords = hyponet_inputs(sparse);
  const double inv_n = 1.0 / static_cast<double>(sparse.size());
  AdamState adam(w.values.size(), AdamOptions{.learning_rate = options.learning_rate});
  std::vector<double> grad(w.values.size());
  for (std::size_t step = 0; step < steps; ++step) {
    ForwardCache cache;
    const Matrix pred = mlp_forward(w.spec, w.values, coords, &cache);
    Matrix grad_pred(3, sparse.size());
    for (std::size_t n = 0; n < sparse.size(); ++n) {
      const double c = sparse[n].cos_theta;
      double r[3];
      for (int ch = 0; ch < 3; ++ch) r[ch] = c * pred(ch, n) - c * sparse[n].rho[ch];
      const double norm = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
      if (norm > 0.0) {
        for (int ch = 0; ch < 3; ++ch) grad_pred(ch, n) = c * (r[ch] / norm) * inv_n;
      }
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    mlp_backward(w.spec, w.values, cache, grad_pred, grad);
    adam_step(w.values, grad, adam);
  }
  return w;
}

}  // namespace forge
