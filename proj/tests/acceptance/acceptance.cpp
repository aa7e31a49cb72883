#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "ciede_pairs.hpp"
#include "forge/baselines.hpp"
#include "forge/brdf_param.hpp"
#include "forge/eval_render.hpp"
#include "forge/hypernet.hpp"
#include "forge/merl_io.hpp"
#include "forge/nn_core.hpp"
#include "forge/preproc.hpp"
#include "forge/rng.hpp"
#include "synthetic.hpp"

using namespace forge;
using forge::testing::kToyResolution;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
  return buf;
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const std::function<Verdict()>& check) {
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  if (!v.pass) ++failures;
  std::cout << (v.pass ? "PASS" : "FAIL") << ' ' << id << ' ' << title << ": " << v.detail << std::endl;
}

const std::vector<MaterialRecord>& toy() {
  static const auto materials = forge::testing::toy_materials();
  return materials;
}

SampleSet all_samples(const BrdfGrid& grid, const ReferenceTable& ref) {
  return extract_samples(grid, ref, sample_uniform(grid.texel_count(), 0, grid.resolution()));
}

// Settings of the scaled-down overfit experiment.
ModelConfig overfit_model() {
  ModelConfig c;
  c.encoder_hidden = {64, 64};
  c.decoder_hidden = {64, 64};
  return c;
}

TrainConfig overfit_training() {
  TrainConfig t;
  t.epochs = 20;
  t.steps_per_epoch = 100;
  t.materials_per_step = 3;
  t.samples_per_material = 512;
  t.texels_per_material = 2000;
  t.learning_rate = 2e-3;
  t.lr_final_scale = 0.01;
  t.loss = {1e-2, 1e-3};
  t.seed = 2024;
  t.threads = 1;
  return t;
}

struct Overfit {
  HyperModel model;
  double train_seconds = 0.0;
};

const Overfit& overfit() {
  static const Overfit result = [] {
    const auto t0 = Clock::now();
    TrainResult r = train(toy(), overfit_model(), overfit_training());
    return Overfit{std::move(r.model), seconds_since(t0)};
  }();
  return result;
}

// Mapped-space comparison of a reconstructed grid with the truth over the usable texels.
struct MappedError {
  double mean_abs = 0.0;
  double mean_rel = 0.0;
  double max_rel = 0.0;
  double frac_rel_over_5pct = 0.0;
};

MappedError mapped_error(const BrdfGrid& recon, const SampleSet& truth, const ReferenceTable& ref) {
  MappedError e;
  std::size_t count = 0, over = 0;
  for (const Sample& s : truth) {
    for (int c = 0; c < 3; ++c) {
      const double pred = log_relative_map(recon.reflectance(c, *s.texel), ref.value(c, *s.texel));
      const double abs_err = std::abs(pred - s.rho[c]);
      const double rel = abs_err / std::abs(s.rho[c]);
      e.mean_abs += abs_err;
      e.mean_rel += rel;
      e.max_rel = std::max(e.max_rel, rel);
      if (rel >= 0.05) ++over;
      ++count;
    }
  }
  e.mean_abs /= static_cast<double>(count);
  e.mean_rel /= static_cast<double>(count);
  e.frac_rel_over_5pct = static_cast<double>(over) / static_cast<double>(count);
  return e;
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

Verdict gradient_fidelity() {
  const auto t0 = Clock::now();
  ModelConfig c;
  c.latent_dim = 4;
  c.hyponet_layers = {6, 8, 8, 8, 8, 3};
  c.encoder_hidden = {8, 8};
  c.decoder_hidden = {8, 8};
  const ReferenceTable ref = compute_reference_median(toy());
  HyperModel model = init_model(c, ref, 1);
  Rng rng(2);
  for (double& p : model.params()) p += rng.uniform(-0.05, 0.05);
  std::vector<SampleSet> batch;
  for (std::size_t m = 0; m < toy().size(); ++m) {
    batch.push_back(extract_samples(toy()[m].grid, ref, sample_uniform(16, 10 + m, kToyResolution)));
  }
  const LossWeights lw{0.1, 0.05};
  const LossEvaluation eval = evaluate_loss(model, batch, lw, true);
  HyperModel probe = model;
  auto loss = [&](std::span<const double> p) {
    std::copy(p.begin(), p.end(), probe.params().begin());
    return evaluate_loss(probe, batch, lw, false).value.total;
  };
  const std::vector<double> params(model.params().begin(), model.params().end());
  const double worst = compare_with_finite_differences(loss, params, eval.gradient, {.step = 1e-5, .floor = 1e-6});
  const double secs = seconds_since(t0);
  return {worst < 1e-5 && secs < 10.0,
          fmt("max relative error %.3g over %.0f parameters, %.2f s", worst, static_cast<double>(params.size()), secs)};
}

Verdict invariance() {
  ModelConfig c;
  c.latent_dim = 8;
  c.encoder_hidden = {32, 32};
  c.decoder_hidden = {16, 16};
  const ReferenceTable ref = compute_reference_median(toy());
  const HyperModel model = init_model(c, ref, 3);
  std::vector<SampleSet> pools;
  for (const auto& m : toy()) pools.push_back(all_samples(m.grid, ref));
  Rng rng(4);
  std::size_t bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = rng.below(toy().size());
    const std::size_t n = 1 + rng.below(200);
    // Drawn from the usable texels so that even one-sample sets are valid.
    const SampleSet& pool = pools[m];
    SampleSet s;
    for (std::size_t i = 0; i < n; ++i) s.push_back(pool[rng.below(pool.size())]);
    const LatentEmbedding z = encode(model, s);
    SampleSet shuffled = s;
    for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
    SampleSet doubled = s;
    doubled.insert(doubled.end(), shuffled.begin(), shuffled.end());
    if (!(encode(model, shuffled) == z) || !(encode(model, doubled) == z)) ++bad;
  }
  return {bad == 0, fmt("%.0f of 1000 trials differ bitwise", static_cast<double>(bad))};
}

Verdict overfit_reconstruction() {
  const Overfit& o = overfit();
  const ReferenceTable& ref = o.model.reference();
  std::vector<SampleSet> full;
  for (const auto& m : toy()) full.push_back(all_samples(m.grid, ref));
  const double l_rec = evaluate_loss(o.model, full, {0.0, 0.0}, false).value.reconstruction;
  double mean_rel = 0.0, max_rel = 0.0, over = 0.0;
  for (const SampleSet& s : full) {
    const MappedError e = mapped_error(reconstruct(o.model, s), s, ref);
    mean_rel = std::max(mean_rel, e.mean_rel);
    max_rel = std::max(max_rel, e.max_rel);
    over = std::max(over, e.frac_rel_over_5pct);
  }
  const bool pass = l_rec < 1e-3 && mean_rel < 0.05 && o.train_seconds < 300.0;
  return {pass, fmt("L_rec %.3g, mean relative error %.3g (worst material), max %.3g, share over 5%% %.3g", l_rec,
                    mean_rel, max_rel, over) +
                    fmt(", training %.1f s", o.train_seconds)};
}

Verdict sparse_monotonicity() {
  const Overfit& o = overfit();
  const ReferenceTable& ref = o.model.reference();
  std::vector<double> dense, sparse;
  for (const auto& m : toy()) {
    const SampleSet truth = all_samples(m.grid, ref);
    dense.push_back(mapped_error(reconstruct(o.model, truth), truth, ref).mean_abs);
    double e40 = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const SampleSet s40 = extract_samples(m.grid, ref, sample_uniform(40, 100 + seed, kToyResolution));
      e40 += mapped_error(reconstruct(o.model, s40), truth, ref).mean_abs / 5.0;
    }
    sparse.push_back(e40);
  }
  const double all = median3(dense), forty = median3(sparse);
  return {all <= forty, fmt("median mapped error %.4g with all texels, %.4g with N=40", all, forty)};
}

Verdict round_trips() {
  std::vector<std::string> broken;
  // MERL binaries, reduced and full size, with invalid texels.
  for (const GridResolution res : {kToyResolution, GridResolution::merl()}) {
    BrdfGrid g(res);
    Rng rng(5);
    for (int c = 0; c < 3; ++c) {
      for (double& v : g.stored(c)) v = rng.uniform() < 0.05 ? -1.0 : rng.uniform(0.0, 3000.0);
    }
    const auto bytes = write_merl(g);
    const BrdfGrid back = read_merl(bytes, {.allow_reduced = true});
    if (!(back == g) || write_merl(back) != bytes) broken.push_back("merl");
  }
  // Directions and half/difference vectors.
  Rng rng(6);
  double worst_dir = 0.0;
  for (int i = 0; i < 10000; ++i) {
    auto hemi = [&] {
      const double z = rng.uniform(0.01, 1.0), phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double r = std::sqrt(1.0 - z * z);
      return Vec3{r * std::cos(phi), r * std::sin(phi), z};
    };
    const Vec3 wi = hemi(), wo = hemi();
    const HalfDiff hd = io_to_halfdiff(wi, wo);
    const InOut io = halfdiff_to_io(hd.h, hd.d);
    worst_dir = std::max({worst_dir, length(io.wi - wi), length(io.wo - wo)});
  }
  if (worst_dir >= 1e-10) broken.push_back("halfdiff");
  // Log relative mapping.
  double worst_map = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double rho = std::pow(10.0, rng.uniform(-6.0, 4.0));
    const double ref = std::pow(10.0, rng.uniform(-4.0, 2.0));
    worst_map = std::max(worst_map, std::abs(log_relative_unmap(log_relative_map(rho, ref), ref) - rho) / rho);
  }
  if (worst_map >= 1e-9 || log_relative_unmap(log_relative_map(0.0, 0.3), 0.3) != 0.0) broken.push_back("mapping");
  // Checkpoints.
  const HyperModel model = init_model(ModelConfig{}, compute_reference_median(toy()), 7);
  const auto bytes = save_checkpoint(model);
  const HyperModel back = load_checkpoint(bytes);
  if (save_checkpoint(back) != bytes || !std::equal(back.params().begin(), back.params().end(), model.params().begin()) ||
      !(back.reference() == model.reference()) || !(back.config() == model.config())) {
    broken.push_back("checkpoint");
  }
  std::string detail = fmt("direction error %.3g, mapping relative error %.3g", worst_dir, worst_map);
  for (const auto& b : broken) detail += ", broken: " + b;
  return {broken.empty(), detail};
}

Verdict ipca_exactness() {
  const auto& data = toy();
  const ReferenceTable ref = compute_reference_median(data);
  const PcaModel model = ipca_fit(data, ref, data.size());
  double worst_rel = 0.0, worst_sparse = 0.0, worst_ortho = 0.0;
  for (const auto& m : data) {
    const auto x = mapped_features(m.grid, ref);
    const auto coeffs = ipca_project(model, m.grid, ref);
    const auto back = ipca_mapped_vector(model, coeffs);
    for (std::size_t f = 0; f < x.size(); ++f) worst_rel = std::max(worst_rel, std::abs(back[f] - x[f]) / std::abs(x[f]));
    const auto sparse = ipca_fit_sparse(model, all_samples(m.grid, ref), ref);
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
      worst_sparse = std::max(worst_sparse, std::abs(sparse[i] - coeffs[i]) / std::max(1.0, std::abs(coeffs[i])));
    }
  }
  const Matrix& c = model.components;
  for (std::size_t i = 0; i < c.rows(); ++i) {
    for (std::size_t j = 0; j < c.rows(); ++j) {
      double dot = 0.0;
      for (std::size_t f = 0; f < c.cols(); ++f) dot += c(i, f) * c(j, f);
      worst_ortho = std::max(worst_ortho, std::abs(dot - (i == j ? 1.0 : 0.0)));
    }
  }
  return {worst_rel < 1e-5 && worst_sparse < 1e-5 && worst_ortho < 1e-8,
          fmt("reconstruction %.3g, sparse vs dense %.3g, orthonormality %.3g", worst_rel, worst_sparse, worst_ortho)};
}

Verdict metrics_oracles() {
  double worst = 0.0;
  for (const auto& p : forge::testing::kCiedePairs) {
    worst = std::max({worst, std::abs(ciede2000(p.x, p.y) - p.delta_e), std::abs(ciede2000(p.y, p.x) - p.delta_e)});
  }
  ImageRGB a(16, 16), b(16, 16);
  for (auto& p : a.pixels()) p = {0.2, 0.2, 0.2};
  for (auto& p : b.pixels()) p = {0.3, 0.3, 0.3};
  const double db = psnr(a, b);
  ImageRGB r(24, 20);
  Rng rng(8);
  for (auto& p : r.pixels()) p = {rng.uniform(), rng.uniform(), rng.uniform()};
  const double self = ssim(r, r);
  return {worst < 1e-4 && std::abs(db - 20.0) < 1e-9 && self == 1.0,
          fmt("CIEDE2000 worst deviation %.3g over 34 pairs, PSNR %.12g dB, SSIM(a,a) %.17g", worst, db, self)};
}

Verdict renderer_oracle() {
  const Rgb albedo{0.7, 0.5, 0.3};
  const std::size_t res = 64;
  const DirectionalLight head_on{{0.0, 0.0, -1.0}, {1.0, 1.0, 1.0}};
  const DirectionalLight oblique{normalize(Vec3{0.5, -0.3, -1.0}), {0.4, 0.8, 1.2}};
  const auto brdf = forge::testing::lambertian(albedo);
  double worst = 0.0;
  for (const DirectionalLight& light : {head_on, oblique}) {
    const ImageRGB img = render_sphere(brdf, std::span(&light, 1), res);
    const Vec3 l = -light.direction;
    for (std::size_t row = 0; row < res; ++row) {
      for (std::size_t col = 0; col < res; ++col) {
        const double x = 2.0 * (col + 0.5) / res - 1.0, y = 1.0 - 2.0 * (row + 0.5) / res;
        const double r2 = x * x + y * y;
        const double ndotl = r2 < 1.0 ? std::max(0.0, dot(Vec3{x, y, std::sqrt(1.0 - r2)}, l)) : 0.0;
        for (int c = 0; c < 3; ++c) {
          const double expected = albedo[c] / std::numbers::pi * ndotl * light.radiance[c];
          worst = std::max(worst, std::abs(img.at(col, row)[c] - expected));
        }
      }
    }
  }
  const BrdfGrid grid = toy()[1].grid;
  const auto eval = grid_evaluator(grid);
  const std::vector<DirectionalLight> both{head_on, oblique};
  const ImageRGB sum = render_sphere(eval, both, res);
  const ImageRGB one = render_sphere(eval, std::span(&both[0], 1), res);
  const ImageRGB two = render_sphere(eval, std::span(&both[1], 1), res);
  std::size_t mismatched = 0;
  for (std::size_t i = 0; i < sum.pixels().size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      if (sum.pixels()[i][c] != one.pixels()[i][c] + two.pixels()[i][c]) ++mismatched;
    }
  }
  return {worst < 1e-6 && mismatched == 0,
          fmt("Lambertian deviation %.3g, %.0f two-light values differ from the sum", worst,
              static_cast<double>(mismatched))};
}

Verdict determinism() {
  const fs::path d = forge::testing::scratch_dir("acceptance_determinism");
  for (const auto& m : toy()) write_merl_file(d / (m.name + ".binary"), m.grid);
  std::ofstream(d / "exp.cfg") << "data_dir = .\n"
                                  "train_materials = lambert, phong, blinn\n"
                                  "allow_reduced = true\n"
                                  "latent_dim = 8\n"
                                  "encoder_hidden = 32,32\n"
                                  "decoder_hidden = 32,32\n"
                                  "epochs = 3\n"
                                  "steps_per_epoch = 10\n"
                                  "materials_per_step = 3\n"
                                  "samples_per_material = 128\n"
                                  "learning_rate = 1e-3\n"
                                  "seed = 5\n";
  std::vector<std::string> checkpoints;
  for (const std::string run : {"a1", "b1", "c4"}) {
    std::ostringstream out, err;
    const int code = cli::run({"train", "--config", (d / "exp.cfg").string(), "--threads", run.substr(1), "--checkpoint",
                               (d / (run + ".bhn")).string(), "--log", (d / (run + ".log")).string()},
                              out, err);
    if (code != 0) return {false, "train exited with " + std::to_string(code) + ": " + err.str()};
    checkpoints.push_back(slurp(d / (run + ".bhn")));
  }
  const bool reruns = checkpoints[0] == checkpoints[1];
  const bool threads = checkpoints[0] == checkpoints[2];
  return {!checkpoints[0].empty() && reruns && threads,
          std::string("reruns ") + (reruns ? "identical" : "differ") + ", threads 1 vs 4 " +
              (threads ? "identical" : "differ") + fmt(", %.0f bytes", static_cast<double>(checkpoints[0].size()))};
}

Verdict interpolation_endpoints() {
  const Overfit& o = overfit();
  const HyperModel& model = o.model;
  const LatentEmbedding a = compress(model, toy()[0], kToyResolution.texels(), 0);
  const LatentEmbedding b = compress(model, toy()[2], kToyResolution.texels(), 0);
  const bool ends = interpolate(a, b, 0.0) == a && interpolate(a, b, 1.0) == b;
  const BrdfGrid mid = weights_to_grid(decode(model, interpolate(a, b, 0.5)), model.reference());
  std::size_t bad = 0;
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (std::size_t t = 0; t < mid.texel_count(); ++t) {
      const double v = mid.reflectance(c, t);
      if (!std::isfinite(v) || v < 0.0) ++bad;
      else total += v;
    }
  }
  const DirectionalLight light{};
  const ImageRGB img = render_sphere(grid_evaluator(mid), std::span(&light, 1), 64);
  for (const auto& p : img.pixels()) {
    for (double v : p) {
      if (!std::isfinite(v) || v < 0.0) ++bad;
    }
  }
  return {ends && bad == 0 && total > 0.0,
          std::string(ends ? "endpoints exact" : "endpoints differ") +
              fmt(", %.0f non-finite or negative values at alpha 0.5", static_cast<double>(bad))};
}

}  // namespace

int main() {
  report(1, "gradient fidelity", gradient_fidelity);
  report(2, "permutation and duplication invariance", invariance);
  report(3, "overfit reconstruction", overfit_reconstruction);
  report(4, "sparse monotonicity", sparse_monotonicity);
  report(5, "round trips", round_trips);
  report(6, "IPCA exactness", ipca_exactness);
  report(7, "metric oracles", metrics_oracles);
  report(8, "renderer oracle", renderer_oracle);
  report(9, "determinism", determinism);
  report(10, "interpolation endpoints", interpolation_endpoints);
  return failures == 0 ? 0 : 1;
}
