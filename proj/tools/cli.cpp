#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include "forge/baselines.hpp"
#include "forge/brdf_param.hpp"
#include "forge/error.hpp"
#include "forge/eval_render.hpp"
#include "forge/merl_io.hpp"
#include "forge/parallel.hpp"
#include "forge/preproc.hpp"
#include "forge/rng.hpp"

namespace forge::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long n = std::stoll(v, &used);
    if (used == v.size() && n >= 0) return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::ParseError, key + ": expected a nonnegative integer, got '" + v + "'");
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size() && std::isfinite(x)) return x;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::ParseError, key + ": expected a real number, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(ErrorKind::ParseError, key + ": expected true or false, got '" + v + "'");
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(v)) out.push_back(parse_count(key, item));
  if (out.empty()) throw Error(ErrorKind::ParseError, key + ": empty list");
  return out;
}

fs::path resolve(const fs::path& base, const std::string& v) {
  const fs::path p(v);
  return p.is_absolute() ? p : base / p;
}

std::size_t pick_threads(std::size_t flag, std::size_t config = 0) {
  if (flag > 0) return flag;
  if (config > 0) return config;
  return threads_from_environment();
}

void require_parent(const fs::path& out) {
  const fs::path parent = out.has_parent_path() ? out.parent_path() : fs::path(".");
  if (!fs::is_directory(parent)) throw Error(ErrorKind::IoError, "output directory does not exist: " + parent.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw Error(ErrorKind::IoError, "cannot write " + path.string());
}

HyperModel read_model(const fs::path& path) { return load_checkpoint(read_file_bytes(path)); }

// Materials read next to a model must share its grid.
BrdfGrid read_material_for(const fs::path& path, const GridResolution& res) {
  BrdfGrid grid = read_merl_file(path, MerlReadOptions{.allow_reduced = true});
  if (!(grid.resolution() == res)) {
    throw Error(ErrorKind::ShapeMismatch, path.string() + " does not match the model's grid resolution");
  }
  return grid;
}

SampleSet draw_samples(const BrdfGrid& grid, const ReferenceTable& ref, std::size_t n, std::uint64_t seed) {
  const auto idx = sample_uniform(n, seed, grid.resolution());
  return extract_samples(grid, ref, idx);
}

LatentEmbedding read_first_embedding(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  const auto rows = read_embeddings(f);
  if (rows.empty()) throw Error(ErrorKind::ParseError, path.string() + " holds no embedding");
  return rows.front().embedding;
}

void write_embedding_file(const fs::path& path, std::span<const NamedEmbedding> rows) {
  std::ostringstream s;
  write_embeddings(s, rows);
  write_text(path, s.str());
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

// Continuous evaluator backed by a generated neural field. Inputs are folded
// onto the isotropic (phi_h = 0) coordinates the field was trained on.
BrdfEvaluator field_evaluator(const HyponetWeights& w, const ReferenceTable& ref) {
  return [&w, &ref](const Vec3& wi, const Vec3& wo) -> Rgb {
    const HalfDiff hd = angles_to_halfdiff(halfdiff_to_angles(io_to_halfdiff(wi, wo)));
    Matrix coords(kCoordinateWidth, 1);
    const double v[kCoordinateWidth] = {hd.h.x, hd.h.y, hd.h.z, hd.d.x, hd.d.y, hd.d.z};
    for (std::size_t f = 0; f < kCoordinateWidth; ++f) coords(f, 0) = v[f];
    const Matrix mapped = hyponet_eval(w, coords);
    const std::size_t t = flat_index(lookup_index(wi, wo, ref.resolution()), ref.resolution());
    Rgb out{};
    for (int c = 0; c < 3; ++c) out[c] = log_relative_unmap(mapped(c, 0), ref.value(c, t));
    return out;
  };
}

DirectionalLight parse_light(const std::string& text) {
  std::vector<double> v;
  for (const auto& item : split_list(text)) v.push_back(parse_real("--light", item));
  if (v.size() != 3 && v.size() != 6) throw Error(ErrorKind::ParseError, "--light expects dx,dy,dz[,r,g,b]");
  const Vec3 d{v[0], v[1], v[2]};
  if (!(length(d) > 0.0)) throw Error(ErrorKind::InvalidArgument, "--light direction must be nonzero");
  DirectionalLight light{normalize(d), {1.0, 1.0, 1.0}};
  if (v.size() == 6) {
    for (int c = 0; c < 3; ++c) {
      if (!(v[3 + c] >= 0.0)) throw Error(ErrorKind::InvalidArgument, "--light radiance must be nonnegative");
      light.radiance[c] = v[3 + c];
    }
  }
  return light;
}

ImageRGB display_image(const fs::path& path) {
  ImageRGB img = read_image(path);
  // PFM holds linear radiance; PPM is already display-referred.
  std::ifstream f(path, std::ios::binary);
  char magic[2] = {};
  f.read(magic, 2);
  if (magic[0] == 'P' && magic[1] == 'F') img = tonemap(img, 1.0, 2.2);
  return img;
}

bool has_extension(const fs::path& p, const std::string& ext) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e == ext;
}

}  // namespace

ExperimentConfig parse_experiment_config(std::istream& in, const fs::path& base_dir) {
  ExperimentConfig cfg;
  std::map<std::string, std::function<void(const std::string&)>> setters{
      {"data_dir", [&](const std::string& v) { cfg.data_dir = resolve(base_dir, v); }},
      {"train_materials", [&](const std::string& v) { cfg.train_materials = split_list(v); }},
      {"test_materials", [&](const std::string& v) { cfg.test_materials = split_list(v); }},
      {"test_samples", [&](const std::string& v) { cfg.test_samples = parse_count("test_samples", v); }},
      {"checkpoint", [&](const std::string& v) { cfg.checkpoint = resolve(base_dir, v); }},
      {"log", [&](const std::string& v) { cfg.log = resolve(base_dir, v); }},
      {"allow_reduced", [&](const std::string& v) { cfg.allow_reduced = parse_bool("allow_reduced", v); }},
      {"threads", [&](const std::string& v) { cfg.threads = parse_count("threads", v); }},
      {"latent_dim", [&](const std::string& v) { cfg.model.latent_dim = parse_count("latent_dim", v); }},
      {"hyponet_layers", [&](const std::string& v) { cfg.model.hyponet_layers = parse_sizes("hyponet_layers", v); }},
      {"encoder_hidden", [&](const std::string& v) { cfg.model.encoder_hidden = parse_sizes("encoder_hidden", v); }},
      {"decoder_hidden", [&](const std::string& v) { cfg.model.decoder_hidden = parse_sizes("decoder_hidden", v); }},
      {"epochs", [&](const std::string& v) { cfg.train.epochs = parse_count("epochs", v); }},
      {"steps_per_epoch", [&](const std::string& v) { cfg.train.steps_per_epoch = parse_count("steps_per_epoch", v); }},
      {"materials_per_step",
       [&](const std::string& v) { cfg.train.materials_per_step = parse_count("materials_per_step", v); }},
      {"samples_per_material",
       [&](const std::string& v) { cfg.train.samples_per_material = parse_count("samples_per_material", v); }},
      {"texels_per_material",
       [&](const std::string& v) { cfg.train.texels_per_material = parse_count("texels_per_material", v); }},
      {"learning_rate", [&](const std::string& v) { cfg.train.learning_rate = parse_real("learning_rate", v); }},
      {"lr_final_scale", [&](const std::string& v) { cfg.train.lr_final_scale = parse_real("lr_final_scale", v); }},
      {"lambda1", [&](const std::string& v) { cfg.train.loss.lambda1 = parse_real("lambda1", v); }},
      {"lambda2", [&](const std::string& v) { cfg.train.loss.lambda2 = parse_real("lambda2", v); }},
      {"seed", [&](const std::string& v) { cfg.train.seed = parse_count("seed", v); }},
  };
  cfg.checkpoint = base_dir / cfg.checkpoint;
  cfg.log = base_dir / cfg.log;

  std::map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) {
      throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    if (seen.contains(key)) {
      throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    seen[key] = line_no;
    it->second(value);
  }
  if (!seen.contains("data_dir")) throw Error(ErrorKind::ParseError, "missing key 'data_dir'");
  if (cfg.train_materials.empty()) throw Error(ErrorKind::ParseError, "missing key 'train_materials'");
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::IoError, "cannot open config " + path.string());
  ExperimentConfig cfg = parse_experiment_config(f, path.has_parent_path() ? path.parent_path() : fs::path("."));
  if (!fs::is_directory(cfg.data_dir)) throw Error(ErrorKind::IoError, "data_dir does not exist: " + cfg.data_dir.string());
  require_parent(cfg.checkpoint);
  require_parent(cfg.log);
  return cfg;
}

namespace {

struct TrainFlags {
  std::string config;
  std::optional<std::string> checkpoint, log;
  std::optional<std::size_t> epochs, steps_per_epoch, materials_per_step, samples_per_material, latent_dim;
  std::optional<std::size_t> texels_per_material;
  std::optional<double> learning_rate, lr_final_scale, lambda1, lambda2;
  std::optional<std::uint64_t> seed;
};

void cmd_train(const TrainFlags& f, std::size_t threads_flag, std::ostream& out) {
  ExperimentConfig cfg = load_experiment_config(f.config);
  if (f.checkpoint) cfg.checkpoint = *f.checkpoint;
  if (f.log) cfg.log = *f.log;
  if (f.epochs) cfg.train.epochs = *f.epochs;
  if (f.steps_per_epoch) cfg.train.steps_per_epoch = *f.steps_per_epoch;
  if (f.materials_per_step) cfg.train.materials_per_step = *f.materials_per_step;
  if (f.samples_per_material) cfg.train.samples_per_material = *f.samples_per_material;
  if (f.latent_dim) cfg.model.latent_dim = *f.latent_dim;
  if (f.texels_per_material) cfg.train.texels_per_material = *f.texels_per_material;
  if (f.learning_rate) cfg.train.learning_rate = *f.learning_rate;
  if (f.lr_final_scale) cfg.train.lr_final_scale = *f.lr_final_scale;
  if (f.lambda1) cfg.train.loss.lambda1 = *f.lambda1;
  if (f.lambda2) cfg.train.loss.lambda2 = *f.lambda2;
  if (f.seed) cfg.train.seed = *f.seed;
  require_parent(cfg.checkpoint);
  require_parent(cfg.log);
  cfg.train.threads = pick_threads(threads_flag, cfg.threads);

  const MerlReadOptions opts{.allow_reduced = cfg.allow_reduced};
  const auto dataset = load_dataset(cfg.data_dir, cfg.train_materials, opts);
  const auto tests = load_dataset(cfg.data_dir, cfg.test_materials, opts);
  for (const auto& t : tests) {
    if (std::find(cfg.train_materials.begin(), cfg.train_materials.end(), t.name) != cfg.train_materials.end()) {
      throw Error(ErrorKind::DuplicateName, t.name + " is in both the training and the test split");
    }
  }

  out << "latent_dim=" << cfg.model.latent_dim << " hyponet_layers=" << join_sizes(cfg.model.hyponet_layers)
      << " encoder_hidden=" << join_sizes(cfg.model.encoder_hidden)
      << " decoder_hidden=" << join_sizes(cfg.model.decoder_hidden) << '\n';
  out << "epochs=" << cfg.train.epochs << " steps_per_epoch=" << cfg.train.steps_per_epoch
      << " materials_per_step=" << cfg.train.materials_per_step
      << " samples_per_material=" << cfg.train.samples_per_material
      << " texels_per_material=" << cfg.train.texels_per_material
      << " learning_rate=" << format_real(cfg.train.learning_rate)
      << " lr_final_scale=" << format_real(cfg.train.lr_final_scale)
      << " lambda1=" << format_real(cfg.train.loss.lambda1) << " lambda2=" << format_real(cfg.train.loss.lambda2)
      << " seed=" << cfg.train.seed << " threads=" << cfg.train.threads << '\n';

  std::ofstream log(cfg.log, std::ios::binary);
  if (!log) throw Error(ErrorKind::IoError, "cannot write " + cfg.log.string());
  TrainResult result = train(dataset, cfg.model, cfg.train, [&](const EpochRecord& r) {
    log << "epoch=" << r.epoch << " loss=" << format_real(r.loss)
        << " reconstruction=" << format_real(r.reconstruction) << '\n';
    log.flush();
  });
  if (!log) throw Error(ErrorKind::IoError, "cannot write " + cfg.log.string());
  write_file_bytes(cfg.checkpoint, save_checkpoint(result.model));

  for (std::size_t i = 0; i < tests.size(); ++i) {
    const SampleSet s = draw_samples(tests[i].grid, result.model.reference(),
                                     std::min(cfg.test_samples, tests[i].grid.texel_count()),
                                     derive_seed(cfg.train.seed, 0x7e57, i));
    const LossEvaluation ev = evaluate_loss(result.model, std::span(&s, 1), {0.0, 0.0}, false, cfg.train.threads);
    out << "test material=" << tests[i].name << " reconstruction=" << format_real(ev.value.reconstruction) << '\n';
  }
  out << "wrote " << cfg.checkpoint.string() << '\n';
}

struct SourceFlags {
  std::string model;
  std::string material;
  std::string samples;
  std::size_t n = 4000;
  std::uint64_t seed = 0;
};

SampleSet sparse_input(const SourceFlags& f, const HyperModel& model) {
  if (!f.samples.empty()) {
    std::ifstream in(f.samples);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + f.samples);
    const auto rows = read_samples(in);
    return samples_from_raw(rows, model.reference());
  }
  const BrdfGrid grid = read_material_for(f.material, model.reference().resolution());
  return draw_samples(grid, model.reference(), f.n, f.seed);
}

void cmd_reconstruct(const SourceFlags& f, const std::string& out_path, std::size_t threads, std::ostream& out) {
  require_parent(out_path);
  const HyperModel model = read_model(f.model);
  const SampleSet s = sparse_input(f, model);
  write_merl_file(out_path, reconstruct(model, s, threads));
  out << "samples=" << s.size() << " wrote " << out_path << '\n';
}

void cmd_compress(const SourceFlags& f, const std::string& out_path, std::size_t threads, std::ostream& out) {
  require_parent(out_path);
  const HyperModel model = read_model(f.model);
  const SampleSet s = sparse_input(f, model);
  const std::string name = fs::path(f.samples.empty() ? f.material : f.samples).stem().string();
  const NamedEmbedding row{name, encode(model, s, threads)};
  write_embedding_file(out_path, std::span(&row, 1));
  out << "latent_dim=" << row.embedding.z.size() << " wrote " << out_path << '\n';
}

struct InterpolateFlags {
  std::string model, a, b, out_embedding, out_grid;
  double alpha = 0.5;
};

void cmd_interpolate(const InterpolateFlags& f, std::size_t threads, std::ostream& out) {
  if (f.out_embedding.empty() && f.out_grid.empty()) {
    throw Error(ErrorKind::InvalidArgument, "give --out-embedding, --out or both");
  }
  const LatentEmbedding z = interpolate(read_first_embedding(f.a), read_first_embedding(f.b), f.alpha);
  if (!f.out_embedding.empty()) {
    require_parent(f.out_embedding);
    const NamedEmbedding row{"alpha=" + format_real(f.alpha), z};
    write_embedding_file(f.out_embedding, std::span(&row, 1));
    out << "wrote " << f.out_embedding << '\n';
  }
  if (!f.out_grid.empty()) {
    if (f.model.empty()) throw Error(ErrorKind::InvalidArgument, "--out needs --model");
    require_parent(f.out_grid);
    const HyperModel model = read_model(f.model);
    write_merl_file(f.out_grid, weights_to_grid(decode(model, z), model.reference(), threads));
    out << "wrote " << f.out_grid << '\n';
  }
}

struct RenderFlags {
  std::string brdf, model, embedding, out_path;
  std::vector<std::string> lights;
  std::size_t resolution = 256;
  double exposure = 1.0;
  double gamma = 2.2;
};

void cmd_render(const RenderFlags& f, std::size_t threads, std::ostream& out) {
  require_parent(f.out_path);
  const bool pfm = has_extension(f.out_path, ".pfm");
  if (!pfm && !has_extension(f.out_path, ".ppm")) throw Error(ErrorKind::InvalidArgument, "--out must end in .pfm or .ppm");
  std::vector<DirectionalLight> lights;
  for (const auto& l : f.lights) lights.push_back(parse_light(l));
  if (lights.empty()) lights.push_back(DirectionalLight{});

  ImageRGB img(1, 1);
  if (!f.brdf.empty()) {
    if (!f.model.empty()) throw Error(ErrorKind::InvalidArgument, "give either --brdf or --model, not both");
    const BrdfGrid grid = read_merl_file(f.brdf, MerlReadOptions{.allow_reduced = true});
    img = render_sphere(grid_evaluator(grid), lights, f.resolution, threads);
  } else {
    if (f.model.empty() || f.embedding.empty()) throw Error(ErrorKind::InvalidArgument, "give --brdf, or --model with --embedding");
    const HyperModel model = read_model(f.model);
    const HyponetWeights w = decode(model, read_first_embedding(f.embedding));
    img = render_sphere(field_evaluator(w, model.reference()), lights, f.resolution, threads);
  }
  if (pfm) {
    write_pfm(f.out_path, img);
  } else {
    write_ppm(f.out_path, tonemap(img, f.exposure, f.gamma));
  }
  out << "wrote " << f.out_path << '\n';
}

void cmd_metrics(const std::string& a, const std::string& b, std::ostream& out) {
  const ImageRGB x = display_image(a);
  const ImageRGB y = display_image(b);
  char line[96];
  std::snprintf(line, sizeof line, "psnr=%.3f delta_e=%.3f ssim=%.3f", psnr(x, y, 1.0), delta_e_2000(x, y), ssim(x, y));
  out << line << '\n';
}

struct DatasetFlags {
  std::string data_dir;
  std::string train;
  bool allow_reduced = false;
};

std::vector<MaterialRecord> load_training(const DatasetFlags& f) {
  const auto names = split_list(f.train);
  if (names.empty()) throw Error(ErrorKind::EmptyDataset, "--train lists no materials");
  return load_dataset(f.data_dir, names, MerlReadOptions{.allow_reduced = f.allow_reduced});
}

void cmd_ipca(const DatasetFlags& d, const SourceFlags& s, std::size_t n_pc, const std::string& out_path,
              const std::string& save_model, std::ostream& out) {
  require_parent(out_path);
  const auto dataset = load_training(d);
  const ReferenceTable ref = compute_reference_median(dataset);
  const PcaModel model = ipca_fit(dataset, ref, n_pc);
  if (!save_model.empty()) {
    require_parent(save_model);
    write_file_bytes(save_model, save_pca(model));
  }
  const BrdfGrid grid = read_merl_file(s.material, MerlReadOptions{.allow_reduced = d.allow_reduced});
  if (!(grid.resolution() == ref.resolution())) throw Error(ErrorKind::ShapeMismatch, "material grid differs from the training set");
  const SampleSet sparse = draw_samples(grid, ref, s.n, s.seed);
  const auto coeffs = ipca_fit_sparse(model, sparse, ref);
  write_merl_file(out_path, ipca_reconstruct(model, coeffs, ref));
  out << "n_pc=" << n_pc << " samples=" << sparse.size() << " wrote " << out_path << '\n';
}

void cmd_nbrdf(const DatasetFlags& d, const SourceFlags& s, std::size_t steps, double lr, const std::string& out_path,
               std::size_t threads, std::ostream& out) {
  require_parent(out_path);
  std::optional<ReferenceTable> ref;
  if (!s.model.empty()) {
    ref = read_model(s.model).reference();
  } else if (!d.data_dir.empty()) {
    ref = compute_reference_median(load_training(d));
  } else {
    throw Error(ErrorKind::InvalidArgument, "the reference table comes from --model or from --data-dir with --train");
  }
  const BrdfGrid grid = read_material_for(s.material, ref->resolution());
  const SampleSet sparse = draw_samples(grid, *ref, s.n, s.seed);
  NbrdfOptions opts;
  opts.learning_rate = lr;
  const HyponetWeights w = nbrdf_fit(sparse, steps, s.seed, opts);
  write_merl_file(out_path, weights_to_grid(w, *ref, threads));
  out << "samples=" << sparse.size() << " loss=" << format_real(reconstruction_loss(w, sparse)) << " wrote "
      << out_path << '\n';
}

void cmd_export(const std::string& model_path, const std::string& data_dir, const std::string& names_text,
                std::size_t n, std::uint64_t seed, const std::string& out_path, std::size_t threads, std::ostream& out) {
  require_parent(out_path);
  const HyperModel model = read_model(model_path);
  const auto names = split_list(names_text);
  if (names.empty()) throw Error(ErrorKind::EmptyDataset, "--materials lists no materials");
  const GridResolution res = model.reference().resolution();
  const auto dataset = load_dataset(data_dir, names, MerlReadOptions{.allow_reduced = !res.is_merl()});
  std::vector<NamedEmbedding> rows;
  for (const auto& m : dataset) {
    rows.push_back({m.name, compress(model, m, n == 0 ? res.texels() : n, seed, threads)});
  }
  write_embedding_file(out_path, rows);
  out << "materials=" << rows.size() << " wrote " << out_path << '\n';
}

void add_source(CLI::App* app, SourceFlags& s, bool with_samples) {
  app->add_option("--material", s.material, "MERL binary of the material to sample");
  if (with_samples) app->add_option("--samples", s.samples, "plain-text sample file (hx hy hz dx dy dz r g b per row)");
  app->add_option("--n", s.n, "number of texels drawn uniformly")->capture_default_str();
  app->add_option("--seed", s.seed, "sampling seed")->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Measured-BRDF reconstruction and compression with a set encoder and hypernetwork", "brdf_forge"};
  app.require_subcommand(1);
  app.fallthrough();
  std::size_t threads_flag = 0;
  app.add_option("--threads", threads_flag, "worker threads (0: BRDF_FORGE_THREADS, else 1)");

  TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "train the encoder and hypernetwork from a config file");
  train_cmd->add_option("--config", tf.config, "key=value experiment file")->required();
  train_cmd->add_option("--checkpoint", tf.checkpoint, "checkpoint output (overrides config)");
  train_cmd->add_option("--log", tf.log, "per-epoch loss log (overrides config)");
  train_cmd->add_option("--epochs", tf.epochs, "epochs (overrides config)");
  train_cmd->add_option("--steps-per-epoch", tf.steps_per_epoch, "steps per epoch (overrides config)");
  train_cmd->add_option("--materials-per-step", tf.materials_per_step, "materials per step (overrides config)");
  train_cmd->add_option("--samples-per-material", tf.samples_per_material, "samples per material per step (overrides config)");
  train_cmd->add_option("--latent-dim", tf.latent_dim, "latent dimension Z (overrides config)");
  train_cmd->add_option("--texels-per-material", tf.texels_per_material,
                        "fixed random texel subset per material, 0 for all (overrides config)");
  train_cmd->add_option("--lr", tf.learning_rate, "Adam learning rate (overrides config)");
  train_cmd->add_option("--lr-final-scale", tf.lr_final_scale,
                        "cosine decay to lr times this factor, 1 for constant (overrides config)");
  train_cmd->add_option("--lambda1", tf.lambda1, "hyponet weight penalty (overrides config)");
  train_cmd->add_option("--lambda2", tf.lambda2, "latent penalty (overrides config)");
  train_cmd->add_option("--seed", tf.seed, "training seed (overrides config)");

  SourceFlags rf;
  std::string recon_out;
  auto* recon_cmd = app.add_subcommand("reconstruct", "reconstruct a full grid from sparse samples");
  recon_cmd->add_option("--model", rf.model, "checkpoint")->required();
  add_source(recon_cmd, rf, true);
  recon_cmd->add_option("--out", recon_out, "MERL binary output")->required();

  SourceFlags cf;
  std::string comp_out;
  auto* comp_cmd = app.add_subcommand("compress", "encode a material into a latent embedding");
  comp_cmd->add_option("--model", cf.model, "checkpoint")->required();
  add_source(comp_cmd, cf, true);
  comp_cmd->add_option("--out", comp_out, "embedding text output")->required();

  InterpolateFlags inf;
  auto* interp_cmd = app.add_subcommand("interpolate", "blend two embeddings");
  interp_cmd->add_option("--a", inf.a, "embedding at alpha = 0")->required();
  interp_cmd->add_option("--b", inf.b, "embedding at alpha = 1")->required();
  interp_cmd->add_option("--alpha", inf.alpha, "blend factor in [0, 1]")->capture_default_str();
  interp_cmd->add_option("--model", inf.model, "checkpoint, needed for --out");
  interp_cmd->add_option("--out-embedding", inf.out_embedding, "blended embedding output");
  interp_cmd->add_option("--out", inf.out_grid, "MERL binary of the blended material");

  RenderFlags rnf;
  auto* render_cmd = app.add_subcommand("render", "render a sphere under directional lights");
  render_cmd->add_option("--brdf", rnf.brdf, "MERL binary to render");
  render_cmd->add_option("--model", rnf.model, "checkpoint whose neural field is rendered");
  render_cmd->add_option("--embedding", rnf.embedding, "embedding decoded by --model");
  render_cmd->add_option("--light", rnf.lights, "dx,dy,dz[,r,g,b]; direction of travel; repeatable");
  render_cmd->add_option("--resolution", rnf.resolution, "image side in pixels (>= 16)")->capture_default_str();
  render_cmd->add_option("--exposure", rnf.exposure, "exposure for .ppm output")->capture_default_str();
  render_cmd->add_option("--gamma", rnf.gamma, "gamma for .ppm output")->capture_default_str();
  render_cmd->add_option("--out", rnf.out_path, ".pfm (linear) or .ppm (tone mapped) output")->required();

  std::string ma, mb;
  auto* metrics_cmd = app.add_subcommand("metrics", "PSNR, CIEDE2000 and SSIM between two images");
  metrics_cmd->add_option("--a", ma, "first image (.pfm or .ppm)")->required();
  metrics_cmd->add_option("--b", mb, "second image (.pfm or .ppm)")->required();

  DatasetFlags idf;
  SourceFlags isf;
  std::size_t n_pc = 8;
  std::string ipca_out, ipca_model;
  auto* ipca_cmd = app.add_subcommand("ipca", "PCA baseline on log-relative-mapped grids");
  ipca_cmd->add_option("--data-dir", idf.data_dir, "directory holding the training materials")->required();
  ipca_cmd->add_option("--train", idf.train, "comma-separated training material names")->required();
  ipca_cmd->add_flag("--allow-reduced", idf.allow_reduced, "accept grids other than 90x90x180");
  ipca_cmd->add_option("--n-pc", n_pc, "number of principal components")->capture_default_str();
  add_source(ipca_cmd, isf, false);
  ipca_cmd->get_option("--material")->required();
  ipca_cmd->add_option("--save-model", ipca_model, "write the fitted PCA model");
  ipca_cmd->add_option("--out", ipca_out, "MERL binary output")->required();

  DatasetFlags ndf;
  SourceFlags nsf;
  std::size_t nbrdf_steps = 2000;
  double nbrdf_lr = 1e-3;
  std::string nbrdf_out;
  auto* nbrdf_cmd = app.add_subcommand("nbrdf", "fit a single-material neural field to sparse samples");
  nbrdf_cmd->add_option("--model", nsf.model, "checkpoint providing the reference table");
  nbrdf_cmd->add_option("--data-dir", ndf.data_dir, "directory for a median reference, without --model");
  nbrdf_cmd->add_option("--train", ndf.train, "materials for the median reference, without --model");
  nbrdf_cmd->add_flag("--allow-reduced", ndf.allow_reduced, "accept grids other than 90x90x180");
  add_source(nbrdf_cmd, nsf, false);
  nbrdf_cmd->get_option("--material")->required();
  nbrdf_cmd->add_option("--steps", nbrdf_steps, "Adam steps")->capture_default_str();
  nbrdf_cmd->add_option("--lr", nbrdf_lr, "Adam learning rate")->capture_default_str();
  nbrdf_cmd->add_option("--out", nbrdf_out, "MERL binary output")->required();

  std::string ex_model, ex_dir, ex_names, ex_out;
  std::size_t ex_n = 0;
  std::uint64_t ex_seed = 0;
  auto* export_cmd = app.add_subcommand("export-embeddings", "write one embedding per material as text");
  export_cmd->add_option("--model", ex_model, "checkpoint")->required();
  export_cmd->add_option("--data-dir", ex_dir, "directory holding the materials")->required();
  export_cmd->add_option("--materials", ex_names, "comma-separated material names")->required();
  export_cmd->add_option("--n", ex_n, "texels per material (0: all)")->capture_default_str();
  export_cmd->add_option("--seed", ex_seed, "sampling seed")->capture_default_str();
  export_cmd->add_option("--out", ex_out, "text output")->required();

  std::vector<const char*> argv{"brdf_forge"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    const std::size_t threads = pick_threads(threads_flag);
    if (*train_cmd) {
      cmd_train(tf, threads_flag, out);
    } else if (*recon_cmd) {
      if (rf.material.empty() == rf.samples.empty()) throw Error(ErrorKind::InvalidArgument, "give exactly one of --material and --samples");
      cmd_reconstruct(rf, recon_out, threads, out);
    } else if (*comp_cmd) {
      if (cf.material.empty() == cf.samples.empty()) throw Error(ErrorKind::InvalidArgument, "give exactly one of --material and --samples");
      cmd_compress(cf, comp_out, threads, out);
    } else if (*interp_cmd) {
      cmd_interpolate(inf, threads, out);
    } else if (*render_cmd) {
      cmd_render(rnf, threads, out);
    } else if (*metrics_cmd) {
      cmd_metrics(ma, mb, out);
    } else if (*ipca_cmd) {
      cmd_ipca(idf, isf, n_pc, ipca_out, ipca_model, out);
    } else if (*nbrdf_cmd) {
      cmd_nbrdf(ndf, nsf, nbrdf_steps, nbrdf_lr, nbrdf_out, threads, out);
    } else if (*export_cmd) {
      cmd_export(ex_model, ex_dir, ex_names, ex_n, ex_seed, ex_out, threads, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace forge::cli
