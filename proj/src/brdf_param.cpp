#include "forge/brdf_param.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_set>

#include "forge/error.hpp"
#include "forge/preproc.hpp"
#include "forge/rng.hpp"

namespace forge {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kHalfPi = std::numbers::pi / 2.0;

Vec3 rotate_z(const Vec3& v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {v.x * c - v.y * s, v.x * s + v.y * c, v.z};
}

Vec3 rotate_y(const Vec3& v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {v.x * c + v.z * s, v.y, -v.x * s + v.z * c};
}

double polar_angle(const Vec3& v) { return std::atan2(std::hypot(v.x, v.y), v.z); }

std::uint32_t bin(double t, std::uint32_t count) {
  const double scaled = std::floor(t * count);
  if (!(scaled > 0.0)) return 0;
  return static_cast<std::uint32_t>(std::min<double>(scaled, count - 1));
}

}  // namespace

HalfDiff io_to_halfdiff(const Vec3& wi, const Vec3& wo) {
  const Vec3 sum = wi + wo;
  const double len = length(sum);
  if (!(len > 1e-12)) throw Error(ErrorKind::DegenerateHalfVector, "wi = -wo");
  const Vec3 h = sum * (1.0 / len);
  const double theta_h = polar_angle(h);
  const double phi_h = std::atan2(h.y, h.x);
  const Vec3 d = rotate_y(rotate_z(wi, -phi_h), -theta_h);
  return {h, d};
}

InOut halfdiff_to_io_unchecked(const Vec3& h, const Vec3& d) {
  const double theta_h = polar_angle(h);
  const double phi_h = std::atan2(h.y, h.x);
  const Vec3 wi = rotate_z(rotate_y(d, theta_h), phi_h);
  const Vec3 wo = 2.0 * dot(wi, h) * h - wi;
  return {wi, wo};
}

InOut halfdiff_to_io(const Vec3& h, const Vec3& d) {
  InOut io = halfdiff_to_io_unchecked(h, d);
  if (io.wi.z <= 0.0 || io.wo.z <= 0.0) {
    throw Error(ErrorKind::BelowHorizon, "configuration leaves the upper hemisphere");
  }
  return io;
}

GridIndex angles_to_index(const RusinAngles& a, const GridResolution& res) {
  // theta_h uses the square-root warp that concentrates bins near the specular peak.
  const double th = std::max(a.theta_h, 0.0) / kHalfPi;
  return {bin(std::sqrt(th), res.theta_h), bin(a.theta_d / kHalfPi, res.theta_d),
          bin(a.phi_d / kPi, res.phi_d)};
}

RusinAngles index_to_angles(const GridIndex& g, const GridResolution& res) {
  const double uh = (g.theta_h + 0.5) / res.theta_h;
  return {kHalfPi * uh * uh, kHalfPi * (g.theta_d + 0.5) / res.theta_d,
          kPi * (g.phi_d + 0.5) / res.phi_d};
}

HalfDiff angles_to_halfdiff(const RusinAngles& a) {
  const double sd = std::sin(a.theta_d);
  return {{std::sin(a.theta_h), 0.0, std::cos(a.theta_h)},
          {sd * std::cos(a.phi_d), sd * std::sin(a.phi_d), std::cos(a.theta_d)}};
}

RusinAngles halfdiff_to_angles(const HalfDiff& hd) {
  double phi_d = std::atan2(hd.d.y, hd.d.x);
  if (phi_d < 0.0) phi_d += kPi;  // reciprocity fold
  if (phi_d >= kPi) phi_d -= kPi;
  return {polar_angle(hd.h), polar_angle(hd.d), phi_d};
}

double incidence_cosine(const Vec3& h, const Vec3& d) {
  const double theta_h = polar_angle(h);
  return -d.x * std::sin(theta_h) + d.z * std::cos(theta_h);
}

GridIndex lookup_index(const Vec3& wi, const Vec3& wo, const GridResolution& res) {
  return angles_to_index(halfdiff_to_angles(io_to_halfdiff(wi, wo)), res);
}

SampleSet extract_samples(const BrdfGrid& grid, const ReferenceTable& ref,
                          std::span<const GridIndex> indices, ExtractReport* report) {
  const auto& res = grid.resolution();
  if (!(ref.resolution() == res)) {
    throw Error(ErrorKind::ShapeMismatch, "reference table resolution differs from grid");
  }
  ExtractReport local;
  SampleSet out;
  out.reserve(indices.size());
  for (const GridIndex& g : indices) {
    if (g.theta_h >= res.theta_h || g.theta_d >= res.theta_d || g.phi_d >= res.phi_d) {
      throw Error(ErrorKind::InvalidArgument, "grid index out of range");
    }
    const std::size_t t = flat_index(g, res);
    if (!grid.valid(t)) {
      ++local.invalid;
      continue;
    }
    const HalfDiff hd = angles_to_halfdiff(index_to_angles(g, res));
    const InOut io = halfdiff_to_io_unchecked(hd.h, hd.d);
    if (io.wi.z <= 0.0 || io.wo.z <= 0.0) {
      ++local.below_horizon;
      continue;
    }
    Sample s;
    s.h = hd.h;
    s.d = hd.d;
    s.cos_theta = io.wi.z;
    s.texel = static_cast<std::uint32_t>(t);
    for (int c = 0; c < 3; ++c) s.rho[c] = log_relative_map(grid.reflectance(c, t), ref.value(c, t));
    out.push_back(s);
  }
  if (report) *report = local;
  if (out.empty()) throw Error(ErrorKind::EmptyResult, "no valid texel among the requested indices");
  return out;
}

SampleSet samples_from_raw(std::span<const RawSample> rows, const ReferenceTable& ref) {
  SampleSet out;
  for (const RawSample& row : rows) {
    const InOut io = halfdiff_to_io_unchecked(row.h, row.d);
    if (io.wi.z <= 0.0 || io.wo.z <= 0.0) continue;
    const GridIndex g = angles_to_index(halfdiff_to_angles({row.h, row.d}), ref.resolution());
    const std::size_t t = flat_index(g, ref.resolution());
    Sample s;
    s.h = row.h;
    s.d = row.d;
    s.cos_theta = io.wi.z;
    for (int c = 0; c < 3; ++c) s.rho[c] = log_relative_map(row.rho[c], ref.value(c, t));
    out.push_back(s);
  }
  if (out.empty()) throw Error(ErrorKind::EmptyResult, "no usable sample rows");
  return out;
}

std::vector<GridIndex> sample_uniform(std::size_t n, std::uint64_t seed, const GridResolution& res) {
  const std::size_t total = res.texels();
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "sample count must be at least 1");
  if (n > total) {
    throw Error(ErrorKind::CountTooLarge,
                std::to_string(n) + " exceeds the " + std::to_string(total) + " texels of the grid");
  }
  Rng rng(seed);
  std::vector<GridIndex> picked;
  picked.reserve(n);
  if (2 * n >= total) {
    // Dense request: partial Fisher-Yates over all texels.
    std::vector<std::uint32_t> perm(total);
    for (std::size_t i = 0; i < total; ++i) perm[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i + rng.below(total - i);
      std::swap(perm[i], perm[j]);
      picked.push_back(unflatten_index(perm[i], res));
    }
    return picked;
  }
  // Sparse request: Floyd's algorithm.
  std::unordered_set<std::size_t> seen;
  seen.reserve(2 * n);
  for (std::size_t j = total - n; j < total; ++j) {
    std::size_t t = rng.below(j + 1);
    if (!seen.insert(t).second) {
      t = j;
      seen.insert(t);
    }
    picked.push_back(unflatten_index(t, res));
  }
  return picked;
}

void write_index_list(std::ostream& out, std::span<const GridIndex> indices) {
  for (const auto& g : indices) out << g.theta_h << ' ' << g.theta_d << ' ' << g.phi_d << '\n';
}

std::vector<GridIndex> read_index_list(std::istream& in, const GridResolution& res) {
  std::vector<GridIndex> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line.starts_with('#')) continue;
    std::istringstream fields(line);
    long long a = -1, b = -1, c = -1;
    std::string extra;
    if (!(fields >> a >> b >> c) || (fields >> extra)) {
      throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": expected three indices");
    }
    if (a < 0 || b < 0 || c < 0 || a >= res.theta_h || b >= res.theta_d || c >= res.phi_d) {
      throw Error(ErrorKind::ValidationError, "line " + std::to_string(line_no) + ": index out of range");
    }
    out.push_back({std::uint32_t(a), std::uint32_t(b), std::uint32_t(c)});
  }
  return out;
}

}  // namespace forge
