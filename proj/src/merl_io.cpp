#include "forge/merl_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "binary.hpp"
#include "forge/error.hpp"

namespace forge {

std::size_t flat_index(const GridIndex& g, const GridResolution& res) {
  return (std::size_t{g.theta_h} * res.theta_d + g.theta_d) * res.phi_d + g.phi_d;
}

GridIndex unflatten_index(std::size_t texel, const GridResolution& res) {
  GridIndex g;
  g.phi_d = static_cast<std::uint32_t>(texel % res.phi_d);
  texel /= res.phi_d;
  g.theta_d = static_cast<std::uint32_t>(texel % res.theta_d);
  g.theta_h = static_cast<std::uint32_t>(texel / res.theta_d);
  return g;
}

BrdfGrid::BrdfGrid(GridResolution res) : res_(res) {
  if (res.theta_h == 0 || res.theta_d == 0 || res.phi_d == 0) {
    throw Error(ErrorKind::InvalidArgument, "grid resolution must be positive");
  }
  for (auto& plane : stored_) plane.assign(res.texels(), 0.0);
}

void BrdfGrid::invalidate(std::size_t texel) {
  for (auto& plane : stored_) plane[texel] = -1.0;
}

bool BrdfGrid::valid(std::size_t texel) const {
  return stored_[0][texel] >= 0.0 && stored_[1][texel] >= 0.0 && stored_[2][texel] >= 0.0;
}

BrdfGrid read_merl(std::span<const std::byte> bytes, const MerlReadOptions& options) {
  detail::ByteReader in(bytes, ErrorKind::TruncatedFile);
  const std::int32_t dims[3] = {in.i32(), in.i32(), in.i32()};
  const GridResolution merl = GridResolution::merl();
  const bool is_merl = dims[0] == std::int32_t(merl.theta_h) &&
                       dims[1] == std::int32_t(merl.theta_d) && dims[2] == std::int32_t(merl.phi_d);
  const bool positive = dims[0] > 0 && dims[1] > 0 && dims[2] > 0;
  if (!is_merl && !(options.allow_reduced && positive)) {
    throw Error(ErrorKind::HeaderMismatch, "header (" + std::to_string(dims[0]) + ", " +
                                               std::to_string(dims[1]) + ", " +
                                               std::to_string(dims[2]) + ") is not (90, 90, 180)");
  }
  BrdfGrid grid(GridResolution{std::uint32_t(dims[0]), std::uint32_t(dims[1]), std::uint32_t(dims[2])});
  const std::size_t expected = 3 * grid.texel_count() * sizeof(double);
  if (in.remaining() != expected) {
    throw Error(ErrorKind::TruncatedFile, "payload has " + std::to_string(in.remaining()) +
                                              " bytes, expected " + std::to_string(expected));
  }
  for (int c = 0; c < 3; ++c) in.f64s(grid.stored(c));
  return grid;
}

std::vector<std::byte> write_merl(const BrdfGrid& grid) {
  detail::ByteWriter out;
  const auto& res = grid.resolution();
  out.i32(std::int32_t(res.theta_h));
  out.i32(std::int32_t(res.theta_d));
  out.i32(std::int32_t(res.phi_d));
  for (int c = 0; c < 3; ++c) out.f64s(grid.stored(c));
  return out.take();
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw Error(ErrorKind::IoError, "short read on " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::IoError, "write failed on " + path.string());
}

BrdfGrid read_merl_file(const std::filesystem::path& path, const MerlReadOptions& options) {
  return read_merl(read_file_bytes(path), options);
}

void write_merl_file(const std::filesystem::path& path, const BrdfGrid& grid) {
  write_file_bytes(path, write_merl(grid));
}

namespace {

bool parse_double(std::string_view token, double& out) {
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace

std::vector<RawSample> read_samples(std::istream& in) {
  constexpr double kUnitTolerance = 1e-6;
  std::vector<RawSample> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::vector<std::string> tokens;
    for (std::string t; fields >> t;) tokens.push_back(std::move(t));
    if (tokens.empty() || tokens.front().starts_with('#')) continue;

    const std::string where = "line " + std::to_string(line_no);
    if (tokens.size() != 9) {
      throw Error(ErrorKind::ParseError,
                  where + ": expected 9 fields, found " + std::to_string(tokens.size()));
    }
    double v[9];
    for (int i = 0; i < 9; ++i) {
      if (!parse_double(tokens[i], v[i])) {
        throw Error(ErrorKind::ParseError, where + ": bad number '" + tokens[i] + "'");
      }
    }
    RawSample s{{v[0], v[1], v[2]}, {v[3], v[4], v[5]}, {v[6], v[7], v[8]}};
    if (std::abs(length(s.h) - 1.0) > kUnitTolerance || std::abs(length(s.d) - 1.0) > kUnitTolerance) {
      throw Error(ErrorKind::ValidationError, where + ": H and D must be unit vectors");
    }
    if (s.rho[0] < 0.0 || s.rho[1] < 0.0 || s.rho[2] < 0.0) {
      throw Error(ErrorKind::ValidationError, where + ": negative reflectance");
    }
    rows.push_back(s);
  }
  return rows;
}

std::vector<MaterialRecord> load_dataset(const std::filesystem::path& directory,
                                         std::span<const std::string> names,
                                         const MerlReadOptions& options) {
  std::set<std::string> seen;
  for (const auto& name : names) {
    if (name.empty()) throw Error(ErrorKind::InvalidArgument, "empty material name");
    if (!seen.insert(name).second) throw Error(ErrorKind::DuplicateName, name);
  }
  std::vector<MaterialRecord> records;
  records.reserve(names.size());
  for (const auto& name : names) {
    std::filesystem::path path = directory / name;
    if (!std::filesystem::is_regular_file(path)) path = directory / (name + ".binary");
    if (!std::filesystem::is_regular_file(path)) {
      throw Error(ErrorKind::MissingMaterial, name + " not found in " + directory.string());
    }
    records.push_back({name, read_merl_file(path, options)});
  }
  return records;
}

}  // namespace forge
