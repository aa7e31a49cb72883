#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include "forge/vec3.hpp"

namespace forge {

/// Texel counts along the three Rusinkiewicz axes.
struct GridResolution {
  std::uint32_t theta_h = 90;
  std::uint32_t theta_d = 90;
  std::uint32_t phi_d = 180;

  static constexpr GridResolution merl() { return {90, 90, 180}; }

  std::size_t texels() const {
    return std::size_t{theta_h} * theta_d * phi_d;
  }
  bool is_merl() const { return *this == merl(); }
  bool operator==(const GridResolution&) const = default;
};

/// One (theta_h, theta_d, phi_d) bin.
struct GridIndex {
  std::uint32_t theta_h = 0;
  std::uint32_t theta_d = 0;
  std::uint32_t phi_d = 0;

  bool operator==(const GridIndex&) const = default;
};

std::size_t flat_index(const GridIndex& g, const GridResolution& res);
GridIndex unflatten_index(std::size_t texel, const GridResolution& res);

/// Per-channel factors that turn stored MERL values into reflectance (sr^-1).
inline constexpr std::array<double, 3> kMerlChannelScale = {1.0 / 1500.0, 1.15 / 1500.0,
                                                            1.66 / 1500.0};

/// Dense tabulated isotropic BRDF in the MERL layout.
///
/// Values are kept in their stored (scaled) encoding so that decoding and
/// re-encoding a file is lossless; reflectance() applies the channel scale.
/// Negative values mark invalid texels.
class BrdfGrid {
 public:
  explicit BrdfGrid(GridResolution res = GridResolution::merl());

  const GridResolution& resolution() const { return res_; }
  std::size_t texel_count() const { return res_.texels(); }

  double reflectance(int channel, std::size_t texel) const {
    return stored_[channel][texel] * kMerlChannelScale[channel];
  }
  void set_reflectance(int channel, std::size_t texel, double value) {
    stored_[channel][texel] = value / kMerlChannelScale[channel];
  }
  /// Marks all channels of a texel invalid.
  void invalidate(std::size_t texel);
  bool valid(std::size_t texel) const;

  std::span<const double> stored(int channel) const { return stored_[channel]; }
  std::span<double> stored(int channel) { return stored_[channel]; }

  bool operator==(const BrdfGrid&) const = default;

 private:
  GridResolution res_;
  std::array<std::vector<double>, 3> stored_;
};

struct MaterialRecord {
  std::string name;
  BrdfGrid grid;
};

struct MerlReadOptions {
  /// Accept any positive header tuple instead of (90, 90, 180).
  bool allow_reduced = false;
};

BrdfGrid read_merl(std::span<const std::byte> bytes, const MerlReadOptions& options = {});
std::vector<std::byte> write_merl(const BrdfGrid& grid);

BrdfGrid read_merl_file(const std::filesystem::path& path, const MerlReadOptions& options = {});
void write_merl_file(const std::filesystem::path& path, const BrdfGrid& grid);

/// One measurement from a plain-text sample file.
struct RawSample {
  Vec3 h;
  Vec3 d;
  std::array<double, 3> rho{};
};

/// Parses whitespace-separated rows of `hx hy hz dx dy dz r g b`.
/// Blank lines and lines starting with '#' are skipped.
std::vector<RawSample> read_samples(std::istream& in);

/// Loads `<directory>/<name>` (or `<name>.binary`) for every name, in order.
std::vector<MaterialRecord> load_dataset(const std::filesystem::path& directory,
                                         std::span<const std::string> names,
                                         const MerlReadOptions& options = {});

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes);

}  // namespace forge
