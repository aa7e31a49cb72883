#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "forge/merl_io.hpp"

namespace forge {

inline constexpr double kMappingEpsilon = 0.002;

/// rho' = ln((rho + eps) / (rho_ref + eps) + 1)
double log_relative_map(double rho, double rho_ref, double epsilon = kMappingEpsilon);

/// Analytic inverse of log_relative_map, clamped at zero.
double log_relative_unmap(double rho_prime, double rho_ref, double epsilon = kMappingEpsilon);

/// Per-texel, per-channel reference reflectance (linear, sr^-1) in grid layout.
class ReferenceTable {
 public:
  explicit ReferenceTable(GridResolution res = GridResolution::merl());

  const GridResolution& resolution() const { return res_; }
  double epsilon() const { return kMappingEpsilon; }

  double value(int channel, std::size_t texel) const { return planes_[channel][texel]; }
  void set_value(int channel, std::size_t texel, double v);

  std::span<const double> plane(int channel) const { return planes_[channel]; }
  std::span<double> plane(int channel) { return planes_[channel]; }

  bool operator==(const ReferenceTable&) const = default;

 private:
  GridResolution res_;
  std::array<std::vector<double>, 3> planes_;
};

/// Median over materials of the valid values at each texel and channel.
/// Even counts average the two middle values; texels invalid everywhere get 0.
ReferenceTable compute_reference_median(std::span<const MaterialRecord> dataset);

/// Standalone form: "BREF" tag followed by a MERL-layout block of unscaled values.
std::vector<std::byte> write_reference(const ReferenceTable& table);
ReferenceTable read_reference(std::span<const std::byte> bytes);

}  // namespace forge
