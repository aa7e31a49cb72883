#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "forge/merl_io.hpp"
#include "forge/vec3.hpp"

namespace forge {

class ReferenceTable;

/// Isotropic Rusinkiewicz angles; phi_d is folded into [0, pi).
struct RusinAngles {
  double theta_h = 0.0;
  double theta_d = 0.0;
  double phi_d = 0.0;
};

struct HalfDiff {
  Vec3 h;
  Vec3 d;
};

struct InOut {
  Vec3 wi;
  Vec3 wo;
};

/// H = normalize(wi + wo); D is wi expressed in the frame where H is the pole.
HalfDiff io_to_halfdiff(const Vec3& wi, const Vec3& wo);

/// Inverse of io_to_halfdiff. Throws BelowHorizon when either direction
/// leaves the upper hemisphere.
InOut halfdiff_to_io(const Vec3& h, const Vec3& d);
InOut halfdiff_to_io_unchecked(const Vec3& h, const Vec3& d);

GridIndex angles_to_index(const RusinAngles& a, const GridResolution& res = GridResolution::merl());
/// Bin-center angles of a texel.
RusinAngles index_to_angles(const GridIndex& g, const GridResolution& res = GridResolution::merl());

/// Lifts isotropic angles to Cartesian (H, D) with phi_h = 0.
HalfDiff angles_to_halfdiff(const RusinAngles& a);
RusinAngles halfdiff_to_angles(const HalfDiff& hd);

/// z-component of the incident direction; may be <= 0 for grazing texels.
double incidence_cosine(const Vec3& h, const Vec3& d);

/// Nearest texel for an arbitrary (wi, wo) pair, as a tabulated lookup would use.
GridIndex lookup_index(const Vec3& wi, const Vec3& wo, const GridResolution& res);

struct Sample {
  Vec3 h;
  Vec3 d;
  /// Log-relative mapped reflectance.
  std::array<double, 3> rho{};
  double cos_theta = 1.0;
  /// Source texel when the sample came from a tabulated grid.
  std::optional<std::uint32_t> texel;
};

using SampleSet = std::vector<Sample>;

struct ExtractReport {
  std::size_t invalid = 0;
  std::size_t below_horizon = 0;
};

/// Builds mapped samples for the requested texels, skipping invalid and
/// below-horizon ones. Throws EmptyResult when nothing survives.
SampleSet extract_samples(const BrdfGrid& grid, const ReferenceTable& ref,
                          std::span<const GridIndex> indices, ExtractReport* report = nullptr);

/// Samples from plain-text measurements; the reference value comes from the
/// nearest texel of the table. Rows below the horizon are skipped.
SampleSet samples_from_raw(std::span<const RawSample> rows, const ReferenceTable& ref);

/// n distinct texels, uniform without replacement; deterministic per seed.
std::vector<GridIndex> sample_uniform(std::size_t n, std::uint64_t seed,
                                      const GridResolution& res = GridResolution::merl());

/// Index lists persist as one "i_theta_h i_theta_d i_phi_d" triple per line.
void write_index_list(std::ostream& out, std::span<const GridIndex> indices);
std::vector<GridIndex> read_index_list(std::istream& in, const GridResolution& res);

}  // namespace forge
