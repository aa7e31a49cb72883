#include "forge/preproc.hpp"

#include <algorithm>
#include <cmath>

#include "binary.hpp"
#include "forge/error.hpp"

namespace forge {

double log_relative_map(double rho, double rho_ref, double epsilon) {
  return std::log1p((rho + epsilon) / (rho_ref + epsilon));
}

double log_relative_unmap(double rho_prime, double rho_ref, double epsilon) {
  return std::max(0.0, std::expm1(rho_prime) * (rho_ref + epsilon) - epsilon);
}

ReferenceTable::ReferenceTable(GridResolution res) : res_(res) {
  for (auto& p : planes_) p.assign(res.texels(), 0.0);
}

void ReferenceTable::set_value(int channel, std::size_t texel, double v) {
  if (!(v >= 0.0)) throw Error(ErrorKind::InvalidArgument, "reference values must be nonnegative");
  planes_[channel][texel] = v;
}

ReferenceTable compute_reference_median(std::span<const MaterialRecord> dataset) {
  if (dataset.empty()) throw Error(ErrorKind::EmptyDataset, "median reference needs materials");
  const GridResolution res = dataset.front().grid.resolution();
  for (const auto& m : dataset) {
    if (!(m.grid.resolution() == res)) {
      throw Error(ErrorKind::ShapeMismatch, m.name + " has a different grid resolution");
    }
  }
  ReferenceTable table(res);
  std::vector<double> values;
  values.reserve(dataset.size());
  for (int c = 0; c < 3; ++c) {
    auto out = table.plane(c);
    for (std::size_t t = 0; t < res.texels(); ++t) {
      values.clear();
      for (const auto& m : dataset) {
        const double v = m.grid.reflectance(c, t);
        if (v >= 0.0) values.push_back(v);
      }
      if (values.empty()) {
        out[t] = 0.0;
        continue;
      }
      const std::size_t mid = values.size() / 2;
      std::nth_element(values.begin(), values.begin() + mid, values.end());
      double median = values[mid];
      if (values.size() % 2 == 0) {
        const double lower = *std::max_element(values.begin(), values.begin() + mid);
        median = 0.5 * (lower + median);
      }
      out[t] = median;
    }
  }
  return table;
}

std::vector<std::byte> write_reference(const ReferenceTable& table) {
  detail::ByteWriter out;
  out.tag("BREF");
  const auto& res = table.resolution();
  out.i32(std::int32_t(res.theta_h));
  out.i32(std::int32_t(res.theta_d));
  out.i32(std::int32_t(res.phi_d));
  for (int c = 0; c < 3; ++c) out.f64s(table.plane(c));
  return out.take();
}

ReferenceTable read_reference(std::span<const std::byte> bytes) {
  detail::ByteReader in(bytes, ErrorKind::LengthMismatch);
  if (in.tag(4) != "BREF") throw Error(ErrorKind::BadMagic, "not a reference table");
  const std::int32_t th = in.i32(), td = in.i32(), pd = in.i32();
  if (th <= 0 || td <= 0 || pd <= 0) throw Error(ErrorKind::HeaderMismatch, "bad reference dimensions");
  ReferenceTable table(GridResolution{std::uint32_t(th), std::uint32_t(td), std::uint32_t(pd)});
  if (in.remaining() != 3 * table.resolution().texels() * sizeof(double)) {
    throw Error(ErrorKind::LengthMismatch, "reference payload has the wrong length");
  }
  for (int c = 0; c < 3; ++c) {
    in.f64s(table.plane(c));
    for (double v : table.plane(c)) {
      if (!(v >= 0.0)) throw Error(ErrorKind::ValidationError, "reference tables hold nonnegative values");
    }
  }
  return table;
}

}  // namespace forge
