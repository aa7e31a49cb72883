#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "forge/merl_io.hpp"
#include "forge/vec3.hpp"

namespace forge {

using Rgb = std::array<double, 3>;

class ImageRGB {
 public:
  ImageRGB(std::size_t width, std::size_t height);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }

  Rgb& at(std::size_t x, std::size_t y) { return pixels_[y * width_ + x]; }
  const Rgb& at(std::size_t x, std::size_t y) const { return pixels_[y * width_ + x]; }

  std::span<Rgb> pixels() { return pixels_; }
  std::span<const Rgb> pixels() const { return pixels_; }

  bool operator==(const ImageRGB&) const = default;

 private:
  std::size_t width_;
  std::size_t height_;
  std::vector<Rgb> pixels_;
};

struct DirectionalLight {
  /// Direction of travel of the light, i.e. pointing toward the surface.
  Vec3 direction{0.0, 0.0, -1.0};
  Rgb radiance{1.0, 1.0, 1.0};
};

/// Reflectance for local-frame (wi, wo), both in the upper hemisphere.
using BrdfEvaluator = std::function<Rgb(const Vec3& wi, const Vec3& wo)>;

/// Nearest-texel lookup into a tabulated grid; invalid texels read as 0.
BrdfEvaluator grid_evaluator(const BrdfGrid& grid);

/// Unit sphere under an orthographic camera looking down -z, lit by
/// directional lights. Background pixels are 0.
ImageRGB render_sphere(const BrdfEvaluator& brdf, std::span<const DirectionalLight> lights,
                       std::size_t resolution, std::size_t threads = 1);

/// clip(exposure * v, 0, 1)^(1 / gamma) per channel.
ImageRGB tonemap(const ImageRGB& img, double exposure, double gamma);

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(peak^2 / MSE) over all pixel-channels, capped at 99 dB.
double psnr(const ImageRGB& a, const ImageRGB& b, double peak = 1.0);

/// Mean SSIM on Rec. 709 luma, 11x11 Gaussian window (sigma 1.5), valid region only.
double ssim(const ImageRGB& a, const ImageRGB& b);

struct Lab {
  double l = 0.0;
  double a = 0.0;
  double b = 0.0;
};

/// sRGB-encoded [0,1] triple to CIELAB (D65).
Lab srgb_to_lab(const Rgb& srgb);

/// CIEDE2000 with kL = kC = kH = 1.
double ciede2000(const Lab& x, const Lab& y);

/// Image mean of per-pixel CIEDE2000 on display-referred sRGB images.
double delta_e_2000(const ImageRGB& a, const ImageRGB& b);

/// PFM: 32-bit little-endian floats, bottom-to-top rows.
void write_pfm(const std::filesystem::path& path, const ImageRGB& img);
/// Binary PPM, maxval 255; values are clipped to [0,1] and quantized.
void write_ppm(const std::filesystem::path& path, const ImageRGB& img);
/// Reads PFM (linear values) or PPM (values / maxval), chosen by the header.
ImageRGB read_image(const std::filesystem::path& path);

}  // namespace forge
