#include "forge/eval_render.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "forge/brdf_param.hpp"
#include "forge/error.hpp"
#include "forge/parallel.hpp"

namespace forge {

ImageRGB::ImageRGB(std::size_t width, std::size_t height)
    : width_(width), height_(height), pixels_(width * height, Rgb{0.0, 0.0, 0.0}) {
  if (width == 0 || height == 0) throw Error(ErrorKind::InvalidArgument, "image dimensions must be positive");
}

namespace {

void check_same_size(const ImageRGB& a, const ImageRGB& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorKind::DimensionMismatch, "images differ in size");
  }
}

// Orthonormal tangent frame around n (Duff et al. 2017).
void tangent_frame(const Vec3& n, Vec3& t, Vec3& b) {
  const double sign = std::copysign(1.0, n.z);
  const double a = -1.0 / (sign + n.z);
  const double c = n.x * n.y * a;
  t = {1.0 + sign * n.x * n.x * a, sign * c, -sign * n.x};
  b = {c, sign + n.y * n.y * a, -n.y};
}

}  // namespace

BrdfEvaluator grid_evaluator(const BrdfGrid& grid) {
  return [&grid](const Vec3& wi, const Vec3& wo) -> Rgb {
    const std::size_t t = flat_index(lookup_index(wi, wo, grid.resolution()), grid.resolution());
    Rgb out{};
    for (int c = 0; c < 3; ++c) out[c] = std::max(0.0, grid.reflectance(c, t));
    return out;
  };
}

ImageRGB render_sphere(const BrdfEvaluator& brdf, std::span<const DirectionalLight> lights,
                       std::size_t resolution, std::size_t threads) {
  if (resolution < 16) throw Error(ErrorKind::TooSmall, "render resolution must be at least 16");
  ImageRGB img(resolution, resolution);
  const Vec3 view{0.0, 0.0, 1.0};
  const double res = static_cast<double>(resolution);
  parallel_for(resolution, threads, [&](std::size_t row) {
    for (std::size_t col = 0; col < resolution; ++col) {
      const double x = 2.0 * (col + 0.5) / res - 1.0;
      const double y = 1.0 - 2.0 * (row + 0.5) / res;
      const double r2 = x * x + y * y;
      if (r2 >= 1.0) continue;
      const Vec3 n{x, y, std::sqrt(1.0 - r2)};
      Vec3 t, b;
      tangent_frame(n, t, b);
      const Vec3 wo{dot(view, t), dot(view, b), dot(view, n)};
      Rgb& px = img.at(col, row);
      for (const DirectionalLight& light : lights) {
        const Vec3 l = -light.direction;
        const double cos_l = dot(n, l);
        if (cos_l <= 0.0 || wo.z <= 0.0) continue;
        const Vec3 wi{dot(l, t), dot(l, b), cos_l};
        const Rgb f = brdf(wi, wo);
        for (int c = 0; c < 3; ++c) px[c] += f[c] * light.radiance[c] * cos_l;
      }
    }
  });
  return img;
}

ImageRGB tonemap(const ImageRGB& img, double exposure, double gamma) {
  if (!(exposure > 0.0) || !(gamma > 0.0)) throw Error(ErrorKind::InvalidArgument, "exposure and gamma must be positive");
  ImageRGB out = img;
  for (Rgb& px : out.pixels()) {
    for (double& v : px) v = std::pow(std::clamp(exposure * v, 0.0, 1.0), 1.0 / gamma);
  }
  return out;
}

double psnr(const ImageRGB& a, const ImageRGB& b, double peak) {
  check_same_size(a, b);
  double sum = 0.0;
  const auto pa = a.pixels();
  const auto pb = b.pixels();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const double d = pa[i][c] - pb[i][c];
      sum += d * d;
    }
  }
  const double mse = sum / static_cast<double>(3 * pa.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

namespace {

std::vector<double> luma(const ImageRGB& img) {
  std::vector<double> y;
  y.reserve(img.pixels().size());
  for (const Rgb& p : img.pixels()) y.push_back(0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2]);
  return y;
}

// 'valid' separable Gaussian filtering: output is (w - 10) x (h - 10).
std::vector<double> gaussian_valid(const std::vector<double>& src, std::size_t w, std::size_t h,
                                   const std::array<double, 11>& k) {
  const std::size_t ow = w - 10, oh = h - 10;
  std::vector<double> tmp(ow * h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < 11; ++i) s += k[i] * src[y * w + x + i];
      tmp[y * ow + x] = s;
    }
  }
  std::vector<double> out(ow * oh);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < 11; ++i) s += k[i] * tmp[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  }
  return out;
}

}  // namespace

double ssim(const ImageRGB& a, const ImageRGB& b) {
  check_same_size(a, b);
  const std::size_t w = a.width(), h = a.height();
  if (w < 11 || h < 11) throw Error(ErrorKind::TooSmall, "SSIM needs images of at least 11x11 pixels");

  std::array<double, 11> kernel{};
  double norm = 0.0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - 5;
    kernel[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    norm += kernel[i];
  }
  for (double& v : kernel) v /= norm;

  const std::vector<double> x = luma(a), y = luma(b);
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = gaussian_valid(x, w, h, kernel);
  const auto my = gaussian_valid(y, w, h, kernel);
  const auto sxx = gaussian_valid(xx, w, h, kernel);
  const auto syy = gaussian_valid(yy, w, h, kernel);
  const auto sxy = gaussian_valid(xy, w, h, kernel);

  constexpr double c1 = (0.01 * 1.0) * (0.01 * 1.0);
  constexpr double c2 = (0.03 * 1.0) * (0.03 * 1.0);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double var_x = sxx[i] - mx[i] * mx[i];
    const double var_y = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (var_x + var_y + c2));
  }
  return total / static_cast<double>(mx.size());
}

Lab srgb_to_lab(const Rgb& srgb) {
  double lin[3];
  for (int c = 0; c < 3; ++c) {
    const double v = srgb[c];
    lin[c] = v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
  }
  const double x = 0.4124564 * lin[0] + 0.3575761 * lin[1] + 0.1804375 * lin[2];
  const double y = 0.2126729 * lin[0] + 0.7151522 * lin[1] + 0.0721750 * lin[2];
  const double z = 0.0193339 * lin[0] + 0.1191920 * lin[1] + 0.9503041 * lin[2];
  auto f = [](double t) {
    constexpr double delta = 6.0 / 29.0;
    return t > delta * delta * delta ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
  };
  const double fx = f(x / 0.95047), fy = f(y / 1.0), fz = f(z / 1.08883);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

double ciede2000(const Lab& p, const Lab& q) {
  constexpr double pi = std::numbers::pi;
  constexpr double deg = pi / 180.0;
  const double pow25_7 = 6103515625.0;  // 25^7

  const double c1 = std::hypot(p.a, p.b);
  const double c2 = std::hypot(q.a, q.b);
  const double c_bar = 0.5 * (c1 + c2);
  const double c_bar7 = std::pow(c_bar, 7.0);
  const double g = 0.5 * (1.0 - std::sqrt(c_bar7 / (c_bar7 + pow25_7)));
  const double a1 = (1.0 + g) * p.a;
  const double a2 = (1.0 + g) * q.a;
  const double c1p = std::hypot(a1, p.b);
  const double c2p = std::hypot(a2, q.b);

  auto hue = [](double b, double a) {
    if (a == 0.0 && b == 0.0) return 0.0;
    double h = std::atan2(b, a);
    if (h < 0.0) h += 2.0 * pi;
    return h;
  };
  const double h1p = hue(p.b, a1);
  const double h2p = hue(q.b, a2);

  const double dl = q.l - p.l;
  const double dc = c2p - c1p;
  double dh = 0.0;
  if (c1p * c2p != 0.0) {
    dh = h2p - h1p;
    if (dh > pi) dh -= 2.0 * pi;
    else if (dh < -pi) dh += 2.0 * pi;
  }
  const double dH = 2.0 * std::sqrt(c1p * c2p) * std::sin(dh / 2.0);

  const double l_bar = 0.5 * (p.l + q.l);
  const double cp_bar = 0.5 * (c1p + c2p);
  double hp_bar = h1p + h2p;
  if (c1p * c2p != 0.0) {
    if (std::abs(h1p - h2p) <= pi) hp_bar = 0.5 * (h1p + h2p);
    else if (h1p + h2p < 2.0 * pi) hp_bar = 0.5 * (h1p + h2p + 2.0 * pi);
    else hp_bar = 0.5 * (h1p + h2p - 2.0 * pi);
  }

  const double t = 1.0 - 0.17 * std::cos(hp_bar - 30.0 * deg) + 0.24 * std::cos(2.0 * hp_bar) +
                   0.32 * std::cos(3.0 * hp_bar + 6.0 * deg) - 0.20 * std::cos(4.0 * hp_bar - 63.0 * deg);
  const double d_theta = 30.0 * deg * std::exp(-std::pow((hp_bar / deg - 275.0) / 25.0, 2.0));
  const double cp_bar7 = std::pow(cp_bar, 7.0);
  const double rc = 2.0 * std::sqrt(cp_bar7 / (cp_bar7 + pow25_7));
  const double l50 = (l_bar - 50.0) * (l_bar - 50.0);
  const double sl = 1.0 + 0.015 * l50 / std::sqrt(20.0 + l50);
  const double sc = 1.0 + 0.045 * cp_bar;
  const double sh = 1.0 + 0.015 * cp_bar * t;
  const double rt = -std::sin(2.0 * d_theta) * rc;

  const double tl = dl / sl, tc = dc / sc, th = dH / sh;
  return std::sqrt(tl * tl + tc * tc + th * th + rt * tc * th);
}

double delta_e_2000(const ImageRGB& a, const ImageRGB& b) {
  check_same_size(a, b);
  const auto pa = a.pixels();
  const auto pb = b.pixels();
  double sum = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) sum += ciede2000(srgb_to_lab(pa[i]), srgb_to_lab(pb[i]));
  return sum / static_cast<double>(pa.size());
}

}  // namespace forge
