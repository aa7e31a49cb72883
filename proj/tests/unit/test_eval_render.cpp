#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <numbers>

#include "forge/error.hpp"
#include "forge/eval_render.hpp"
#include "forge/rng.hpp"
#include "ciede_pairs.hpp"
#include "synthetic.hpp"

using namespace forge;
namespace fs = std::filesystem;

namespace {

ImageRGB random_image(std::size_t w, std::size_t h, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  ImageRGB img(w, h);
  Rng rng(seed);
  for (Rgb& p : img.pixels()) {
    for (double& v : p) v = rng.uniform(lo, hi);
  }
  return img;
}

ImageRGB constant_image(std::size_t w, std::size_t h, double v) {
  ImageRGB img(w, h);
  for (Rgb& p : img.pixels()) p = {v, v, v};
  return img;
}

// Direct 2-D evaluation of the windowed statistics, no separable filtering.
double ssim_oracle(const ImageRGB& a, const ImageRGB& b) {
  const int w = static_cast<int>(a.width()), h = static_cast<int>(a.height());
  auto lum = [](const Rgb& p) { return 0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2]; };
  double g[11][11], total = 0.0;
  for (int i = 0; i < 11; ++i) {
    for (int j = 0; j < 11; ++j) {
      g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
      total += g[i][j];
    }
  }
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double sum = 0.0;
  for (int y = 0; y + 11 <= h; ++y) {
    for (int x = 0; x + 11 <= w; ++x) {
      double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
      for (int i = 0; i < 11; ++i) {
        for (int j = 0; j < 11; ++j) {
          const double wt = g[i][j] / total;
          const double p = lum(a.at(x + j, y + i)), q = lum(b.at(x + j, y + i));
          mx += wt * p;
          my += wt * q;
          xx += wt * p * p;
          yy += wt * q * q;
          xy += wt * p * q;
        }
      }
      const double vx = xx - mx * mx, vy = yy - my * my, cxy = xy - mx * my;
      sum += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  }
  return sum / ((w - 10) * (h - 10));
}

void write_raw(const fs::path& path, const std::string& header, const void* payload, std::size_t size) {
  std::ofstream out(path, std::ios::binary);
  out << header;
  out.write(static_cast<const char*>(payload), static_cast<std::streamsize>(size));
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::InvalidArgument;
}

}  // namespace

TEST_CASE("Lambertian sphere under a head-on light") {
  const Rgb albedo{0.8, 0.5, 0.2};
  const std::vector<DirectionalLight> light{{{0.0, 0.0, -1.0}, {1.0, 1.0, 1.0}}};
  const std::size_t res = 64;
  const ImageRGB img = render_sphere(forge::testing::lambertian(albedo), light, res);
  for (std::size_t row = 0; row < res; ++row) {
    for (std::size_t col = 0; col < res; ++col) {
      const double x = 2.0 * (col + 0.5) / res - 1.0, y = 1.0 - 2.0 * (row + 0.5) / res;
      const double r2 = x * x + y * y;
      for (int c = 0; c < 3; ++c) {
        const double expected = r2 < 1.0 ? albedo[c] / std::numbers::pi * std::sqrt(1.0 - r2) : 0.0;
        REQUIRE(std::abs(img.at(col, row)[c] - expected) < 1e-6);
      }
    }
  }
  // The tabulated grid of the same material is constant, so lookups are exact.
  const BrdfGrid grid = forge::testing::tabulate(forge::testing::lambertian(albedo));
  const ImageRGB tabulated = render_sphere(grid_evaluator(grid), light, res);
  for (std::size_t i = 0; i < img.pixels().size(); ++i) {
    for (int c = 0; c < 3; ++c) REQUIRE(std::abs(tabulated.pixels()[i][c] - img.pixels()[i][c]) < 1e-12);
  }
}

TEST_CASE("render linearity and symmetry") {
  const auto brdf = forge::testing::phong({0.2, 0.3, 0.4}, {0.5, 0.5, 0.5}, 8);
  const DirectionalLight a{normalize({0.3, -0.2, -1.0}), {1.0, 0.8, 0.6}};
  const DirectionalLight b{normalize({-0.5, 0.4, -0.7}), {0.3, 0.3, 0.9}};
  const std::size_t res = 48;

  const std::vector<DirectionalLight> none;
  const ImageRGB unlit = render_sphere(brdf, none, res);
  for (const Rgb& p : unlit.pixels()) CHECK(p == Rgb{0, 0, 0});
  const std::vector<DirectionalLight> dark{{a.direction, {0.0, 0.0, 0.0}}};
  const ImageRGB black = render_sphere(brdf, dark, res);
  for (const Rgb& p : black.pixels()) CHECK(p == Rgb{0, 0, 0});

  const std::vector<DirectionalLight> la{a}, lb{b}, both{a, b};
  const ImageRGB ia = render_sphere(brdf, la, res), ib = render_sphere(brdf, lb, res);
  const ImageRGB iab = render_sphere(brdf, both, res, 3);
  for (std::size_t i = 0; i < iab.pixels().size(); ++i) {
    for (int c = 0; c < 3; ++c) REQUIRE(iab.pixels()[i][c] == ia.pixels()[i][c] + ib.pixels()[i][c]);
  }

  DirectionalLight scaled = a;
  for (double& v : scaled.radiance) v *= 3.0;
  const std::vector<DirectionalLight> ls{scaled};
  const ImageRGB is = render_sphere(brdf, ls, res);
  for (std::size_t i = 0; i < is.pixels().size(); ++i) {
    for (int c = 0; c < 3; ++c) REQUIRE(std::abs(is.pixels()[i][c] - 3.0 * ia.pixels()[i][c]) <= 1e-12 * (1.0 + ia.pixels()[i][c]));
  }

  DirectionalLight mirrored = a;
  mirrored.direction.x = -mirrored.direction.x;
  const std::vector<DirectionalLight> lm{mirrored};
  const ImageRGB im = render_sphere(brdf, lm, res);
  for (std::size_t row = 0; row < res; ++row) {
    for (std::size_t col = 0; col < res; ++col) {
      for (int c = 0; c < 3; ++c) REQUIRE(std::abs(im.at(res - 1 - col, row)[c] - ia.at(col, row)[c]) < 1e-9);
    }
  }
  CHECK(kind_of([&] { render_sphere(brdf, la, 15); }) == ErrorKind::TooSmall);
}

TEST_CASE("tonemap") {
  ImageRGB img(1, 1);
  img.at(0, 0) = {0.5, 2.0, -0.3};
  const ImageRGB t = tonemap(img, 1.0, 2.2);
  CHECK(t.at(0, 0)[0] == doctest::Approx(std::pow(0.5, 1 / 2.2)).epsilon(1e-15));
  CHECK(t.at(0, 0)[1] == 1.0);
  CHECK(t.at(0, 0)[2] == 0.0);
  CHECK(tonemap(img, 0.5, 1.0).at(0, 0)[0] == 0.25);
  CHECK_THROWS_AS(tonemap(img, 0.0, 2.2), Error);
  CHECK_THROWS_AS(tonemap(img, 1.0, -1.0), Error);
}

TEST_CASE("PSNR") {
  const ImageRGB a = random_image(20, 10, 1);
  CHECK(psnr(a, a) == kPsnrCap);
  const ImageRGB zero = constant_image(8, 8, 0.2);
  const ImageRGB off = constant_image(8, 8, 0.3);
  CHECK(psnr(zero, off) == doctest::Approx(20.0).epsilon(1e-12));
  const ImageRGB half = constant_image(8, 8, 0.25);
  CHECK(psnr(zero, half) - psnr(zero, off) == doctest::Approx(20.0 * std::log10(2.0)).epsilon(1e-9));
  CHECK(20.0 * std::log10(2.0) == doctest::Approx(6.0206).epsilon(1e-5));
  const ImageRGB b = random_image(20, 10, 2);
  CHECK(psnr(a, b) == psnr(b, a));
  CHECK(kind_of([&] { psnr(a, zero); }) == ErrorKind::DimensionMismatch);
}

TEST_CASE("SSIM") {
  const ImageRGB a = random_image(24, 19, 3);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  const ImageRGB b = random_image(24, 19, 4);
  CHECK(ssim(a, b) == doctest::Approx(ssim_oracle(a, b)).epsilon(1e-10));
  ImageRGB blurred = a;
  for (std::size_t y = 0; y < 19; ++y) {
    for (std::size_t x = 1; x < 24; ++x) {
      for (int c = 0; c < 3; ++c) blurred.at(x, y)[c] = 0.5 * (a.at(x, y)[c] + a.at(x - 1, y)[c]);
    }
  }
  CHECK(ssim(a, blurred) == doctest::Approx(ssim_oracle(a, blurred)).epsilon(1e-10));
  CHECK(ssim(a, b) == ssim(b, a));

  ImageRGB inverted = a;
  for (Rgb& p : inverted.pixels()) {
    for (double& v : p) v = 1.0 - v;
  }
  CHECK(ssim(a, inverted) < 0.0);

  // Flat images: only the luminance term survives.
  const double m1 = 0.3, m2 = 0.6, c1 = 1e-4;
  CHECK(ssim(constant_image(16, 16, m1), constant_image(16, 16, m2)) ==
        doctest::Approx((2 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1)).epsilon(1e-12));
  CHECK(ssim(constant_image(16, 16, m1), constant_image(16, 16, m1)) == doctest::Approx(1.0).epsilon(1e-14));

  CHECK(kind_of([] { ssim(constant_image(10, 30, 0), constant_image(10, 30, 0)); }) == ErrorKind::TooSmall);
  CHECK(kind_of([&] { ssim(a, constant_image(24, 20, 0)); }) == ErrorKind::DimensionMismatch);
}

TEST_CASE("CIEDE2000 reference pairs") {
  for (const auto& p : forge::testing::kCiedePairs) {
    CAPTURE(p.delta_e);
    CHECK(std::abs(ciede2000(p.x, p.y) - p.delta_e) < 1e-4);
    CHECK(std::abs(ciede2000(p.y, p.x) - p.delta_e) < 1e-4);
  }
}

TEST_CASE("CIEDE2000 properties and sRGB conversion") {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const Lab x{rng.uniform(0, 100), rng.uniform(-80, 80), rng.uniform(-80, 80)};
    const Lab y{rng.uniform(0, 100), rng.uniform(-80, 80), rng.uniform(-80, 80)};
    REQUIRE(std::abs(ciede2000(x, y) - ciede2000(y, x)) < 1e-10);
    REQUIRE(ciede2000(x, x) == 0.0);
    REQUIRE(ciede2000(x, y) >= 0.0);
  }
  const Lab white = srgb_to_lab({1, 1, 1});
  CHECK(white.l == doctest::Approx(100.0).epsilon(1e-4));
  CHECK(std::abs(white.a) < 1e-2);
  CHECK(std::abs(white.b) < 1e-2);
  const Lab black = srgb_to_lab({0, 0, 0});
  CHECK(std::abs(black.l) < 1e-12);
  // sRGB 0.5 decodes to 0.214041; L = 116 Y^(1/3) - 16.
  const double lin = std::pow((0.5 + 0.055) / 1.055, 2.4);
  CHECK(srgb_to_lab({0.5, 0.5, 0.5}).l == doctest::Approx(116.0 * std::cbrt(lin) - 16.0).epsilon(1e-4));
  const Lab red = srgb_to_lab({1, 0, 0});
  CHECK(red.l == doctest::Approx(53.24).epsilon(1e-3));
  CHECK(red.a == doctest::Approx(80.09).epsilon(2e-3));
  CHECK(red.b == doctest::Approx(67.20).epsilon(2e-3));

  const ImageRGB a = random_image(12, 12, 6);
  CHECK(delta_e_2000(a, a) == 0.0);
  const ImageRGB b = random_image(12, 12, 7);
  double mean = 0.0;
  for (std::size_t i = 0; i < a.pixels().size(); ++i) {
    mean += ciede2000(srgb_to_lab(a.pixels()[i]), srgb_to_lab(b.pixels()[i]));
  }
  CHECK(delta_e_2000(a, b) == doctest::Approx(mean / 144.0).epsilon(1e-12));
}

TEST_CASE("image files") {
  const fs::path dir = forge::testing::scratch_dir("images");
  SUBCASE("PFM round trip") {
    ImageRGB img(5, 3);
    Rng rng(8);
    for (Rgb& p : img.pixels()) {
      for (double& v : p) v = static_cast<float>(rng.uniform(-2.0, 40.0));
    }
    write_pfm(dir / "a.pfm", img);
    CHECK(read_image(dir / "a.pfm") == img);
  }
  SUBCASE("PFM rows run bottom to top") {
    const float le[6] = {2, 2, 2, 1, 1, 1};
    write_raw(dir / "le.pfm", "PF\n1 2\n-1.0\n", le, sizeof le);
    const ImageRGB img = read_image(dir / "le.pfm");
    CHECK(img.at(0, 0) == Rgb{1, 1, 1});
    CHECK(img.at(0, 1) == Rgb{2, 2, 2});

    unsigned char be[24];
    for (int i = 0; i < 6; ++i) {
      std::uint32_t u;
      std::memcpy(&u, &le[i], 4);
      for (int k = 0; k < 4; ++k) be[4 * i + k] = static_cast<unsigned char>(u >> (8 * (3 - k)));
    }
    write_raw(dir / "be.pfm", "PF\n1 2\n1.0\n", be, sizeof be);
    CHECK(read_image(dir / "be.pfm") == img);

    write_raw(dir / "short.pfm", "PF\n1 2\n-1.0\n", le, sizeof le - 1);
    CHECK(kind_of([&] { read_image(dir / "short.pfm"); }) == ErrorKind::TruncatedFile);
  }
  SUBCASE("PPM") {
    const unsigned char px[6] = {0, 51, 255, 255, 128, 1};
    write_raw(dir / "a.ppm", "P6\n# comment\n2 1\n255\n", px, sizeof px);
    const ImageRGB img = read_image(dir / "a.ppm");
    CHECK(img.at(0, 0) == Rgb{0.0, 0.2, 1.0});
    CHECK(img.at(1, 0)[1] == doctest::Approx(128.0 / 255.0));

    ImageRGB wide(4, 2);
    Rng rng(9);
    for (Rgb& p : wide.pixels()) {
      for (double& v : p) v = rng.uniform(-0.2, 1.2);
    }
    write_ppm(dir / "b.ppm", wide);
    const ImageRGB back = read_image(dir / "b.ppm");
    for (std::size_t i = 0; i < wide.pixels().size(); ++i) {
      for (int c = 0; c < 3; ++c) {
        const double clipped = std::clamp(wide.pixels()[i][c], 0.0, 1.0);
        REQUIRE(std::abs(back.pixels()[i][c] - clipped) <= 0.5 / 255.0 + 1e-12);
      }
    }
    write_raw(dir / "a.txt", "P3\n1 1\n255\n0 0 0\n", nullptr, 0);
    CHECK(kind_of([&] { read_image(dir / "a.txt"); }) == ErrorKind::BadMagic);
  }
}
