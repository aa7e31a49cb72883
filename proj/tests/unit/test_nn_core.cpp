#include <doctest.h>

#include <cmath>
#include <functional>

#include "forge/error.hpp"
#include "forge/nn_core.hpp"
#include "forge/rng.hpp"

using namespace forge;

namespace {

Matrix random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Matrix m(rows, cols);
  Rng rng(seed);
  for (double& v : m.data()) v = rng.uniform(-1.0, 1.0);
  return m;
}

std::vector<double> random_params(const MlpSpec& spec, std::uint64_t seed) {
  auto p = init_params(spec, seed);
  Rng rng(seed + 1);
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    for (std::size_t i = 0; i < spec.fan_out(l); ++i) p[spec.bias_offset(l) + i] = rng.uniform(-0.3, 0.3);
  }
  return p;
}

// Straightforward triple loop with the same summation order as the library:
// bias first, then inputs in index order.
Matrix naive_forward(const MlpSpec& spec, std::span<const double> p, const Matrix& x) {
  Matrix cur = x;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const std::size_t n_in = spec.fan_in(l), n_out = spec.fan_out(l);
    Matrix next(n_out, x.cols());
    for (std::size_t o = 0; o < n_out; ++o) {
      for (std::size_t b = 0; b < x.cols(); ++b) {
        double s = p[spec.bias_offset(l) + o];
        for (std::size_t k = 0; k < n_in; ++k) s += p[spec.weight_offset(l) + o * n_in + k] * cur(k, b);
        const bool relu = (l + 1 < spec.layer_count() ? spec.hidden : spec.output) == Activation::Relu;
        next(o, b) = relu ? std::max(s, 0.0) : s;
      }
    }
    cur = std::move(next);
  }
  return cur;
}

}  // namespace

TEST_CASE("parameter layout") {
  const MlpSpec spec{{6, 60, 60, 60, 60, 3}};
  CHECK(spec.weight_count() == 11340);
  CHECK(spec.param_count() == 11583);
  CHECK(spec.weight_offset(1) == 360);
  CHECK(spec.bias_offset(0) == 11340);
  CHECK(spec.bias_offset(4) == 11580);
  CHECK_THROWS_AS(MlpSpec{{4}}.validate(), Error);
  CHECK_THROWS_AS((MlpSpec{{4, 0, 2}}.validate()), Error);
}

TEST_CASE("initialization") {
  const MlpSpec spec{{50, 2000, 1}};
  const auto a = init_params(spec, 3);
  CHECK(a == init_params(spec, 3));
  CHECK_FALSE(a == init_params(spec, 4));
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    for (std::size_t i = 0; i < spec.fan_out(l); ++i) REQUIRE(a[spec.bias_offset(l) + i] == 0.0);
  }
  // First layer: 10^5 draws from U(-sqrt(6/50), sqrt(6/50)), variance 2/fan_in.
  double sum = 0.0, sq = 0.0;
  const std::size_t n = 50 * 2000;
  const double bound = std::sqrt(6.0 / 50.0);
  for (std::size_t i = 0; i < n; ++i) {
    REQUIRE(std::abs(a[i]) <= bound);
    sum += a[i];
    sq += a[i] * a[i];
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(var - 2.0 / 50.0) < 0.2 * (2.0 / 50.0));
}

TEST_CASE("forward examples") {
  SUBCASE("zero parameters") {
    const MlpSpec spec{{3, 5, 2}};
    const std::vector<double> p(spec.param_count(), 0.0);
    const Matrix y = mlp_forward(spec, p, random_batch(3, 7, 1));
    for (double v : y.data()) CHECK(v == 0.0);
  }
  SUBCASE("identity layer") {
    const MlpSpec spec{{3, 3}};
    std::vector<double> p(spec.param_count(), 0.0);
    for (int i = 0; i < 3; ++i) p[i * 3 + i] = 1.0;
    const Matrix x = random_batch(3, 4, 2);
    CHECK(mlp_forward(spec, p, x) == x);
  }
  SUBCASE("scalar relu") {
    const MlpSpec spec{{1, 1}, Activation::Relu, Activation::Relu};
    const std::vector<double> p{2.0, 1.0};
    Matrix x(1, 2);
    x(0, 0) = -1.0;
    x(0, 1) = 3.0;
    const Matrix y = mlp_forward(spec, p, x);
    CHECK(y(0, 0) == 0.0);
    CHECK(y(0, 1) == 7.0);
  }
  SUBCASE("width mismatch") {
    const MlpSpec spec{{3, 2}};
    const std::vector<double> p(spec.param_count(), 0.0);
    try {
      mlp_forward(spec, p, Matrix(4, 1));
      FAIL("expected ShapeMismatch");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ShapeMismatch);
    }
  }
}

TEST_CASE("blocked kernels agree bit for bit with the plain loop") {
  for (const MlpSpec& spec : {MlpSpec{{6, 60, 60, 60, 60, 3}}, MlpSpec{{9, 128, 128, 40}},
                              MlpSpec{{5, 7, 3}, Activation::Relu, Activation::Relu}}) {
    const auto p = random_params(spec, 10);
    for (std::size_t batch : {1, 3, 8, 13, 64}) {
      const Matrix x = random_batch(spec.input_size(), batch, batch);
      REQUIRE(mlp_forward(spec, p, x) == naive_forward(spec, p, x));
    }
  }
}

TEST_CASE("each batch column is independent of its neighbours") {
  const MlpSpec spec{{6, 60, 60, 3}};
  const auto p = random_params(spec, 5);
  const Matrix x = random_batch(6, 37, 6);
  const Matrix y = mlp_forward(spec, p, x);
  for (std::size_t b = 0; b < x.cols(); ++b) {
    Matrix col(6, 1);
    for (std::size_t r = 0; r < 6; ++r) col(r, 0) = x(r, b);
    const Matrix yb = mlp_forward(spec, p, col);
    for (std::size_t r = 0; r < 3; ++r) REQUIRE(yb(r, 0) == y(r, b));
  }
}

TEST_CASE("backward examples") {
  SUBCASE("zero upstream gradient") {
    const MlpSpec spec{{4, 6, 2}};
    const auto p = random_params(spec, 1);
    ForwardCache cache;
    mlp_forward(spec, p, random_batch(4, 5, 2), &cache);
    const MlpGradients g = mlp_backward(spec, p, cache, Matrix(2, 5));
    for (double v : g.params) CHECK(v == 0.0);
    for (double v : g.inputs.data()) CHECK(v == 0.0);
  }
  SUBCASE("single identity layer passes W^T g") {
    const MlpSpec spec{{3, 2}};
    const std::vector<double> p{1, 2, 3, 4, 5, 6, 0, 0};
    ForwardCache cache;
    mlp_forward(spec, p, random_batch(3, 1, 3), &cache);
    Matrix g(2, 1);
    g(0, 0) = 0.5;
    g(1, 0) = -1.0;
    const MlpGradients grads = mlp_backward(spec, p, cache, g);
    CHECK(grads.inputs(0, 0) == 0.5 * 1 - 4.0);
    CHECK(grads.inputs(1, 0) == 0.5 * 2 - 5.0);
    CHECK(grads.inputs(2, 0) == 0.5 * 3 - 6.0);
    CHECK(grads.params[6] == 0.5);
    CHECK(grads.params[7] == -1.0);
  }
  SUBCASE("relu derivative at zero is zero") {
    const MlpSpec spec{{1, 1, 1}};
    const std::vector<double> p{1.0, 1.0, 0.0, 0.0};
    Matrix x(1, 1);
    ForwardCache cache;
    mlp_forward(spec, p, x, &cache);
    const MlpGradients g = mlp_backward(spec, p, cache, Matrix(1, 1, 1.0));
    CHECK(g.inputs(0, 0) == 0.0);
    CHECK(g.params[2] == 0.0);
  }
  SUBCASE("gradients accumulate into the caller's buffer") {
    const MlpSpec spec{{2, 3, 1}};
    const auto p = random_params(spec, 4);
    ForwardCache cache;
    mlp_forward(spec, p, random_batch(2, 9, 5), &cache);
    std::vector<double> once(p.size(), 0.0), twice(p.size(), 0.0);
    const Matrix ones(1, 9, 1.0);
    mlp_backward(spec, p, cache, ones, once);
    mlp_backward(spec, p, cache, ones, twice);
    mlp_backward(spec, p, cache, ones, twice);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(twice[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-14));
  }
}

TEST_CASE("analytic gradients match central differences") {
  SUBCASE("random three-layer relu nets") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const MlpSpec spec{{5, 12, 9, 3}};
      const auto p = random_params(spec, 100 + seed);
      CHECK(finite_diff_check(spec, p, random_batch(5, 6, 200 + seed), 1e-5) < 1e-6);
    }
  }
  SUBCASE("every architecture in use") {
    for (const MlpSpec& spec : {MlpSpec{{6, 60, 60, 60, 60, 3}, Activation::Relu, Activation::Relu},
                                MlpSpec{{9, 128, 128, 40}}, MlpSpec{{40, 256, 256, 60}}}) {
      const auto p = random_params(spec, 42);
      FiniteDiffOptions opts;
      opts.max_coords = 400;
      CHECK(finite_diff_check(spec, p, random_batch(spec.input_size(), 4, 43), 1e-5, opts) < 1e-6);
    }
  }
  SUBCASE("affine net is exact") {
    const MlpSpec spec{{4, 3}};
    const auto p = random_params(spec, 7);
    CHECK(finite_diff_check(spec, p, random_batch(4, 5, 8), 1e-4) < 1e-10);
  }
  SUBCASE("a corrupted gradient is caught") {
    const MlpSpec spec{{3, 4, 2}};
    const auto p = random_params(spec, 9);
    const Matrix x = random_batch(3, 5, 10);
    ForwardCache cache;
    mlp_forward(spec, p, x, &cache);
    std::vector<double> g(p.size(), 0.0);
    mlp_backward(spec, p, cache, Matrix(2, 5, 1.0), g);
    g[spec.bias_offset(1)] *= 1.1;
    auto loss = [&](std::span<const double> q) {
      double s = 0.0;
      const Matrix y = mlp_forward(spec, q, x);
      for (double v : y.data()) s += v;
      return s;
    };
    CHECK(compare_with_finite_differences(loss, p, g) > 1e-2);
  }
  SUBCASE("step size must be sensible") {
    const MlpSpec spec{{2, 2}};
    const auto p = random_params(spec, 1);
    CHECK_THROWS_AS(finite_diff_check(spec, p, random_batch(2, 1, 1), 1e-2), Error);
    CHECK_THROWS_AS(finite_diff_check(spec, p, random_batch(2, 1, 1), 1e-9), Error);
  }
}

TEST_CASE("bias-free relu nets are positively homogeneous") {
  const MlpSpec spec{{4, 16, 16, 2}};
  const auto p = init_params(spec, 11);
  const Matrix x = random_batch(4, 10, 12);
  Matrix scaled = x;
  for (double& v : scaled.data()) v *= 2.5;
  const Matrix y = mlp_forward(spec, p, x);
  const Matrix ys = mlp_forward(spec, p, scaled);
  for (std::size_t i = 0; i < y.data().size(); ++i) {
    CHECK(ys.data()[i] == doctest::Approx(2.5 * y.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    std::vector<double> p{1.0, -2.0};
    AdamState s(2, {});
    adam_step(p, std::vector<double>{0.0, 0.0}, s);
    CHECK(p == std::vector<double>{1.0, -2.0});
    CHECK(s.step == 1);
  }
  SUBCASE("first step has magnitude lr") {
    std::vector<double> p{0.0};
    AdamState s(1, {.learning_rate = 1e-3});
    adam_step(p, std::vector<double>{1.0}, s);
    CHECK(p[0] == doctest::Approx(-1e-3).epsilon(1e-7));
    std::vector<double> q{0.0};
    AdamState t(1, {.learning_rate = 1e-3});
    adam_step(q, std::vector<double>{-250.0}, t);
    CHECK(q[0] == doctest::Approx(1e-3).epsilon(1e-7));
  }
  SUBCASE("pure function of its inputs") {
    std::vector<double> p{0.3, 0.1, -0.7};
    AdamState s(3, {});
    adam_step(p, std::vector<double>{0.1, -0.2, 0.3}, s);
    auto p1 = p, p2 = p;
    auto s1 = s, s2 = s;
    const std::vector<double> g{1.0, 2.0, -3.0};
    adam_step(p1, g, s1);
    adam_step(p2, g, s2);
    CHECK(p1 == p2);
    CHECK(s1 == s2);
  }
  SUBCASE("matches the textbook recursion") {
    std::vector<double> p{0.5};
    AdamState s(1, {.learning_rate = 0.01});
    double m = 0.0, v = 0.0, x = 0.5;
    for (int t = 1; t <= 20; ++t) {
      const double g = std::sin(t);
      adam_step(p, std::vector<double>{g}, s);
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      x -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    }
    CHECK(p[0] == doctest::Approx(x).epsilon(1e-12));
  }
  SUBCASE("size mismatch") {
    std::vector<double> p{0.0};
    AdamState s(2, {});
    CHECK_THROWS_AS(adam_step(p, std::vector<double>{1.0}, s), Error);
  }
}
