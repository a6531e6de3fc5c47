#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "stcdit/anchor.hpp"
#include "stcdit/tensor.hpp"
#include "stcdit/tensor_io.hpp"
#include "stcdit/verify.hpp"
#include "support.hpp"

using namespace stcdit;
using stcdit::test::random_tensor;
using stcdit::test::throws_code;
using stcdit::test::to_vec;

namespace {

double max_diff(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

TEST_SUITE("tensor_ops") {
  TEST_CASE("shape validation") {
    CHECK(throws_code([] { Shape s(std::vector<std::size_t>{}); }, ErrorCode::ShapeMismatch));
    CHECK(throws_code([] { Shape s{2, 0}; }, ErrorCode::ShapeMismatch));
    CHECK(throws_code([] { Shape s{1, 1, 1, 1, 1, 1}; }, ErrorCode::ShapeMismatch));
    CHECK(throws_code([] { Tensor64(Shape{2, 2}, {1, 2, 3}); }, ErrorCode::ShapeMismatch));
    CHECK(throws_code([] { add(Tensor64::zeros({2}), Tensor64::zeros({3})); }, ErrorCode::ShapeMismatch));
  }

  TEST_CASE("depthwise conv identities and oracle") {
    const Tensor64 x = random_tensor<double>({2, 5, 6}, 1);
    std::vector<double> delta(2 * 9, 0.0);
    delta[4] = delta[13] = 1.0;
    const Tensor64 zero_b = Tensor64::zeros({2});
    CHECK(bit_equal(dconv3x3(x, Tensor64({2, 3, 3}, delta), zero_b), x));
    CHECK(max_abs_diff(dconv3x3(x, Tensor64::zeros({2, 3, 3}), zero_b), Tensor64::zeros({2, 5, 6})) == 0.0);

    // Nine-term sliding window with zero padding, written out directly.
    const Tensor64 x1 = random_tensor<double>({1, 4, 4}, 2);
    const Tensor64 k = random_tensor<double>({1, 3, 3}, 3);
    const Tensor64 b = random_tensor<double>({1}, 4);
    const Tensor64 y = dconv3x3(x1, k, b);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        double s = b[0];
        for (int di = -1; di <= 1; ++di)
          for (int dj = -1; dj <= 1; ++dj)
            if (i + di >= 0 && i + di < 4 && j + dj >= 0 && j + dj < 4)
              s += k[(di + 1) * 3 + dj + 1] * x1[(i + di) * 4 + j + dj];
        CHECK(std::abs(y[i * 4 + j] - s) < 1e-12);
      }
    }

    const Tensor64 x4 = random_tensor<double>({3, 2, 5, 4}, 5);
    const Tensor64 k4 = random_tensor<double>({3, 3, 3}, 6);
    const Tensor64 b4 = random_tensor<double>({3}, 7);
    CHECK(max_diff(to_vec(dconv3x3(x4, k4, b4)),
                   verify::ref_dconv3x3(x4.data(), 3, 2, 5, 4, k4.data(), b4.data())) < 1e-12);
  }

  TEST_CASE("pointwise conv") {
    const Tensor64 x = random_tensor<double>({3, 4, 5}, 8);
    const Tensor64 eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    CHECK(bit_equal(pconv1x1(x, eye, Tensor64::zeros({3})), x));

    const Tensor64 two = random_tensor<double>({2, 3, 3}, 9);
    const Tensor64 s = pconv1x1(two, Tensor64({1, 2}, {1, 1}), Tensor64::zeros({1}));
    for (std::size_t i = 0; i < 9; ++i) CHECK(s[i] == two[i] + two[9 + i]);

    const Tensor64 w = random_tensor<double>({4, 3}, 10);
    const Tensor64 b = random_tensor<double>({4}, 11);
    const Tensor64 y = pconv1x1(x, w, b);
    CHECK(y.shape() == Shape{4, 4, 5});
    for (std::size_t p = 0; p < 20; ++p) {
      for (std::size_t o = 0; o < 4; ++o) {
        double acc = b[o];
        for (std::size_t c = 0; c < 3; ++c) acc += w[o * 3 + c] * x[c * 20 + p];
        CHECK(std::abs(y[o * 20 + p] - acc) < 1e-6);
      }
    }
  }

  TEST_CASE("strided 2x2 conv") {
    const Tensor64 ones = Tensor64::full({1, 4, 6}, 1.0);
    const Tensor64 avg = tconv2x2s2(ones, Tensor64::full({1, 1, 2, 2}, 0.25), Tensor64::zeros({1}));
    CHECK(avg.shape() == Shape{1, 2, 3});
    for (double v : avg.data()) CHECK(v == 1.0);

    const Tensor64 x = random_tensor<double>({2, 3, 4, 6}, 12);
    const Tensor64 w = random_tensor<double>({3, 2, 2, 2}, 13);
    const Tensor64 b = random_tensor<double>({3}, 14);
    CHECK(max_diff(to_vec(tconv2x2s2(x, w, b)),
                   verify::ref_tconv2x2s2(x.data(), 2, 3, 4, 6, w.data(), b.data(), 3)) < 1e-12);

    CHECK(throws_code([] { tconv2x2s2(Tensor64::zeros({1, 5, 4}), Tensor64::zeros({1, 1, 2, 2}), Tensor64::zeros({1})); },
                      ErrorCode::ShapeMismatch));
  }

  TEST_CASE("max pooling") {
    const Tensor64 pooled = maxpool2(Tensor64::full({2, 4, 4}, 3.5));
    CHECK(pooled.shape() == Shape{2, 2, 2});
    for (double v : pooled.data()) CHECK(v == 3.5);

    std::vector<double> ramp(16);
    std::iota(ramp.begin(), ramp.end(), 0.0);
    const Tensor64 m = maxpool2(Tensor64({1, 4, 4}, ramp));
    CHECK(to_vec(m) == std::vector<double>{5, 7, 13, 15});

    const Tensor64 x = random_tensor<double>({3, 2, 6, 4}, 15);
    CHECK(max_diff(to_vec(maxpool2(x)), verify::ref_maxpool2(x.data(), 3, 2, 6, 4)) == 0.0);
    CHECK(throws_code([] { maxpool2(Tensor64::zeros({1, 4, 3})); }, ErrorCode::ShapeMismatch));
  }

  TEST_CASE("activations") {
    CHECK(silu(Tensor64::scalar(0.0)).item() == 0.0);
    CHECK(std::abs(silu(Tensor64::scalar(20.0)).item() - 20.0) < 1e-6);
    const Tensor64 x = random_tensor<double>({50}, 16, -6.0, 6.0);
    const Tensor64 s = silu(x);
    for (std::size_t i = 0; i < 50; ++i) CHECK(std::abs(s[i] - x[i] / (1 + std::exp(-x[i]))) < 1e-12);

    CHECK(gelu(Tensor64::scalar(0.0)).item() == 0.0);
    CHECK(std::abs(gelu(Tensor64::scalar(1.0)).item() - 0.841345) < 1e-6);
    const Tensor64 g = gelu(x);
    const Tensor64 gn = gelu(scale(x, -1.0));
    for (std::size_t i = 0; i < 50; ++i) CHECK(std::abs(g[i] - gn[i] - x[i]) < 1e-12);
  }

  TEST_CASE("softmax") {
    const Tensor64 x = random_tensor<double>({4, 7}, 17, -5.0, 5.0);
    const Tensor64 p = softmax_lastdim(x);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 7; ++c) s += p[r * 7 + c];
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
    const Tensor64 shifted = softmax_lastdim(add(x, Tensor64::full({4, 7}, 123.0)));
    CHECK(max_abs_diff(shifted, p) < 1e-12);
    const Tensor64 flat = softmax_lastdim(Tensor64::full({1, 5}, 2.0));
    for (double v : flat.data()) CHECK(std::abs(v - 0.2) < 1e-15);
  }

  TEST_CASE("layer norm") {
    const Tensor64 x = random_tensor<double>({3, 8}, 18, -4.0, 4.0);
    const Tensor64 y = layernorm_lastdim(x, Tensor64::full({8}, 1.0), Tensor64::zeros({8}));
    for (std::size_t r = 0; r < 3; ++r) {
      double mean = 0, var = 0;
      for (std::size_t c = 0; c < 8; ++c) mean += y[r * 8 + c] / 8;
      for (std::size_t c = 0; c < 8; ++c) var += (y[r * 8 + c] - mean) * (y[r * 8 + c] - mean) / 8;
      CHECK(std::abs(mean) < 1e-12);
      CHECK(std::abs(var - 1.0) < 1e-4);
    }
  }

  TEST_CASE("structural ops") {
    const Tensor64 a = random_tensor<double>({2, 3, 4}, 19);
    const Tensor64 b = random_tensor<double>({2, 5, 4}, 20);
    const Tensor64 parts[] = {a, b};
    const Tensor64 cat = concat<double>(parts, 1);
    CHECK(cat.shape() == Shape{2, 8, 4});
    const std::size_t sizes[] = {3, 5};
    const auto back = split(cat, 1, sizes);
    CHECK(bit_equal(back[0], a));
    CHECK(bit_equal(back[1], b));
    const std::size_t bad[] = {3, 4};
    CHECK(throws_code([&] { split(cat, 1, bad); }, ErrorCode::ShapeMismatch));

    const Tensor64 m = random_tensor<double>({3, 5}, 21);
    const Tensor64 n = random_tensor<double>({5, 2}, 22);
    const Tensor64 p = matmul(m, n);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 2; ++j) {
        double s = 0;
        for (std::size_t k = 0; k < 5; ++k) s += m[i * 5 + k] * n[k * 2 + j];
        CHECK(std::abs(p[i * 2 + j] - s) < 1e-12);
      }
    }
    CHECK(bit_equal(transpose(transpose(m)), m));
    CHECK(transpose(m)[1 * 3 + 2] == m[2 * 5 + 1]);
    CHECK(bit_equal(reshape(reshape(a, {6, 4}), {2, 3, 4}), a));

    const std::size_t idx[] = {3, 0, 0};
    const Tensor64 t = take(Tensor64({4}, {1, 2, 3, 4}), idx, Shape{3});
    CHECK(to_vec(t) == std::vector<double>{4, 1, 1});
  }
}

TEST_SUITE("rope") {
  TEST_CASE("band layout") {
    const RopeBands b = RopeBands::for_dim(16);
    CHECK(b.temporal == 8);
    CHECK(b.height == 4);
    CHECK(b.width == 4);
    CHECK(b.temporal + b.height + b.width == 16);
    CHECK(throws_code([] { RopeBands::for_dim(12); }, ErrorCode::ShapeMismatch));
    CHECK(throws_code([] { RopeBands::for_dim(7); }, ErrorCode::ShapeMismatch));
  }

  TEST_CASE("position zero is the identity") {
    const Tensor64 x = random_tensor<double>({3, 16}, 30);
    const std::vector<SpacetimeIndex> zero(3);
    CHECK(max_abs_diff(rope_apply(x, zero), x) == 0.0);
  }

  TEST_CASE("rotation preserves norms and matches explicit pair rotation") {
    const Tensor64 x = random_tensor<double>({5, 16}, 31);
    const std::vector<SpacetimeIndex> pos{{1, 2, 3}, {40, 0, 7}, {0, 9, 9}, {12, 1, 0}, {3, 3, 3}};
    const Tensor64 r = rope_apply(x, pos);
    for (std::size_t t = 0; t < 5; ++t) {
      const auto row = [](const Tensor64& m, std::size_t i) { return std::span(m.data()).subspan(i * 16, 16); };
      CHECK(std::abs(std::sqrt(dot(row(r, t), row(r, t))) - std::sqrt(dot(row(x, t), row(x, t)))) < 1e-12);
    }
    CHECK(max_diff(to_vec(r), verify::ref_rope(x.data(), 5, 16, pos)) < 1e-12);
  }

  TEST_CASE("inner products depend only on the temporal offset") {
    std::mt19937_64 rng(32);
    for (int trial = 0; trial < 100; ++trial) {
      const Tensor64 q = uniform<double>({1, 16}, -1, 1, rng);
      const Tensor64 k = uniform<double>({1, 16}, -1, 1, rng);
      const int m = static_cast<int>(rng() % 50);
      const int n = static_cast<int>(rng() % 50);
      const SpacetimeIndex pm{m, 0, 0}, pn{n, 0, 0}, qm{m + 37, 0, 0}, qn{n + 37, 0, 0};
      const double before = dot(rope_apply(q, std::span(&pm, 1)).data(), rope_apply(k, std::span(&pn, 1)).data());
      const double after = dot(rope_apply(q, std::span(&qm, 1)).data(), rope_apply(k, std::span(&qn, 1)).data());
      CHECK(std::abs(before - after) < 1e-5);
    }
  }
}

TEST_SUITE("autograd") {
  TEST_CASE("quadratic is exact") {
    const auto r = grad_check([](const Tensor64& x) { return sum(mul(x, x)); }, random_tensor<double>({10}, 40));
    CHECK(r.max_rel_error < 1e-9);
  }

  TEST_CASE("dconv then silu") {
    const Tensor64 w = random_tensor<double>({2, 3, 3}, 41);
    const Tensor64 b = random_tensor<double>({2}, 42);
    const auto r = grad_check([&](const Tensor64& x) { return sum(silu(dconv3x3(x, w, b))); },
                              random_tensor<double>({2, 4, 5}, 43));
    CHECK(r.max_rel_error < 1e-6);
  }

  TEST_CASE("refinement chain") {
    const auto w = AfrWeights<double>::init(2, 3, 44);
    const Tensor64 proj = random_tensor<double>({3, 1, 2, 2}, 45);
    const auto r = grad_check([&](const Tensor64& x) { return sum(mul(afr_forward(x, w), proj)); },
                              random_tensor<double>({2, 1, 4, 4}, 46));
    CHECK(r.max_rel_error < 1e-5);
    CHECK(r.checked == 32);
  }

  TEST_CASE("tape visits shared nodes once") {
    const Tensor64 x({3}, {1.0, -2.0, 0.5}, true);
    const Tensor64 sq = mul(x, x);
    const Tensor64 total = sum(add(sq, sq));
    GradTape<double> tape(total);
    CHECK(tape.size() == 4);
    tape.backward();
    for (std::size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == 4.0 * x[i]);
    // A second pass clears grads instead of accumulating.
    tape.backward();
    for (std::size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == 4.0 * x[i]);
  }

  TEST_CASE("non-scalar output") {
    CHECK(throws_code([] { backward(Tensor64::zeros({2}, true)); }, ErrorCode::ShapeMismatch));
  }

  TEST_CASE("gradients reach only leaves that ask for them") {
    const Tensor64 a({2}, {1, 2}, true);
    const Tensor64 b({2}, {3, 4}, false);
    backward(sum(mul(a, b)));
    CHECK(to_vec(Tensor64({2}, {a.grad()[0], a.grad()[1]})) == std::vector<double>{3, 4});
    CHECK(b.grad().empty());
  }

  TEST_CASE("forward passes are deterministic") {
    const auto w = AfrWeights<float>::init(4, 4, 47);
    const Tensor32 x = random_tensor<float>({4, 1, 8, 8}, 48);
    CHECK(bit_equal(afr_forward(x, w), afr_forward(x, w)));
  }
}

TEST_SUITE("tensor_io") {
  TEST_CASE("dump round trip is exact") {
    const Tensor32 t = random_tensor<float>({2, 3, 4}, 50, -1e3f, 1e3f);
    std::stringstream ss;
    write_tensor(ss, t);
    CHECK(bit_equal(read_tensor(ss), t));
  }

  TEST_CASE("checkpoint round trip") {
    test::TempDir dir;
    const NamedTensors named{{"a.w", random_tensor<float>({3, 2}, 51)}, {"b", random_tensor<float>({5}, 52)}};
    save_checkpoint(dir / "ckpt", named);
    const NamedTensors back = load_checkpoint(dir / "ckpt");
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(back[i].first == named[i].first);
      CHECK(bit_equal(back[i].second, named[i].second));
    }
  }

  TEST_CASE("malformed dump") {
    std::stringstream ss("2 3 2\n1\n2\n");
    CHECK_THROWS_AS(read_tensor(ss), Error);
  }
}
