#include <doctest.h>

#include <cmath>
#include <vector>

#include "dermfuse/gradcheck.hpp"
#include "dermfuse/ops.hpp"
#include "dermfuse/rng.hpp"

using namespace dermfuse;

namespace {

Shape random_shape(Rng& rng, int max_rank = 3, int64_t max_extent = 5) {
  const int rank = 1 + static_cast<int>(rng.below(max_rank));
  Shape s;
  for (int i = 0; i < rank; ++i) s.push_back(1 + rng.below(max_extent));
  return s;
}

void expect_kernel_grad(const TensorProgram& f, std::vector<NamedLeaf> leaves) {
  GradCheckReport report = grad_check(f, std::move(leaves));
  CHECK_MESSAGE(report.pass(1e-5), report.summary());
}

}  // namespace

TEST_CASE("matmul shape algebra and values") {
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from_data({3, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0});
  Tensor c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 4});
  CHECK(c(0, 0) == 1.0);
  CHECK(c(1, 2) == 6.0);
  CHECK(c(1, 3) == 0.0);
}

TEST_CASE("shape mismatch errors name both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 5});
  try {
    (void)matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(2x3)") != std::string::npos);
    CHECK(msg.find("(4x5)") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, b), ShapeError);
}

TEST_CASE("softmax of zeros is uniform") {
  Tensor x = Tensor::zeros({3});
  Tensor y = softmax(x, 0);
  for (int i = 0; i < 3; ++i) CHECK(y(i) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("softmax rows sum to one and stay strictly positive") {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor x = Tensor::randn({4, 6}, rng, 5.0);
    Tensor y = softmax(x, 1);
    for (int64_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (int64_t c = 0; c < 6; ++c) {
        CHECK(y(r, c) > 0.0);
        s += y(r, c);
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("logsumexp of two zeros is ln 2") {
  Tensor x = Tensor::zeros({2});
  CHECK(logsumexp(x, 0).value() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("logsumexp survives large inputs via max shift") {
  Tensor x = Tensor::full({2}, 1000.0);
  CHECK(logsumexp(x, 0).value() ==
        doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("logsumexp shift invariance") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor x = Tensor::randn({5}, rng, 3.0);
    const double c = rng.uniform(-50.0, 50.0);
    Tensor shifted = Tensor::zeros({5});
    for (int i = 0; i < 5; ++i) shifted.data()[i] = x(i) - c;
    const double lhs = logsumexp(x, 0).value();
    const double rhs = c + logsumexp(shifted, 0).value();
    CHECK(std::abs(lhs - rhs) <= 1e-12);
  }
}

TEST_CASE("concat then split round-trips bit-exactly") {
  Rng rng(9);
  for (int rep = 0; rep < 20; ++rep) {
    const int axis = static_cast<int>(rng.below(2));
    std::vector<Tensor> parts;
    std::vector<int64_t> sizes;
    const int64_t other = 1 + rng.below(4);
    for (int p = 0; p < 3; ++p) {
      const int64_t n = 1 + rng.below(4);
      sizes.push_back(n);
      Shape s = axis == 0 ? Shape{n, other} : Shape{other, n};
      parts.push_back(Tensor::randn(s, rng));
    }
    Tensor whole = concat(parts, axis);
    std::vector<Tensor> back = split(whole, axis, sizes);
    for (size_t p = 0; p < parts.size(); ++p) {
      REQUIRE(back[p].shape() == parts[p].shape());
      for (int64_t i = 0; i < parts[p].numel(); ++i) {
        CHECK(back[p].data()[static_cast<size_t>(i)] ==
              parts[p].data()[static_cast<size_t>(i)]);
      }
    }
  }
}

TEST_CASE("narrow bounds are validated") {
  Tensor a = Tensor::zeros({4, 3});
  CHECK_THROWS_AS(narrow(a, 0, 2, 5), ShapeError);
  CHECK_THROWS_AS(narrow(a, 2, 0, 1), ShapeError);
}

TEST_CASE("gather_rows validates indices") {
  Tensor a = Tensor::zeros({4, 3});
  CHECK_THROWS_AS(gather_rows(a, {0, 4}), ShapeError);
}

TEST_CASE("dropout is the identity") {
  Tensor a = Tensor::from_data({3}, {1.0, -2.0, 0.5});
  Tensor out = dropout(a, 0.0, true);
  CHECK(out.id() == a.id());
  CHECK_THROWS_AS(dropout(a, 0.5, true), ConfigError);
  CHECK_THROWS_AS(dropout(a, -0.1, true), ConfigError);
}

TEST_CASE("gradients match central differences for every kernel") {
  Rng rng(1234);

  SUBCASE("add / sub / mul") {
    for (int rep = 0; rep < 20; ++rep) {
      Shape s = random_shape(rng);
      Tensor a = Tensor::randn(s, rng);
      Tensor b = Tensor::randn(s, rng);
      expect_kernel_grad(
          [&] { return sum_all(gelu(add(a, b))); },
          {{"a", a}, {"b", b}});
      expect_kernel_grad(
          [&] { return sum_all(gelu(sub(a, b))); },
          {{"a", a}, {"b", b}});
      expect_kernel_grad(
          [&] { return sum_all(mul(a, b)); },
          {{"a", a}, {"b", b}});
    }
  }

  SUBCASE("scale and add_bias") {
    for (int rep = 0; rep < 20; ++rep) {
      Tensor x = Tensor::randn({1 + rng.below(4), 1 + rng.below(5)}, rng);
      Tensor b = Tensor::randn({x.extent(1)}, rng);
      const double f = rng.uniform(-2.0, 2.0);
      expect_kernel_grad(
          [&] { return sum_all(gelu(scale(x, f))); }, {{"x", x}});
      expect_kernel_grad(
          [&] { return sum_all(gelu(add_bias(x, b))); },
          {{"x", x}, {"b", b}});
    }
  }

  SUBCASE("matmul and transpose") {
    for (int rep = 0; rep < 20; ++rep) {
      const int64_t m = 1 + rng.below(4), k = 1 + rng.below(4),
                    n = 1 + rng.below(4);
      Tensor a = Tensor::randn({m, k}, rng);
      Tensor b = Tensor::randn({k, n}, rng);
      expect_kernel_grad(
          [&] { return sum_all(gelu(matmul(a, b))); },
          {{"a", a}, {"b", b}});
      expect_kernel_grad(
          [&] { return sum_all(gelu(matmul(transpose(b), transpose(a)))); },
          {{"a", a}, {"b", b}});
    }
  }

  SUBCASE("concat, narrow and gather_rows") {
    for (int rep = 0; rep < 20; ++rep) {
      const int64_t d = 1 + rng.below(4);
      Tensor a = Tensor::randn({2 + rng.below(3), d}, rng);
      Tensor b = Tensor::randn({1 + rng.below(3), d}, rng);
      std::vector<int64_t> idx;
      for (int i = 0; i < 4; ++i) idx.push_back(rng.below(a.extent(0)));
      expect_kernel_grad(
          [&] {
            Tensor cat = concat({a, b}, 0);
            Tensor cut = narrow(cat, 0, 1, cat.extent(0) - 1);
            return sum_all(gelu(cut));
          },
          {{"a", a}, {"b", b}});
      expect_kernel_grad(
          [&] { return sum_all(gelu(gather_rows(a, idx))); }, {{"a", a}});
    }
  }

  SUBCASE("reductions") {
    for (int rep = 0; rep < 20; ++rep) {
      Shape s = random_shape(rng, 3, 4);
      Tensor a = Tensor::randn(s, rng);
      const int axis = static_cast<int>(rng.below(a.rank()));
      expect_kernel_grad(
          [&] { return sum_all(gelu(sum_axis(a, axis))); }, {{"a", a}});
      expect_kernel_grad(
          [&] { return sum_all(gelu(mean_axis(a, axis))); }, {{"a", a}});
      expect_kernel_grad([&] { return mean_all(mul(a, a)); }, {{"a", a}});
    }
  }

  SUBCASE("layer_norm") {
    for (int rep = 0; rep < 20; ++rep) {
      const int64_t d = 2 + rng.below(5);
      Tensor x = Tensor::randn({1 + rng.below(4), d}, rng);
      Tensor g = Tensor::randn({d}, rng, 0.5);
      Tensor b = Tensor::randn({d}, rng, 0.5);
      expect_kernel_grad(
          [&] { return sum_all(gelu(layer_norm(x, g, b))); },
          {{"x", x}, {"gamma", g}, {"beta", b}});
    }
  }

  SUBCASE("activations") {
    for (int rep = 0; rep < 20; ++rep) {
      Tensor x = Tensor::randn(random_shape(rng), rng, 2.0);
      // relu has a kink at zero; keep samples away from it.
      for (double& v : x.data()) {
        if (std::abs(v) < 1e-3) v = 0.1;
      }
      expect_kernel_grad([&] { return sum_all(relu(x)); }, {{"x", x}});
      expect_kernel_grad([&] { return sum_all(gelu(x)); }, {{"x", x}});
      expect_kernel_grad([&] { return sum_all(softplus(x)); }, {{"x", x}});
    }
  }

  SUBCASE("softmax and logsumexp") {
    for (int rep = 0; rep < 20; ++rep) {
      Shape s = random_shape(rng, 2, 5);
      Tensor x = Tensor::randn(s, rng, 2.0);
      const int axis = static_cast<int>(rng.below(x.rank()));
      Tensor w = Tensor::randn(s, rng);
      expect_kernel_grad(
          [&] { return sum_all(mul(softmax(x, axis), w)); }, {{"x", x}});
      expect_kernel_grad(
          [&] { return sum_all(gelu(logsumexp(x, axis))); }, {{"x", x}});
    }
  }

  SUBCASE("two_way_margin") {
    for (int rep = 0; rep < 20; ++rep) {
      const int64_t k = 3 + rng.below(8);
      Tensor l = Tensor::randn({k}, rng, 3.0);
      std::vector<uint8_t> mask(static_cast<size_t>(k), 0);
      mask[static_cast<size_t>(rng.below(k))] = 1;
      mask[static_cast<size_t>(rng.below(k))] = 1;
      const double t = rng.uniform(0.5, 5.0);
      expect_kernel_grad(
          [&] { return two_way_margin(l, mask, t); }, {{"l", l}});
    }
  }
}

TEST_CASE("grad_check reports zero error for the identity sum") {
  Tensor x = Tensor::from_data({4}, {1.0, -2.0, 3.0, 0.5});
  // Power-of-two step keeps x +/- h exact, so the central difference of a
  // plain sum is exactly 1.
  GradCheckOptions opts;
  opts.step = 0x1.0p-17;
  GradCheckReport report =
      grad_check([&] { return sum_all(x); }, {{"x", x}}, opts);
  CHECK(report.max_rel_err == 0.0);
}

TEST_CASE("grad_check rejects non-deterministic programs") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0});
  int calls = 0;
  auto f = [&]() {
    ++calls;
    return scale(sum_all(x), 1.0 + 0.001 * calls);
  };
  CHECK_THROWS_WITH_AS(grad_check(f, {{"x", x}}),
                       doctest::Contains("non-deterministic"),
                       std::runtime_error);
}

TEST_CASE("grad_check validates the step size") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0});
  GradCheckOptions opts;
  opts.step = 0.5;
  CHECK_THROWS_AS(grad_check([&] { return sum_all(x); }, {{"x", x}}, opts),
                  ConfigError);
}
