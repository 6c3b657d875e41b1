#include <doctest.h>

#include <cmath>

#include "dermfuse/ops.hpp"
#include "dermfuse/rng.hpp"
#include "dermfuse/tensor.hpp"

using namespace dermfuse;

TEST_CASE("tensor data length equals product of extents") {
  Tensor t = Tensor::zeros({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(t.data().size() == 24);
  CHECK_THROWS_AS(Tensor::zeros({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
}

TEST_CASE("grad buffer matches data length and stays absent on fresh tensors") {
  Tensor t = Tensor::zeros({3, 2});
  CHECK_FALSE(t.has_grad());
  t.grad();
  CHECK(t.has_grad());
  CHECK(t.grad().size() == t.data().size());
}

TEST_CASE("reshape shares storage and validates element count") {
  Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor r = t.reshaped({3, 2});
  CHECK(r.id() == t.id());
  r.grad()[0] = 7.0;
  CHECK(t.grad()[0] == 7.0);
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
}

TEST_CASE("backward requires a scalar loss") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tape tape;
  Tensor y;
  {
    Tape::Scope scope(tape);
    y = scale(x, 2.0);
  }
  CHECK_THROWS_AS(tape.backward(y), ShapeError);
}

TEST_CASE("backward on an empty tape is rejected") {
  Tape tape;
  CHECK_THROWS_AS(tape.backward(Tensor::scalar(1.0)), std::logic_error);
}

TEST_CASE("double backward without reset is rejected") {
  Tensor x = Tensor::from_data({3}, {1.0, 2.0, 3.0}, true);
  Tape tape;
  Tensor loss;
  {
    Tape::Scope scope(tape);
    loss = sum_all(x);
  }
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), std::logic_error);
  tape.reset();
  CHECK(tape.size() == 0);
}

TEST_CASE("sum backward fills leaf gradient with ones") {
  Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tape tape;
  Tensor loss;
  {
    Tape::Scope scope(tape);
    loss = sum_all(x);
  }
  tape.backward(loss);
  for (double g : x.grad_buf()) CHECK(g == 1.0);
}

TEST_CASE("elementwise square gradient is 2x") {
  Tensor x = Tensor::from_data({3}, {1.0, 2.0, 3.0}, true);
  Tape tape;
  Tensor loss;
  {
    Tape::Scope scope(tape);
    loss = sum_all(mul(x, x));
  }
  tape.backward(loss);
  CHECK(x.grad_buf()[0] == doctest::Approx(2.0));
  CHECK(x.grad_buf()[1] == doctest::Approx(4.0));
  CHECK(x.grad_buf()[2] == doctest::Approx(6.0));
}

TEST_CASE("non-trainable leaves stay untouched by backward") {
  Tensor w = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor c = Tensor::from_data({2}, {3.0, 4.0});
  Tape tape;
  Tensor loss;
  {
    Tape::Scope scope(tape);
    loss = sum_all(mul(w, c));
  }
  tape.backward(loss);
  CHECK(w.has_grad());
  CHECK_FALSE(c.has_grad());
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(11);
  Tensor x = Tensor::randn({4, 3}, rng, 1.0, true);
  const double a = 1.7, b = -0.4;

  auto grad_of = [&](bool combined) {
    x.zero_grad();
    Tape tape;
    Tape::Scope scope(tape);
    Tensor l1 = sum_all(mul(x, x));
    Tensor l2 = sum_all(gelu(x));
    Tensor loss;
    if (combined) {
      loss = add(scale(l1, a), scale(l2, b));
      tape.backward(loss);
      return x.grad_buf();
    }
    tape.backward(l1);
    std::vector<double> g1 = x.grad_buf();
    x.zero_grad();
    Tape tape2;
    Tape::Scope scope2(tape2);
    Tensor l2b = sum_all(gelu(x));
    tape2.backward(l2b);
    std::vector<double> out(g1.size());
    for (size_t i = 0; i < g1.size(); ++i) {
      out[i] = a * g1[i] + b * x.grad_buf()[i];
    }
    return out;
  };

  std::vector<double> combined = grad_of(true);
  std::vector<double> separate = grad_of(false);
  for (size_t i = 0; i < combined.size(); ++i) {
    CHECK(std::abs(combined[i] - separate[i]) <= 1e-12);
  }
}

TEST_CASE("ops outside a tape scope do not track gradients") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor y = scale(x, 3.0);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("non-finite op output raises NumericError") {
  Tensor big = Tensor::full({2}, 1e308);
  CHECK_THROWS_AS(mul(big, big), NumericError);
}

TEST_CASE("rng streams are reproducible and derivable") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(Rng::derive(1, {2, 3}) == Rng::derive(1, {2, 3}));
  CHECK(Rng::derive(1, {2, 3}) != Rng::derive(1, {3, 2}));
}
