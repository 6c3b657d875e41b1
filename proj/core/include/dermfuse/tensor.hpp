#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dermfuse/errors.hpp"
#include "dermfuse/rng.hpp"

namespace dermfuse {

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

// Dense row-major tensor of 64-bit reals. Handles are cheap to copy and share
// the underlying value/gradient storage, so a handle captured by a tape
// closure sees gradients accumulated later. Values are immutable once a
// tensor has been consumed by an op; only leaves owned by the optimizer (or a
// gradient checker) are mutated in place between tape runs.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> values,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0,
                      bool requires_grad = false);

  bool defined() const { return st_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t extent(int axis) const;
  int64_t numel() const;

  std::vector<double>& data();
  const std::vector<double>& data() const;

  // Scalar accessor; throws ShapeError unless numel() == 1.
  double value() const;
  double operator()(int64_t i) const;
  double operator()(int64_t i, int64_t j) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);

  // Gradient buffer, zero-initialized on first access. grad_buf() never
  // allocates and is empty until some backward step touched this tensor.
  // Gradient storage is shared across handle copies, so these are const
  // on the handle the way shared_ptr access is.
  std::vector<double>& grad() const;
  const std::vector<double>& grad_buf() const;
  bool has_grad() const;
  void zero_grad() const;

  // Identity of the underlying storage (stable across handle copies).
  uint64_t id() const;

  // Shares storage under a new shape; numel must match. Gradients flow
  // through for free because the gradient buffer is shared too.
  Tensor reshaped(Shape new_shape) const;

 private:
  struct Storage {
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    uint64_t id = 0;
  };

  std::shared_ptr<Storage> st_;
  Shape shape_;

  void ensure_defined() const;
};

// Reverse-mode tape. Ops record one closure per node in execution order;
// backward() replays them in exact reverse order. A tape is single-owner:
// it must not be shared between threads, but independent tapes on different
// threads are fine (the active tape is thread-local).
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  static Tape* current();
  static bool recording();

  void record(std::function<void()> step);
  size_t size() const { return steps_.size(); }

  // Seeds d(loss)/d(loss) = 1 and replays recorded steps in reverse.
  // Rejects non-scalar losses, empty tapes and repeated backward calls.
  void backward(const Tensor& loss);
  void reset();

 private:
  std::vector<std::function<void()>> steps_;
  bool consumed_ = false;
};

namespace detail {
// True when the op must be recorded for this input.
inline bool track(const Tensor& t) {
  return Tape::recording() && t.requires_grad();
}
// Throws NumericError naming the op if any element is non-finite.
void check_finite(const Tensor& t, const char* op);
}  // namespace detail

}  // namespace dermfuse
