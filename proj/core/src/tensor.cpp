#include "dermfuse/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <utility>

namespace dermfuse {

namespace {
std::atomic<uint64_t> g_next_id{1};
thread_local Tape* g_active_tape = nullptr;
}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ')';
  return os.str();
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  for (int64_t e : shape) {
    if (e <= 0) {
      throw ShapeError("tensor extents must be positive, got " +
                       shape_str(shape));
    }
  }
  Tensor t;
  t.st_ = std::make_shared<Storage>();
  t.st_->data.assign(static_cast<size_t>(shape_numel(shape)), value);
  t.st_->requires_grad = requires_grad;
  t.st_->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values,
                         bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
    throw ShapeError("from_data: " + std::to_string(values.size()) +
                     " values do not fill shape " + shape_str(shape));
  }
  Tensor t = zeros(std::move(shape), requires_grad);
  t.st_->data = std::move(values);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.st_->data) v = rng.normal(0.0, stddev);
  return t;
}

void Tensor::ensure_defined() const {
  if (!st_) throw ShapeError("operation on empty tensor");
}

int64_t Tensor::extent(int axis) const {
  ensure_defined();
  if (axis < 0 || axis >= rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(shape_));
  }
  return shape_[static_cast<size_t>(axis)];
}

int64_t Tensor::numel() const {
  ensure_defined();
  return static_cast<int64_t>(st_->data.size());
}

std::vector<double>& Tensor::data() {
  ensure_defined();
  return st_->data;
}

const std::vector<double>& Tensor::data() const {
  ensure_defined();
  return st_->data;
}

double Tensor::value() const {
  ensure_defined();
  if (st_->data.size() != 1) {
    throw ShapeError("value(): tensor " + shape_str(shape_) +
                     " is not a scalar");
  }
  return st_->data[0];
}

double Tensor::operator()(int64_t i) const {
  return data()[static_cast<size_t>(i)];
}

double Tensor::operator()(int64_t i, int64_t j) const {
  if (rank() != 2) {
    throw ShapeError("2-d indexing into tensor " + shape_str(shape_));
  }
  return data()[static_cast<size_t>(i * shape_[1] + j)];
}

bool Tensor::requires_grad() const { return st_ && st_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  ensure_defined();
  st_->requires_grad = on;
  return *this;
}

std::vector<double>& Tensor::grad() const {
  ensure_defined();
  if (st_->grad.empty()) st_->grad.assign(st_->data.size(), 0.0);
  return st_->grad;
}

const std::vector<double>& Tensor::grad_buf() const {
  ensure_defined();
  return st_->grad;
}

bool Tensor::has_grad() const { return st_ && !st_->grad.empty(); }

void Tensor::zero_grad() const {
  ensure_defined();
  if (!st_->grad.empty()) st_->grad.assign(st_->data.size(), 0.0);
}

uint64_t Tensor::id() const {
  ensure_defined();
  return st_->id;
}

Tensor Tensor::reshaped(Shape new_shape) const {
  ensure_defined();
  if (shape_numel(new_shape) != numel()) {
    throw ShapeError("reshape " + shape_str(shape_) + " -> " +
                     shape_str(new_shape) + ": element count differs");
  }
  Tensor t;
  t.st_ = st_;
  t.shape_ = std::move(new_shape);
  return t;
}

Tape::Scope::Scope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }

Tape::Scope::~Scope() { g_active_tape = prev_; }

Tape* Tape::current() { return g_active_tape; }

bool Tape::recording() { return g_active_tape != nullptr; }

void Tape::record(std::function<void()> step) {
  steps_.push_back(std::move(step));
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) {
    throw std::logic_error(
        "Tape::backward called twice; reset() the tape first");
  }
  if (steps_.empty()) throw std::logic_error("Tape::backward on an empty tape");
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got " +
                     shape_str(loss.shape()));
  }
  Tensor seed = loss;
  seed.grad()[0] += 1.0;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  consumed_ = true;
}

void Tape::reset() {
  steps_.clear();
  consumed_ = false;
}

namespace detail {

void check_finite(const Tensor& t, const char* op) {
  const auto& d = t.data();
  for (size_t i = 0; i < d.size(); ++i) {
    if (!std::isfinite(d[i])) {
      throw NumericError(std::string(op) + " produced non-finite value at " +
                         "flat index " + std::to_string(i));
    }
  }
}

}  // namespace detail

}  // namespace dermfuse
