#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dermfuse/tensor.hpp"

namespace dermfuse {

// A deterministic scalar program over a fixed set of leaf tensors. The
// program must read the leaves through the handles passed at registration so
// that in-place perturbations are visible to it.
using TensorProgram = std::function<Tensor()>;

struct NamedLeaf {
  std::string name;
  Tensor tensor;
};

struct LeafCheck {
  std::string name;
  double max_rel_err = 0.0;
  int64_t worst_index = -1;
  double autodiff = 0.0;
  double finite_diff = 0.0;
  int64_t checked = 0;
};

struct GradCheckReport {
  std::vector<LeafCheck> leaves;
  double max_rel_err = 0.0;
  bool pass(double tol) const { return max_rel_err <= tol; }
  std::string summary() const;
};

struct GradCheckOptions {
  double step = 1e-5;
  // 0 checks every element; otherwise at most this many randomly sampled
  // coordinates per leaf (deterministic in sample_seed).
  int64_t max_elems_per_leaf = 0;
  uint64_t sample_seed = 0x9d2c5680;
  // Relative error floor: |ad - fd| / max(|ad|, |fd|, rel_floor).
  double rel_floor = 1e-3;
  // Coordinates where both sides are at most this magnitude count as an
  // agreeing zero. Central differences of a truly flat coordinate measure
  // only forward-evaluation noise, which this cutoff absorbs.
  double zero_tol = 0.0;
};

// Compares reverse-mode gradients against central differences
// (f(x+h) - f(x-h)) / 2h per sampled leaf coordinate. Runs the program twice
// up front and rejects non-deterministic programs. Leaves are restored to
// their original values on return.
GradCheckReport grad_check(const TensorProgram& f, std::vector<NamedLeaf> leaves,
                           const GradCheckOptions& opts = {});

}  // namespace dermfuse
