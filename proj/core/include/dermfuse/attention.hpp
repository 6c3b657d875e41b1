#pragma once

#include <vector>

#include "dermfuse/layers.hpp"
#include "dermfuse/tensor.hpp"

namespace dermfuse {

// Scaled dot-product attention over pre-projected features:
// q (nq, d), k/v (nkv, d), d divisible by heads. Heads are column slices.
Tensor attention_heads(const Tensor& q, const Tensor& k, const Tensor& v,
                       int heads);

// Full attention block with its own projections; queries and keys/values may
// come from different token sets (cross-attention) or the same (self).
struct MultiHeadAttention {
  Linear wq, wk, wv, wo;
  int heads = 1;

  static MultiHeadAttention create(int64_t dim, int heads, Rng& rng);
  Tensor apply(const Tensor& query_in, const Tensor& kv_in) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Row permutation that groups a g*g row-major token grid into window-major
// order (windows row-major, tokens within each window row-major). A non-zero
// shift cyclically rolls the grid before partitioning.
std::vector<int64_t> window_permutation(int grid, int window, int shift);
std::vector<int64_t> inverse_permutation(const std::vector<int64_t>& perm);

}  // namespace dermfuse
