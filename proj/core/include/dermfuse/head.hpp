#pragma once

#include <vector>

#include "dermfuse/attention.hpp"
#include "dermfuse/config.hpp"
#include "dermfuse/tasks.hpp"

namespace dermfuse {

// Mean pooling over stage-4 tokens followed by a fully connected layer,
// producing one decision feature vector.
struct PoolHead {
  Linear fc;

  static PoolHead create(int64_t in_dim, int64_t out_dim, Rng& rng);
  Tensor apply(const Tensor& tokens) const;  // (n, in) -> (out,)
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Multi-label classification head: 8 task projections, self-attention over
// the stacked task features (+ residual), 8 per-task classifiers, flattened
// into the 24-wide logit vector.
struct LabelHead {
  std::vector<Linear> task_proj;    // 8 x (in -> dim)
  MultiHeadAttention mha;
  std::vector<Linear> classifiers;  // 8 x (dim -> cardinality)
  bool use_mha = true;

  static LabelHead create(int64_t in_dim, const HeadConfig& cfg, Rng& rng);
  // (in_dim,) -> (24,)
  Tensor apply(const Tensor& f_final) const;
  // Intermediate task-feature stack, exposed for shape and symmetry checks.
  Tensor project_stack(const Tensor& f_final) const;  // (8, dim)
  Tensor correlate(const Tensor& stacked) const;      // MHA + residual
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

}  // namespace dermfuse
