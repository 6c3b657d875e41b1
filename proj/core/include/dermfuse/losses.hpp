#pragma once

#include "dermfuse/tensor.hpp"

namespace dermfuse {

// Per-sample margin term over the K label columns of one row. Positive
// membership is target > 0 so that soft (mixed) targets stay well-defined.
Tensor twl_sample_term(const Tensor& logits_row, const Tensor& targets_row,
                       double temperature);

// Per-class margin term over the N sample rows of one column. Either side of
// the split may be empty, in which case the term is exactly 0.
Tensor twl_class_term(const Tensor& logits_col, const Tensor& targets_col,
                      double temperature);

// Two-way loss over an (N, K) batch:
//   (1/N) * sum_i sample_term(i) + (1/K) * sum_k class_term(k).
// Gradients flow to the logits only.
Tensor two_way_loss(const Tensor& logits, const Tensor& targets,
                    double temperature);

// Mean binary cross-entropy with logits over all N*K entries, computed in
// the softplus form softplus(l) - l*y.
Tensor bce_loss(const Tensor& logits, const Tensor& targets);

}  // namespace dermfuse
