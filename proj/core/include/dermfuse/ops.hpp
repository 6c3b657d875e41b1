#pragma once

#include <cstdint>
#include <vector>

#include "dermfuse/tensor.hpp"

namespace dermfuse {

// Forward kernels. Each op validates shapes, computes the output, verifies
// that the result is finite, and (when a tape is active and some input
// requires a gradient) records one backward step. Summation order inside
// every kernel is fixed, so repeated runs are bit-identical.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

// x has shape (..., d), bias has shape (d); broadcast add over the last axis.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor matmul(const Tensor& a, const Tensor& b);  // (m,k) x (k,n) -> (m,n)
Tensor transpose(const Tensor& a);                // 2-d only

inline Tensor reshape(const Tensor& a, Shape shape) {
  return a.reshaped(std::move(shape));
}

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor narrow(const Tensor& a, int axis, int64_t start, int64_t len);
std::vector<Tensor> split(const Tensor& a, int axis,
                          const std::vector<int64_t>& sizes);

// out[r, :] = a[index[r], :] for a 2-d tensor; backward scatter-adds.
Tensor gather_rows(const Tensor& a, const std::vector<int64_t>& index);

Tensor sum_axis(const Tensor& a, int axis);
Tensor mean_axis(const Tensor& a, int axis);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// Normalization over the last axis; gamma/beta have that axis's extent.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);  // exact erf form
Tensor softplus(const Tensor& a);

Tensor softmax(const Tensor& a, int axis);
Tensor logsumexp(const Tensor& a, int axis);

// Identity in this engine: no dropout rate is ever applied, the hook exists
// so the call sites read like the eventual training graph.
Tensor dropout(const Tensor& a, double rate, bool training);

// Sum of scalar tensors into one scalar node.
Tensor sum_list(const std::vector<Tensor>& scalars);

// Margin term used by the two-way loss: for one flattened logit vector and a
// positive-membership mask,
//   softplus( logsumexp_{mask=0}(l) + T * logsumexp_{mask=1}(-l / T) ).
// If either side of the mask is empty the term is exactly 0 with zero
// gradient (the empty logsumexp is -inf, which never materializes here).
Tensor two_way_margin(const Tensor& logits, const std::vector<uint8_t>& positive,
                      double temperature);

// Stable scalar helpers shared with the losses module.
double stable_softplus(double x);
double stable_sigmoid(double x);

}  // namespace dermfuse
