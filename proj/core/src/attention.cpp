#include "dermfuse/attention.hpp"

#include <cmath>

namespace dermfuse {

Tensor attention_heads(const Tensor& q, const Tensor& k, const Tensor& v,
                       int heads) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw ShapeError("attention_heads: expected 2-d token tensors");
  }
  const int64_t d = q.extent(1);
  if (k.extent(1) != d || v.extent(1) != d || k.extent(0) != v.extent(0)) {
    throw ShapeError("attention_heads: key/value shapes " +
                     shape_str(k.shape()) + "/" + shape_str(v.shape()) +
                     " do not match queries " + shape_str(q.shape()));
  }
  if (heads <= 0 || d % heads != 0) {
    throw ConfigError("attention_heads: head count " + std::to_string(heads) +
                      " does not divide width " + std::to_string(d));
  }
  const int64_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> ctx;
  ctx.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = narrow(q, 1, h * dh, dh);
    Tensor kh = narrow(k, 1, h * dh, dh);
    Tensor vh = narrow(v, 1, h * dh, dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    Tensor probs = softmax(scores, 1);
    ctx.push_back(matmul(probs, vh));
  }
  return heads == 1 ? ctx[0] : concat(ctx, 1);
}

MultiHeadAttention MultiHeadAttention::create(int64_t dim, int heads,
                                              Rng& rng) {
  if (heads <= 0 || dim % heads != 0) {
    throw ConfigError("multi-head attention: head count " +
                      std::to_string(heads) + " does not divide width " +
                      std::to_string(dim));
  }
  MultiHeadAttention m;
  m.wq = Linear::create(dim, dim, rng);
  m.wk = Linear::create(dim, dim, rng);
  m.wv = Linear::create(dim, dim, rng);
  m.wo = Linear::create(dim, dim, rng);
  m.heads = heads;
  return m;
}

Tensor MultiHeadAttention::apply(const Tensor& query_in,
                                 const Tensor& kv_in) const {
  Tensor q = wq.apply(query_in);
  Tensor k = wk.apply(kv_in);
  Tensor v = wv.apply(kv_in);
  return wo.apply(attention_heads(q, k, v, heads));
}

void MultiHeadAttention::visit(const std::string& prefix,
                               const ParamVisitor& fn) {
  wq.visit(prefix + ".wq", fn);
  wk.visit(prefix + ".wk", fn);
  wv.visit(prefix + ".wv", fn);
  wo.visit(prefix + ".wo", fn);
}

std::vector<int64_t> window_permutation(int grid, int window, int shift) {
  if (grid <= 0 || window <= 0 || grid % window != 0) {
    throw ConfigError("window_permutation: grid " + std::to_string(grid) +
                      " not divisible by window " + std::to_string(window));
  }
  std::vector<int64_t> perm;
  perm.reserve(static_cast<size_t>(grid) * static_cast<size_t>(grid));
  const int nw = grid / window;
  for (int wy = 0; wy < nw; ++wy) {
    for (int wx = 0; wx < nw; ++wx) {
      for (int iy = 0; iy < window; ++iy) {
        for (int ix = 0; ix < window; ++ix) {
          const int r = (wy * window + iy + shift) % grid;
          const int c = (wx * window + ix + shift) % grid;
          perm.push_back(static_cast<int64_t>(r) * grid + c);
        }
      }
    }
  }
  return perm;
}

std::vector<int64_t> inverse_permutation(const std::vector<int64_t>& perm) {
  std::vector<int64_t> inv(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) {
    inv[static_cast<size_t>(perm[i])] = static_cast<int64_t>(i);
  }
  return inv;
}

}  // namespace dermfuse
