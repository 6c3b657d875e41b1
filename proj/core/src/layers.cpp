#include "dermfuse/layers.hpp"

#include <cmath>

namespace dermfuse {

Linear Linear::create(int64_t in, int64_t out, Rng& rng, bool bias) {
  Linear l;
  const double stddev = std::sqrt(2.0 / static_cast<double>(in + out));
  l.w = Tensor::randn({in, out}, rng, stddev, true);
  if (bias) l.b = Tensor::zeros({out}, true);
  return l;
}

Tensor Linear::apply(const Tensor& x) const {
  Tensor y = matmul(x, w);
  if (b.defined()) y = add_bias(y, b);
  return y;
}

void Linear::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".w", w);
  if (b.defined()) fn(prefix + ".b", b);
}

LayerNorm LayerNorm::create(int64_t dim) {
  LayerNorm ln;
  ln.gamma = Tensor::full({dim}, 1.0, true);
  ln.beta = Tensor::zeros({dim}, true);
  return ln;
}

Tensor LayerNorm::apply(const Tensor& x) const {
  return layer_norm(x, gamma, beta);
}

void LayerNorm::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".gamma", gamma);
  fn(prefix + ".beta", beta);
}

Mlp Mlp::create(int64_t dim, int64_t hidden, const std::string& activation,
                Rng& rng) {
  Mlp m;
  m.fc1 = Linear::create(dim, hidden, rng);
  m.fc2 = Linear::create(hidden, dim, rng);
  m.use_gelu = activation != "relu";
  return m;
}

Tensor Mlp::apply(const Tensor& x) const {
  Tensor h = fc1.apply(x);
  h = use_gelu ? gelu(h) : relu(h);
  return fc2.apply(h);
}

void Mlp::visit(const std::string& prefix, const ParamVisitor& fn) {
  fc1.visit(prefix + ".fc1", fn);
  fc2.visit(prefix + ".fc2", fn);
}

}  // namespace dermfuse
