#pragma once

#include <functional>
#include <string>

#include "dermfuse/ops.hpp"
#include "dermfuse/rng.hpp"
#include "dermfuse/tensor.hpp"

namespace dermfuse {

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

struct Linear {
  Tensor w;  // (in, out)
  Tensor b;  // (out); undefined when constructed without bias

  static Linear create(int64_t in, int64_t out, Rng& rng, bool bias = true);
  Tensor apply(const Tensor& x) const;  // (n, in) -> (n, out)
  void visit(const std::string& prefix, const ParamVisitor& fn);
  int64_t in_dim() const { return w.extent(0); }
  int64_t out_dim() const { return w.extent(1); }
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  static LayerNorm create(int64_t dim);
  Tensor apply(const Tensor& x) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct Mlp {
  Linear fc1;
  Linear fc2;
  bool use_gelu = true;

  static Mlp create(int64_t dim, int64_t hidden, const std::string& activation,
                    Rng& rng);
  Tensor apply(const Tensor& x) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

}  // namespace dermfuse
