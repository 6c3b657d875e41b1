#include "dermfuse/head.hpp"

namespace dermfuse {

PoolHead PoolHead::create(int64_t in_dim, int64_t out_dim, Rng& rng) {
  PoolHead ph;
  ph.fc = Linear::create(in_dim, out_dim, rng);
  return ph;
}

Tensor PoolHead::apply(const Tensor& tokens) const {
  if (tokens.rank() != 2 || tokens.extent(1) != fc.in_dim()) {
    throw ShapeError("pool head: expected (n, " +
                     std::to_string(fc.in_dim()) + ") tokens, got " +
                     shape_str(tokens.shape()));
  }
  Tensor pooled = mean_axis(tokens, 0);            // (in,)
  Tensor y = fc.apply(reshape(pooled, {1, fc.in_dim()}));
  return reshape(y, {fc.out_dim()});
}

void PoolHead::visit(const std::string& prefix, const ParamVisitor& fn) {
  fc.visit(prefix + ".fc", fn);
}

LabelHead LabelHead::create(int64_t in_dim, const HeadConfig& cfg, Rng& rng) {
  const TaskSpec& spec = TaskSpec::instance();
  LabelHead lh;
  for (int t = 0; t < kNumTasks; ++t) {
    lh.task_proj.push_back(Linear::create(in_dim, cfg.dim, rng));
  }
  lh.mha = MultiHeadAttention::create(cfg.dim, cfg.heads, rng);
  for (int t = 0; t < kNumTasks; ++t) {
    lh.classifiers.push_back(Linear::create(cfg.dim, spec.cardinality(t), rng));
  }
  lh.use_mha = cfg.mha;
  return lh;
}

Tensor LabelHead::project_stack(const Tensor& f_final) const {
  const int64_t in = task_proj.front().in_dim();
  if (f_final.numel() != in) {
    throw ShapeError("label head: decision feature " +
                     shape_str(f_final.shape()) + " does not match input " +
                     std::to_string(in));
  }
  Tensor x = reshape(f_final, {1, in});
  std::vector<Tensor> rows;
  rows.reserve(static_cast<size_t>(kNumTasks));
  for (const Linear& proj : task_proj) rows.push_back(proj.apply(x));
  return concat(rows, 0);  // (8, dim)
}

Tensor LabelHead::correlate(const Tensor& stacked) const {
  // Self-attention over the 8 task slots plus the residual; task identity is
  // carried by the projection weights, so no positional encoding is added.
  return add(stacked, mha.apply(stacked, stacked));
}

Tensor LabelHead::apply(const Tensor& f_final) const {
  Tensor stacked = project_stack(f_final);
  if (use_mha) stacked = correlate(stacked);
  std::vector<Tensor> parts;
  parts.reserve(static_cast<size_t>(kNumTasks));
  for (int t = 0; t < kNumTasks; ++t) {
    Tensor feat = narrow(stacked, 0, t, 1);  // (1, dim)
    parts.push_back(classifiers[static_cast<size_t>(t)].apply(feat));
  }
  Tensor flat = concat(parts, 1);  // (1, 24)
  return reshape(flat, {static_cast<int64_t>(kNumClasses)});
}

void LabelHead::visit(const std::string& prefix, const ParamVisitor& fn) {
  for (int t = 0; t < kNumTasks; ++t) {
    task_proj[static_cast<size_t>(t)].visit(
        prefix + ".task" + std::to_string(t), fn);
  }
  mha.visit(prefix + ".mha", fn);
  for (int t = 0; t < kNumTasks; ++t) {
    classifiers[static_cast<size_t>(t)].visit(
        prefix + ".cls" + std::to_string(t), fn);
  }
}

}  // namespace dermfuse
