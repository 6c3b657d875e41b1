#include "dermfuse/fusion.hpp"

#include <algorithm>

namespace dermfuse {

ImageCrossAttention ImageCrossAttention::create(int64_t dim, int heads,
                                                int window, Rng& rng) {
  ImageCrossAttention ca;
  ca.ln_q = LayerNorm::create(dim);
  ca.ln_kv = LayerNorm::create(dim);
  ca.wq = Linear::create(dim, dim, rng);
  ca.wk = Linear::create(dim, dim, rng);
  ca.wv = Linear::create(dim, dim, rng);
  ca.wo = Linear::create(dim, dim, rng);
  ca.heads = heads;
  ca.window = window;
  return ca;
}

Tensor ImageCrossAttention::apply(const Tensor& query_tokens,
                                  const Tensor& other_tokens, int grid) const {
  if (query_tokens.shape() != other_tokens.shape()) {
    throw ShapeError("image cross-attention: stream shapes differ, " +
                     shape_str(query_tokens.shape()) + " vs " +
                     shape_str(other_tokens.shape()));
  }
  const int win = std::min(window, grid);
  Tensor q = wq.apply(ln_q.apply(query_tokens));
  Tensor kv_own = ln_kv.apply(query_tokens);
  Tensor kv_other = ln_kv.apply(other_tokens);
  Tensor k_own = wk.apply(kv_own);
  Tensor k_other = wk.apply(kv_other);
  Tensor v_own = wv.apply(kv_own);
  Tensor v_other = wv.apply(kv_other);

  const auto perm = window_permutation(grid, win, 0);
  const auto inv = inverse_permutation(perm);
  Tensor qp = gather_rows(q, perm);
  Tensor k_own_p = gather_rows(k_own, perm);
  Tensor k_other_p = gather_rows(k_other, perm);
  Tensor v_own_p = gather_rows(v_own, perm);
  Tensor v_other_p = gather_rows(v_other, perm);

  const int64_t wsz = static_cast<int64_t>(win) * win;
  const int64_t nwin = query_tokens.extent(0) / wsz;
  std::vector<Tensor> outs;
  outs.reserve(static_cast<size_t>(nwin));
  for (int64_t wi = 0; wi < nwin; ++wi) {
    Tensor qw = narrow(qp, 0, wi * wsz, wsz);
    // Keys/values per window: own-stream tokens first, then the other
    // stream's (2 * window^2 keys).
    Tensor kw = concat({narrow(k_own_p, 0, wi * wsz, wsz),
                        narrow(k_other_p, 0, wi * wsz, wsz)}, 0);
    Tensor vw = concat({narrow(v_own_p, 0, wi * wsz, wsz),
                        narrow(v_other_p, 0, wi * wsz, wsz)}, 0);
    outs.push_back(attention_heads(qw, kw, vw, heads));
  }
  Tensor att = nwin == 1 ? outs[0] : concat(outs, 0);
  return wo.apply(gather_rows(att, inv));
}

void ImageCrossAttention::visit(const std::string& prefix,
                                const ParamVisitor& fn) {
  ln_q.visit(prefix + ".ln_q", fn);
  ln_kv.visit(prefix + ".ln_kv", fn);
  wq.visit(prefix + ".wq", fn);
  wk.visit(prefix + ".wk", fn);
  wv.visit(prefix + ".wv", fn);
  wo.visit(prefix + ".wo", fn);
}

MetaCrossAttention MetaCrossAttention::create(int64_t dim, int heads,
                                              bool concat_image, Rng& rng) {
  MetaCrossAttention ca;
  ca.ln_q = LayerNorm::create(dim);
  ca.ln_img_kv = LayerNorm::create(dim);
  ca.wq = Linear::create(dim, dim, rng);
  ca.wk = Linear::create(dim, dim, rng);
  ca.wv = Linear::create(dim, dim, rng);
  ca.wo = Linear::create(dim, dim, rng);
  ca.heads = heads;
  ca.concat_image = concat_image;
  return ca;
}

Tensor MetaCrossAttention::apply(const Tensor& image_tokens,
                                 const Tensor& meta_tokens) const {
  if (meta_tokens.rank() != 2 ||
      meta_tokens.extent(1) != image_tokens.extent(1)) {
    throw ShapeError("meta cross-attention: meta tokens " +
                     shape_str(meta_tokens.shape()) +
                     " do not match image width " +
                     shape_str(image_tokens.shape()));
  }
  Tensor q = wq.apply(ln_q.apply(image_tokens));
  Tensor kv_in = concat_image
                     ? concat({meta_tokens, ln_img_kv.apply(image_tokens)}, 0)
                     : meta_tokens;
  Tensor k = wk.apply(kv_in);
  Tensor v = wv.apply(kv_in);
  return wo.apply(attention_heads(q, k, v, heads));
}

void MetaCrossAttention::visit(const std::string& prefix,
                               const ParamVisitor& fn) {
  ln_q.visit(prefix + ".ln_q", fn);
  if (concat_image) ln_img_kv.visit(prefix + ".ln_img_kv", fn);
  wq.visit(prefix + ".wq", fn);
  wk.visit(prefix + ".wk", fn);
  wv.visit(prefix + ".wv", fn);
  wo.visit(prefix + ".wo", fn);
}

StreamFusion StreamFusion::create(int64_t dim, int heads, int window,
                                  bool concat_image, int64_t mlp_hidden,
                                  const std::string& activation, Rng& rng) {
  StreamFusion sf;
  sf.ca_image = ImageCrossAttention::create(dim, heads, window, rng);
  sf.ca_meta = MetaCrossAttention::create(dim, heads, concat_image, rng);
  sf.ln_mlp = LayerNorm::create(dim);
  sf.mlp = Mlp::create(dim, mlp_hidden, activation, rng);
  return sf;
}

Tensor StreamFusion::apply(const Tensor& own, const Tensor& other,
                           const Tensor& meta_tokens, int grid, bool use_other,
                           bool use_meta) const {
  Tensor s;
  if (use_other) s = ca_image.apply(own, other, grid);
  if (use_meta) {
    Tensor cm = ca_meta.apply(own, meta_tokens);
    s = s.defined() ? add(s, cm) : cm;
  }
  s = s.defined() ? add(s, own) : own;
  return add(mlp.apply(ln_mlp.apply(s)), s);
}

void StreamFusion::visit(const std::string& prefix, const ParamVisitor& fn) {
  ca_image.visit(prefix + ".ca_img", fn);
  ca_meta.visit(prefix + ".ca_meta", fn);
  ln_mlp.visit(prefix + ".ln_mlp", fn);
  mlp.visit(prefix + ".mlp", fn);
}

TmctStage TmctStage::create(int64_t dim, int64_t meta_feature_dim,
                            int meta_tokens, int heads, int window,
                            bool concat_image, int64_t mlp_hidden,
                            const std::string& activation, Rng& rng) {
  if (meta_tokens <= 0 || meta_feature_dim % meta_tokens != 0) {
    throw ConfigError("tmct stage: meta token count " +
                      std::to_string(meta_tokens) +
                      " does not divide the metadata feature dimension " +
                      std::to_string(meta_feature_dim));
  }
  TmctStage st;
  st.meta_proj = Linear::create(meta_feature_dim / meta_tokens, dim, rng);
  st.into_cli = StreamFusion::create(dim, heads, window, concat_image,
                                     mlp_hidden, activation, rng);
  st.into_der = StreamFusion::create(dim, heads, window, concat_image,
                                     mlp_hidden, activation, rng);
  st.meta_tokens = meta_tokens;
  return st;
}

Tensor TmctStage::project_meta(const Tensor& meta_feature) const {
  const int64_t chunk = meta_proj.in_dim();
  if (meta_feature.numel() != chunk * meta_tokens) {
    throw ShapeError("tmct stage: metadata feature " +
                     shape_str(meta_feature.shape()) + " does not split into " +
                     std::to_string(meta_tokens) + " chunks of " +
                     std::to_string(chunk));
  }
  return meta_proj.apply(reshape(meta_feature, {meta_tokens, chunk}));
}

void TmctStage::visit(const std::string& prefix, const ParamVisitor& fn) {
  meta_proj.visit(prefix + ".meta_proj", fn);
  into_cli.visit(prefix + ".cli", fn);
  into_der.visit(prefix + ".der", fn);
}

TrimodalFusion TrimodalFusion::create(int64_t dim, int heads,
                                      int64_t mlp_hidden,
                                      const std::string& activation,
                                      Rng& rng) {
  TrimodalFusion tf;
  tf.att = MultiHeadAttention::create(dim, heads, rng);
  tf.ln_mlp = LayerNorm::create(dim);
  tf.mlp = Mlp::create(dim, mlp_hidden, activation, rng);
  return tf;
}

Tensor TrimodalFusion::apply(const Tensor& meta_feature,
                             const std::vector<Tensor>& kv_features) const {
  if (kv_features.empty()) {
    throw ShapeError("trimodal fusion: empty key/value feature list");
  }
  const int64_t d = meta_feature.numel();
  Tensor q = reshape(meta_feature, {1, d});
  std::vector<Tensor> rows;
  rows.reserve(kv_features.size());
  for (const Tensor& f : kv_features) {
    if (f.numel() != d) {
      throw ShapeError("trimodal fusion: feature width " +
                       shape_str(f.shape()) + " does not match " +
                       std::to_string(d));
    }
    rows.push_back(reshape(f, {1, d}));
  }
  Tensor kv = rows.size() == 1 ? rows[0] : concat(rows, 0);
  Tensor a = att.apply(q, kv);
  Tensor s = add(a, q);
  Tensor out = add(mlp.apply(ln_mlp.apply(s)), s);
  return reshape(out, {d});
}

void TrimodalFusion::visit(const std::string& prefix, const ParamVisitor& fn) {
  att.visit(prefix + ".att", fn);
  ln_mlp.visit(prefix + ".ln_mlp", fn);
  mlp.visit(prefix + ".mlp", fn);
}

Tensor assemble_final(const std::optional<Tensor>& cli,
                      const std::optional<Tensor>& der,
                      const std::optional<Tensor>& meta,
                      const std::vector<std::string>& selection) {
  if (selection.empty()) {
    throw ConfigError("decision feature selection must not be empty");
  }
  auto selected = [&](const char* name) {
    return std::find(selection.begin(), selection.end(), name) !=
           selection.end();
  };
  std::vector<Tensor> parts;
  if (selected("cli")) {
    if (!cli) throw ConfigError("decision selection names 'cli' but the "
                                "clinical feature is absent");
    parts.push_back(*cli);
  }
  if (selected("der")) {
    if (!der) throw ConfigError("decision selection names 'der' but the "
                                "dermoscopic feature is absent");
    parts.push_back(*der);
  }
  if (selected("meta")) {
    if (!meta) throw ConfigError("decision selection names 'meta' but the "
                                 "metadata feature is absent");
    parts.push_back(*meta);
  }
  if (parts.empty()) {
    throw ConfigError("decision feature selection selects nothing");
  }
  return parts.size() == 1 ? parts[0] : concat(parts, 0);
}

}  // namespace dermfuse
