#pragma once

#include <optional>
#include <vector>

#include "dermfuse/attention.hpp"
#include "dermfuse/config.hpp"
#include "dermfuse/encoder.hpp"

namespace dermfuse {

// Windowed cross-attention between the two image streams: the query stream
// attends, per window, to the concatenation of both streams' window tokens.
struct ImageCrossAttention {
  LayerNorm ln_q, ln_kv;
  Linear wq, wk, wv, wo;
  int heads = 1;
  int window = 1;

  static ImageCrossAttention create(int64_t dim, int heads, int window,
                                    Rng& rng);
  Tensor apply(const Tensor& query_tokens, const Tensor& other_tokens,
               int grid) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Cross-attention injecting the metadata feature into image tokens. Queries
// are the image tokens; keys/values are the projected metadata tokens, or
// their concatenation with the image tokens in the concat-image variant.
struct MetaCrossAttention {
  LayerNorm ln_q;
  LayerNorm ln_img_kv;  // concat-image variant only
  Linear wq, wk, wv, wo;
  int heads = 1;
  bool concat_image = false;

  static MetaCrossAttention create(int64_t dim, int heads, bool concat_image,
                                   Rng& rng);
  Tensor apply(const Tensor& image_tokens, const Tensor& meta_tokens) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

// One fusion direction: own-stream tokens enriched by the other stream and
// the metadata, then MLP over the residual sum
//   out = MLP(LN(s)) + s,  s = CA_image + CA_meta + own.
struct StreamFusion {
  ImageCrossAttention ca_image;
  MetaCrossAttention ca_meta;
  LayerNorm ln_mlp;
  Mlp mlp;

  static StreamFusion create(int64_t dim, int heads, int window,
                             bool concat_image, int64_t mlp_hidden,
                             const std::string& activation, Rng& rng);
  Tensor apply(const Tensor& own, const Tensor& other,
               const Tensor& meta_tokens, int grid, bool use_other,
               bool use_meta) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Per-stage tri-modal fusion block: symmetric enrichment of both image
// streams plus an unchanged pass-through of the metadata feature. One meta
// projection per stage maps the metadata chunks to the stage width.
struct TmctStage {
  Linear meta_proj;  // (meta_feature_dim / meta_tokens -> stage dim)
  StreamFusion into_cli;
  StreamFusion into_der;
  int meta_tokens = 4;

  static TmctStage create(int64_t dim, int64_t meta_feature_dim,
                          int meta_tokens, int heads, int window,
                          bool concat_image, int64_t mlp_hidden,
                          const std::string& activation, Rng& rng);
  // (meta_feature_dim,) -> (meta_tokens, stage dim)
  Tensor project_meta(const Tensor& meta_feature) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Decision-level fusion: the metadata feature queries the pooled decision
// features, then out = MLP(LN(att + meta)) + att + meta.
struct TrimodalFusion {
  MultiHeadAttention att;
  LayerNorm ln_mlp;
  Mlp mlp;

  static TrimodalFusion create(int64_t dim, int heads, int64_t mlp_hidden,
                               const std::string& activation, Rng& rng);
  // kv_features: the decision features forming the key/value sequence, in
  // fixed order (cli', der', meta), absent members skipped upstream.
  Tensor apply(const Tensor& meta_feature,
               const std::vector<Tensor>& kv_features) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Concatenates the selected decision features in the fixed cli, der, meta
// order. Absent (empty optional) members must not be selected.
Tensor assemble_final(const std::optional<Tensor>& cli,
                      const std::optional<Tensor>& der,
                      const std::optional<Tensor>& meta,
                      const std::vector<std::string>& selection);

}  // namespace dermfuse
