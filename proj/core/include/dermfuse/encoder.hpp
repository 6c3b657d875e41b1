#pragma once

#include <array>
#include <vector>

#include "dermfuse/attention.hpp"
#include "dermfuse/config.hpp"
#include "dermfuse/layers.hpp"

namespace dermfuse {

// Linear patchification with a learned additive positional bias. The
// projection carries no bias term, so a zero image maps exactly onto the
// positional table.
struct PatchEmbed {
  Linear proj;  // (patch*patch*3 -> dim), no bias
  Tensor pos;   // (tokens, dim)
  int image_size = 0;
  int patch = 0;
  int grid = 0;

  static PatchEmbed create(const EncoderConfig& cfg, Rng& rng);
  Tensor apply(const Tensor& image) const;  // (W, H, 3) -> (tokens, dim)
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Pre-norm windowed self-attention block: window MHA + residual, then
// MLP + residual. shift > 0 rolls the grid before partitioning.
struct WindowBlock {
  LayerNorm ln1, ln2;
  Linear wq, wk, wv, wo;
  Mlp mlp;
  int heads = 1;
  int window = 1;
  int shift = 0;

  static WindowBlock create(int64_t dim, int heads, int window, int shift,
                            int64_t mlp_hidden, const std::string& activation,
                            Rng& rng);
  Tensor apply(const Tensor& tokens, int grid) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct EncoderStage {
  std::vector<WindowBlock> blocks;

  Tensor apply(const Tensor& tokens, int grid) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

// 2x2 neighborhood concat (4c) followed by a linear projection to 2c.
struct PatchMerge {
  Linear proj;

  static PatchMerge create(int64_t dim, Rng& rng);
  Tensor apply(const Tensor& tokens, int grid) const;  // grid must be even
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

// One image backbone: patch embed, four windowed stages, three merges, and
// the closing normalization applied to the stage-4 features before pooling
// (residual streams grow unbounded without it). With shared weights a single
// instance serves both image streams.
struct ImageEncoder {
  PatchEmbed embed;
  std::array<EncoderStage, 4> stages;
  std::array<PatchMerge, 3> merges;
  LayerNorm final_norm;

  static ImageEncoder create(const EncoderConfig& cfg, Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct MetaEncoder {
  std::vector<Linear> layers;
  bool use_gelu = true;

  static MetaEncoder create(const EncoderConfig& cfg, Rng& rng);
  Tensor apply(const Tensor& meta) const;  // (meta_dim,) -> (feature_dim,)
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

}  // namespace dermfuse
