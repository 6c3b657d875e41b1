#include "dermfuse/encoder.hpp"

namespace dermfuse {

PatchEmbed PatchEmbed::create(const EncoderConfig& cfg, Rng& rng) {
  PatchEmbed pe;
  pe.image_size = cfg.image_size;
  pe.patch = cfg.patch_size;
  pe.grid = cfg.image_size / cfg.patch_size;
  const int64_t in = static_cast<int64_t>(cfg.patch_size) * cfg.patch_size * 3;
  const int64_t dim = cfg.stage_dims[0];
  pe.proj = Linear::create(in, dim, rng, /*bias=*/false);
  pe.pos = Tensor::randn({static_cast<int64_t>(pe.grid) * pe.grid, dim}, rng,
                         0.02, true);
  return pe;
}

Tensor PatchEmbed::apply(const Tensor& image) const {
  if (image.rank() != 3 || image.extent(0) != image_size ||
      image.extent(1) != image_size || image.extent(2) != 3) {
    throw ShapeError("patch_embed: expected image " +
                     std::to_string(image_size) + "x" +
                     std::to_string(image_size) + "x3, got " +
                     shape_str(image.shape()));
  }
  // Pixel rows gathered in patch order, then folded into one row per patch.
  Tensor pixels = reshape(image, {static_cast<int64_t>(image_size) * image_size, 3});
  std::vector<int64_t> order;
  order.reserve(static_cast<size_t>(image_size) * image_size);
  for (int py = 0; py < grid; ++py) {
    for (int px = 0; px < grid; ++px) {
      for (int iy = 0; iy < patch; ++iy) {
        for (int ix = 0; ix < patch; ++ix) {
          order.push_back(static_cast<int64_t>(py * patch + iy) * image_size +
                          (px * patch + ix));
        }
      }
    }
  }
  Tensor patches = reshape(gather_rows(pixels, order),
                           {static_cast<int64_t>(grid) * grid,
                            static_cast<int64_t>(patch) * patch * 3});
  return add(proj.apply(patches), pos);
}

void PatchEmbed::visit(const std::string& prefix, const ParamVisitor& fn) {
  proj.visit(prefix + ".proj", fn);
  fn(prefix + ".pos", pos);
}

WindowBlock WindowBlock::create(int64_t dim, int heads, int window, int shift,
                                int64_t mlp_hidden,
                                const std::string& activation, Rng& rng) {
  if (heads <= 0 || dim % heads != 0) {
    throw ConfigError("window block: head count " + std::to_string(heads) +
                      " does not divide channel width " + std::to_string(dim));
  }
  WindowBlock b;
  b.ln1 = LayerNorm::create(dim);
  b.ln2 = LayerNorm::create(dim);
  b.wq = Linear::create(dim, dim, rng);
  b.wk = Linear::create(dim, dim, rng);
  b.wv = Linear::create(dim, dim, rng);
  b.wo = Linear::create(dim, dim, rng);
  b.mlp = Mlp::create(dim, mlp_hidden, activation, rng);
  b.heads = heads;
  b.window = window;
  b.shift = shift;
  return b;
}

Tensor WindowBlock::apply(const Tensor& tokens, int grid) const {
  const int win = std::min(window, grid);
  if (grid % win != 0) {
    throw ConfigError("window block: grid " + std::to_string(grid) +
                      " not divisible by window " + std::to_string(win));
  }
  if (tokens.extent(0) != static_cast<int64_t>(grid) * grid) {
    throw ShapeError("window block: token count " +
                     std::to_string(tokens.extent(0)) +
                     " does not match grid " + std::to_string(grid));
  }
  Tensor h = ln1.apply(tokens);
  Tensor q = wq.apply(h);
  Tensor k = wk.apply(h);
  Tensor v = wv.apply(h);

  const auto perm = window_permutation(grid, win, shift);
  const auto inv = inverse_permutation(perm);
  Tensor qp = gather_rows(q, perm);
  Tensor kp = gather_rows(k, perm);
  Tensor vp = gather_rows(v, perm);

  const int64_t wsz = static_cast<int64_t>(win) * win;
  const int64_t nwin = tokens.extent(0) / wsz;
  std::vector<Tensor> outs;
  outs.reserve(static_cast<size_t>(nwin));
  for (int64_t wi = 0; wi < nwin; ++wi) {
    Tensor qw = narrow(qp, 0, wi * wsz, wsz);
    Tensor kw = narrow(kp, 0, wi * wsz, wsz);
    Tensor vw = narrow(vp, 0, wi * wsz, wsz);
    outs.push_back(attention_heads(qw, kw, vw, heads));
  }
  Tensor att = nwin == 1 ? outs[0] : concat(outs, 0);
  att = wo.apply(gather_rows(att, inv));

  Tensor x = add(tokens, att);
  return add(x, mlp.apply(ln2.apply(x)));
}

void WindowBlock::visit(const std::string& prefix, const ParamVisitor& fn) {
  ln1.visit(prefix + ".ln1", fn);
  wq.visit(prefix + ".wq", fn);
  wk.visit(prefix + ".wk", fn);
  wv.visit(prefix + ".wv", fn);
  wo.visit(prefix + ".wo", fn);
  ln2.visit(prefix + ".ln2", fn);
  mlp.visit(prefix + ".mlp", fn);
}

Tensor EncoderStage::apply(const Tensor& tokens, int grid) const {
  Tensor x = tokens;
  for (const WindowBlock& b : blocks) x = b.apply(x, grid);
  return x;
}

void EncoderStage::visit(const std::string& prefix, const ParamVisitor& fn) {
  for (size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].visit(prefix + ".b" + std::to_string(i), fn);
  }
}

PatchMerge PatchMerge::create(int64_t dim, Rng& rng) {
  PatchMerge m;
  m.proj = Linear::create(4 * dim, 2 * dim, rng);
  return m;
}

Tensor PatchMerge::apply(const Tensor& tokens, int grid) const {
  if (grid % 2 != 0) {
    throw ShapeError("patch_merge: grid side " + std::to_string(grid) +
                     " must be even");
  }
  if (tokens.extent(0) != static_cast<int64_t>(grid) * grid) {
    throw ShapeError("patch_merge: token count " +
                     std::to_string(tokens.extent(0)) +
                     " does not match grid " + std::to_string(grid));
  }
  const int half = grid / 2;
  std::vector<int64_t> order;
  order.reserve(tokens.extent(0));
  for (int r = 0; r < half; ++r) {
    for (int c = 0; c < half; ++c) {
      order.push_back(static_cast<int64_t>(2 * r) * grid + 2 * c);
      order.push_back(static_cast<int64_t>(2 * r) * grid + 2 * c + 1);
      order.push_back(static_cast<int64_t>(2 * r + 1) * grid + 2 * c);
      order.push_back(static_cast<int64_t>(2 * r + 1) * grid + 2 * c + 1);
    }
  }
  Tensor grouped = reshape(gather_rows(tokens, order),
                           {static_cast<int64_t>(half) * half,
                            4 * tokens.extent(1)});
  return proj.apply(grouped);
}

void PatchMerge::visit(const std::string& prefix, const ParamVisitor& fn) {
  proj.visit(prefix + ".proj", fn);
}

ImageEncoder ImageEncoder::create(const EncoderConfig& cfg, Rng& rng) {
  ImageEncoder enc;
  enc.embed = PatchEmbed::create(cfg, rng);
  for (int s = 0; s < 4; ++s) {
    const int64_t dim = cfg.stage_dims[static_cast<size_t>(s)];
    const int heads = cfg.heads[static_cast<size_t>(s)];
    const int win = cfg.window_at(s);
    const int64_t hidden = dim * cfg.mlp_ratio;
    EncoderStage stage;
    for (int b = 0; b < cfg.blocks[static_cast<size_t>(s)]; ++b) {
      // Alternate blocks shift the windows by half when a stage is deep
      // enough for the shift to matter.
      const int shift = (b % 2 == 1 && win > 1) ? win / 2 : 0;
      stage.blocks.push_back(WindowBlock::create(dim, heads, win, shift,
                                                 hidden, cfg.activation, rng));
    }
    enc.stages[static_cast<size_t>(s)] = std::move(stage);
    if (s < 3) {
      enc.merges[static_cast<size_t>(s)] = PatchMerge::create(dim, rng);
    }
  }
  enc.final_norm = LayerNorm::create(cfg.stage_dims[3]);
  return enc;
}

void ImageEncoder::visit(const std::string& prefix, const ParamVisitor& fn) {
  embed.visit(prefix + ".embed", fn);
  for (int s = 0; s < 4; ++s) {
    stages[static_cast<size_t>(s)].visit(prefix + ".s" + std::to_string(s), fn);
    if (s < 3) {
      merges[static_cast<size_t>(s)].visit(
          prefix + ".merge" + std::to_string(s), fn);
    }
  }
  final_norm.visit(prefix + ".norm", fn);
}

MetaEncoder MetaEncoder::create(const EncoderConfig& cfg, Rng& rng) {
  MetaEncoder me;
  me.use_gelu = cfg.activation != "relu";
  int64_t in = cfg.meta_dim;
  for (int width : cfg.meta_hidden) {
    me.layers.push_back(Linear::create(in, width, rng));
    in = width;
  }
  return me;
}

Tensor MetaEncoder::apply(const Tensor& meta) const {
  if (meta.rank() != 1 || meta.extent(0) != layers.front().in_dim()) {
    throw ShapeError("meta encoder: expected vector of length " +
                     std::to_string(layers.front().in_dim()) + ", got " +
                     shape_str(meta.shape()));
  }
  Tensor x = reshape(meta, {1, meta.extent(0)});
  for (size_t i = 0; i < layers.size(); ++i) {
    x = layers[i].apply(x);
    if (i + 1 < layers.size()) x = use_gelu ? gelu(x) : relu(x);
  }
  return reshape(x, {x.extent(1)});
}

void MetaEncoder::visit(const std::string& prefix, const ParamVisitor& fn) {
  for (size_t i = 0; i < layers.size(); ++i) {
    layers[i].visit(prefix + ".fc" + std::to_string(i), fn);
  }
}

}  // namespace dermfuse
