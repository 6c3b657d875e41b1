#include <doctest.h>

#include <cmath>

#include "dermfuse/encoder.hpp"
#include "dermfuse/gradcheck.hpp"
#include "dermfuse/model.hpp"

using namespace dermfuse;

namespace {

EncoderConfig tiny_encoder() {
  EncoderConfig e;
  e.image_size = 32;
  e.patch_size = 4;
  e.stage_dims = {4, 8, 16, 32};
  e.window = 2;
  e.heads = {1, 1, 2, 2};
  e.blocks = {1, 1, 1, 1};
  e.meta_hidden = {16, 32};
  e.mlp_ratio = 2;
  return e;
}

RunConfig tiny_run() {
  RunConfig cfg;
  cfg.encoder = tiny_encoder();
  cfg.head.dim = 32;
  cfg.head.heads = 2;
  cfg.fusion.heads = 2;
  cfg.fusion.meta_tokens = 4;
  return cfg;
}

}  // namespace

TEST_CASE("patch embed produces the expected token counts") {
  Rng rng(1);
  SUBCASE("toy: 32x32 with patch 4 gives 64 tokens") {
    EncoderConfig e = tiny_encoder();
    PatchEmbed pe = PatchEmbed::create(e, rng);
    Tensor tokens = pe.apply(Tensor::zeros({32, 32, 3}));
    CHECK(tokens.shape() == Shape{64, 4});
  }
  SUBCASE("full-scale: 224x224 with patch 4 gives 3136 tokens") {
    EncoderConfig e = tiny_encoder();
    e.image_size = 224;
    PatchEmbed pe = PatchEmbed::create(e, rng);
    Tensor tokens = pe.apply(Tensor::zeros({224, 224, 3}));
    CHECK(tokens.extent(0) == 3136);
  }
}

TEST_CASE("zero image maps exactly onto the positional bias") {
  Rng rng(2);
  PatchEmbed pe = PatchEmbed::create(tiny_encoder(), rng);
  Tensor tokens = pe.apply(Tensor::zeros({32, 32, 3}));
  for (int64_t i = 0; i < tokens.numel(); ++i) {
    CHECK(tokens.data()[static_cast<size_t>(i)] ==
          pe.pos.data()[static_cast<size_t>(i)]);
  }
}

TEST_CASE("indivisible image size is a config error") {
  RunConfig cfg = tiny_run();
  cfg.encoder.image_size = 30;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.encoder.image_size = 48;  // grid 12, not divisible by 8
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("head count must divide channel width") {
  Rng rng(3);
  CHECK_THROWS_AS(WindowBlock::create(6, 4, 2, 0, 12, "gelu", rng),
                  ConfigError);
}

TEST_CASE("window attention with one token per window is the value path") {
  Rng rng(4);
  WindowBlock b = WindowBlock::create(4, 2, 1, 0, 8, "gelu", rng);
  Tensor x = Tensor::randn({4, 4}, rng);  // 2x2 grid, window 1
  Tensor y = b.apply(x, 2);
  // Attention over a single key has weight 1, so the block reduces to
  // x + wo(wv(ln1(x))) followed by the MLP residual.
  Tensor h = b.ln1.apply(x);
  Tensor expect = add(x, b.wo.apply(b.wv.apply(h)));
  expect = add(expect, b.mlp.apply(b.ln2.apply(expect)));
  for (int64_t i = 0; i < y.numel(); ++i) {
    CHECK(std::abs(y.data()[static_cast<size_t>(i)] -
                   expect.data()[static_cast<size_t>(i)]) <= 1e-12);
  }
}

TEST_CASE("window attention treats equal tokens symmetrically") {
  Rng rng(5);
  WindowBlock b = WindowBlock::create(4, 2, 2, 0, 8, "gelu", rng);
  // All 16 tokens identical: every output token must be identical too.
  Tensor row = Tensor::randn({1, 4}, rng);
  std::vector<Tensor> rows(16, row);
  Tensor x = concat(rows, 0);
  Tensor y = b.apply(x, 4);
  for (int64_t t = 1; t < 16; ++t) {
    for (int64_t c = 0; c < 4; ++c) {
      CHECK(y(t, c) == doctest::Approx(y(0, c)).epsilon(1e-13));
    }
  }
}

TEST_CASE("window attention keeps shape and passes grad check on an 8x8 grid") {
  Rng rng(6);
  WindowBlock b = WindowBlock::create(8, 2, 4, 0, 16, "gelu", rng);
  Tensor x = Tensor::randn({64, 8}, rng, 0.5);
  Tensor y = b.apply(x, 8);
  CHECK(y.shape() == x.shape());

  GradCheckOptions opts;
  opts.max_elems_per_leaf = 24;
  std::vector<NamedLeaf> leaves{{"x", x},
                                {"wq", b.wq.w},
                                {"wv", b.wv.w},
                                {"wo", b.wo.w},
                                {"ln1.gamma", b.ln1.gamma},
                                {"mlp.fc1", b.mlp.fc1.w}};
  GradCheckReport report = grad_check(
      [&] {
        Tensor y = b.apply(x, 8);
        return mean_all(mul(y, y));
      },
      leaves, opts);
  CHECK_MESSAGE(report.pass(1e-4), report.summary());
}

TEST_CASE("shifted-window block passes grad check") {
  Rng rng(7);
  WindowBlock b = WindowBlock::create(4, 2, 2, 1, 8, "gelu", rng);
  Tensor x = Tensor::randn({16, 4}, rng, 0.5);
  CHECK(b.apply(x, 4).shape() == x.shape());
  GradCheckOptions opts;
  opts.max_elems_per_leaf = 24;
  GradCheckReport report = grad_check(
      [&] {
        Tensor y = b.apply(x, 4);
        return mean_all(mul(y, y));
      },
      {{"x", x}, {"wk", b.wk.w}, {"wo", b.wo.w}}, opts);
  CHECK_MESSAGE(report.pass(1e-4), report.summary());
}

TEST_CASE("patch merge halves the grid and doubles channels") {
  Rng rng(8);
  PatchMerge m = PatchMerge::create(16, rng);
  Tensor x = Tensor::randn({64, 16}, rng);  // 8x8 grid
  Tensor y = m.apply(x, 8);
  CHECK(y.shape() == Shape{16, 32});
}

TEST_CASE("patch merge maps a constant field to a constant field") {
  Rng rng(9);
  PatchMerge m = PatchMerge::create(4, rng);
  Tensor row = Tensor::randn({1, 4}, rng);
  std::vector<Tensor> rows(16, row);
  Tensor x = concat(rows, 0);
  Tensor y = m.apply(x, 4);  // 4x4 -> 2x2
  for (int64_t t = 1; t < y.extent(0); ++t) {
    for (int64_t c = 0; c < y.extent(1); ++c) {
      CHECK(y(t, c) == doctest::Approx(y(0, c)).epsilon(1e-14));
    }
  }
}

TEST_CASE("patch merge rejects odd grids and passes grad check") {
  Rng rng(10);
  PatchMerge m = PatchMerge::create(4, rng);
  Tensor bad = Tensor::randn({9, 4}, rng);
  CHECK_THROWS_AS(m.apply(bad, 3), ShapeError);

  Tensor x = Tensor::randn({16, 4}, rng, 0.5);
  GradCheckReport report = grad_check(
      [&] {
        Tensor y = m.apply(x, 4);
        return mean_all(mul(y, y));
      },
      {{"x", x}, {"w", m.proj.w}, {"b", m.proj.b}});
  CHECK_MESSAGE(report.pass(1e-5), report.summary());
}

TEST_CASE("meta encoder composes the bias path on a zero input") {
  Rng rng(11);
  MetaEncoder me = MetaEncoder::create(tiny_encoder(), rng);
  Tensor out = me.apply(Tensor::zeros({20}));
  CHECK(out.shape() == Shape{32});
  // Expected: fc1(act(b0)) where fc0 contributes only its bias.
  Tensor h = reshape(me.layers[0].b, {1, 16});
  Tensor expect = me.layers[1].apply(gelu(h));
  for (int64_t i = 0; i < out.numel(); ++i) {
    CHECK(out.data()[static_cast<size_t>(i)] ==
          doctest::Approx(expect.data()[static_cast<size_t>(i)])
              .epsilon(1e-14));
  }
}

TEST_CASE("meta encoder separates one-hot basis vectors") {
  Rng rng(12);
  MetaEncoder me = MetaEncoder::create(tiny_encoder(), rng);
  Tensor ei = Tensor::zeros({20});
  Tensor ej = Tensor::zeros({20});
  ei.data()[3] = 1.0;
  ej.data()[11] = 1.0;
  Tensor yi = me.apply(ei);
  Tensor yj = me.apply(ej);
  double diff = 0.0;
  for (int64_t i = 0; i < yi.numel(); ++i) {
    diff += std::abs(yi.data()[static_cast<size_t>(i)] -
                     yj.data()[static_cast<size_t>(i)]);
  }
  CHECK(diff > 1e-6);
}

TEST_CASE("meta encoder output has the configured feature width") {
  EncoderConfig e = tiny_encoder();
  e.meta_hidden = {64, 128};
  Rng rng(13);
  MetaEncoder me = MetaEncoder::create(e, rng);
  Tensor meta = Tensor::zeros({20});
  meta.data()[0] = 1.0;
  CHECK(me.apply(meta).shape() == Shape{128});
  CHECK_THROWS_AS(me.apply(Tensor::zeros({19})), ShapeError);
}

TEST_CASE("toy shape ladder: 64x16 -> 16x32 -> 4x64 -> 1x128") {
  RunConfig cfg;
  cfg.encoder.window = 4;
  Rng rng(14);
  ImageEncoder enc = ImageEncoder::create(cfg.encoder, rng);
  Tensor x = Tensor::randn({32, 32, 3}, rng, 0.1);
  Tensor t = enc.embed.apply(x);
  CHECK(t.shape() == Shape{64, 16});
  int grid = 8;
  const Shape expected[4] = {{64, 16}, {16, 32}, {4, 64}, {1, 128}};
  for (int s = 0; s < 4; ++s) {
    t = enc.stages[static_cast<size_t>(s)].apply(t, grid);
    CHECK(t.shape() == expected[s]);
    if (s < 3) {
      t = enc.merges[static_cast<size_t>(s)].apply(t, grid);
      grid /= 2;
      CHECK(t.shape() == expected[s + 1]);
    }
  }
}

TEST_CASE("shared weights process both streams identically") {
  RunConfig cfg = tiny_run();
  cfg.fusion.tmct = false;
  cfg.encoder.shared_weights = true;
  Model model(cfg);
  Rng rng(15);
  Tensor img = Tensor::randn({32, 32, 3}, rng, 0.1);

  // Same parameters, same input: the two streams stay bit-identical through
  // every stage.
  const ImageEncoder& enc = *model.image_encoder;
  Tensor cli = enc.embed.apply(img);
  Tensor der = enc.embed.apply(img);
  int grid = 8;
  for (int s = 0; s < 4; ++s) {
    cli = enc.stages[static_cast<size_t>(s)].apply(cli, grid);
    der = enc.stages[static_cast<size_t>(s)].apply(der, grid);
    for (int64_t i = 0; i < cli.numel(); ++i) {
      CHECK(cli.data()[static_cast<size_t>(i)] ==
            der.data()[static_cast<size_t>(i)]);
    }
    if (s < 3) {
      cli = enc.merges[static_cast<size_t>(s)].apply(cli, grid);
      der = enc.merges[static_cast<size_t>(s)].apply(der, grid);
      grid /= 2;
    }
  }
}

TEST_CASE("independent encoders diverge on the same input") {
  RunConfig cfg = tiny_run();
  cfg.encoder.shared_weights = false;
  Model model(cfg);
  Rng rng(16);
  Tensor img = Tensor::randn({32, 32, 3}, rng, 0.1);
  Tensor a = model.image_encoder_cli->embed.apply(img);
  Tensor b = model.image_encoder_der->embed.apply(img);
  double diff = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    diff += std::abs(a.data()[static_cast<size_t>(i)] -
                     b.data()[static_cast<size_t>(i)]);
  }
  CHECK(diff > 1e-6);
}

TEST_CASE("weight sharing halves the image-backbone parameter count") {
  RunConfig shared_cfg = tiny_run();
  shared_cfg.encoder.shared_weights = true;
  RunConfig split_cfg = tiny_run();
  split_cfg.encoder.shared_weights = false;
  Model shared(shared_cfg);
  Model split(split_cfg);
  CHECK(shared.param_count("img") * 2 == split.param_count("img"));
}
