#include <doctest.h>

#include <cmath>

#include "dermfuse/fusion.hpp"
#include "dermfuse/gradcheck.hpp"

using namespace dermfuse;

namespace {

void zero_linear(Linear& l) {
  for (double& v : l.w.data()) v = 0.0;
  if (l.b.defined()) {
    for (double& v : l.b.data()) v = 0.0;
  }
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(a.data()[static_cast<size_t>(i)] -
                             b.data()[static_cast<size_t>(i)]));
  }
  return m;
}

// Windowed self-attention using the cross-attention block's own weights but
// a single (non-duplicated) key/value set.
Tensor windowed_self_attention(const ImageCrossAttention& ca, const Tensor& x,
                               int grid) {
  const int win = std::min(ca.window, grid);
  Tensor q = ca.wq.apply(ca.ln_q.apply(x));
  Tensor kv = ca.ln_kv.apply(x);
  Tensor k = ca.wk.apply(kv);
  Tensor v = ca.wv.apply(kv);
  const auto perm = window_permutation(grid, win, 0);
  const auto inv = inverse_permutation(perm);
  Tensor qp = gather_rows(q, perm);
  Tensor kp = gather_rows(k, perm);
  Tensor vp = gather_rows(v, perm);
  const int64_t wsz = static_cast<int64_t>(win) * win;
  const int64_t nwin = x.extent(0) / wsz;
  std::vector<Tensor> outs;
  for (int64_t wi = 0; wi < nwin; ++wi) {
    outs.push_back(attention_heads(narrow(qp, 0, wi * wsz, wsz),
                                   narrow(kp, 0, wi * wsz, wsz),
                                   narrow(vp, 0, wi * wsz, wsz), ca.heads));
  }
  Tensor att = nwin == 1 ? outs[0] : concat(outs, 0);
  return ca.wo.apply(gather_rows(att, inv));
}

}  // namespace

TEST_CASE("cross-attention over a duplicated stream equals self-attention") {
  Rng rng(21);
  ImageCrossAttention ca = ImageCrossAttention::create(8, 2, 2, rng);
  Tensor x = Tensor::randn({16, 8}, rng);
  Tensor dup = ca.apply(x, x, 4);
  Tensor self = windowed_self_attention(ca, x, 4);
  CHECK(max_abs_diff(dup, self) <= 1e-10);
}

TEST_CASE("cross-attention with a single token returns the value projection") {
  Rng rng(22);
  ImageCrossAttention ca = ImageCrossAttention::create(6, 2, 1, rng);
  Tensor t = Tensor::randn({1, 6}, rng);
  Tensor out = ca.apply(t, t, 1);
  Tensor expect = ca.wo.apply(ca.wv.apply(ca.ln_kv.apply(t)));
  CHECK(max_abs_diff(out, expect) <= 1e-12);
}

TEST_CASE("cross-attention rejects mismatched streams and passes grad check") {
  Rng rng(23);
  ImageCrossAttention ca = ImageCrossAttention::create(8, 2, 2, rng);
  CHECK_THROWS_AS(ca.apply(Tensor::zeros({16, 8}), Tensor::zeros({4, 8}), 4),
                  ShapeError);

  Tensor q = Tensor::randn({16, 8}, rng, 0.5);
  Tensor o = Tensor::randn({16, 8}, rng, 0.5);
  GradCheckOptions opts;
  opts.max_elems_per_leaf = 24;
  GradCheckReport report = grad_check(
      [&] {
        Tensor y = ca.apply(q, o, 4);
        return mean_all(mul(y, y));
      },
      {{"q", q}, {"o", o}, {"wq", ca.wq.w}, {"wk", ca.wk.w},
       {"wv", ca.wv.w}, {"wo", ca.wo.w}},
      opts);
  CHECK_MESSAGE(report.pass(1e-4), report.summary());
}

TEST_CASE("meta cross-attention with one meta token broadcasts its value") {
  Rng rng(24);
  MetaCrossAttention ca = MetaCrossAttention::create(8, 2, false, rng);
  Tensor img = Tensor::randn({16, 8}, rng);
  Tensor meta_token = Tensor::randn({1, 8}, rng);
  Tensor out = ca.apply(img, meta_token);
  CHECK(out.shape() == img.shape());
  // Softmax over a single key is 1 for every query: all rows equal the
  // value projection of the meta token.
  Tensor expect = ca.wo.apply(ca.wv.apply(meta_token));
  for (int64_t r = 0; r < out.extent(0); ++r) {
    for (int64_t c = 0; c < out.extent(1); ++c) {
      CHECK(out(r, c) == doctest::Approx(expect(0, c)).epsilon(1e-12));
    }
  }
}

TEST_CASE("zero metadata with a zero value path yields zero tokens") {
  Rng rng(25);
  Linear meta_proj = Linear::create(8, 8, rng);
  MetaCrossAttention ca = MetaCrossAttention::create(8, 2, false, rng);
  for (double& v : meta_proj.b.data()) v = 0.0;
  for (double& v : ca.wv.b.data()) v = 0.0;
  for (double& v : ca.wo.b.data()) v = 0.0;

  Tensor meta_tokens = meta_proj.apply(Tensor::zeros({4, 8}));
  Tensor img = Tensor::randn({16, 8}, rng);
  Tensor out = ca.apply(img, meta_tokens);
  for (int64_t i = 0; i < out.numel(); ++i) {
    CHECK(out.data()[static_cast<size_t>(i)] == 0.0);
  }
}

TEST_CASE("meta cross-attention passes grad check with four meta tokens") {
  Rng rng(26);
  MetaCrossAttention ca = MetaCrossAttention::create(8, 2, false, rng);
  Tensor img = Tensor::randn({16, 8}, rng, 0.5);
  Tensor meta_tokens = Tensor::randn({4, 8}, rng, 0.5);
  GradCheckOptions opts;
  opts.max_elems_per_leaf = 24;
  GradCheckReport report = grad_check(
      [&] {
        Tensor y = ca.apply(img, meta_tokens);
        return mean_all(mul(y, y));
      },
      {{"img", img}, {"meta", meta_tokens}, {"wq", ca.wq.w},
       {"wk", ca.wk.w}, {"wv", ca.wv.w}},
      opts);
  CHECK_MESSAGE(report.pass(1e-4), report.summary());
}

TEST_CASE("concat-image variant widens the key set and stays differentiable") {
  Rng rng(27);
  MetaCrossAttention ca = MetaCrossAttention::create(8, 2, true, rng);
  Tensor img = Tensor::randn({16, 8}, rng, 0.5);
  Tensor meta_tokens = Tensor::randn({4, 8}, rng, 0.5);
  Tensor out = ca.apply(img, meta_tokens);
  CHECK(out.shape() == img.shape());
  GradCheckOptions opts;
  opts.max_elems_per_leaf = 16;
  GradCheckReport report = grad_check(
      [&] {
        Tensor y = ca.apply(img, meta_tokens);
        return mean_all(mul(y, y));
      },
      {{"img", img}, {"meta", meta_tokens}, {"wk", ca.wk.w}}, opts);
  CHECK_MESSAGE(report.pass(1e-4), report.summary());
}

TEST_CASE("fusion block with zeroed projections is a pure residual") {
  Rng rng(28);
  StreamFusion sf = StreamFusion::create(8, 2, 2, false, 16, "gelu", rng);
  zero_linear(sf.ca_image.wo);
  zero_linear(sf.ca_meta.wo);
  zero_linear(sf.mlp.fc2);
  Tensor own = Tensor::randn({16, 8}, rng);
  Tensor other = Tensor::randn({16, 8}, rng);
  Tensor meta_tokens = Tensor::randn({4, 8}, rng);
  Tensor out = sf.apply(own, other, meta_tokens, 4, true, true);
  CHECK(max_abs_diff(out, own) <= 1e-14);
}

TEST_CASE("fusion block preserves shapes and passes grad check in all roles") {
  Rng rng(29);
  TmctStage st = TmctStage::create(8, 32, 4, 2, 2, false, 16, "gelu", rng);
  Tensor cli = Tensor::randn({16, 8}, rng, 0.5);
  Tensor der = Tensor::randn({16, 8}, rng, 0.5);
  Tensor meta = Tensor::randn({32}, rng, 0.5);

  Tensor meta_tokens = st.project_meta(meta);
  CHECK(meta_tokens.shape() == Shape{4, 8});
  Tensor out_cli = st.into_cli.apply(cli, der, meta_tokens, 4, true, true);
  Tensor out_der = st.into_der.apply(der, cli, meta_tokens, 4, true, true);
  CHECK(out_cli.shape() == cli.shape());
  CHECK(out_der.shape() == der.shape());

  GradCheckOptions opts;
  opts.max_elems_per_leaf = 16;
  GradCheckReport report = grad_check(
      [&] {
        Tensor mt = st.project_meta(meta);
        Tensor a = st.into_cli.apply(cli, der, mt, 4, true, true);
        Tensor b = st.into_der.apply(der, cli, mt, 4, true, true);
        return add(mean_all(mul(a, a)), mean_all(mul(b, b)));
      },
      {{"cli", cli}, {"der", der}, {"meta", meta},
       {"meta_proj", st.meta_proj.w}},
      opts);
  CHECK_MESSAGE(report.pass(1e-4), report.summary());
}

TEST_CASE("metadata is not mutated by fusion") {
  Rng rng(30);
  TmctStage st = TmctStage::create(8, 32, 4, 2, 2, false, 16, "gelu", rng);
  Tensor meta = Tensor::randn({32}, rng);
  const std::vector<double> before = meta.data();
  Tensor cli = Tensor::randn({16, 8}, rng);
  Tensor der = Tensor::randn({16, 8}, rng);
  (void)st.into_cli.apply(cli, der, st.project_meta(meta), 4, true, true);
  CHECK(meta.data() == before);
}

TEST_CASE("decision fusion over identical features ignores the query") {
  Rng rng(31);
  TrimodalFusion tf = TrimodalFusion::create(8, 2, 16, "gelu", rng);
  Tensor v = Tensor::randn({8}, rng);
  Tensor q1 = Tensor::randn({8}, rng);
  Tensor q2 = Tensor::randn({8}, rng);
  Tensor kv = reshape(v, {1, 8});
  // All keys identical: attention output is the value projection of v no
  // matter the query.
  Tensor a1 = tf.att.apply(reshape(q1, {1, 8}), concat({kv, kv, kv}, 0));
  Tensor a2 = tf.att.apply(reshape(q2, {1, 8}), concat({kv, kv, kv}, 0));
  CHECK(max_abs_diff(a1, a2) <= 1e-12);
  Tensor expect = tf.att.wo.apply(tf.att.wv.apply(kv));
  CHECK(max_abs_diff(a1, expect) <= 1e-12);
}

TEST_CASE("decision fusion with zero weights returns the metadata feature") {
  Rng rng(32);
  TrimodalFusion tf = TrimodalFusion::create(8, 2, 16, "gelu", rng);
  zero_linear(tf.att.wo);
  zero_linear(tf.mlp.fc2);
  Tensor meta = Tensor::randn({8}, rng);
  Tensor cli = Tensor::randn({8}, rng);
  Tensor out = tf.apply(meta, {cli, meta});
  CHECK(max_abs_diff(out, meta) <= 1e-14);
}

TEST_CASE("decision fusion passes grad check in all three arguments") {
  Rng rng(33);
  TrimodalFusion tf = TrimodalFusion::create(8, 2, 16, "gelu", rng);
  Tensor meta = Tensor::randn({8}, rng, 0.5);
  Tensor cli = Tensor::randn({8}, rng, 0.5);
  Tensor der = Tensor::randn({8}, rng, 0.5);
  GradCheckReport report = grad_check(
      [&] {
        Tensor y = tf.apply(meta, {cli, der, meta});
        return mean_all(mul(y, y));
      },
      {{"meta", meta}, {"cli", cli}, {"der", der}, {"wq", tf.att.wq.w}});
  CHECK_MESSAGE(report.pass(1e-4), report.summary());
}

TEST_CASE("assemble_final concatenates in fixed order") {
  Rng rng(34);
  Tensor cli = Tensor::randn({128}, rng);
  Tensor der = Tensor::randn({128}, rng);
  Tensor meta = Tensor::randn({128}, rng);

  Tensor both = assemble_final(cli, der, meta, {"der", "meta"});
  CHECK(both.shape() == Shape{256});
  CHECK(both(0) == der(0));
  CHECK(both(128) == meta(0));

  Tensor all = assemble_final(cli, der, meta, {"cli", "der", "meta"});
  CHECK(all.shape() == Shape{384});
  CHECK(all(0) == cli(0));

  Tensor single = assemble_final(cli, der, meta, {"cli"});
  CHECK(single.id() == cli.id());

  CHECK_THROWS_AS(assemble_final(cli, der, meta, {}), ConfigError);
  CHECK_THROWS_AS(assemble_final(std::nullopt, der, meta, {"cli"}),
                  ConfigError);
}
