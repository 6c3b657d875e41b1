#include "dermfuse/blockcheck.hpp"

#include <sstream>

#include "dermfuse/encoder.hpp"
#include "dermfuse/fusion.hpp"
#include "dermfuse/gradcheck.hpp"
#include "dermfuse/head.hpp"
#include "dermfuse/losses.hpp"
#include "dermfuse/model.hpp"

namespace dermfuse {

namespace {

BlockCheckResult check(const std::string& name, double tol,
                       const TensorProgram& f, std::vector<NamedLeaf> leaves,
                       const GradCheckOptions& opts = {}) {
  GradCheckReport report = grad_check(f, std::move(leaves), opts);
  BlockCheckResult r;
  r.name = name;
  r.max_rel_err = report.max_rel_err;
  r.tolerance = tol;
  r.pass = report.pass(tol);
  return r;
}

std::vector<NamedLeaf> param_leaves(const std::string& prefix,
                                    std::vector<NamedParam>& params) {
  std::vector<NamedLeaf> leaves;
  for (NamedParam& p : params) leaves.push_back({prefix + p.name, p.tensor});
  return leaves;
}

Sample toy_sample(Rng& rng, int image_size) {
  const TaskSpec& spec = TaskSpec::instance();
  const MetaVocab& vocab = MetaVocab::instance();
  Sample s;
  s.x_cli = Tensor::zeros({image_size, image_size, 3});
  s.x_der = Tensor::zeros({image_size, image_size, 3});
  for (double& v : s.x_cli.data()) v = rng.uniform();
  for (double& v : s.x_der.data()) v = rng.uniform();
  s.x_meta = Tensor::zeros({20});
  for (const auto& g : vocab.groups) {
    s.x_meta.data()[static_cast<size_t>(
        g.offset + rng.below(static_cast<int64_t>(g.values.size())))] = 1.0;
  }
  for (int t = 0; t < kNumTasks; ++t) {
    s.y[static_cast<size_t>(t)] =
        static_cast<int>(rng.below(spec.cardinality(t)));
  }
  return s;
}

}  // namespace

std::vector<BlockCheckResult> run_block_checks() {
  std::vector<BlockCheckResult> results;
  Rng rng(0xb10c);
  GradCheckOptions sampled;
  sampled.max_elems_per_leaf = 24;

  {
    WindowBlock b = WindowBlock::create(8, 2, 4, 0, 16, "gelu", rng);
    Tensor x = Tensor::randn({64, 8}, rng, 0.5);
    std::vector<NamedLeaf> leaves{{"x", x},       {"wq", b.wq.w},
                                  {"wk", b.wk.w}, {"wv", b.wv.w},
                                  {"wo", b.wo.w}, {"ln1.g", b.ln1.gamma},
                                  {"mlp1", b.mlp.fc1.w}};
    results.push_back(check(
        "window_attention", 1e-4,
        [&] {
          Tensor y = b.apply(x, 8);
          return mean_all(mul(y, y));
        },
        leaves, sampled));
  }
  {
    Rng local(rng.next_u64());
    PatchMerge m = PatchMerge::create(4, local);
    Tensor x = Tensor::randn({16, 4}, local, 0.5);
    results.push_back(check(
        "patch_merge", 1e-4,
        [&] {
          Tensor y = m.apply(x, 4);
          return mean_all(mul(y, y));
        },
        {{"x", x}, {"w", m.proj.w}, {"b", m.proj.b}}));
  }
  {
    Rng local(rng.next_u64());
    ImageCrossAttention ca = ImageCrossAttention::create(8, 2, 2, local);
    Tensor q = Tensor::randn({16, 8}, local, 0.5);
    Tensor o = Tensor::randn({16, 8}, local, 0.5);
    results.push_back(check(
        "ca_image_to_image", 1e-4,
        [&] {
          Tensor y = ca.apply(q, o, 4);
          return mean_all(mul(y, y));
        },
        {{"q", q}, {"o", o}, {"wq", ca.wq.w}, {"wk", ca.wk.w},
         {"wv", ca.wv.w}, {"wo", ca.wo.w}},
        sampled));
  }
  {
    Rng local(rng.next_u64());
    MetaCrossAttention ca = MetaCrossAttention::create(8, 2, false, local);
    Tensor img = Tensor::randn({16, 8}, local, 0.5);
    Tensor meta_tokens = Tensor::randn({4, 8}, local, 0.5);
    results.push_back(check(
        "ca_meta_to_image", 1e-4,
        [&] {
          Tensor y = ca.apply(img, meta_tokens);
          return mean_all(mul(y, y));
        },
        {{"img", img}, {"meta", meta_tokens}, {"wq", ca.wq.w},
         {"wk", ca.wk.w}, {"wv", ca.wv.w}},
        sampled));
  }
  {
    Rng local(rng.next_u64());
    TmctStage st = TmctStage::create(8, 32, 4, 2, 2, false, 16, "gelu", local);
    Tensor cli = Tensor::randn({16, 8}, local, 0.5);
    Tensor der = Tensor::randn({16, 8}, local, 0.5);
    Tensor meta = Tensor::randn({32}, local, 0.5);
    results.push_back(check(
        "tmct_block", 1e-4,
        [&] {
          Tensor mt = st.project_meta(meta);
          Tensor a = st.into_cli.apply(cli, der, mt, 4, true, true);
          Tensor b = st.into_der.apply(der, cli, mt, 4, true, true);
          return add(mean_all(mul(a, a)), mean_all(mul(b, b)));
        },
        {{"cli", cli}, {"der", der}, {"meta", meta},
         {"meta_proj", st.meta_proj.w}},
        sampled));
  }
  {
    Rng local(rng.next_u64());
    TrimodalFusion tf = TrimodalFusion::create(8, 2, 16, "gelu", local);
    Tensor meta = Tensor::randn({8}, local, 0.5);
    Tensor cli = Tensor::randn({8}, local, 0.5);
    Tensor der = Tensor::randn({8}, local, 0.5);
    results.push_back(check(
        "trimodal_meta_fusion", 1e-4,
        [&] {
          Tensor y = tf.apply(meta, {cli, der, meta});
          return mean_all(mul(y, y));
        },
        {{"meta", meta}, {"cli", cli}, {"der", der}, {"wq", tf.att.wq.w},
         {"wo", tf.att.wo.w}}));
  }
  {
    Rng local(rng.next_u64());
    HeadConfig hc;
    hc.dim = 16;
    hc.heads = 4;
    LabelHead lh = LabelHead::create(32, hc, local);
    Tensor f = Tensor::randn({32}, local, 0.5);
    results.push_back(check(
        "label_head_mha", 1e-4,
        [&] {
          Tensor y = lh.apply(f);
          return mean_all(mul(y, y));
        },
        {{"f", f}, {"mha.wq", lh.mha.wq.w}, {"mha.wk", lh.mha.wk.w},
         {"mha.wv", lh.mha.wv.w}, {"mha.wo", lh.mha.wo.w}},
        sampled));
  }
  {
    Rng local(rng.next_u64());
    Tensor logits = Tensor::randn({4, 24}, local, 2.0);
    Tensor targets = Tensor::zeros({4, 24});
    const TaskSpec& spec = TaskSpec::instance();
    for (int64_t i = 0; i < 4; ++i) {
      TaskLabels y;
      for (int t = 0; t < kNumTasks; ++t) {
        y[static_cast<size_t>(t)] =
            static_cast<int>(local.below(spec.cardinality(t)));
      }
      auto row = labels_to_multihot(y);
      for (int c = 0; c < kNumClasses; ++c) {
        targets.data()[static_cast<size_t>(i * kNumClasses + c)] =
            row[static_cast<size_t>(c)];
      }
    }
    results.push_back(check(
        "two_way_loss", 1e-4,
        [&] { return two_way_loss(logits, targets, 4.0); },
        {{"logits", logits}}));
    results.push_back(check(
        "bce_loss", 1e-4, [&] { return bce_loss(logits, targets); },
        {{"logits", logits}}));
  }
  {
    // Full default toy model, two-sample batch. The end-to-end loss has
    // large higher derivatives through the shared patch embedding, so the
    // oracle runs at a smaller step where truncation is negligible.
    RunConfig cfg;
    cfg.seed = 0xb10c;
    Model model(cfg);
    Rng local(rng.next_u64());
    std::vector<TrainExample> batch{
        to_example(toy_sample(local, cfg.encoder.image_size)),
        to_example(toy_sample(local, cfg.encoder.image_size))};
    Tensor targets = Tensor::zeros({2, kNumClasses});
    for (size_t i = 0; i < batch.size(); ++i) {
      for (size_t c = 0; c < kNumClasses; ++c) {
        targets.data()[i * kNumClasses + c] = batch[i].target[c];
      }
    }
    std::vector<NamedLeaf> leaves =
        param_leaves("", model.parameters());
    leaves.push_back({"input.cli", batch[0].x_cli});
    leaves.push_back({"input.der", batch[1].x_der});
    leaves.push_back({"input.meta", batch[0].x_meta});
    GradCheckOptions opts;
    opts.max_elems_per_leaf = 2;
    opts.step = 1e-6;
    opts.zero_tol = 1e-6;
    results.push_back(check(
        "full_model", 1e-4,
        [&] {
          Tensor logits = model.forward_batch(batch);
          return two_way_loss(logits, targets, 4.0);
        },
        leaves, opts));
  }
  return results;
}

std::string format_block_checks(const std::vector<BlockCheckResult>& results) {
  std::ostringstream os;
  for (const BlockCheckResult& r : results) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-22s max_rel_err=%.3e tol=%.0e %s\n",
                  r.name.c_str(), r.max_rel_err, r.tolerance,
                  r.pass ? "PASS" : "FAIL");
    os << line;
  }
  return os.str();
}

bool all_blocks_pass(const std::vector<BlockCheckResult>& results) {
  for (const BlockCheckResult& r : results) {
    if (!r.pass) return false;
  }
  return true;
}

}  // namespace dermfuse
