#include "dermfuse/model.hpp"

#include <algorithm>

namespace dermfuse {

namespace {
constexpr uint64_t kTagInit = 100;
}

Model::Model(const RunConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  use_cli_ = cfg_.fusion.has_modality("cli");
  use_der_ = cfg_.fusion.has_modality("der");
  use_meta_ = cfg_.fusion.has_modality("meta");

  // Decision features: configured selection restricted to what the modality
  // mask provides; when nothing of the selection survives, fall back to all
  // available features.
  for (const char* m : {"cli", "der", "meta"}) {
    const bool avail = (m == std::string("cli") && use_cli_) ||
                       (m == std::string("der") && use_der_) ||
                       (m == std::string("meta") && use_meta_);
    const bool chosen =
        std::find(cfg_.fusion.decision.begin(), cfg_.fusion.decision.end(),
                  m) != cfg_.fusion.decision.end();
    if (avail && chosen) effective_decision_.push_back(m);
  }
  if (effective_decision_.empty()) {
    for (const char* m : {"cli", "der", "meta"}) {
      const bool avail = (m == std::string("cli") && use_cli_) ||
                         (m == std::string("der") && use_der_) ||
                         (m == std::string("meta") && use_meta_);
      if (avail) effective_decision_.push_back(m);
    }
  }

  Rng rng(Rng::derive(cfg_.seed, {kTagInit}));
  const EncoderConfig& e = cfg_.encoder;
  const int64_t feat_dim = e.meta_feature_dim();

  if (use_meta_) meta_encoder = MetaEncoder::create(e, rng);
  const bool any_image = use_cli_ || use_der_;
  if (any_image) {
    if (e.shared_weights) {
      image_encoder = ImageEncoder::create(e, rng);
    } else {
      if (use_cli_) image_encoder_cli = ImageEncoder::create(e, rng);
      if (use_der_) image_encoder_der = ImageEncoder::create(e, rng);
    }
  }

  const int modality_count = (use_cli_ ? 1 : 0) + (use_der_ ? 1 : 0) +
                             (use_meta_ ? 1 : 0);
  if (cfg_.fusion.tmct && modality_count >= 2 && any_image) {
    for (int s = 0; s < 4; ++s) {
      const int64_t dim = e.stage_dims[static_cast<size_t>(s)];
      tmct_stages.push_back(TmctStage::create(
          dim, feat_dim, cfg_.fusion.meta_tokens,
          e.heads[static_cast<size_t>(s)], e.window_at(s),
          cfg_.fusion.meta_kv == "concat-image", dim * e.mlp_ratio,
          e.activation, rng));
    }
  }

  const int64_t stage4_dim = e.stage_dims[3];
  if (use_cli_) pool_cli = PoolHead::create(stage4_dim, cfg_.head.dim, rng);
  if (use_der_) pool_der = PoolHead::create(stage4_dim, cfg_.head.dim, rng);
  if (cfg_.fusion.tmct && use_meta_) {
    trimodal = TrimodalFusion::create(feat_dim, cfg_.fusion.heads,
                                      feat_dim * e.mlp_ratio, e.activation,
                                      rng);
  }

  label_head = LabelHead::create(decision_dim(), cfg_.head, rng);
  collect_params();
}

int64_t Model::decision_dim() const {
  return static_cast<int64_t>(effective_decision_.size()) * cfg_.head.dim;
}

bool Model::uses(const std::string& modality) const {
  return cfg_.fusion.has_modality(modality);
}

const ImageEncoder& Model::encoder_for_cli() const {
  return image_encoder ? *image_encoder : *image_encoder_cli;
}

const ImageEncoder& Model::encoder_for_der() const {
  return image_encoder ? *image_encoder : *image_encoder_der;
}

Tensor Model::forward(const Tensor& x_cli, const Tensor& x_der,
                      const Tensor& x_meta) const {
  Tensor meta0;
  if (use_meta_) meta0 = meta_encoder->apply(x_meta);

  Tensor cli, der;
  if (use_cli_) cli = encoder_for_cli().embed.apply(x_cli);
  if (use_der_) der = encoder_for_der().embed.apply(x_der);

  const bool fuse = !tmct_stages.empty();
  int grid = cfg_.encoder.grid_side(0);
  for (int s = 0; s < 4; ++s) {
    if (use_cli_) {
      cli = encoder_for_cli().stages[static_cast<size_t>(s)].apply(cli, grid);
    }
    if (use_der_) {
      der = encoder_for_der().stages[static_cast<size_t>(s)].apply(der, grid);
    }
    if (fuse) {
      const TmctStage& st = tmct_stages[static_cast<size_t>(s)];
      Tensor meta_tokens;
      if (use_meta_) meta_tokens = st.project_meta(meta0);
      Tensor fused_cli, fused_der;
      if (use_cli_) {
        fused_cli = st.into_cli.apply(cli, der, meta_tokens, grid, use_der_,
                                      use_meta_);
      }
      if (use_der_) {
        fused_der = st.into_der.apply(der, cli, meta_tokens, grid, use_cli_,
                                      use_meta_);
      }
      // Next stage input: elementwise sum of the encoder-stage output and
      // the fused output. With fusion off the encoder output passes as is.
      if (use_cli_) cli = add(cli, fused_cli);
      if (use_der_) der = add(der, fused_der);
    }
    if (s < 3) {
      if (use_cli_) {
        cli = encoder_for_cli().merges[static_cast<size_t>(s)].apply(cli, grid);
      }
      if (use_der_) {
        der = encoder_for_der().merges[static_cast<size_t>(s)].apply(der, grid);
      }
      grid /= 2;
    }
  }

  std::optional<Tensor> f_cli, f_der, f_meta;
  if (use_cli_) {
    f_cli = pool_cli->apply(encoder_for_cli().final_norm.apply(cli));
  }
  if (use_der_) {
    f_der = pool_der->apply(encoder_for_der().final_norm.apply(der));
  }
  if (use_meta_) {
    if (trimodal) {
      std::vector<Tensor> kv;
      if (f_cli) kv.push_back(*f_cli);
      if (f_der) kv.push_back(*f_der);
      kv.push_back(meta0);
      f_meta = trimodal->apply(meta0, kv);
    } else {
      f_meta = meta0;
    }
  }

  Tensor f_final = assemble_final(f_cli, f_der, f_meta, effective_decision_);
  return label_head.apply(f_final);
}

Tensor Model::forward_batch(const std::vector<TrainExample>& batch) const {
  if (batch.empty()) throw ShapeError("forward_batch: empty batch");
  std::vector<Tensor> rows;
  rows.reserve(batch.size());
  for (const TrainExample& ex : batch) {
    Tensor logits = forward(ex.x_cli, ex.x_der, ex.x_meta);
    rows.push_back(reshape(logits, {1, logits.numel()}));
  }
  return rows.size() == 1 ? rows[0] : concat(rows, 0);
}

Prediction Model::predict(const Sample& s) const {
  Tensor logits = forward(s.x_cli, s.x_der, s.x_meta);
  return predict_from_logits(logits.data());
}

void Model::collect_params() {
  params_.clear();
  auto take = [this](const std::string& name, Tensor& t) {
    t.set_requires_grad(true);
    params_.push_back({name, t});
  };
  if (meta_encoder) meta_encoder->visit("meta", take);
  if (image_encoder) image_encoder->visit("img", take);
  if (image_encoder_cli) image_encoder_cli->visit("img_cli", take);
  if (image_encoder_der) image_encoder_der->visit("img_der", take);
  for (size_t s = 0; s < tmct_stages.size(); ++s) {
    tmct_stages[s].visit("fusion.s" + std::to_string(s), take);
  }
  if (trimodal) trimodal->visit("fusion.trimodal", take);
  if (pool_cli) pool_cli->visit("head.pool_cli", take);
  if (pool_der) pool_der->visit("head.pool_der", take);
  label_head.visit("head.label", take);
}

int64_t Model::param_count(const std::string& prefix) const {
  int64_t total = 0;
  for (const NamedParam& p : params_) {
    if (p.name.rfind(prefix, 0) == 0) total += p.tensor.numel();
  }
  return total;
}

int64_t Model::total_params() const {
  int64_t total = 0;
  for (const NamedParam& p : params_) total += p.tensor.numel();
  return total;
}

}  // namespace dermfuse
