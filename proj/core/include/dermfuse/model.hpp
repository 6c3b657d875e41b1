#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dermfuse/config.hpp"
#include "dermfuse/data.hpp"
#include "dermfuse/encoder.hpp"
#include "dermfuse/fusion.hpp"
#include "dermfuse/head.hpp"

namespace dermfuse {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

// The full tri-modal multi-label classifier. Which blocks exist is decided
// by the config at construction time: fusion stages only with tmct on and at
// least two modalities, one image backbone when weights are shared, and so
// on. Parameter initialization order is fixed, so (config, seed) determines
// the weights exactly.
class Model {
 public:
  explicit Model(const RunConfig& cfg);

  const RunConfig& config() const { return cfg_; }

  // Flat 24-wide logits for one sample's input tensors.
  Tensor forward(const Tensor& x_cli, const Tensor& x_der,
                 const Tensor& x_meta) const;
  Tensor forward_batch(const std::vector<TrainExample>& batch) const;
  Prediction predict(const Sample& s) const;

  std::vector<NamedParam>& parameters() { return params_; }
  const std::vector<NamedParam>& parameters() const { return params_; }
  int64_t param_count(const std::string& prefix) const;
  int64_t total_params() const;

  bool uses(const std::string& modality) const;
  const std::vector<std::string>& decision_features() const {
    return effective_decision_;
  }
  int64_t decision_dim() const;

  // Blocks are exposed for tests and the gradient-check registry.
  std::optional<MetaEncoder> meta_encoder;
  std::optional<ImageEncoder> image_encoder;      // shared-weights backbone
  std::optional<ImageEncoder> image_encoder_cli;  // independent backbones
  std::optional<ImageEncoder> image_encoder_der;
  std::vector<TmctStage> tmct_stages;
  std::optional<PoolHead> pool_cli;
  std::optional<PoolHead> pool_der;
  std::optional<TrimodalFusion> trimodal;
  LabelHead label_head;

 private:
  RunConfig cfg_;
  bool use_cli_ = false, use_der_ = false, use_meta_ = false;
  std::vector<std::string> effective_decision_;
  std::vector<NamedParam> params_;

  const ImageEncoder& encoder_for_cli() const;
  const ImageEncoder& encoder_for_der() const;
  void collect_params();
};

}  // namespace dermfuse
