#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace dermfuse {

struct EncoderConfig {
  int image_size = 32;
  int patch_size = 4;
  std::array<int, 4> stage_dims{16, 32, 64, 128};
  int window = 4;
  std::array<int, 4> heads{2, 2, 4, 4};
  std::array<int, 4> blocks{1, 1, 1, 1};
  bool shared_weights = true;
  std::vector<int> meta_hidden{64, 128};
  int meta_dim = 20;
  std::string activation = "gelu";  // gelu | relu
  int mlp_ratio = 4;

  // Token-grid side entering stage s (patch grid halved by each merge).
  int grid_side(int stage) const;
  int tokens(int stage) const;
  int window_at(int stage) const;  // window clamped to the stage grid
  int meta_feature_dim() const { return meta_hidden.back(); }
};

struct FusionConfig {
  bool tmct = true;
  int meta_tokens = 4;             // M key/value tokens carved from f_meta
  std::string meta_kv = "meta";    // meta | concat-image
  std::vector<std::string> decision{"der", "meta"};
  std::vector<std::string> modalities{"cli", "der", "meta"};
  int heads = 4;

  bool has_modality(const std::string& m) const;
};

struct HeadConfig {
  bool mha = true;
  int heads = 4;
  int dim = 128;
};

struct TrainConfig {
  std::string loss = "twl";  // twl | bce
  double temperature = 4.0;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 200;
  int batch_size = 32;
  std::string schedule = "cosine";  // cosine | constant
  std::vector<std::string> augment{"hflip", "vflip", "shift"};
  double mixup_alpha = 0.2;  // used only when "mixup" is listed in augment
};

struct DataConfig {
  int n_train = 413;
  int n_val = 203;
  int n_test = 395;
  // Fraction of the diagnosis image signal carried only by the paired
  // cross-modal pattern (readable from neither image stream alone).
  double cross_signal = 0.5;
  double signal = 0.5;      // class-pattern amplitude in [0,1] image units
  double noise = 0.1;       // per-modality iid pixel noise stddev
  // Structured distractor noise: random coefficients on the same cosine-mode
  // bank the class patterns occupy, so difficulty survives spatial pooling.
  double mode_noise = 0.2;
  double meta_bias = 0.6;   // strength of the diagnosis-conditioned metadata
  // "TASK:CLASS>TASK:CLASS:strength" entries separated by ';'.
  std::string correlations;
};

struct RunConfig {
  uint64_t seed = 0;
  EncoderConfig encoder;
  FusionConfig fusion;
  HeadConfig head;
  TrainConfig train;
  DataConfig data;

  void validate() const;

  // Canonical INI text: sections and keys in a fixed sorted order, values in
  // shortest round-trip form. This string defines the run identity.
  std::string canonical() const;
  uint64_t hash() const;
  std::string hash_hex() const;

  void set(const std::string& dotted_key, const std::string& value);
  std::string get(const std::string& dotted_key) const;
  static const std::vector<std::string>& known_keys();

  static RunConfig from_ini(const std::string& text);
  static RunConfig load_file(const std::string& path);
  void save_file(const std::string& path) const;
};

// Shortest round-trip decimal rendering (deterministic).
std::string format_double(double v);

}  // namespace dermfuse
