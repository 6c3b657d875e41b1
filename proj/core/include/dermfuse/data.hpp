#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "dermfuse/config.hpp"
#include "dermfuse/tasks.hpp"
#include "dermfuse/tensor.hpp"

namespace dermfuse {

struct Sample {
  std::string case_id;
  Tensor x_cli;   // (H, W, 3), values in [0, 1]
  Tensor x_der;   // (H, W, 3), values in [0, 1]
  Tensor x_meta;  // (20,), one 1 per covariate group
  TaskLabels y{};
};

// Per-task class probabilities derived from the training-split counts.
struct MarginalTable {
  std::array<std::vector<int>, kNumTasks> counts;
  std::array<std::vector<double>, kNumTasks> probs;

  static MarginalTable derm7pt_train();
  void validate() const;
};

struct CorrelationRule {
  int task_a, class_a, task_b, class_b;
  double strength;
};

// Pair-copula plan: with probability = strength, class_b is forced on every
// sample whose task_a label equals class_a. Empty plan = independent tasks.
struct CorrelationPlan {
  std::vector<CorrelationRule> rules;

  // "TASK:CLASS>TASK:CLASS:strength" entries separated by ';'.
  static CorrelationPlan parse(const std::string& text);
};

// Fixed 20-slot metadata layout: sex(2) + difficulty(3) + elevation(3) +
// management(3) + location(9).
struct MetaVocab {
  struct Group {
    std::string name;
    std::vector<std::string> values;
    int offset;
  };
  std::vector<Group> groups;

  static const MetaVocab& instance();
  int total_dim() const;
  const Group& group(const std::string& name) const;
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<int64_t> train_idx, val_idx, test_idx;

  std::vector<Sample> gather(const std::vector<int64_t>& idx) const;
};

struct GenParams {
  int image_size = 32;
  double signal = 0.5;
  double noise = 0.1;
  double mode_noise = 0.2;
  double cross_signal = 0.5;
  double meta_bias = 0.6;
  bool with_images = true;
  // Class patterns derive from this seed; 0 falls back to the sample seed.
  // generate_dataset shares one pattern seed across its three splits so the
  // same class looks the same in train, val, and test.
  uint64_t pattern_seed = 0;
};

// Draws n samples whose per-task class frequencies follow the marginal table
// (largest-remainder quotas, so empirical frequencies are exact up to
// rounding), then applies the correlation plan, metadata bias, and planted
// image patterns. Bit-identical for a fixed (seed, n).
std::vector<Sample> generate_samples(int64_t n, const MarginalTable& marginals,
                                     const CorrelationPlan& plan,
                                     const GenParams& params, uint64_t seed);

// Three independent quota draws sized by cfg.data, concatenated as
// train | val | test.
Dataset generate_dataset(const RunConfig& cfg);

struct SplitSizes {
  int n_train, n_val, n_test;
};

struct SplitIndices {
  std::vector<int64_t> train, val, test;
};

// Deterministic shuffled partition of [0, n) into the three splits.
SplitIndices split_dataset(int64_t n, const SplitSizes& sizes, uint64_t seed);

// CSV round-trip. Columns: case_id, split, diag, pn, bwv, vs, pig, str, dag,
// rs, sex, location, elevation, difficulty, management.
void write_csv(const Dataset& ds, const std::string& path);

// Parses a Derm7pt-style label/metadata CSV. Image tensors are filled with a
// deterministic per-row placeholder pattern. A split column, when present,
// overrides size-based splitting.
Dataset load_derm7pt_csv(const std::string& path, int image_size,
                         const std::optional<SplitSizes>& fallback_sizes,
                         uint64_t split_seed);

// Writes/reads the dataset manifest (seed, config hash, split sizes).
void write_manifest(const std::string& path, uint64_t seed,
                    const std::string& config_hash, const SplitSizes& sizes);

// Flips and shifts, applied identically to both image modalities.
Sample augment_sample(const Sample& s, Rng& rng,
                      const std::vector<std::string>& flags);

// Convex blend of two samples' inputs and multi-hot targets.
struct TrainExample {
  Tensor x_cli, x_der, x_meta;
  std::vector<double> target;  // 24-wide, real-valued under mixup
};

TrainExample to_example(const Sample& s);
TrainExample mixup_examples(const TrainExample& a, const TrainExample& b,
                            double lambda);

}  // namespace dermfuse
