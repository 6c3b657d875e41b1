#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dermfuse/model.hpp"

namespace dermfuse {

// Versioned binary snapshot of a run: canonical config text, seed, best
// validation average, parameter name -> shape + values, optimizer moments.
// Self-contained: a model can be rebuilt from the stored config alone.
struct Checkpoint {
  static constexpr uint32_t kVersion = 1;

  std::string config_text;
  uint64_t seed = 0;
  // -1 marks a checkpoint captured before any validation pass.
  double best_val_avg = -1.0;
  std::vector<std::pair<std::string, Tensor>> params;
  std::vector<std::vector<double>> adam_m, adam_v;
  int64_t adam_steps = 0;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  // Deep-copies the model's current parameter values.
  static Checkpoint capture(const Model& model, double best_val_avg);
  // Copies stored values back into a model built from the same config.
  void restore_into(Model& model) const;

  RunConfig config() const;
};

}  // namespace dermfuse
