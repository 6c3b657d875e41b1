#pragma once

#include <vector>

#include "dermfuse/checkpoint.hpp"
#include "dermfuse/data.hpp"
#include "dermfuse/metrics.hpp"
#include "dermfuse/model.hpp"

namespace dermfuse {

// Adaptive-moment optimizer with bias correction and decoupled weight decay
// (parameters are scaled by 1 - lr*wd before the moment update).
class Adam {
 public:
  explicit Adam(const TrainConfig& cfg);

  void step(std::vector<NamedParam>& params, double lr);
  int64_t steps() const { return steps_; }

  std::vector<std::vector<double>>& moment1() { return m_; }
  std::vector<std::vector<double>>& moment2() { return v_; }
  void set_steps(int64_t n) { steps_ = n; }

 private:
  TrainConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  int64_t steps_ = 0;
};

// lr = 0.5 * base * (1 + cos(pi * epoch / total)); epoch must lie in
// [0, total).
double cosine_lr(int epoch, int total_epochs, double base_lr);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  Metrics val;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochRecord> history;
};

Metrics evaluate(const Model& model, const std::vector<Sample>& split);

// Epoch loop with per-epoch seeded shuffling, augmentation, loss backward,
// optimizer step, validation, and best-on-validation checkpointing.
TrainResult train_model(Model& model, const Dataset& data);

// Batch loss under the configured objective (twl or bce).
Tensor batch_loss(const Model& model, const std::vector<TrainExample>& batch,
                  const TrainConfig& cfg);

}  // namespace dermfuse
