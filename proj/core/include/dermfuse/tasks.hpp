#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dermfuse/tensor.hpp"

namespace dermfuse {

inline constexpr int kNumTasks = 8;
inline constexpr int kNumClasses = 24;

// The eight classification tasks: one diagnosis plus the seven dermoscopic
// checklist attributes, in the canonical order used everywhere (flat logit
// layout, CSV columns, report columns).
struct TaskDef {
  std::string name;
  std::vector<std::string> classes;
};

class TaskSpec {
 public:
  static const TaskSpec& instance();

  const std::array<TaskDef, kNumTasks>& tasks() const { return tasks_; }
  const TaskDef& task(int t) const { return tasks_[static_cast<size_t>(t)]; }
  int cardinality(int t) const;
  // Flat offset of task t's class block in the 24-wide space (prefix sums).
  int offset(int t) const;
  int task_index(const std::string& name) const;  // -1 if unknown
  // Class index within task t for a class-name string; -1 if unknown.
  int class_index(int t, const std::string& label) const;

 private:
  TaskSpec();
  std::array<TaskDef, kNumTasks> tasks_;
  std::array<int, kNumTasks + 1> offsets_;
};

using TaskLabels = std::array<int, kNumTasks>;

// One-hot encodes per-task class indices into the flat 24-wide multi-hot row.
std::vector<double> labels_to_multihot(const TaskLabels& labels);
// Inverse of labels_to_multihot for strict {0,1} rows.
TaskLabels multihot_to_labels(const std::vector<double>& row);

struct Prediction {
  TaskLabels classes;
  std::array<std::vector<double>, kNumTasks> probabilities;
};

// Per-task softmax + argmax over a flat 24-wide logit vector. Ties break
// toward the lowest class index. Rejects non-finite logits.
Prediction predict_from_logits(const std::vector<double>& flat_logits);

// Splits a flat logit vector tensor (shape (24,) or (1,24)) into the eight
// per-task vectors.
std::array<std::vector<double>, kNumTasks> unflatten_logits(
    const std::vector<double>& flat);

}  // namespace dermfuse
