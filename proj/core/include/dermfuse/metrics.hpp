#pragma once

#include <array>
#include <string>
#include <vector>

#include "dermfuse/tasks.hpp"

namespace dermfuse {

// Per-task accuracy (percent), macro-F1, confusion counts, and their means.
// AVG is the arithmetic mean of the eight accuracies.
struct Metrics {
  std::array<double, kNumTasks> accuracy{};
  double avg = 0.0;
  std::array<double, kNumTasks> macro_f1{};
  double mean_f1 = 0.0;
  // confusion[task][true_class][predicted_class]
  std::array<std::vector<std::vector<int64_t>>, kNumTasks> confusion;

  static Metrics from_pairs(const std::vector<TaskLabels>& predicted,
                            const std::vector<TaskLabels>& actual);

  // Recall of one (task, class) cell: TP / (TP + FN), 0/0 -> 0.
  double recall(int task, int cls) const;

  std::string to_json() const;
  static Metrics from_json(const std::string& text);
};

// Mean of externally supplied per-task accuracies, the same arithmetic
// evaluate() applies to its own columns.
double average_accuracy(const std::array<double, kNumTasks>& per_task);

}  // namespace dermfuse
