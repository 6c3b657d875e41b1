#include "dermfuse/tasks.hpp"

#include <cmath>

#include "dermfuse/errors.hpp"

namespace dermfuse {

TaskSpec::TaskSpec() {
  tasks_ = {{
      {"DIAG", {"BCC", "NEV", "MEL", "MISC", "SK"}},
      {"PN", {"ABS", "TYP", "ATP"}},
      {"BWV", {"ABS", "PRS"}},
      {"VS", {"ABS", "REG", "IR"}},
      {"PIG", {"ABS", "REG", "IR"}},
      {"STR", {"ABS", "REG", "IR"}},
      {"DaG", {"ABS", "REG", "IRG"}},
      {"RS", {"ABS", "PRS"}},
  }};
  int off = 0;
  for (int t = 0; t < kNumTasks; ++t) {
    offsets_[static_cast<size_t>(t)] = off;
    off += static_cast<int>(tasks_[static_cast<size_t>(t)].classes.size());
  }
  offsets_[kNumTasks] = off;
}

const TaskSpec& TaskSpec::instance() {
  static const TaskSpec spec;
  return spec;
}

int TaskSpec::cardinality(int t) const {
  return static_cast<int>(tasks_[static_cast<size_t>(t)].classes.size());
}

int TaskSpec::offset(int t) const { return offsets_[static_cast<size_t>(t)]; }

int TaskSpec::task_index(const std::string& name) const {
  for (int t = 0; t < kNumTasks; ++t) {
    if (tasks_[static_cast<size_t>(t)].name == name) return t;
  }
  return -1;
}

int TaskSpec::class_index(int t, const std::string& label) const {
  const auto& classes = tasks_[static_cast<size_t>(t)].classes;
  for (size_t c = 0; c < classes.size(); ++c) {
    if (classes[c] == label) return static_cast<int>(c);
  }
  return -1;
}

std::vector<double> labels_to_multihot(const TaskLabels& labels) {
  const TaskSpec& spec = TaskSpec::instance();
  std::vector<double> row(kNumClasses, 0.0);
  for (int t = 0; t < kNumTasks; ++t) {
    const int c = labels[static_cast<size_t>(t)];
    if (c < 0 || c >= spec.cardinality(t)) {
      throw DataError("label index " + std::to_string(c) +
                      " out of range for task " + spec.task(t).name);
    }
    row[static_cast<size_t>(spec.offset(t) + c)] = 1.0;
  }
  return row;
}

TaskLabels multihot_to_labels(const std::vector<double>& row) {
  if (row.size() != kNumClasses) {
    throw DataError("multi-hot row must have " + std::to_string(kNumClasses) +
                    " entries, got " + std::to_string(row.size()));
  }
  const TaskSpec& spec = TaskSpec::instance();
  TaskLabels labels{};
  for (int t = 0; t < kNumTasks; ++t) {
    int hit = -1;
    for (int c = 0; c < spec.cardinality(t); ++c) {
      const double v = row[static_cast<size_t>(spec.offset(t) + c)];
      if (v == 1.0) {
        if (hit >= 0) {
          throw DataError("multi-hot row has two ones in task " +
                          spec.task(t).name);
        }
        hit = c;
      } else if (v != 0.0) {
        throw DataError("multi-hot row is not {0,1}-valued in task " +
                        spec.task(t).name);
      }
    }
    if (hit < 0) {
      throw DataError("multi-hot row has no one in task " + spec.task(t).name);
    }
    labels[static_cast<size_t>(t)] = hit;
  }
  return labels;
}

std::array<std::vector<double>, kNumTasks> unflatten_logits(
    const std::vector<double>& flat) {
  if (flat.size() != kNumClasses) {
    throw ShapeError("expected " + std::to_string(kNumClasses) +
                     " flat logits, got " + std::to_string(flat.size()));
  }
  const TaskSpec& spec = TaskSpec::instance();
  std::array<std::vector<double>, kNumTasks> out;
  for (int t = 0; t < kNumTasks; ++t) {
    const int off = spec.offset(t);
    const int card = spec.cardinality(t);
    out[static_cast<size_t>(t)].assign(
        flat.begin() + off, flat.begin() + off + card);
  }
  return out;
}

Prediction predict_from_logits(const std::vector<double>& flat_logits) {
  for (double v : flat_logits) {
    if (!std::isfinite(v)) throw NumericError("predict: non-finite logit");
  }
  auto per_task = unflatten_logits(flat_logits);
  Prediction pred;
  for (int t = 0; t < kNumTasks; ++t) {
    auto& l = per_task[static_cast<size_t>(t)];
    double m = l[0];
    int arg = 0;
    for (size_t c = 1; c < l.size(); ++c) {
      if (l[c] > m) {
        m = l[c];
        arg = static_cast<int>(c);
      }
    }
    double s = 0.0;
    std::vector<double> p(l.size());
    for (size_t c = 0; c < l.size(); ++c) {
      p[c] = std::exp(l[c] - m);
      s += p[c];
    }
    for (double& v : p) v /= s;
    pred.classes[static_cast<size_t>(t)] = arg;
    pred.probabilities[static_cast<size_t>(t)] = std::move(p);
  }
  return pred;
}

}  // namespace dermfuse
