#include <doctest.h>

#include <cmath>

#include "dermfuse/rng.hpp"
#include "dermfuse/tasks.hpp"

using namespace dermfuse;

TEST_CASE("task cardinalities sum to 24 with prefix-sum offsets") {
  const TaskSpec& spec = TaskSpec::instance();
  int total = 0;
  for (int t = 0; t < kNumTasks; ++t) {
    CHECK(spec.offset(t) == total);
    total += spec.cardinality(t);
  }
  CHECK(total == kNumClasses);
  CHECK(spec.task(0).name == "DIAG");
  CHECK(spec.cardinality(0) == 5);
  CHECK(spec.task(0).classes[0] == "BCC");
  CHECK(spec.task(7).name == "RS");
  CHECK(spec.cardinality(7) == 2);
}

TEST_CASE("multi-hot row for DIAG=NEV and zeros elsewhere") {
  TaskLabels labels{1, 0, 0, 0, 0, 0, 0, 0};
  std::vector<double> row = labels_to_multihot(labels);
  const std::vector<size_t> expected_ones{1, 5, 8, 10, 13, 16, 19, 22};
  for (size_t i = 0; i < row.size(); ++i) {
    const bool should_be_one =
        std::find(expected_ones.begin(), expected_ones.end(), i) !=
        expected_ones.end();
    CHECK(row[i] == (should_be_one ? 1.0 : 0.0));
  }
}

TEST_CASE("every multi-hot row has exactly 8 ones") {
  Rng rng(3);
  const TaskSpec& spec = TaskSpec::instance();
  for (int rep = 0; rep < 50; ++rep) {
    TaskLabels labels;
    for (int t = 0; t < kNumTasks; ++t) {
      labels[static_cast<size_t>(t)] =
          static_cast<int>(rng.below(spec.cardinality(t)));
    }
    std::vector<double> row = labels_to_multihot(labels);
    double ones = 0.0;
    for (double v : row) ones += v;
    CHECK(ones == 8.0);
    CHECK(multihot_to_labels(row) == labels);
  }
}

TEST_CASE("out-of-range label index is rejected") {
  TaskLabels labels{5, 0, 0, 0, 0, 0, 0, 0};
  CHECK_THROWS_AS(labels_to_multihot(labels), DataError);
}

TEST_CASE("prediction takes the per-task argmax") {
  std::vector<double> logits(kNumClasses, 0.0);
  logits[0] = 9.0;  // DIAG block starts at 0
  Prediction p = predict_from_logits(logits);
  CHECK(p.classes[0] == 0);  // BCC
  for (int t = 1; t < kNumTasks; ++t) {
    // All-zero logits tie-break to the lowest class index.
    CHECK(p.classes[static_cast<size_t>(t)] == 0);
  }
  for (int t = 0; t < kNumTasks; ++t) {
    double s = 0.0;
    for (double v : p.probabilities[static_cast<size_t>(t)]) s += v;
    CHECK(s == doctest::Approx(1.0));
  }
}

TEST_CASE("argmax of softmax equals argmax of logits") {
  Rng rng(17);
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<double> logits(kNumClasses);
    for (double& v : logits) v = rng.uniform(-8.0, 8.0);
    Prediction p = predict_from_logits(logits);
    auto per_task = unflatten_logits(logits);
    for (int t = 0; t < kNumTasks; ++t) {
      const auto& l = per_task[static_cast<size_t>(t)];
      const auto& probs = p.probabilities[static_cast<size_t>(t)];
      int arg_logit = 0, arg_prob = 0;
      for (size_t c = 1; c < l.size(); ++c) {
        if (l[c] > l[static_cast<size_t>(arg_logit)]) {
          arg_logit = static_cast<int>(c);
        }
        if (probs[c] > probs[static_cast<size_t>(arg_prob)]) {
          arg_prob = static_cast<int>(c);
        }
      }
      CHECK(arg_logit == arg_prob);
      CHECK(p.classes[static_cast<size_t>(t)] == arg_logit);
    }
  }
}

TEST_CASE("adding a constant to one task's logits never changes its prediction") {
  Rng rng(23);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> logits(kNumClasses);
    for (double& v : logits) v = rng.uniform(-5.0, 5.0);
    Prediction base = predict_from_logits(logits);
    const TaskSpec& spec = TaskSpec::instance();
    const int t = static_cast<int>(rng.below(kNumTasks));
    const double c = rng.uniform(-100.0, 100.0);
    std::vector<double> shifted = logits;
    for (int k = 0; k < spec.cardinality(t); ++k) {
      shifted[static_cast<size_t>(spec.offset(t) + k)] += c;
    }
    Prediction moved = predict_from_logits(shifted);
    CHECK(moved.classes[static_cast<size_t>(t)] ==
          base.classes[static_cast<size_t>(t)]);
  }
}

TEST_CASE("non-finite logits are rejected") {
  std::vector<double> logits(kNumClasses, 0.0);
  logits[3] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(predict_from_logits(logits), NumericError);
}
