#include "dermfuse/metrics.hpp"

#include <json.hpp>

#include "dermfuse/errors.hpp"

namespace dermfuse {

Metrics Metrics::from_pairs(const std::vector<TaskLabels>& predicted,
                            const std::vector<TaskLabels>& actual) {
  if (predicted.size() != actual.size()) {
    throw DataError("metrics: prediction/label count mismatch");
  }
  if (predicted.empty()) throw DataError("metrics: empty evaluation set");
  const TaskSpec& spec = TaskSpec::instance();
  const double n = static_cast<double>(predicted.size());

  Metrics m;
  for (int t = 0; t < kNumTasks; ++t) {
    const int card = spec.cardinality(t);
    auto& conf = m.confusion[static_cast<size_t>(t)];
    conf.assign(static_cast<size_t>(card),
                std::vector<int64_t>(static_cast<size_t>(card), 0));
    int64_t correct = 0;
    for (size_t i = 0; i < predicted.size(); ++i) {
      const int p = predicted[i][static_cast<size_t>(t)];
      const int a = actual[i][static_cast<size_t>(t)];
      if (p < 0 || p >= card || a < 0 || a >= card) {
        throw DataError("metrics: label out of range for task " +
                        spec.task(t).name);
      }
      conf[static_cast<size_t>(a)][static_cast<size_t>(p)] += 1;
      if (p == a) ++correct;
    }
    m.accuracy[static_cast<size_t>(t)] = 100.0 * static_cast<double>(correct) / n;

    // Macro-F1: unweighted mean over the task's classes, 0/0 conventions
    // resolve to 0.
    double f1_sum = 0.0;
    for (int c = 0; c < card; ++c) {
      int64_t tp = conf[static_cast<size_t>(c)][static_cast<size_t>(c)];
      int64_t fp = 0, fn = 0;
      for (int o = 0; o < card; ++o) {
        if (o == c) continue;
        fp += conf[static_cast<size_t>(o)][static_cast<size_t>(c)];
        fn += conf[static_cast<size_t>(c)][static_cast<size_t>(o)];
      }
      const double precision =
          tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp)
                      : 0.0;
      const double recall =
          tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn)
                      : 0.0;
      const double f1 = precision + recall > 0.0
                            ? 2.0 * precision * recall / (precision + recall)
                            : 0.0;
      f1_sum += f1;
    }
    m.macro_f1[static_cast<size_t>(t)] = f1_sum / static_cast<double>(card);
  }
  m.avg = average_accuracy(m.accuracy);
  double f1_total = 0.0;
  for (double f : m.macro_f1) f1_total += f;
  m.mean_f1 = f1_total / static_cast<double>(kNumTasks);
  return m;
}

double Metrics::recall(int task, int cls) const {
  const auto& conf = confusion[static_cast<size_t>(task)];
  if (conf.empty()) throw DataError("metrics: confusion counts absent");
  int64_t tp = conf[static_cast<size_t>(cls)][static_cast<size_t>(cls)];
  int64_t row = 0;
  for (int64_t v : conf[static_cast<size_t>(cls)]) row += v;
  return row > 0 ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
}

double average_accuracy(const std::array<double, kNumTasks>& per_task) {
  double sum = 0.0;
  for (double a : per_task) sum += a;
  return sum / static_cast<double>(kNumTasks);
}

std::string Metrics::to_json() const {
  const TaskSpec& spec = TaskSpec::instance();
  nlohmann::json j;
  for (int t = 0; t < kNumTasks; ++t) {
    const std::string& name = spec.task(t).name;
    j["accuracy"][name] = accuracy[static_cast<size_t>(t)];
    j["macro_f1"][name] = macro_f1[static_cast<size_t>(t)];
    j["confusion"][name] = confusion[static_cast<size_t>(t)];
  }
  j["avg"] = avg;
  j["mean_f1"] = mean_f1;
  return j.dump(2);
}

Metrics Metrics::from_json(const std::string& text) {
  const TaskSpec& spec = TaskSpec::instance();
  nlohmann::json j = nlohmann::json::parse(text);
  Metrics m;
  for (int t = 0; t < kNumTasks; ++t) {
    const std::string& name = spec.task(t).name;
    m.accuracy[static_cast<size_t>(t)] = j.at("accuracy").at(name);
    m.macro_f1[static_cast<size_t>(t)] = j.at("macro_f1").at(name);
    m.confusion[static_cast<size_t>(t)] =
        j.at("confusion").at(name).get<std::vector<std::vector<int64_t>>>();
  }
  m.avg = j.at("avg");
  m.mean_f1 = j.at("mean_f1");
  return m;
}

}  // namespace dermfuse
