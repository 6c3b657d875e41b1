#include "dermfuse/ablate.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "dermfuse/data.hpp"
#include "dermfuse/train.hpp"

namespace dermfuse {

std::vector<AblationArm> table4_arms() {
  return {
      {"swin+bce", {{"fusion.tmct", "off"}, {"head.mha", "off"},
                    {"train.loss", "bce"}}},
      {"tmct+bce", {{"fusion.tmct", "on"}, {"head.mha", "off"},
                    {"train.loss", "bce"}}},
      {"tmct+twl", {{"fusion.tmct", "on"}, {"head.mha", "off"},
                    {"train.loss", "twl"}}},
      {"tmct+mha+bce", {{"fusion.tmct", "on"}, {"head.mha", "on"},
                        {"train.loss", "bce"}}},
      {"tmct+mha+twl", {{"fusion.tmct", "on"}, {"head.mha", "on"},
                        {"train.loss", "twl"}}},
  };
}

std::vector<AblationArm> modality_arms() {
  return {
      {"cli", {{"fusion.modalities", "cli"}}},
      {"der", {{"fusion.modalities", "der"}}},
      {"meta", {{"fusion.modalities", "meta"}}},
      {"cli+der", {{"fusion.modalities", "cli,der"}}},
      {"cli+meta", {{"fusion.modalities", "cli,meta"}}},
      {"der+meta", {{"fusion.modalities", "der,meta"}}},
      {"cli+der+meta", {{"fusion.modalities", "cli,der,meta"}}},
  };
}

std::vector<AblationArm> decision_arms() {
  return {
      {"cli", {{"fusion.decision", "cli"}}},
      {"der", {{"fusion.decision", "der"}}},
      {"meta", {{"fusion.decision", "meta"}}},
      {"cli+der", {{"fusion.decision", "cli,der"}}},
      {"cli+meta", {{"fusion.decision", "cli,meta"}}},
      {"der+meta", {{"fusion.decision", "der,meta"}}},
      {"cli+der+meta", {{"fusion.decision", "cli,der,meta"}}},
  };
}

std::vector<AblationArm> load_arms_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open ablation matrix '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("ablation matrix '" + path + "': " + e.what());
  }
  if (!j.is_array()) {
    throw ConfigError("ablation matrix '" + path + "' must be a JSON array");
  }
  std::vector<AblationArm> arms;
  for (const auto& item : j) {
    AblationArm arm;
    arm.name = item.at("name").get<std::string>();
    if (item.contains("overrides")) {
      for (const auto& [key, value] : item.at("overrides").items()) {
        arm.overrides.emplace_back(
            key, value.is_string() ? value.get<std::string>() : value.dump());
      }
    }
    arms.push_back(std::move(arm));
  }
  return arms;
}

std::vector<AblationRow> run_ablation(
    const RunConfig& base, const std::vector<AblationArm>& arms,
    const std::vector<uint64_t>& seeds, int jobs,
    const std::function<void(const std::string&)>& progress) {
  // Every override must name a known key and produce a valid config before
  // any training starts.
  std::vector<RunConfig> configs;
  for (const AblationArm& arm : arms) {
    RunConfig cfg = base;
    for (const auto& [key, value] : arm.overrides) cfg.set(key, value);
    cfg.validate();
    configs.push_back(std::move(cfg));
  }

  struct Job {
    size_t arm;
    size_t seed_idx;
  };
  std::vector<Job> todo;
  for (size_t a = 0; a < arms.size(); ++a) {
    for (size_t s = 0; s < seeds.size(); ++s) todo.push_back({a, s});
  }
  std::vector<AblationRow> rows(todo.size());

  std::mutex mu;
  size_t next = 0;
  auto worker = [&]() {
    for (;;) {
      size_t mine;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= todo.size()) return;
        mine = next++;
      }
      const Job& job = todo[mine];
      RunConfig cfg = configs[job.arm];
      cfg.seed = seeds[job.seed_idx];
      Dataset data = generate_dataset(cfg);
      Model model(cfg);
      TrainResult result = train_model(model, data);
      // Test the checkpointed (best-on-validation) parameters.
      result.best.restore_into(model);
      AblationRow row;
      row.config = arms[job.arm].name;
      row.seed = cfg.seed;
      row.test = evaluate(model, data.gather(data.test_idx));
      {
        std::lock_guard<std::mutex> lock(mu);
        rows[mine] = std::move(row);
        if (progress) {
          progress(arms[job.arm].name + " seed " +
                   std::to_string(seeds[job.seed_idx]) + " done");
        }
      }
    }
  };

  const int n_threads = std::max(1, jobs);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write ablation CSV '" + path + "'");
  out << "config,seed,DIAG,PN,BWV,VS,PIG,STR,DaG,RS,AVG,meanF1\n";
  char buf[32];
  for (const AblationRow& r : rows) {
    out << r.config << "," << r.seed;
    for (int t = 0; t < kNumTasks; ++t) {
      std::snprintf(buf, sizeof(buf), "%.4f",
                    r.test.accuracy[static_cast<size_t>(t)]);
      out << "," << buf;
    }
    std::snprintf(buf, sizeof(buf), "%.4f", r.test.avg);
    out << "," << buf;
    std::snprintf(buf, sizeof(buf), "%.4f", r.test.mean_f1);
    out << "," << buf << "\n";
  }
}

std::string ablation_summary(const std::vector<AblationArm>& arms,
                             const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "config";
  const TaskSpec& spec = TaskSpec::instance();
  for (int t = 0; t < kNumTasks; ++t) os << "," << spec.task(t).name;
  os << ",AVG\n";
  char buf[64];
  for (const AblationArm& arm : arms) {
    std::vector<const AblationRow*> mine;
    for (const AblationRow& r : rows) {
      if (r.config == arm.name) mine.push_back(&r);
    }
    if (mine.empty()) continue;
    os << arm.name;
    auto cell = [&](auto getter) {
      double mean = 0.0;
      for (const AblationRow* r : mine) mean += getter(*r);
      mean /= static_cast<double>(mine.size());
      double var = 0.0;
      for (const AblationRow* r : mine) {
        const double d = getter(*r) - mean;
        var += d * d;
      }
      const double stdev =
          mine.size() > 1
              ? std::sqrt(var / static_cast<double>(mine.size() - 1))
              : 0.0;
      std::snprintf(buf, sizeof(buf), "%.2f±%.2f", mean, stdev);
      os << "," << buf;
    };
    for (int t = 0; t < kNumTasks; ++t) {
      cell([t](const AblationRow& r) {
        return r.test.accuracy[static_cast<size_t>(t)];
      });
    }
    cell([](const AblationRow& r) { return r.test.avg; });
    os << "\n";
  }
  return os.str();
}

}  // namespace dermfuse
