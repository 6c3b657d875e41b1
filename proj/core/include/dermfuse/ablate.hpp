#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dermfuse/config.hpp"
#include "dermfuse/metrics.hpp"

namespace dermfuse {

struct AblationArm {
  std::string name;
  std::vector<std::pair<std::string, std::string>> overrides;
};

struct AblationRow {
  std::string config;
  uint64_t seed = 0;
  Metrics test;
};

// The five classic ablation arms: concat baseline with bce, fusion on with
// either loss, and the correlation head on top of both.
std::vector<AblationArm> table4_arms();
// Modality-mask arms (single and paired streams plus the full set).
std::vector<AblationArm> modality_arms();
// Decision-feature concatenation arms.
std::vector<AblationArm> decision_arms();

// Loads arms from a JSON file: [{"name": ..., "overrides": {key: value}}].
std::vector<AblationArm> load_arms_json(const std::string& path);

// Runs every arm x seed (train + test evaluation). All override keys are
// validated before any run starts. Results are ordered by (arm, seed)
// regardless of completion order; jobs > 1 runs configurations on a thread
// pool (each run owns its tape, dataset, and model).
std::vector<AblationRow> run_ablation(
    const RunConfig& base, const std::vector<AblationArm>& arms,
    const std::vector<uint64_t>& seeds, int jobs,
    const std::function<void(const std::string&)>& progress = {});

// Per-run rows: config, seed, eight task accuracies, AVG, meanF1.
void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::string& path);
// Aggregate table: one row per arm, mean +/- std over seeds per column.
std::string ablation_summary(const std::vector<AblationArm>& arms,
                             const std::vector<AblationRow>& rows);

}  // namespace dermfuse
