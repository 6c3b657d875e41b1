// Command-line entry point: synthetic data generation, training, evaluation,
// gradient checking, ablation sweeps, and report rendering.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "dermfuse/ablate.hpp"
#include "dermfuse/blockcheck.hpp"
#include "dermfuse/checkpoint.hpp"
#include "dermfuse/data.hpp"
#include "dermfuse/report.hpp"
#include "dermfuse/train.hpp"

namespace fs = std::filesystem;
using namespace dermfuse;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitCheckFailed = 5;

struct GlobalArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  int64_t seed = -1;
};

RunConfig effective_config(const GlobalArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) cfg = RunConfig::load_file(args.config_path);
  for (const std::string& kv : args.overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (args.seed >= 0) cfg.seed = static_cast<uint64_t>(args.seed);
  cfg.validate();
  return cfg;
}

fs::path resolve_out_dir(const GlobalArgs& args, const std::string& sub,
                         const RunConfig& cfg) {
  if (!args.out_dir.empty()) return fs::path(args.out_dir);
  const char* root = std::getenv("DERMFUSE_OUT");
  fs::path base = root && *root ? fs::path(root) : fs::path("runs");
  return base / (sub + "-" + cfg.hash_hex().substr(0, 8) + "-s" +
                 std::to_string(cfg.seed));
}

// Echo the effective config before any work so a crash still leaves the run
// reproducible.
fs::path prepare_out_dir(const GlobalArgs& args, const std::string& sub,
                         const RunConfig& cfg) {
  const fs::path dir = resolve_out_dir(args, sub, cfg);
  fs::create_directories(dir);
  cfg.save_file((dir / "effective.ini").string());
  return dir;
}

Dataset dataset_for(const RunConfig& cfg, const std::string& data_csv) {
  if (data_csv.empty()) return generate_dataset(cfg);
  SplitSizes sizes{cfg.data.n_train, cfg.data.n_val, cfg.data.n_test};
  return load_derm7pt_csv(data_csv, cfg.encoder.image_size, sizes, cfg.seed);
}

void write_predictions_jsonl(const Model& model,
                             const std::vector<Sample>& split,
                             const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write predictions '" + path + "'");
  const TaskSpec& spec = TaskSpec::instance();
  for (const Sample& s : split) {
    Prediction p = model.predict(s);
    nlohmann::json rec;
    rec["case_id"] = s.case_id;
    nlohmann::json tasks;
    for (int t = 0; t < kNumTasks; ++t) {
      nlohmann::json entry;
      entry["pred"] =
          spec.task(t).classes[static_cast<size_t>(
              p.classes[static_cast<size_t>(t)])];
      entry["probs"] = p.probabilities[static_cast<size_t>(t)];
      tasks[spec.task(t).name] = entry;
    }
    rec["tasks"] = tasks;
    out << rec.dump() << "\n";
  }
}

std::string metrics_table_text(const Metrics& m, const std::string& label) {
  CsvTable table;
  table.header = {"config"};
  const TaskSpec& spec = TaskSpec::instance();
  for (int t = 0; t < kNumTasks; ++t) table.header.push_back(spec.task(t).name);
  table.header.push_back("AVG");
  table.header.push_back("meanF1");
  std::vector<std::string> row{label};
  char buf[32];
  for (int t = 0; t < kNumTasks; ++t) {
    std::snprintf(buf, sizeof(buf), "%.2f", m.accuracy[static_cast<size_t>(t)]);
    row.push_back(buf);
  }
  std::snprintf(buf, sizeof(buf), "%.2f", m.avg);
  row.push_back(buf);
  std::snprintf(buf, sizeof(buf), "%.2f", m.mean_f1);
  row.push_back(buf);
  table.rows.push_back(std::move(row));
  return render_table(table);
}

int cmd_gen_data(const GlobalArgs& args) {
  RunConfig cfg = effective_config(args);
  const fs::path dir = prepare_out_dir(args, "gen-data", cfg);
  Dataset ds = generate_dataset(cfg);
  write_csv(ds, (dir / "dataset.csv").string());
  write_manifest((dir / "manifest.json").string(), cfg.seed, cfg.hash_hex(),
                 {cfg.data.n_train, cfg.data.n_val, cfg.data.n_test});
  std::cout << "wrote " << (dir / "dataset.csv").string() << " ("
            << ds.samples.size() << " samples)\n";
  return kExitOk;
}

int cmd_train(const GlobalArgs& args, const std::string& data_csv) {
  RunConfig cfg = effective_config(args);
  const fs::path dir = prepare_out_dir(args, "train", cfg);
  Dataset data = dataset_for(cfg, data_csv);
  Model model(cfg);
  TrainResult result = train_model(model, data);
  result.best.save((dir / "checkpoint.bin").string());
  write_history_csv(result.history, cfg.hash_hex().substr(0, 8), cfg.seed,
                    (dir / "history.csv").string());
  std::cout << "trained " << cfg.train.epochs << " epochs; best val AVG = ";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", result.best.best_val_avg);
  std::cout << buf << "\n"
            << "wrote " << (dir / "checkpoint.bin").string() << "\n";
  return kExitOk;
}

int cmd_eval(const GlobalArgs& args, const std::string& checkpoint_path,
             const std::string& split_name, const std::string& data_csv) {
  Checkpoint ckpt = Checkpoint::load(checkpoint_path);
  RunConfig cfg = ckpt.config();
  const fs::path dir = prepare_out_dir(args, "eval", cfg);
  Model model(cfg);
  ckpt.restore_into(model);

  Dataset data = dataset_for(cfg, data_csv);
  const std::vector<int64_t>* idx = &data.test_idx;
  if (split_name == "train") {
    idx = &data.train_idx;
  } else if (split_name == "val") {
    idx = &data.val_idx;
  } else if (split_name != "test") {
    throw ConfigError("--split must be train, val, or test");
  }
  const std::vector<Sample> split = data.gather(*idx);
  Metrics m = evaluate(model, split);

  std::ofstream((dir / "metrics.json").string(), std::ios::binary)
      << m.to_json() << "\n";
  const std::string table = metrics_table_text(m, split_name);
  std::ofstream((dir / "table.txt").string(), std::ios::binary) << table;
  write_predictions_jsonl(model, split, (dir / "predictions.jsonl").string());
  std::cout << table;
  return kExitOk;
}

int cmd_gradcheck(const GlobalArgs& args) {
  RunConfig cfg = effective_config(args);
  const fs::path dir = prepare_out_dir(args, "gradcheck", cfg);
  const auto results = run_block_checks();
  const std::string report = format_block_checks(results);
  std::ofstream((dir / "gradcheck.txt").string(), std::ios::binary) << report;
  std::cout << report;
  if (!all_blocks_pass(results)) {
    std::cerr << "error: kind=gradcheck code=5: a block failed its gradient "
                 "check\n";
    return kExitCheckFailed;
  }
  return kExitOk;
}

int cmd_ablate(const GlobalArgs& args, const std::string& preset,
               const std::string& matrix_path, const std::string& seeds_arg,
               int jobs) {
  RunConfig base = effective_config(args);
  std::vector<AblationArm> arms;
  if (!matrix_path.empty()) {
    arms = load_arms_json(matrix_path);
  } else if (preset == "table4" || preset.empty()) {
    arms = table4_arms();
  } else if (preset == "modality") {
    arms = modality_arms();
  } else if (preset == "decision") {
    arms = decision_arms();
  } else {
    throw ConfigError("unknown ablation preset '" + preset + "'");
  }

  std::vector<uint64_t> seeds;
  {
    std::istringstream is(seeds_arg);
    std::string tok;
    while (std::getline(is, tok, ',')) {
      if (!tok.empty()) seeds.push_back(std::stoull(tok));
    }
  }
  if (seeds.empty()) seeds.push_back(base.seed);

  const fs::path dir = prepare_out_dir(args, "ablate", base);
  auto rows = run_ablation(base, arms, seeds, jobs,
                           [](const std::string& msg) {
                             std::cout << "  " << msg << "\n" << std::flush;
                           });
  write_ablation_csv(rows, (dir / "report.csv").string());
  const std::string summary = ablation_summary(arms, rows);
  std::ofstream((dir / "summary.csv").string(), std::ios::binary) << summary;

  CsvTable t;
  {
    std::istringstream is(summary);
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
      std::vector<std::string> cells;
      std::string cur;
      for (char c : line) {
        if (c == ',') {
          cells.push_back(cur);
          cur.clear();
        } else {
          cur += c;
        }
      }
      cells.push_back(cur);
      if (first) {
        t.header = cells;
        first = false;
      } else {
        t.rows.push_back(cells);
      }
    }
  }
  const std::string rendered = render_table(t);
  std::ofstream((dir / "summary.txt").string(), std::ios::binary) << rendered;
  std::cout << rendered;
  return kExitOk;
}

int cmd_report(const GlobalArgs& args, const std::vector<std::string>& history,
               const std::string& ablation_csv) {
  RunConfig cfg = effective_config(args);
  const fs::path dir = prepare_out_dir(args, "report", cfg);
  for (const std::string& path : history) {
    CsvTable t = CsvTable::read(path);
    const int loss_col = t.column("train_loss");
    const int avg_col = t.column("AVG");
    if (loss_col < 0 || avg_col < 0) {
      throw DataError("history CSV '" + path +
                      "' lacks train_loss/AVG columns");
    }
    ChartSeries loss{"train_loss", {}};
    ChartSeries avg{"val AVG", {}};
    for (const auto& row : t.rows) {
      loss.values.push_back(std::stod(row[static_cast<size_t>(loss_col)]));
      avg.values.push_back(std::stod(row[static_cast<size_t>(avg_col)]));
    }
    const std::string stem = fs::path(path).stem().string();
    write_svg_chart("training curves: " + stem, {loss, avg},
                    (dir / (stem + ".svg")).string());
    std::cout << "wrote " << (dir / (stem + ".svg")).string() << "\n";
  }
  if (!ablation_csv.empty()) {
    CsvTable t = CsvTable::read(ablation_csv);
    const std::string rendered = render_table(t);
    std::ofstream((dir / "ablation.txt").string(), std::ios::binary)
        << rendered;
    std::cout << rendered;
  }
  return kExitOk;
}

void write_failed_marker(const GlobalArgs& args, const std::string& sub,
                         const std::string& message) {
  // Best effort: flag partial outputs if the directory already exists.
  try {
    RunConfig cfg;
    fs::path dir;
    if (!args.out_dir.empty()) {
      dir = fs::path(args.out_dir);
    } else {
      return;  // auto-named directory may not be derivable after a config error
    }
    if (fs::exists(dir)) {
      std::ofstream((dir / ".failed").string(), std::ios::binary)
          << message << "\n";
    }
  } catch (...) {
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tri-modal multi-label skin lesion classification workbench"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalArgs args;
  app.add_option("--config", args.config_path, "run config file (ini)");
  app.add_option("--set", args.overrides,
                 "override a config key, e.g. --set train.loss=bce");
  app.add_option("--out", args.out_dir, "output directory");
  app.add_option("--seed", args.seed, "override run.seed");

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");

  std::string train_data_csv;
  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--data", train_data_csv,
                    "labels/metadata CSV instead of synthetic data");

  std::string ckpt_path, split_name = "test", eval_data_csv;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")
      ->required();
  eval_cmd->add_option("--split", split_name, "train|val|test (default test)");
  eval_cmd->add_option("--data", eval_data_csv,
                       "labels/metadata CSV instead of synthetic data");

  auto* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference checks for every registered block");

  std::string preset, matrix_path, seeds_arg;
  int jobs = 1;
  auto* ablate = app.add_subcommand("ablate", "run an ablation matrix");
  ablate->add_option("--preset", preset, "table4|modality|decision");
  ablate->add_option("--matrix", matrix_path, "JSON file with custom arms");
  ablate->add_option("--seeds", seeds_arg, "comma-separated seed list");
  ablate->add_option("--jobs", jobs, "parallel runs (default 1)");

  std::vector<std::string> history_paths;
  std::string ablation_csv;
  auto* report = app.add_subcommand("report", "render tables and charts");
  report->add_option("--history", history_paths, "history CSV files");
  report->add_option("--ablation", ablation_csv, "ablation report CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  std::string sub;
  try {
    if (gen->parsed()) {
      sub = "gen-data";
      return cmd_gen_data(args);
    }
    if (train->parsed()) {
      sub = "train";
      return cmd_train(args, train_data_csv);
    }
    if (eval_cmd->parsed()) {
      sub = "eval";
      return cmd_eval(args, ckpt_path, split_name, eval_data_csv);
    }
    if (gradcheck->parsed()) {
      sub = "gradcheck";
      return cmd_gradcheck(args);
    }
    if (ablate->parsed()) {
      sub = "ablate";
      return cmd_ablate(args, preset, matrix_path, seeds_arg, jobs);
    }
    if (report->parsed()) {
      sub = "report";
      return cmd_report(args, history_paths, ablation_csv);
    }
  } catch (const ConfigError& e) {
    write_failed_marker(args, sub, e.what());
    std::cerr << "error: kind=config code=2: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    write_failed_marker(args, sub, e.what());
    std::cerr << "error: kind=data code=3: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    write_failed_marker(args, sub, e.what());
    std::cerr << "error: kind=numeric code=4: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    write_failed_marker(args, sub, e.what());
    std::cerr << "error: kind=internal code=1: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
