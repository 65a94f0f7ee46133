#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "affbench/config.hpp"
#include "affbench/evaluator.hpp"
#include "affbench/synthetic.hpp"
#include "affbench/trainer.hpp"

namespace fs = std::filesystem;
using namespace affbench;

namespace {

constexpr int kExitUser = 1;
constexpr int kExitRuntime = 2;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("-c,--config", opts.config_path, "JSON config file");
  cmd->add_option("--set", opts.overrides,
                  "Dotted-path override, e.g. --set train.learning_rate=5e-4");
}

RunSpec resolve(const CommonOpts& opts) { return load_run_spec(opts.config_path, opts.overrides); }

/// Writes the resolved config snapshot and returns the run directory.
fs::path prepare_run_dir(const RunSpec& spec) {
  fs::path dir(spec.run_dir());
  fs::create_directories(dir);
  std::ofstream out(dir / "config.json");
  out << spec.to_json().dump(2) << '\n';
  return dir;
}

SplitSet make_splits(const RunSpec& spec, const Manifest& m) {
  return split_by_repetition(m, spec.split_ratios, spec.split_seed);
}

ReportRow make_report_row(const RunSpec& spec, const RunResult& rr, const EvalReport& sample_rep) {
  ReportRow row;
  row.task = to_string(spec.task);
  row.variant = to_string(spec.train.model.variant);
  row.depth = spec.train.model.depth;
  row.head_mode = to_string(spec.train.model.head);
  row.n_seeds = rr.n_seeds;
  row.mean_acc = rr.mean;
  row.ci_half = rr.ci_half_width;
  row.tool_acc = sample_rep.tool_acc;
  row.action_acc = sample_rep.action_acc;
  row.joint_acc = sample_rep.joint_acc;
  return row;
}

int cmd_generate(const CommonOpts& opts) {
  RunSpec spec = resolve(opts);
  fs::path run_dir = prepare_run_dir(spec);
  fs::path out = run_dir / "dataset";
  GeneratedDataset ds = generate_dataset(spec.scene, spec.scene_seed, out.string());
  std::cout << "manifest: " << (out / "manifest.json").string() << "\n"
            << "samples: " << ds.manifest.samples.size() << "\n"
            << "images: " << ds.manifest.samples.size() * 6 << "\n";
  return 0;
}

int cmd_validate(const CommonOpts& opts) {
  RunSpec spec = resolve(opts);
  Manifest m = load_manifest(spec.manifest_path());
  ValidationReport rep = validate_manifest(m);
  for (const auto& s : rep.missing_combinations) std::cout << "error: missing combination " << s << "\n";
  for (const auto& s : rep.missing_files) std::cout << "error: missing file " << s << "\n";
  for (const auto& s : rep.dimension_mismatches) std::cout << "warning: dimensions " << s << "\n";
  std::cout << "samples: " << m.samples.size() << "\n"
            << (rep.clean() ? "valid" : "invalid") << "\n";
  return rep.clean() ? 0 : kExitUser;
}

int cmd_train(const CommonOpts& opts, bool dry_run) {
  RunSpec spec = resolve(opts);
  Manifest m = load_manifest(spec.manifest_path());
  SplitSet splits = make_splits(spec, m);
  PreprocessCache cache(&m);

  if (dry_run) {
    std::cout << spec.to_json().dump(2) << "\n";
    FusionModel model(spec.train.model);
    model.init_weights(derive_seed(spec.train.seed, "init"));
    std::vector<int> first(splits.train.begin(),
                           splits.train.begin() +
                               std::min<size_t>(splits.train.size(), spec.train.batch_size));
    Batch b = make_batch(m, first, spec.train.model.variant, spec.train.model.head, &cache);
    Logits logits = model.forward(b, false);
    (void)logits;
    std::cout << "dry run ok: one batch of " << first.size() << " through "
              << spec.train.model.describe() << "\n";
    return 0;
  }

  fs::path run_dir = prepare_run_dir(spec);
  TrainResult r = train(spec.train, m, splits, &cache, [&](int epoch, const EpochStats& s) {
    std::cout << "epoch " << epoch << " loss " << s.train_loss << " train_acc " << s.train_acc
              << " val " << s.val_metric << std::endl;
  });
  r.model->save_checkpoint((run_dir / "checkpoint.bin").string());
  save_history_csv(r.history, (run_dir / "history.csv").string());

  EvalReport test = evaluate(*r.model, m, splits.test, &cache, spec.train.batch_size);
  std::cout << "best_epoch: " << r.history.best_epoch << "\n"
            << "best_val: " << r.history.best_val_metric << "\n"
            << "test_acc: " << test.headline() << "\n"
            << "checkpoint: " << (run_dir / "checkpoint.bin").string() << "\n";
  return 0;
}

int cmd_gridsearch(const CommonOpts& opts) {
  RunSpec spec = resolve(opts);
  Manifest m = load_manifest(spec.manifest_path());
  SplitSet splits = make_splits(spec, m);
  PreprocessCache cache(&m);
  fs::path run_dir = prepare_run_dir(spec);

  std::string trial_path = (run_dir / "trials.csv").string();
  GridSearchResult r = grid_search(spec.grid, spec.train, m, splits, &cache, trial_path);
  save_trial_csv(r.trials, trial_path);

  RunSpec best = spec;
  best.train = r.best;
  {
    std::ofstream out(run_dir / "best_config.json");
    out << best.to_json().dump(2) << '\n';
  }
  std::cout << "trials: " << r.trials.size() << "\n"
            << "best: lr=" << r.best.learning_rate << " batch=" << r.best.batch_size
            << " kernel=" << r.best.model.first_kernel << " stride=" << r.best.model.first_stride
            << "\n"
            << "table: " << trial_path << "\n";
  return 0;
}

int cmd_benchmark(const CommonOpts& opts, int jobs) {
  RunSpec spec = resolve(opts);
  Manifest m = load_manifest(spec.manifest_path());
  SplitSet splits = make_splits(spec, m);
  fs::path run_dir = prepare_run_dir(spec);

  if (spec.seeds.size() < 2) std::cout << "warning: fewer than 2 seeds, no CI\n";

  RunResult rr;
  rr.seeds = spec.seeds;
  rr.n_seeds = static_cast<int>(spec.seeds.size());
  rr.accuracies.resize(spec.seeds.size());
  rr.tool_accuracies.resize(spec.seeds.size());
  rr.action_accuracies.resize(spec.seeds.size());
  EvalReport last_rep;

  std::mutex io_mu;
  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::string failure;
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(spec.seeds.size())));

  auto worker = [&] {
    PreprocessCache cache(&m);
    for (size_t i = next.fetch_add(1); i < spec.seeds.size() && !failed; i = next.fetch_add(1)) {
      try {
        TrainConfig c = spec.train;
        c.seed = spec.seeds[i];
        TrainResult tr = train(c, m, splits, &cache);
        EvalReport rep = evaluate(*tr.model, m, splits.test, &cache, c.batch_size);
        rr.accuracies[i] = rep.headline();
        rr.tool_accuracies[i] = rep.tool_acc;
        rr.action_accuracies[i] = rep.action_acc;
        std::lock_guard<std::mutex> lk(io_mu);
        last_rep = rep;
        std::cout << "seed " << spec.seeds[i] << ": " << rep.headline() << std::endl;
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lk(io_mu);
        failed = true;
        failure = e.what();
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failed) throw std::runtime_error(failure);

  if (rr.accuracies.size() >= 2) {
    auto [mean, half] = confidence_interval(rr.accuracies, spec.ci_z);
    rr.mean = mean;
    rr.ci_half_width = half;
  } else {
    rr.mean = rr.accuracies[0];
  }

  nlohmann::json j;
  j["seeds"] = rr.seeds;
  j["accuracies"] = rr.accuracies;
  j["tool_accuracies"] = rr.tool_accuracies;
  j["action_accuracies"] = rr.action_accuracies;
  j["mean"] = rr.mean;
  j["ci_half_width"] = rr.ci_half_width;
  j["task"] = to_string(spec.task);
  j["variant"] = to_string(spec.train.model.variant);
  j["depth"] = spec.train.model.depth;
  j["head_mode"] = to_string(spec.train.model.head);
  {
    std::ofstream out(run_dir / "run_result.json");
    out << j.dump(2) << '\n';
  }

  std::vector<std::pair<std::string, ConfusionMatrix>> mats;
  if (!last_rep.tool_labels.empty() && last_rep.tool_acc >= 0)
    mats.emplace_back("tool", confusion(last_rep.tool_preds, last_rep.tool_labels, 4));
  if (!last_rep.action_labels.empty() && last_rep.action_acc >= 0)
    mats.emplace_back("action", confusion(last_rep.action_preds, last_rep.action_labels, 4));
  if (!last_rep.joint_labels.empty() && last_rep.joint_acc >= 0 &&
      spec.train.model.head == HeadMode::joint16)
    mats.emplace_back("joint", confusion(last_rep.joint_preds, last_rep.joint_labels, 16));
  render_report({make_report_row(spec, rr, last_rep)}, mats, run_dir.string());

  std::cout << "mean: " << rr.mean << " ci_half: " << rr.ci_half_width << "\n"
            << "results: " << (run_dir / "run_result.json").string() << "\n";
  return 0;
}

int cmd_report(const CommonOpts& opts, const std::vector<std::string>& results) {
  RunSpec spec = resolve(opts);
  fs::path run_dir = prepare_run_dir(spec);
  if (results.empty()) throw CLI::ValidationError("report", "no run_result.json inputs given");

  std::vector<ReportRow> rows;
  for (const std::string& path : results) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("result file not found: " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    ReportRow row;
    row.task = j.at("task").get<std::string>();
    row.variant = j.at("variant").get<std::string>();
    row.depth = j.at("depth").get<int>();
    row.head_mode = j.at("head_mode").get<std::string>();
    row.n_seeds = static_cast<int>(j.at("seeds").size());
    row.mean_acc = j.at("mean").get<double>();
    row.ci_half = j.at("ci_half_width").get<double>();
    auto mean_of = [&](const char* key) {
      double s = 0;
      int n = 0;
      for (double v : j.at(key)) {
        if (v >= 0) s += v, ++n;
      }
      return n ? s / n : -1.0;
    };
    row.tool_acc = mean_of("tool_accuracies");
    row.action_acc = mean_of("action_accuracies");
    row.joint_acc = row.head_mode == "joint16" || row.head_mode == "dual" ? row.mean_acc : -1;
    rows.push_back(row);
  }
  render_report(rows, {}, run_dir.string());
  std::cout << "report: " << (run_dir / "report.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Before/after multi-camera tool-effect benchmark"};
  app.require_subcommand(1);

  CommonOpts gen_o, val_o, train_o, grid_o, bench_o, report_o;
  bool dry_run = false;
  int jobs = 1;
  std::vector<std::string> report_inputs;

  add_common(app.add_subcommand("generate", "Render a synthetic dataset"), gen_o);
  add_common(app.add_subcommand("validate", "Check a dataset manifest"), val_o);
  auto* train_cmd = app.add_subcommand("train", "Train one model");
  add_common(train_cmd, train_o);
  train_cmd->add_flag("--dry-run", dry_run, "Resolve config, run one batch, exit");
  add_common(app.add_subcommand("gridsearch", "Hyperparameter grid search"), grid_o);
  auto* bench_cmd = app.add_subcommand("benchmark", "Multi-seed train + test");
  add_common(bench_cmd, bench_o);
  bench_cmd->add_option("-j,--jobs", jobs, "Seed fan-out bound")->check(CLI::PositiveNumber);
  auto* report_cmd = app.add_subcommand("report", "Render tables from run results");
  add_common(report_cmd, report_o);
  report_cmd->add_option("results", report_inputs, "run_result.json files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? kExitUser : 0;
  }

  try {
    if (app.got_subcommand("generate")) return cmd_generate(gen_o);
    if (app.got_subcommand("validate")) return cmd_validate(val_o);
    if (app.got_subcommand("train")) return cmd_train(train_o, dry_run);
    if (app.got_subcommand("gridsearch")) return cmd_gridsearch(grid_o);
    if (app.got_subcommand("benchmark")) return cmd_benchmark(bench_o, jobs);
    if (app.got_subcommand("report")) return cmd_report(report_o, report_inputs);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return kExitUser;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUser;
}
