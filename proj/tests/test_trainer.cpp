#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"

#include "affbench/evaluator.hpp"
#include "affbench/trainer.hpp"
#include "fixtures.hpp"

using namespace affbench;

TEST_CASE("derive_seed separates streams and seeds") {
  std::set<uint64_t> seen;
  for (uint64_t s : {0ull, 1ull, 2ull})
    for (const char* stream : {"init", "shuffle/0", "shuffle/1"})
      CHECK(seen.insert(derive_seed(s, stream)).second);
}

TEST_CASE("grid spec enumerates the full cartesian product") {
  GridSpec grid;
  CHECK(grid.size() == 72);
  TrainConfig base;
  auto configs = grid.enumerate(base);
  REQUIRE(configs.size() == 72);
  std::set<std::tuple<double, int, int, int>> distinct;
  for (const auto& c : configs)
    distinct.insert({c.learning_rate, c.batch_size, c.model.first_kernel, c.model.first_stride});
  CHECK(distinct.size() == 72);
}

TEST_CASE("singleton grid returns exactly the base point") {
  GridSpec grid;
  grid.learning_rates = {5e-4};
  grid.batch_sizes = {16};
  grid.first_kernels = {5};
  grid.first_strides = {1};
  TrainConfig base;
  auto configs = grid.enumerate(base);
  REQUIRE(configs.size() == 1);
  CHECK(configs[0].learning_rate == 5e-4);
  CHECK(configs[0].batch_size == 16);
  CHECK(configs[0].model.first_kernel == 5);
  CHECK(configs[0].model.first_stride == 1);
}

TEST_CASE("trial csv round trips") {
  std::vector<TrialRow> rows(2);
  rows[0] = {1e-3, 32, 7, 2, 4, 0.75, 0.7, 12.5, false, ""};
  rows[1] = {5e-4, 16, 3, 1, 4, -1, -1, 0.1, true, "boom"};
  auto path = std::filesystem::temp_directory_path() / "affbench_trials.csv";
  save_trial_csv(rows, path.string());
  auto back = load_trial_csv(path.string());
  REQUIRE(back.size() == 2);
  CHECK(back[0].lr == 1e-3);
  CHECK(back[0].batch == 32);
  CHECK(back[0].best_val == doctest::Approx(0.75));
  CHECK(back[1].failed);
  std::filesystem::remove(path);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS(cfg.validate());
  cfg.epochs = 1;
  cfg.learning_rate = 0;
  CHECK_THROWS(cfg.validate());
  cfg.learning_rate = 1e-3;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("training run: deterministic history, best checkpoint, early stop") {
  Manifest m = testing::tiny_manifest_one_tool();
  REQUIRE(m.samples.size() == 40);
  SplitSet splits = split_by_repetition(m, {6, 2, 2}, 1);
  PreprocessCache cache(&m);

  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.seed = 3;
  cfg.model.variant = FusionVariant::shared_central_1c1n;
  cfg.model.head = HeadMode::action;

  TrainResult a = train(cfg, m, splits, &cache);
  REQUIRE(a.history.epochs.size() == 2);
  CHECK(a.history.best_epoch >= 0);
  CHECK(a.history.best_val_metric ==
        doctest::Approx(a.history.epochs[static_cast<size_t>(a.history.best_epoch)].val_metric));

  TrainResult b = train(cfg, m, splits, &cache);
  for (size_t e = 0; e < 2; ++e) {
    CHECK(a.history.epochs[e].train_loss == b.history.epochs[e].train_loss);
    CHECK(a.history.epochs[e].val_metric == b.history.epochs[e].val_metric);
  }

  TrainConfig other = cfg;
  other.seed = 4;
  TrainResult c = train(other, m, splits, &cache);
  CHECK(a.history.epochs[0].train_loss != c.history.epochs[0].train_loss);

  // The returned model carries the best-epoch weights: its evaluation equals
  // the recorded best metric.
  EvalReport rep = evaluate(*a.model, m, splits.val, &cache, cfg.batch_size);
  CHECK(rep.headline() == doctest::Approx(a.history.best_val_metric));

  TrainConfig stop = cfg;
  stop.epochs = 5;
  stop.early_stop_val_acc = 1e-9;
  TrainResult d = train(stop, m, splits, &cache);
  CHECK(d.history.epochs.size() == 1);

  auto csv = std::filesystem::temp_directory_path() / "affbench_history.csv";
  save_history_csv(a.history, csv.string());
  CHECK(std::filesystem::file_size(csv) > 0);
  std::filesystem::remove(csv);
}

TEST_CASE("train aborts on divergence with a diagnosable message") {
  Manifest m = testing::tiny_manifest_one_tool();
  SplitSet splits = split_by_repetition(m, {6, 2, 2}, 1);
  PreprocessCache cache(&m);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 24;
  cfg.learning_rate = 1e18;  // guaranteed blow-up
  cfg.model.head = HeadMode::action;
  CHECK_THROWS_WITH_AS(train(cfg, m, splits, &cache), doctest::Contains("non-finite loss"),
                       std::runtime_error);
}
