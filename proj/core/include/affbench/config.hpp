#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "affbench/synthetic.hpp"
#include "affbench/trainer.hpp"

namespace affbench {

/// Benchmark task. Each task pins the head mode of the model it trains.
enum class Task : int {
  tools = 0,             // 4-way tool head, action one-hot appended to features
  tools_no_actions = 1,  // 4-way tool head, images only
  tools_plus_actions = 2,  // dual head: tool and action
  actions_only = 3,        // 4-way action head
  joint16 = 4,             // single 16-way (tool, action) head
};

const char* to_string(Task t);
Task task_from_string(const std::string& s);
HeadMode head_mode_for(Task t);

/// One fully resolved run description. Everything a subcommand needs comes
/// from here; CLI flags are dotted-path overrides applied to the same
/// document before resolution.
struct RunSpec {
  RunSpec() { train.model.head = head_mode_for(task); }

  Task task = Task::joint16;
  std::string dataset;  // manifest path, or a directory containing manifest.json
  std::string out_dir = "runs";
  std::vector<uint64_t> seeds{0, 1, 2, 3, 4};
  uint64_t split_seed = 0;
  std::array<int, 3> split_ratios{6, 2, 2};
  double ci_z = 1.96;

  TrainConfig train;  // train.model is kept consistent with `task`
  GridSpec grid;

  SceneSpec scene;         // for `generate`
  uint64_t scene_seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static RunSpec from_json(const nlohmann::json& j);  // unknown keys rejected

  /// Hash of the canonical resolved document; names the run directory.
  std::string content_hash() const;
  std::string run_dir() const;

  /// Dataset path with the data-root env fallback applied.
  std::string manifest_path() const;
};

/// Set a value at a dotted path ("train.learning_rate=5e-4"). The value is
/// parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Load a JSON config file (or start from defaults when `path` is empty),
/// apply overrides in order, and resolve.
RunSpec load_run_spec(const std::string& path, const std::vector<std::string>& overrides = {});

/// Env var consulted when `dataset` is a relative path: AFFBENCH_DATA_ROOT.
extern const char* kDataRootEnv;

}  // namespace affbench
