#include "affbench/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace affbench {

const char* kDataRootEnv = "AFFBENCH_DATA_ROOT";

const char* to_string(Task t) {
  switch (t) {
    case Task::tools: return "tools";
    case Task::tools_no_actions: return "tools_no_actions";
    case Task::tools_plus_actions: return "tools_plus_actions";
    case Task::actions_only: return "actions_only";
    case Task::joint16: return "joint16";
  }
  throw std::invalid_argument("bad Task");
}

Task task_from_string(const std::string& s) {
  for (Task t : {Task::tools, Task::tools_no_actions, Task::tools_plus_actions,
                 Task::actions_only, Task::joint16})
    if (s == to_string(t)) return t;
  throw std::invalid_argument("unknown task: " + s);
}

HeadMode head_mode_for(Task t) {
  switch (t) {
    case Task::tools: return HeadMode::tool_with_action;
    case Task::tools_no_actions: return HeadMode::tool;
    case Task::tools_plus_actions: return HeadMode::dual;
    case Task::actions_only: return HeadMode::action;
    case Task::joint16: return HeadMode::joint16;
  }
  throw std::invalid_argument("bad Task");
}

void RunSpec::validate() const {
  train.validate();
  if (train.model.head != head_mode_for(task))
    throw std::invalid_argument("head mode does not match task " + std::string(to_string(task)));
  if (seeds.empty()) throw std::invalid_argument("seeds must be non-empty");
  if (split_ratios[0] + split_ratios[1] + split_ratios[2] != 10)
    throw std::invalid_argument("split ratios must sum to 10");
  if (out_dir.empty()) throw std::invalid_argument("out_dir must be set");
}

nlohmann::json RunSpec::to_json() const {
  nlohmann::json j;
  j["task"] = to_string(task);
  j["dataset"] = dataset;
  j["out_dir"] = out_dir;
  j["seeds"] = seeds;
  j["split_seed"] = split_seed;
  j["split_ratios"] = split_ratios;
  j["ci_z"] = ci_z;
  j["train"] = {
      {"epochs", train.epochs},
      {"learning_rate", train.learning_rate},
      {"batch_size", train.batch_size},
      {"seed", train.seed},
      {"early_stop_val_acc", train.early_stop_val_acc},
      {"early_stop_train_acc", train.early_stop_train_acc},
  };
  j["model"] = {
      {"depth", train.model.depth},
      {"variant", to_string(train.model.variant)},
      {"first_kernel", train.model.first_kernel},
      {"first_stride", train.model.first_stride},
  };
  j["grid"] = {
      {"learning_rates", grid.learning_rates},
      {"batch_sizes", grid.batch_sizes},
      {"first_kernels", grid.first_kernels},
      {"first_strides", grid.first_strides},
  };
  j["scene"] = {
      {"width", scene.width},
      {"height", scene.height},
      {"n_objects", scene.n_objects},
      {"repetitions", scene.repetitions},
      {"degrade_side_cameras", scene.degrade_side_cameras},
      {"blur_sigma", scene.blur_sigma},
      {"noise_sigma", scene.noise_sigma},
      {"seed", scene_seed},
  };
  return j;
}

namespace {

template <typename T>
void take(nlohmann::json& obj, const char* key, T& dst) {
  if (auto it = obj.find(key); it != obj.end()) {
    dst = it->get<T>();
    obj.erase(it);
  }
}

void reject_leftovers(const nlohmann::json& obj, const std::string& where) {
  if (!obj.empty()) {
    std::string keys;
    for (auto& [k, v] : obj.items()) keys += (keys.empty() ? "" : ", ") + k;
    throw std::invalid_argument("unknown config key(s) in " + where + ": " + keys);
  }
}

}  // namespace

RunSpec RunSpec::from_json(const nlohmann::json& in) {
  RunSpec r;
  nlohmann::json j = in;

  std::string task_s = to_string(r.task);
  take(j, "task", task_s);
  r.task = task_from_string(task_s);
  take(j, "dataset", r.dataset);
  take(j, "out_dir", r.out_dir);
  take(j, "seeds", r.seeds);
  take(j, "split_seed", r.split_seed);
  take(j, "split_ratios", r.split_ratios);
  take(j, "ci_z", r.ci_z);

  if (auto it = j.find("train"); it != j.end()) {
    nlohmann::json t = *it;
    take(t, "epochs", r.train.epochs);
    take(t, "learning_rate", r.train.learning_rate);
    take(t, "batch_size", r.train.batch_size);
    take(t, "seed", r.train.seed);
    take(t, "early_stop_val_acc", r.train.early_stop_val_acc);
    take(t, "early_stop_train_acc", r.train.early_stop_train_acc);
    reject_leftovers(t, "train");
    j.erase(it);
  }
  if (auto it = j.find("model"); it != j.end()) {
    nlohmann::json m = *it;
    take(m, "depth", r.train.model.depth);
    std::string variant_s = to_string(r.train.model.variant);
    take(m, "variant", variant_s);
    r.train.model.variant = variant_from_string(variant_s);
    take(m, "first_kernel", r.train.model.first_kernel);
    take(m, "first_stride", r.train.model.first_stride);
    reject_leftovers(m, "model");
    j.erase(it);
  }
  if (auto it = j.find("grid"); it != j.end()) {
    nlohmann::json g = *it;
    take(g, "learning_rates", r.grid.learning_rates);
    take(g, "batch_sizes", r.grid.batch_sizes);
    take(g, "first_kernels", r.grid.first_kernels);
    take(g, "first_strides", r.grid.first_strides);
    reject_leftovers(g, "grid");
    j.erase(it);
  }
  if (auto it = j.find("scene"); it != j.end()) {
    nlohmann::json s = *it;
    take(s, "width", r.scene.width);
    take(s, "height", r.scene.height);
    take(s, "n_objects", r.scene.n_objects);
    take(s, "repetitions", r.scene.repetitions);
    take(s, "degrade_side_cameras", r.scene.degrade_side_cameras);
    take(s, "blur_sigma", r.scene.blur_sigma);
    take(s, "noise_sigma", r.scene.noise_sigma);
    take(s, "seed", r.scene_seed);
    reject_leftovers(s, "scene");
    j.erase(it);
  }
  reject_leftovers(j, "config");

  r.train.model.head = head_mode_for(r.task);
  return r;
}

std::string RunSpec::content_hash() const {
  std::string canon = to_json().dump();  // dump() sorts object keys
  uint64_t h = fnv1a64(canon);
  std::ostringstream os;
  os << std::hex;
  for (int i = 60; i >= 0; i -= 4) os << ((h >> i) & 0xf);
  return os.str();
}

std::string RunSpec::run_dir() const {
  return (std::filesystem::path(out_dir) / content_hash()).string();
}

std::string RunSpec::manifest_path() const {
  std::filesystem::path p(dataset);
  if (p.is_relative())
    if (const char* root = std::getenv(kDataRootEnv); root && *root) p = root / p;
  if (std::filesystem::is_directory(p)) p /= "manifest.json";
  return p.string();
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("override must be path=value: " + assignment);
  std::string path = assignment.substr(0, eq);
  std::string value = assignment.substr(eq + 1);

  nlohmann::json* node = &doc;
  size_t start = 0;
  while (true) {
    size_t dot = path.find('.', start);
    std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw std::invalid_argument("bad override path: " + path);
    if (dot == std::string::npos) {
      nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
      (*node)[key] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

RunSpec load_run_spec(const std::string& path, const std::vector<std::string>& overrides) {
  nlohmann::json doc = nlohmann::json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config file not found: " + path);
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::invalid_argument("config parse error in " + path + ": " + e.what());
    }
  }
  for (const std::string& ov : overrides) apply_override(doc, ov);
  RunSpec r = RunSpec::from_json(doc);
  r.validate();
  return r;
}

}  // namespace affbench
