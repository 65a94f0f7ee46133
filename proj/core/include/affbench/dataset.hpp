#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "affbench/image.hpp"
#include "affbench/tensor.hpp"

namespace affbench {

enum class Tool : int { boomerang = 0, ruler = 1, slingshot = 2, spatula = 3 };
enum class Action : int { push = 0, pull = 1, left_to_right = 2, right_to_left = 3 };
enum class CameraId : int { left = 0, center = 1, right = 2 };

constexpr int kNumTools = 4;
constexpr int kNumActions = 4;
constexpr int kNumObjects = 20;
constexpr int kNumRepetitions = 10;

const char* to_string(Tool t);
const char* to_string(Action a);
const char* to_string(CameraId c);
Tool tool_from_string(const std::string& s);      // throws on unknown name
Action action_from_string(const std::string& s);  // throws on unknown name

/// Joint 16-way label: tool*4 + action.
inline int encode_joint_label(Tool t, Action a) {
  return static_cast<int>(t) * kNumActions + static_cast<int>(a);
}
inline std::pair<Tool, Action> decode_joint_label(int label) {
  return {static_cast<Tool>(label / kNumActions), static_cast<Action>(label % kNumActions)};
}

std::array<float, 4> encode_action(Action a);

/// One (object, tool, action, repetition) trial with its six image paths.
struct Sample {
  int object_id = 0;  // 1-based
  Tool tool = Tool::boomerang;
  Action action = Action::push;
  int repetition = 0;  // 1-based
  // Keyed by (camera, phase): phase 0 = initial, 1 = final.
  std::map<std::pair<CameraId, int>, std::string> images;

  std::string key() const;  // "obj/tool/action/rep", unique within a manifest
  const std::string& image(CameraId cam, bool final_phase) const;
};

struct Manifest {
  std::vector<Sample> samples;
  std::map<std::string, std::string> metadata;
  std::string base_dir;  // image paths resolve relative to this

  std::string resolve(const std::string& rel_path) const;
};

Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& m, const std::string& path);

struct ValidationReport {
  std::vector<std::string> missing_combinations;  // vs the full 20x4x4x10 grid
  std::vector<std::string> missing_files;
  std::vector<std::string> dimension_mismatches;
  bool clean() const {
    return missing_combinations.empty() && missing_files.empty() && dimension_mismatches.empty();
  }
};

/// Report-only check of a manifest against the full grid and the filesystem.
/// `expected_objects` defaults to the object ids present in the manifest.
ValidationReport validate_manifest(const Manifest& m, bool check_files = true,
                                   std::optional<int> expected_objects = std::nullopt);

struct SplitSet {
  std::vector<int> train, val, test;  // indices into Manifest::samples
  uint64_t seed = 0;
  std::array<int, 3> ratios{6, 2, 2};
};

/// Repetition-wise split: within every (object, tool, action) group of 10
/// repetitions, a seed-keyed permutation is cut 6/2/2. The permutation is
/// keyed by hash(seed, group), so groups split independently.
SplitSet split_by_repetition(const Manifest& m, std::array<int, 3> ratios, uint64_t seed);

enum class FusionVariant : int {
  stacked_3c1n = 0,
  separate_3c6n = 1,
  separate_central_1c2n = 2,
  shared_3c3n = 3,
  shared_central_1c1n = 4,
};
const char* to_string(FusionVariant v);
FusionVariant variant_from_string(const std::string& s);

enum class HeadMode : int {
  tool = 0,              // 4-way tool, images only
  tool_with_action = 1,  // 4-way tool, one-hot action appended to embedding
  dual = 2,              // 4-way tool + 4-way action
  joint16 = 3,           // 16-way combined
  action = 4,            // 4-way action (ablation task)
};
const char* to_string(HeadMode h);
HeadMode head_mode_from_string(const std::string& s);

/// Number of image streams fed to the encoders for a variant.
int stream_count(FusionVariant v);
/// Channels per stream (18 for stacked, 3 otherwise).
int stream_channels(FusionVariant v);

/// Model-ready mini-batch. `streams[k]` is a [B, C, 128, 128] tensor; the
/// stream order is fixed per variant (see make_batch).
struct Batch {
  std::vector<Tensor> streams;
  Tensor action_onehot;  // [B, 4] when head mode is tool_with_action, else empty
  std::vector<int> tool_labels;
  std::vector<int> action_labels;
  std::vector<int> joint_labels;
  int64_t size() const { return static_cast<int64_t>(tool_labels.size()); }
};

/// Caches preprocessed image tensors so repeated epochs skip decode+resize.
class PreprocessCache {
 public:
  explicit PreprocessCache(const Manifest* manifest) : manifest_(manifest) {}
  const Tensor& get(const Sample& s, CameraId cam, bool final_phase);
  void clear() { cache_.clear(); }

 private:
  const Manifest* manifest_;
  std::map<std::string, Tensor> cache_;
};

/// Assemble a batch for the given fusion variant and head mode.
/// Stream layout:
///   stacked_3c1n:          1 stream, 18 channels = {initial,final} x {L,C,R} x RGB
///   separate_3c6n/shared_3c3n: 6 streams: L_i, C_i, R_i, L_f, C_f, R_f
///   separate_central_1c2n/shared_central_1c1n: 2 streams: C_i, C_f
Batch make_batch(const Manifest& m, const std::vector<int>& indices, FusionVariant variant,
                 HeadMode head, PreprocessCache* cache = nullptr);

}  // namespace affbench
