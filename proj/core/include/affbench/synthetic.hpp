#pragma once

#include <map>
#include <string>
#include <utility>

#include "affbench/dataset.hpp"
#include "affbench/image.hpp"

namespace affbench {

struct Vec2 {
  double x = 0, y = 0;
};

/// Closed-form action/tool effect model. Actions set the displacement
/// direction, tools set its magnitude and the object's final rotation.
/// Magnitude gaps (15 px) are > 4x the positional jitter sigma, so
/// nearest-magnitude decoding recovers the tool from positions alone.
struct EffectTable {
  static Vec2 direction(Action a);       // unit vector, image coordinates (y down)
  static double magnitude(Tool t);       // displacement in px: 30 / 45 / 60 / 75
  static double rotation_deg(Tool t);    // final rotation: 0 / 5 / 10 / 15
  static constexpr double jitter_sigma = 3.0;
  static Tool nearest_tool(double displacement_norm);
};

/// Desk-scale scene description. Defaults generate 640x480 frames with
/// degraded (blurred + noisy) left/right cameras.
struct SceneSpec {
  int width = 640;
  int height = 480;
  int n_objects = 8;      // object ids 1..n_objects
  int repetitions = 10;   // per (object, tool, action)
  bool degrade_side_cameras = true;
  double blur_sigma = 1.5;   // left/right cameras
  double noise_sigma = 8.0;  // additive, 8-bit units, left/right cameras

  /// Margin keeping the object fully in frame before and after the largest
  /// displacement plus 4-sigma jitter.
  double containment_margin() const;
};

/// Final position and rotation after performing (action, tool) from p0.
/// Positional jitter is normal per axis, truncated at 2 sigma so the
/// nearest-magnitude decoding in oracle_infer is always exact.
std::pair<Vec2, double> apply_effect(Vec2 p0, Action a, Tool t, SplitMix64& rng);

/// Camera-to-world affine map applied to pixel coordinates; identity for the
/// center camera, small rotation+translation for left/right.
Vec2 camera_to_world(const SceneSpec& spec, CameraId cam, Vec2 pixel);
Vec2 world_to_camera(const SceneSpec& spec, CameraId cam, Vec2 world);

/// Deterministic rasterization of object `object_id` at `pos` (world
/// coordinates, object centre) with rotation `rot_deg` as seen by `cam`.
/// `scene_key` seeds the background texture (same for initial/final frames
/// of one sample); `noise_key` seeds the per-image sensor noise. When
/// `trail_from` is given (final frames), a drag mark is drawn on the desk
/// from that point to `pos`, under the object.
/// Throws if the object extends past the containment margin.
RawImage render_scene(const SceneSpec& spec, int object_id, Vec2 pos, double rot_deg,
                      CameraId cam, uint64_t scene_key, uint64_t noise_key,
                      const Vec2* trail_from = nullptr);

/// Inverse of the effect model from ground-truth positions. Throws on zero
/// displacement (ambiguous).
std::pair<Action, Tool> oracle_infer(Vec2 p0, Vec2 p1);

struct GroundTruthEntry {
  Vec2 p0, p1;
  double rot_deg = 0;
};

struct GeneratedDataset {
  Manifest manifest;
  std::map<std::string, GroundTruthEntry> truth;  // keyed by Sample::key()
};

/// Renders all (object, tool, action, repetition) combinations x 3 cameras x
/// {initial, final} into out_dir/images, writes out_dir/manifest.json and
/// out_dir/ground_truth.json. Fully deterministic given (spec, seed).
GeneratedDataset generate_dataset(const SceneSpec& spec, uint64_t seed,
                                  const std::string& out_dir);

std::map<std::string, GroundTruthEntry> load_ground_truth(const std::string& path);

}  // namespace affbench
