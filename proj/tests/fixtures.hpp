#pragma once

#include <filesystem>
#include <string>

#include "affbench/synthetic.hpp"

namespace affbench::testing {

/// One-object dataset (160 samples) shared by the tests that need real
/// images. Generated on first use and reused across runs.
inline const std::string& tiny_dataset_dir() {
  static const std::string dir = [] {
    namespace fs = std::filesystem;
    fs::path root = fs::temp_directory_path() / "affbench_test_dataset";
    if (!fs::exists(root / "manifest.json")) {
      SceneSpec spec;
      spec.n_objects = 1;
      generate_dataset(spec, 404, root.string());
    }
    return root.string();
  }();
  return dir;
}

/// Manifest restricted to one tool (40 samples), enough for split + training
/// mechanics without long runtimes.
inline Manifest tiny_manifest_one_tool() {
  Manifest m = load_manifest((std::filesystem::path(tiny_dataset_dir()) / "manifest.json").string());
  Manifest out;
  out.metadata = m.metadata;
  out.base_dir = m.base_dir;
  for (const Sample& s : m.samples)
    if (s.tool == Tool::boomerang) out.samples.push_back(s);
  return out;
}

}  // namespace affbench::testing
