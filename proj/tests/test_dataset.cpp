#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"

#include "affbench/dataset.hpp"

using namespace affbench;

namespace {

/// In-memory manifest covering n_objects x 4 x 4 x reps; image paths are
/// plausible but the files need not exist.
Manifest synthetic_manifest(int n_objects, int reps) {
  Manifest m;
  m.metadata["image_width"] = "640";
  m.metadata["image_height"] = "480";
  for (int o = 1; o <= n_objects; ++o)
    for (int t = 0; t < 4; ++t)
      for (int a = 0; a < 4; ++a)
        for (int r = 1; r <= reps; ++r) {
          Sample s;
          s.object_id = o;
          s.tool = static_cast<Tool>(t);
          s.action = static_cast<Action>(a);
          s.repetition = r;
          for (CameraId cam : {CameraId::left, CameraId::center, CameraId::right})
            for (int phase : {0, 1})
              s.images[{cam, phase}] = s.key() + "/" + to_string(cam) + (phase ? "_f" : "_i") + ".png";
          m.samples.push_back(std::move(s));
        }
  return m;
}

}  // namespace

TEST_CASE("enum names round trip") {
  for (int i = 0; i < 4; ++i) {
    CHECK(tool_from_string(to_string(static_cast<Tool>(i))) == static_cast<Tool>(i));
    CHECK(action_from_string(to_string(static_cast<Action>(i))) == static_cast<Action>(i));
  }
  CHECK(std::string(to_string(Tool::boomerang)) == "boomerang");
  CHECK(std::string(to_string(Tool::ruler)) == "ruler");
  CHECK(std::string(to_string(Tool::slingshot)) == "slingshot");
  CHECK(std::string(to_string(Tool::spatula)) == "spatula");
  CHECK(std::string(to_string(Action::push)) == "push");
  CHECK(std::string(to_string(Action::pull)) == "pull");
  CHECK(std::string(to_string(Action::left_to_right)) == "left_to_right");
  CHECK(std::string(to_string(Action::right_to_left)) == "right_to_left");
  CHECK_THROWS(tool_from_string("hammer"));
  CHECK_THROWS(action_from_string("lift"));
}

TEST_CASE("joint label bijection over all 16 pairs") {
  std::set<int> seen;
  for (int t = 0; t < 4; ++t)
    for (int a = 0; a < 4; ++a) {
      int label = encode_joint_label(static_cast<Tool>(t), static_cast<Action>(a));
      CHECK(label >= 0);
      CHECK(label < 16);
      seen.insert(label);
      auto [tt, aa] = decode_joint_label(label);
      CHECK(tt == static_cast<Tool>(t));
      CHECK(aa == static_cast<Action>(a));
    }
  CHECK(seen.size() == 16);
  CHECK(encode_joint_label(Tool::slingshot, Action::pull) == 2 * 4 + 1);
}

TEST_CASE("action one-hot encoding") {
  for (int a = 0; a < 4; ++a) {
    auto v = encode_action(static_cast<Action>(a));
    for (int i = 0; i < 4; ++i) CHECK(v[static_cast<size_t>(i)] == (i == a ? 1.0f : 0.0f));
  }
}

TEST_CASE("split covers, is disjoint, and cuts every group exactly 6/2/2") {
  Manifest m = synthetic_manifest(20, 10);
  REQUIRE(m.samples.size() == 3200);
  SplitSet s = split_by_repetition(m, {6, 2, 2}, 17);

  CHECK(s.train.size() == 1920);
  CHECK(s.val.size() == 640);
  CHECK(s.test.size() == 640);

  std::set<int> all;
  for (const auto* part : {&s.train, &s.val, &s.test})
    for (int i : *part) {
      CHECK(all.insert(i).second);  // disjoint
      CHECK(i >= 0);
      CHECK(i < 3200);
    }
  CHECK(all.size() == 3200);  // covering

  // Exactly 6/2/2 inside every (object, tool, action) group.
  auto group_of = [&](int idx) {
    const Sample& sm = m.samples[static_cast<size_t>(idx)];
    return std::make_tuple(sm.object_id, sm.tool, sm.action);
  };
  std::map<std::tuple<int, Tool, Action>, std::array<int, 3>> counts;
  for (int i : s.train) counts[group_of(i)][0]++;
  for (int i : s.val) counts[group_of(i)][1]++;
  for (int i : s.test) counts[group_of(i)][2]++;
  CHECK(counts.size() == 320);
  for (const auto& [g, c] : counts) {
    CHECK(c[0] == 6);
    CHECK(c[1] == 2);
    CHECK(c[2] == 2);
  }
}

TEST_CASE("split is deterministic per seed and differs across seeds") {
  Manifest m = synthetic_manifest(4, 10);
  SplitSet a = split_by_repetition(m, {6, 2, 2}, 5);
  SplitSet b = split_by_repetition(m, {6, 2, 2}, 5);
  SplitSet c = split_by_repetition(m, {6, 2, 2}, 6);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.test == b.test);
  CHECK(a.train != c.train);
}

TEST_CASE("removing one group leaves every other group's split unchanged") {
  Manifest big = synthetic_manifest(4, 10);
  Manifest small = big;
  small.samples.erase(small.samples.begin(), small.samples.begin() + 160);  // drop object 1

  SplitSet sb = split_by_repetition(big, {6, 2, 2}, 9);
  SplitSet ss = split_by_repetition(small, {6, 2, 2}, 9);

  auto keys_of = [](const Manifest& m, const std::vector<int>& idx) {
    std::set<std::string> out;
    for (int i : idx) out.insert(m.samples[static_cast<size_t>(i)].key());
    return out;
  };
  std::set<std::string> big_train = keys_of(big, sb.train);
  for (const std::string& k : keys_of(small, ss.train)) CHECK(big_train.count(k) == 1);
}

TEST_CASE("split rejects bad ratios and incomplete groups") {
  Manifest m = synthetic_manifest(2, 10);
  CHECK_THROWS(split_by_repetition(m, {5, 2, 2}, 0));
  m.samples.pop_back();
  CHECK_THROWS(split_by_repetition(m, {6, 2, 2}, 0));
}

TEST_CASE("manifest json round trip") {
  Manifest m = synthetic_manifest(2, 3);
  m.metadata["generator"] = "test";
  auto path = std::filesystem::temp_directory_path() / "affbench_manifest.json";
  save_manifest(m, path.string());
  Manifest back = load_manifest(path.string());

  REQUIRE(back.samples.size() == m.samples.size());
  for (size_t i = 0; i < m.samples.size(); ++i) {
    CHECK(back.samples[i].key() == m.samples[i].key());
    CHECK(back.samples[i].images == m.samples[i].images);
  }
  CHECK(back.metadata.at("generator") == "test");
  std::filesystem::remove(path);
}

TEST_CASE("load_manifest rejects duplicates and incomplete image sets") {
  Manifest m = synthetic_manifest(1, 2);
  auto path = std::filesystem::temp_directory_path() / "affbench_manifest_bad.json";

  Manifest dup = m;
  dup.samples.push_back(dup.samples.front());
  save_manifest(dup, path.string());
  CHECK_THROWS(load_manifest(path.string()));

  Manifest incomplete = m;
  incomplete.samples.front().images.erase({CameraId::left, 0});
  save_manifest(incomplete, path.string());
  CHECK_THROWS(load_manifest(path.string()));
  std::filesystem::remove(path);
}

TEST_CASE("validate_manifest reports missing grid combinations and files") {
  Manifest m = synthetic_manifest(2, 10);
  m.base_dir = std::filesystem::temp_directory_path().string();
  m.samples.erase(m.samples.begin());  // drop one repetition
  ValidationReport rep = validate_manifest(m, /*check_files=*/true);
  CHECK_FALSE(rep.clean());
  CHECK(rep.missing_combinations.size() == 1);
  CHECK_FALSE(rep.missing_files.empty());
}

TEST_CASE("stream arithmetic per variant") {
  CHECK(stream_count(FusionVariant::stacked_3c1n) == 1);
  CHECK(stream_channels(FusionVariant::stacked_3c1n) == 18);
  CHECK(stream_count(FusionVariant::separate_3c6n) == 6);
  CHECK(stream_count(FusionVariant::shared_3c3n) == 6);
  CHECK(stream_count(FusionVariant::separate_central_1c2n) == 2);
  CHECK(stream_count(FusionVariant::shared_central_1c1n) == 2);
  for (FusionVariant v : {FusionVariant::separate_3c6n, FusionVariant::separate_central_1c2n,
                          FusionVariant::shared_3c3n, FusionVariant::shared_central_1c1n})
    CHECK(stream_channels(v) == 3);
}

TEST_CASE("variant names round trip") {
  for (int i = 0; i < 5; ++i) {
    auto v = static_cast<FusionVariant>(i);
    CHECK(variant_from_string(to_string(v)) == v);
  }
  CHECK(std::string(to_string(FusionVariant::stacked_3c1n)) == "3C-1N");
  CHECK(std::string(to_string(FusionVariant::shared_central_1c1n)) == "1C-1N");
  CHECK_THROWS(variant_from_string("9C-9N"));
}
