#include "affbench/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace affbench {

const char* to_string(Tool t) {
  switch (t) {
    case Tool::boomerang: return "boomerang";
    case Tool::ruler: return "ruler";
    case Tool::slingshot: return "slingshot";
    case Tool::spatula: return "spatula";
  }
  throw std::invalid_argument("bad Tool");
}

const char* to_string(Action a) {
  switch (a) {
    case Action::push: return "push";
    case Action::pull: return "pull";
    case Action::left_to_right: return "left_to_right";
    case Action::right_to_left: return "right_to_left";
  }
  throw std::invalid_argument("bad Action");
}

const char* to_string(CameraId c) {
  switch (c) {
    case CameraId::left: return "left";
    case CameraId::center: return "center";
    case CameraId::right: return "right";
  }
  throw std::invalid_argument("bad CameraId");
}

Tool tool_from_string(const std::string& s) {
  for (int i = 0; i < kNumTools; ++i)
    if (s == to_string(static_cast<Tool>(i))) return static_cast<Tool>(i);
  throw std::invalid_argument("unknown tool '" + s + "'");
}

Action action_from_string(const std::string& s) {
  for (int i = 0; i < kNumActions; ++i)
    if (s == to_string(static_cast<Action>(i))) return static_cast<Action>(i);
  throw std::invalid_argument("unknown action '" + s + "'");
}

std::array<float, 4> encode_action(Action a) {
  std::array<float, 4> v{0, 0, 0, 0};
  v[static_cast<size_t>(a)] = 1.0f;
  return v;
}

std::string Sample::key() const {
  return std::to_string(object_id) + "/" + to_string(tool) + "/" + to_string(action) + "/" +
         std::to_string(repetition);
}

const std::string& Sample::image(CameraId cam, bool final_phase) const {
  auto it = images.find({cam, final_phase ? 1 : 0});
  if (it == images.end())
    throw std::out_of_range("sample " + key() + " has no image for camera " +
                            to_string(cam) + (final_phase ? "/final" : "/initial"));
  return it->second;
}

std::string Manifest::resolve(const std::string& rel_path) const {
  fs::path p(rel_path);
  if (p.is_absolute() || base_dir.empty()) return rel_path;
  return (fs::path(base_dir) / p).string();
}

namespace {

constexpr const char* kImageKeys[6] = {"left_initial",   "left_final", "center_initial",
                                       "center_final",   "right_initial", "right_final"};

std::pair<CameraId, int> image_key_parts(const std::string& k) {
  auto us = k.rfind('_');
  if (us == std::string::npos) throw std::invalid_argument("bad image key '" + k + "'");
  std::string cam = k.substr(0, us), phase = k.substr(us + 1);
  int p = phase == "initial" ? 0 : phase == "final" ? 1 : -1;
  if (p < 0) throw std::invalid_argument("bad image phase in '" + k + "'");
  for (int c = 0; c < 3; ++c)
    if (cam == to_string(static_cast<CameraId>(c))) return {static_cast<CameraId>(c), p};
  throw std::invalid_argument("bad camera in '" + k + "'");
}

std::string image_key_name(CameraId cam, int phase) {
  return std::string(to_string(cam)) + (phase == 0 ? "_initial" : "_final");
}

}  // namespace

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest not found: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("manifest parse error in " + path + ": " + e.what());
  }

  Manifest m;
  m.base_dir = fs::path(path).parent_path().string();
  if (j.contains("metadata"))
    for (auto& [k, v] : j.at("metadata").items())
      m.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();

  std::set<std::string> seen;
  for (const auto& js : j.at("samples")) {
    Sample s;
    s.object_id = js.at("object").get<int>();
    s.tool = tool_from_string(js.at("tool").get<std::string>());
    s.action = action_from_string(js.at("action").get<std::string>());
    s.repetition = js.at("rep").get<int>();
    const auto& imgs = js.at("images");
    for (const char* k : kImageKeys) {
      if (!imgs.contains(k))
        throw std::runtime_error("sample " + s.key() + ": missing image entry '" + k + "'");
      s.images[image_key_parts(k)] = imgs.at(k).get<std::string>();
    }
    if (s.images.size() != 6)
      throw std::runtime_error("sample " + s.key() + ": expected 6 images");
    if (!seen.insert(s.key()).second)
      throw std::runtime_error("duplicate sample key " + s.key() + " in " + path);
    m.samples.push_back(std::move(s));
  }
  return m;
}

void save_manifest(const Manifest& m, const std::string& path) {
  json j;
  j["metadata"] = json::object();
  for (const auto& [k, v] : m.metadata) j["metadata"][k] = v;
  j["samples"] = json::array();
  for (const auto& s : m.samples) {
    json js;
    js["object"] = s.object_id;
    js["tool"] = to_string(s.tool);
    js["action"] = to_string(s.action);
    js["rep"] = s.repetition;
    json imgs = json::object();
    for (const auto& [key, p] : s.images) imgs[image_key_name(key.first, key.second)] = p;
    js["images"] = imgs;
    j["samples"].push_back(std::move(js));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << j.dump(1) << "\n";
}

ValidationReport validate_manifest(const Manifest& m, bool check_files,
                                   std::optional<int> expected_objects) {
  ValidationReport rep;

  std::set<int> objects;
  std::set<std::string> keys;
  for (const auto& s : m.samples) {
    objects.insert(s.object_id);
    keys.insert(s.key());
  }
  if (expected_objects)
    for (int o = 1; o <= *expected_objects; ++o) objects.insert(o);

  for (int o : objects)
    for (int t = 0; t < kNumTools; ++t)
      for (int a = 0; a < kNumActions; ++a)
        for (int r = 1; r <= kNumRepetitions; ++r) {
          Sample probe;
          probe.object_id = o;
          probe.tool = static_cast<Tool>(t);
          probe.action = static_cast<Action>(a);
          probe.repetition = r;
          if (!keys.count(probe.key())) rep.missing_combinations.push_back(probe.key());
        }

  if (check_files) {
    int declared_w = 0, declared_h = 0;
    if (auto it = m.metadata.find("image_width"); it != m.metadata.end())
      declared_w = std::stoi(it->second);
    if (auto it = m.metadata.find("image_height"); it != m.metadata.end())
      declared_h = std::stoi(it->second);
    for (const auto& s : m.samples) {
      for (const auto& [key, rel] : s.images) {
        std::string p = m.resolve(rel);
        if (!fs::exists(p)) {
          rep.missing_files.push_back(s.key() + ": " + rel);
          continue;
        }
        if (declared_w > 0 && declared_h > 0) {
          try {
            RawImage img = load_image(p);
            if (img.width != declared_w || img.height != declared_h)
              rep.dimension_mismatches.push_back(
                  s.key() + ": " + rel + " is " + std::to_string(img.width) + "x" +
                  std::to_string(img.height) + ", expected " + std::to_string(declared_w) + "x" +
                  std::to_string(declared_h));
          } catch (const std::exception& e) {
            rep.missing_files.push_back(s.key() + ": " + rel + " (" + e.what() + ")");
          }
        }
      }
    }
  }
  return rep;
}

SplitSet split_by_repetition(const Manifest& m, std::array<int, 3> ratios, uint64_t seed) {
  if (ratios[0] + ratios[1] + ratios[2] != kNumRepetitions)
    throw std::invalid_argument("split ratios must sum to 10");

  // group key -> (repetition -> sample index)
  std::map<std::tuple<int, int, int>, std::vector<std::pair<int, int>>> groups;
  for (size_t i = 0; i < m.samples.size(); ++i) {
    const auto& s = m.samples[i];
    groups[{s.object_id, static_cast<int>(s.tool), static_cast<int>(s.action)}].push_back(
        {s.repetition, static_cast<int>(i)});
  }

  SplitSet out;
  out.seed = seed;
  out.ratios = ratios;
  for (auto& [key, members] : groups) {
    if (members.size() != kNumRepetitions) {
      auto [o, t, a] = key;
      throw std::runtime_error("group (" + std::to_string(o) + ", " +
                               to_string(static_cast<Tool>(t)) + ", " +
                               to_string(static_cast<Action>(a)) + ") has " +
                               std::to_string(members.size()) + " repetitions, expected 10");
    }
    std::sort(members.begin(), members.end());

    // Per-group permutation keyed by (seed, group); independent across groups.
    auto [o, t, a] = key;
    uint64_t h = fnv1a64(&seed, sizeof(seed));
    h = fnv1a64(&o, sizeof(o), h);
    h = fnv1a64(&t, sizeof(t), h);
    h = fnv1a64(&a, sizeof(a), h);
    SplitMix64 rng(h);
    std::vector<int> order(kNumRepetitions);
    for (int i = 0; i < kNumRepetitions; ++i) order[i] = i;
    for (int i = kNumRepetitions - 1; i > 0; --i)
      std::swap(order[i], order[rng.next_below(static_cast<uint64_t>(i) + 1)]);

    for (int i = 0; i < kNumRepetitions; ++i) {
      int idx = members[order[i]].second;
      if (i < ratios[0])
        out.train.push_back(idx);
      else if (i < ratios[0] + ratios[1])
        out.val.push_back(idx);
      else
        out.test.push_back(idx);
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

const char* to_string(FusionVariant v) {
  switch (v) {
    case FusionVariant::stacked_3c1n: return "3C-1N";
    case FusionVariant::separate_3c6n: return "3C-6N";
    case FusionVariant::separate_central_1c2n: return "1C-2N";
    case FusionVariant::shared_3c3n: return "3C-3N";
    case FusionVariant::shared_central_1c1n: return "1C-1N";
  }
  throw std::invalid_argument("bad FusionVariant");
}

FusionVariant variant_from_string(const std::string& s) {
  for (int i = 0; i < 5; ++i)
    if (s == to_string(static_cast<FusionVariant>(i))) return static_cast<FusionVariant>(i);
  throw std::invalid_argument("unknown fusion variant '" + s + "' (expect 3C-1N|3C-6N|1C-2N|3C-3N|1C-1N)");
}

const char* to_string(HeadMode h) {
  switch (h) {
    case HeadMode::tool: return "tool";
    case HeadMode::tool_with_action: return "tool_with_action";
    case HeadMode::dual: return "dual";
    case HeadMode::joint16: return "joint16";
    case HeadMode::action: return "action";
  }
  throw std::invalid_argument("bad HeadMode");
}

HeadMode head_mode_from_string(const std::string& s) {
  for (int i = 0; i < 5; ++i)
    if (s == to_string(static_cast<HeadMode>(i))) return static_cast<HeadMode>(i);
  throw std::invalid_argument("unknown head mode '" + s + "'");
}

int stream_count(FusionVariant v) {
  switch (v) {
    case FusionVariant::stacked_3c1n: return 1;
    case FusionVariant::separate_3c6n:
    case FusionVariant::shared_3c3n: return 6;
    case FusionVariant::separate_central_1c2n:
    case FusionVariant::shared_central_1c1n: return 2;
  }
  return 0;
}

int stream_channels(FusionVariant v) {
  return v == FusionVariant::stacked_3c1n ? 18 : 3;
}

const Tensor& PreprocessCache::get(const Sample& s, CameraId cam, bool final_phase) {
  const std::string& rel = s.image(cam, final_phase);
  auto it = cache_.find(rel);
  if (it != cache_.end()) return it->second;
  Tensor t = preprocess(load_image(manifest_->resolve(rel)));
  return cache_.emplace(rel, std::move(t)).first->second;
}

namespace {

Tensor load_preprocessed(const Manifest& m, const Sample& s, CameraId cam, bool final_phase,
                         PreprocessCache* cache) {
  if (cache) return cache->get(s, cam, final_phase);
  try {
    return preprocess(load_image(m.resolve(s.image(cam, final_phase))));
  } catch (const std::exception& e) {
    throw std::runtime_error("sample " + s.key() + ": " + e.what());
  }
}

void copy_plane(Tensor& dst, int64_t n, int64_t c0, const Tensor& src) {
  // src is [3,128,128]; writes channels c0..c0+2 of sample n.
  const int64_t hw = static_cast<int64_t>(kInputSize) * kInputSize;
  float* out = dst.data() + (n * dst.dim(1) + c0) * hw;
  std::copy(src.data(), src.data() + 3 * hw, out);
}

}  // namespace

Batch make_batch(const Manifest& m, const std::vector<int>& indices, FusionVariant variant,
                 HeadMode head, PreprocessCache* cache) {
  const int64_t B = static_cast<int64_t>(indices.size());
  Batch batch;

  // (camera, phase) source per stream, in fixed order.
  std::vector<std::pair<CameraId, bool>> sources;
  if (variant == FusionVariant::separate_central_1c2n ||
      variant == FusionVariant::shared_central_1c1n) {
    sources = {{CameraId::center, false}, {CameraId::center, true}};
  } else {
    for (int phase = 0; phase < 2; ++phase)
      for (int c = 0; c < 3; ++c)
        sources.push_back({static_cast<CameraId>(c), phase == 1});
  }

  if (variant == FusionVariant::stacked_3c1n) {
    batch.streams.emplace_back(std::vector<int64_t>{B, 18, kInputSize, kInputSize});
    for (int64_t n = 0; n < B; ++n) {
      const Sample& s = m.samples[indices[n]];
      for (size_t k = 0; k < sources.size(); ++k)
        copy_plane(batch.streams[0], n, static_cast<int64_t>(k) * 3,
                   load_preprocessed(m, s, sources[k].first, sources[k].second, cache));
    }
  } else {
    for (size_t k = 0; k < sources.size(); ++k)
      batch.streams.emplace_back(std::vector<int64_t>{B, 3, kInputSize, kInputSize});
    for (int64_t n = 0; n < B; ++n) {
      const Sample& s = m.samples[indices[n]];
      for (size_t k = 0; k < sources.size(); ++k)
        copy_plane(batch.streams[k], n, 0,
                   load_preprocessed(m, s, sources[k].first, sources[k].second, cache));
    }
  }

  if (head == HeadMode::tool_with_action) {
    batch.action_onehot = Tensor({B, 4});
    for (int64_t n = 0; n < B; ++n) {
      auto v = encode_action(m.samples[indices[n]].action);
      std::copy(v.begin(), v.end(), batch.action_onehot.data() + n * 4);
    }
  }

  for (int64_t n = 0; n < B; ++n) {
    const Sample& s = m.samples[indices[n]];
    batch.tool_labels.push_back(static_cast<int>(s.tool));
    batch.action_labels.push_back(static_cast<int>(s.action));
    batch.joint_labels.push_back(encode_joint_label(s.tool, s.action));
  }
  return batch;
}

}  // namespace affbench
