// End-to-end acceptance gate. Each criterion prints one PASS/FAIL line;
// the process exits nonzero if any gating criterion fails. Criterion 10 is
// reported only (the synthetic task is not expected to preserve effect
// sizes, just the ordering).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <filesystem>
#include <string>
#include <vector>

#include "affbench/config.hpp"
#include "affbench/evaluator.hpp"
#include "affbench/synthetic.hpp"
#include "affbench/trainer.hpp"

namespace fs = std::filesystem;
using namespace affbench;

namespace {

struct Outcome {
  int id;
  bool pass;
  bool gating;
  std::string detail;
};

std::vector<Outcome> g_results;

void record(int id, bool pass, const std::string& detail, bool gating = true) {
  g_results.push_back({id, pass, gating, detail});
  std::printf("criterion %d: %s%s  (%s)\n", id, pass ? "PASS" : "FAIL",
              gating ? "" : " [reported only]", detail.c_str());
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Full 20x4x4x10 manifest with placeholder image paths; enough for split
/// protocol checks, which never touch pixels.
Manifest full_grid_manifest() {
  Manifest m;
  for (int obj = 1; obj <= 20; ++obj)
    for (int t = 0; t < 4; ++t)
      for (int a = 0; a < 4; ++a)
        for (int rep = 1; rep <= 10; ++rep) {
          Sample s;
          s.object_id = obj;
          s.tool = static_cast<Tool>(t);
          s.action = static_cast<Action>(a);
          s.repetition = rep;
          for (CameraId cam : {CameraId::left, CameraId::center, CameraId::right})
            for (int phase : {0, 1})
              s.images[{cam, phase}] = s.key() + "/" + std::to_string(static_cast<int>(cam)) +
                                       "_" + std::to_string(phase) + ".png";
          m.samples.push_back(std::move(s));
        }
  return m;
}

/// The 8-object dataset shared by criteria 3, 4, 5 and 10. Generated once
/// and reused across acceptance runs.
struct SharedDataset {
  Manifest manifest;
  std::map<std::string, GroundTruthEntry> truth;
  std::string dir;
};

SharedDataset shared_dataset() {
  SharedDataset d;
  const char* env = std::getenv("AFFBENCH_ACCEPTANCE_DATA");
  fs::path root = env && *env ? fs::path(env) : fs::temp_directory_path() / "affbench_acceptance";
  d.dir = root.string();
  if (fs::exists(root / "manifest.json") && fs::exists(root / "ground_truth.json")) {
    d.manifest = load_manifest((root / "manifest.json").string());
    d.truth = load_ground_truth((root / "ground_truth.json").string());
  } else {
    SceneSpec spec;  // defaults: 8 objects, 10 reps, degraded side cameras
    std::printf("generating shared dataset (%d samples) in %s ...\n",
                spec.n_objects * 4 * 4 * spec.repetitions, d.dir.c_str());
    std::fflush(stdout);
    GeneratedDataset g = generate_dataset(spec, 1234, d.dir);
    d.manifest = std::move(g.manifest);
    d.truth = std::move(g.truth);
  }
  return d;
}

TrainConfig learnability_config(FusionVariant variant) {
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 32;
  cfg.model.depth = 18;
  cfg.model.variant = variant;
  cfg.model.head = HeadMode::dual;
  // Truncates the epoch loop once validation is comfortably above the 90%
  // floor; the best-checkpoint rule is unaffected.
  cfg.early_stop_val_acc = 0.97;
  return cfg;
}

void criterion_1() {
  bool ok = true;
  std::string detail;
  const std::pair<int, double> expected[] = {{18, 11.7e6}, {50, 25.6e6}, {101, 44.5e6}};
  for (auto [depth, want] : expected) {
    auto got = static_cast<double>(reference_parameter_count(depth));
    double rel = std::abs(got - want) / want;
    ok = ok && rel < 0.02;
    detail += std::to_string(depth) + ": " + std::to_string(static_cast<int64_t>(got)) + " ";
  }
  record(1, ok, "parameter counts " + detail + "all within 2%");
}

void criterion_2() {
  Manifest m = full_grid_manifest();
  bool ok = m.samples.size() == 3200;
  for (uint64_t seed : {0ull, 1ull, 7ull}) {
    SplitSet s = split_by_repetition(m, {6, 2, 2}, seed);
    ok = ok && s.train.size() == 1920 && s.val.size() == 640 && s.test.size() == 640;

    // Exact 6/2/2 inside every (object, tool, action) group, disjoint and
    // covering.
    std::map<std::string, std::array<int, 3>> per_group;
    std::vector<char> seen(m.samples.size(), 0);
    auto tally = [&](const std::vector<int>& idx, int part) {
      for (int i : idx) {
        const Sample& smp = m.samples[static_cast<size_t>(i)];
        std::string g = std::to_string(smp.object_id) + "/" +
                        std::to_string(static_cast<int>(smp.tool)) + "/" +
                        std::to_string(static_cast<int>(smp.action));
        per_group[g][static_cast<size_t>(part)]++;
        if (seen[static_cast<size_t>(i)]) ok = false;
        seen[static_cast<size_t>(i)] = 1;
      }
    };
    tally(s.train, 0);
    tally(s.val, 1);
    tally(s.test, 2);
    for (char c : seen) ok = ok && c == 1;
    ok = ok && per_group.size() == 320;
    for (const auto& [g, counts] : per_group)
      ok = ok && counts[0] == 6 && counts[1] == 2 && counts[2] == 2;

    SplitSet again = split_by_repetition(m, {6, 2, 2}, seed);
    ok = ok && again.train == s.train && again.val == s.val && again.test == s.test;
  }
  record(2, ok, "3200 -> 1920/640/640, exact 6/2/2 per group, disjoint, deterministic");
}

void criterion_3(const SharedDataset& d) {
  int n = 0, correct = 0;
  for (const Sample& s : d.manifest.samples) {
    auto it = d.truth.find(s.key());
    if (it == d.truth.end()) continue;
    auto [action, tool] = oracle_infer(it->second.p0, it->second.p1);
    ++n;
    if (action == s.action && tool == s.tool) ++correct;
  }
  bool ok = n >= 1280 && correct == n;
  record(3, ok,
         "oracle recovered " + std::to_string(correct) + "/" + std::to_string(n) + " labels");
}

void criterion_4(const SharedDataset& d) {
  auto t0 = std::chrono::steady_clock::now();
  SplitSet full = split_by_repetition(d.manifest, {6, 2, 2}, 0);
  SplitSet tiny;
  tiny.train.assign(full.train.begin(), full.train.begin() + 32);
  tiny.val = tiny.train;  // validation tracks the overfit target

  TrainConfig cfg = learnability_config(FusionVariant::shared_central_1c1n);
  cfg.epochs = 200;
  cfg.early_stop_val_acc = 0.0;
  cfg.early_stop_train_acc = 1.0;

  PreprocessCache cache(&d.manifest);
  TrainResult r = train(cfg, d.manifest, tiny, &cache);
  double best_train = 0;
  for (const EpochStats& e : r.history.epochs) best_train = std::max(best_train, e.train_acc);
  bool ok = best_train >= 1.0;
  record(4, ok,
         "train acc " + std::to_string(best_train) + " after " +
             std::to_string(r.history.epochs.size()) + " epochs, " +
             std::to_string(seconds_since(t0)) + "s");
}

RunResult learnability_run(const SharedDataset& d, FusionVariant variant, const char* name) {
  SplitSet splits = split_by_repetition(d.manifest, {6, 2, 2}, 0);
  TrainConfig cfg = learnability_config(variant);
  PreprocessCache cache(&d.manifest);
  return multi_seed(cfg, d.manifest, splits, {0, 1, 2}, &cache, [&](uint64_t seed, double acc) {
    std::printf("  %s seed %llu: joint test acc %.4f\n", name,
                static_cast<unsigned long long>(seed), acc);
    std::fflush(stdout);
  });
}

void criterion_5_and_10(const SharedDataset& d) {
  auto t0 = std::chrono::steady_clock::now();
  RunResult central = learnability_run(d, FusionVariant::shared_central_1c1n, "1C-1N");

  bool ok = central.n_seeds == 3;
  for (int i = 0; i < central.n_seeds; ++i) {
    ok = ok && central.accuracies[static_cast<size_t>(i)] >= 0.90;
    ok = ok && central.action_accuracies[static_cast<size_t>(i)] >= 0.99;
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "1C-1N joint %.4f ± %.4f over 3 seeds, %.0fs", central.mean,
                central.ci_half_width, seconds_since(t0));
  record(5, ok, buf);

  t0 = std::chrono::steady_clock::now();
  RunResult stacked = learnability_run(d, FusionVariant::stacked_3c1n, "3C-1N");
  std::snprintf(buf, sizeof(buf), "1C-1N %.4f vs 3C-1N %.4f mean joint (degraded sides), %.0fs",
                central.mean, stacked.mean, seconds_since(t0));
  record(10, central.mean >= stacked.mean, buf, /*gating=*/false);
}

void criterion_6() {
  bool ok = true;
  for (FusionVariant v :
       {FusionVariant::stacked_3c1n, FusionVariant::separate_3c6n,
        FusionVariant::separate_central_1c2n, FusionVariant::shared_3c3n,
        FusionVariant::shared_central_1c1n}) {
    ok = ok && stream_channels(v) == (v == FusionVariant::stacked_3c1n ? 18 : 3);
    for (int depth : {18, 50, 101}) {
      for (HeadMode h :
           {HeadMode::tool, HeadMode::tool_with_action, HeadMode::dual, HeadMode::joint16}) {
        ModelConfig cfg;
        cfg.depth = depth;
        cfg.variant = v;
        cfg.head = h;
        FusionModel m(cfg);
        m.init_weights(3);

        SplitMix64 rng(99);
        Batch b;
        for (int k = 0; k < stream_count(v); ++k) {
          Tensor s({4, stream_channels(v), 128, 128});
          for (int64_t i = 0; i < s.numel(); ++i)
            s.data()[i] = static_cast<float>(rng.normal() * 0.3);
          b.streams.push_back(std::move(s));
        }
        for (int n = 0; n < 4; ++n) {
          b.tool_labels.push_back(n % 4);
          b.action_labels.push_back((n + 1) % 4);
          b.joint_labels.push_back(encode_joint_label(static_cast<Tool>(n % 4),
                                                      static_cast<Action>((n + 1) % 4)));
        }
        if (h == HeadMode::tool_with_action) {
          b.action_onehot = Tensor({4, 4});
          for (int n = 0; n < 4; ++n) b.action_onehot.data()[n * 4 + b.action_labels[n]] = 1.0f;
        }

        Logits out = m.forward(b, false);
        if (h == HeadMode::tool || h == HeadMode::tool_with_action || h == HeadMode::dual)
          ok = ok && out.tool.shape() == std::vector<int64_t>{4, 4};
        if (h == HeadMode::dual) ok = ok && out.action.shape() == std::vector<int64_t>{4, 4};
        if (h == HeadMode::joint16) ok = ok && out.joint.shape() == std::vector<int64_t>{4, 16};
      }
    }
  }
  record(6, ok, "5 variants x 3 depths x 4 head modes, batch 4 at 128x128, declared shapes");
}

void criterion_7() {
  bool ok = true;
  auto embeddings_match = [&](FusionVariant v) {
    ModelConfig cfg;
    cfg.variant = v;
    FusionModel m(cfg);
    m.init_weights(17);
    SplitMix64 rng(5);
    Tensor x({2, 3, 64, 64});
    for (int64_t i = 0; i < x.numel(); ++i) x.data()[i] = static_cast<float>(rng.normal());
    int k0 = 0, k1 = stream_count(v) > 2 ? 3 : 1;  // same camera, initial vs final slot
    Cache c1, c2;
    Tensor e1 = m.encoder(m.encoder_for_stream(k0)).forward(x, c1, false);
    Tensor e2 = m.encoder(m.encoder_for_stream(k1)).forward(x, c2, false);
    return std::memcmp(e1.data(), e2.data(), sizeof(float) * static_cast<size_t>(e1.numel())) ==
           0;
  };
  ok = ok && embeddings_match(FusionVariant::shared_central_1c1n);
  ok = ok && embeddings_match(FusionVariant::shared_3c3n);
  ok = ok && !embeddings_match(FusionVariant::separate_central_1c2n);
  ok = ok && !embeddings_match(FusionVariant::separate_3c6n);
  record(7, ok, "shared encoders bit-identical, separate encoders differ");
}

void criterion_8(const SharedDataset& d) {
  bool ok = true;

  ConfusionMatrix cm = confusion({0, 1, 1, 2, 0, 3, 3, 3}, {0, 1, 2, 2, 1, 3, 3, 0}, 4);
  auto norm = cm.normalized();
  for (int r = 0; r < 4; ++r) {
    double row = 0;
    for (int c = 0; c < 4; ++c) row += norm[static_cast<size_t>(r) * 4 + c];
    ok = ok && std::abs(row - 1.0) <= 1e-9;
  }

  SplitSet splits = split_by_repetition(d.manifest, {6, 2, 2}, 0);
  std::vector<int> probe(splits.val.begin(), splits.val.begin() + 64);
  ModelConfig mc;
  mc.head = HeadMode::dual;
  FusionModel model(mc);
  model.init_weights(23);
  PreprocessCache cache(&d.manifest);
  EvalReport rep = evaluate(model, d.manifest, probe, &cache);
  ok = ok && rep.joint_acc <= rep.tool_acc + 1e-12 && rep.joint_acc <= rep.action_acc + 1e-12;

  auto [m0, h0] = confidence_interval({0.5, 0.5, 0.5});
  ok = ok && m0 == 0.5 && h0 == 0.0;
  auto [m1, h1] = confidence_interval({0.0, 1.0});
  ok = ok && std::abs(m1 - 0.5) <= 1e-12 && std::abs(h1 - 0.98) <= 1e-12;

  record(8, ok, "rows sum to 1, joint <= per-head, CI closed forms hold");
}

void criterion_9() {
  Batch b;
  b.tool_labels = {0, 1, 2, 3};
  b.action_labels = {3, 2, 1, 0};
  for (int n = 0; n < 4; ++n)
    b.joint_labels.push_back(
        encode_joint_label(static_cast<Tool>(b.tool_labels[static_cast<size_t>(n)]),
                           static_cast<Action>(b.action_labels[static_cast<size_t>(n)])));

  Logits uniform;
  uniform.tool = Tensor({4, 4});
  uniform.action = Tensor({4, 4});
  uniform.joint = Tensor({4, 16});

  double single = loss(uniform, b, HeadMode::tool, nullptr);
  double dual = loss(uniform, b, HeadMode::dual, nullptr);
  bool ok = std::abs(single - std::log(4.0)) <= 1e-6 &&
            std::abs(dual - 2.0 * std::log(4.0)) <= 1e-6;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "uniform CE %.7f (ln 4), dual %.7f (2 ln 4)", single, dual);
  record(9, ok, buf);
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_6();
  criterion_7();
  criterion_9();

  SharedDataset d = shared_dataset();
  criterion_3(d);
  criterion_8(d);
  criterion_4(d);
  criterion_5_and_10(d);

  // Stable output order.
  std::sort(g_results.begin(), g_results.end(),
            [](const Outcome& a, const Outcome& b) { return a.id < b.id; });
  int failures = 0;
  std::printf("\nsummary:\n");
  for (const Outcome& o : g_results) {
    std::printf("  criterion %2d: %s%s\n", o.id, o.pass ? "PASS" : "FAIL",
                o.gating ? "" : " [reported only]");
    if (!o.pass && o.gating) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
