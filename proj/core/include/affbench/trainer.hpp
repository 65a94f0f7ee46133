#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "affbench/model.hpp"

namespace affbench {

/// Derive an independent named rng stream from a run seed. Every random
/// choice in a run (init, shuffling, jitter) goes through this, so one seed
/// fixes the whole run. Determinism scope: single-threaded execution on one
/// build; floating-point results are bit-stable for a fixed binary.
uint64_t derive_seed(uint64_t seed, const std::string& stream);

struct TrainConfig {
  int epochs = 150;
  double learning_rate = 1e-3;
  int batch_size = 32;
  uint64_t seed = 0;
  ModelConfig model;

  /// Optional early exit once the checkpoint metric on the validation set
  /// reaches this value (<= 0 disables). The best checkpoint rule is
  /// unaffected; this only truncates the epoch loop.
  double early_stop_val_acc = 0.0;
  /// Same, for training accuracy (used by overfit checks).
  double early_stop_train_acc = 0.0;

  bool verbose = false;
  void validate() const;
};

struct GridSpec {
  std::vector<double> learning_rates{1e-3, 5e-4, 1e-4};
  std::vector<int> batch_sizes{16, 32, 64, 128};
  std::vector<int> first_kernels{3, 5, 7};
  std::vector<int> first_strides{1, 2};

  int size() const {
    return static_cast<int>(learning_rates.size() * batch_sizes.size() * first_kernels.size() *
                            first_strides.size());
  }
  /// Cartesian product applied over a base config, enumeration order fixed.
  std::vector<TrainConfig> enumerate(const TrainConfig& base) const;
};

struct EpochStats {
  double train_loss = 0;
  double train_acc = 0;
  double val_tool_acc = -1;
  double val_action_acc = -1;
  double val_metric = 0;  // the checkpoint metric for the head mode
};

struct History {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;  // ties keep the earlier epoch
  double best_val_metric = 0;
};

void save_history_csv(const History& h, const std::string& path);

struct TrainResult {
  std::unique_ptr<FusionModel> model;  // holds the best-validation weights
  History history;
};

/// Cross-entropy over logits [B, n_classes]; mean over the batch. If `grad`
/// is given it receives d(loss)/d(logits) (softmax minus one-hot, / B).
double cross_entropy(const Tensor& logits, const std::vector<int>& labels, Tensor* grad);

/// Head-mode loss: single-head CE, or unweighted CE(tool) + CE(action) for
/// dual. Populates logit grads when `grads` is non-null.
double loss(const Logits& logits, const Batch& batch, HeadMode head, Logits* grads);

/// Adam with standard moment coefficients (0.9, 0.999, eps 1e-8).
class Adam {
 public:
  Adam(std::vector<Param*> params, double lr);
  void step();
  double lr;

 private:
  std::vector<Param*> params_;
  std::vector<Tensor> m_, v_;
  int64_t t_ = 0;
};

/// Train a model per cfg on splits.train, evaluating splits.val each epoch
/// and keeping the weights of the best validation metric. Deterministic for
/// fixed (cfg, manifest). Throws on non-finite loss, naming epoch and batch.
TrainResult train(const TrainConfig& cfg, const Manifest& manifest, const SplitSet& splits,
                  PreprocessCache* cache = nullptr,
                  const std::function<void(int, const EpochStats&)>& on_epoch = nullptr);

struct TrialRow {
  double lr;
  int batch, kernel, stride;
  uint64_t seed;
  double best_val = -1;
  double test_acc = -1;
  double wall_time_s = 0;
  bool failed = false;
  std::string error;
};

struct GridSearchResult {
  TrainConfig best;
  std::vector<TrialRow> trials;
};

/// Exhaustive grid search; per-trial failures are recorded and skipped. Ties
/// on the validation metric resolve to lower lr, then smaller batch, kernel,
/// stride. If `resume_csv` names an existing trial table, completed trials
/// are reused instead of re-trained.
GridSearchResult grid_search(const GridSpec& grid, const TrainConfig& base,
                             const Manifest& manifest, const SplitSet& splits,
                             PreprocessCache* cache = nullptr,
                             const std::string& resume_csv = "");

void save_trial_csv(const std::vector<TrialRow>& rows, const std::string& path);
std::vector<TrialRow> load_trial_csv(const std::string& path);

struct RunResult {
  std::vector<uint64_t> seeds;
  std::vector<double> accuracies;  // headline metric per seed
  std::vector<double> tool_accuracies;
  std::vector<double> action_accuracies;
  double mean = 0;
  double ci_half_width = 0;  // 0 when n_seeds < 2
  int n_seeds = 0;
};

/// Train + test once per seed and aggregate mean and 95% CI.
RunResult multi_seed(const TrainConfig& cfg, const Manifest& manifest, const SplitSet& splits,
                     const std::vector<uint64_t>& seeds, PreprocessCache* cache = nullptr,
                     const std::function<void(uint64_t, double)>& on_seed = nullptr);

}  // namespace affbench
