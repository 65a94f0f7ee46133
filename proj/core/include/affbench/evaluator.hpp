#pragma once

#include <string>
#include <vector>

#include "affbench/model.hpp"

namespace affbench {

struct EvalReport {
  // Accuracies in [0,1]; -1 when the head does not apply.
  double tool_acc = -1;
  double action_acc = -1;
  double joint_acc = -1;  // all heads correct (16-way accuracy for joint16)
  int n = 0;
  HeadMode head = HeadMode::dual;

  std::vector<int> tool_preds, action_preds, joint_preds;
  std::vector<int> tool_labels, action_labels, joint_labels;

  /// The checkpoint/reporting metric for this head mode.
  double headline() const;
};

/// Deterministic test-set evaluation (eval-mode batch norm, argmax
/// decisions; joint correct iff every head is correct). Throws on an empty
/// index list.
EvalReport evaluate(FusionModel& model, const Manifest& manifest, const std::vector<int>& indices,
                    PreprocessCache* cache = nullptr, int batch_size = 32);

struct ConfusionMatrix {
  int n_classes = 0;
  std::vector<int64_t> counts;  // row = true class, col = predicted
  std::vector<int> zero_support_rows;

  int64_t& at(int row, int col) { return counts[static_cast<size_t>(row) * n_classes + col]; }
  int64_t at(int row, int col) const { return counts[static_cast<size_t>(row) * n_classes + col]; }
  int64_t total() const;
  /// Row-normalized view; zero-support rows come out as all zeros.
  std::vector<double> normalized() const;
};

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels,
                          int n_classes);

/// Mean and half-width of the normal-approximation CI: mean +- z * s / sqrt(n)
/// with s the sample standard deviation. Throws with fewer than 2 values.
std::pair<double, double> confidence_interval(const std::vector<double>& values,
                                              double z = 1.96);

struct ReportRow {
  std::string task;
  std::string variant;
  int depth = 18;
  std::string head_mode;
  int n_seeds = 0;
  double mean_acc = 0, ci_half = 0;
  double tool_acc = -1, action_acc = -1, joint_acc = -1;
};

/// Emits report.csv / report.json with "mean +- half" accuracy strings plus,
/// per named confusion matrix, a raw CSV and a heatmap PNG.
void render_report(const std::vector<ReportRow>& rows,
                   const std::vector<std::pair<std::string, ConfusionMatrix>>& confusions,
                   const std::string& out_dir);

}  // namespace affbench
