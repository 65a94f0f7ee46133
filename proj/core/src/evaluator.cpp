#include "affbench/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace affbench {

namespace {

int argmax_row(const Tensor& logits, int64_t row) {
  const int64_t w = logits.dim(1);
  const float* p = logits.data() + row * w;
  return static_cast<int>(std::max_element(p, p + w) - p);
}

}  // namespace

double EvalReport::headline() const {
  switch (head) {
    case HeadMode::tool:
    case HeadMode::tool_with_action: return tool_acc;
    case HeadMode::action: return action_acc;
    case HeadMode::dual:
    case HeadMode::joint16: return joint_acc;
  }
  return joint_acc;
}

EvalReport evaluate(FusionModel& model, const Manifest& manifest, const std::vector<int>& indices,
                    PreprocessCache* cache, int batch_size) {
  if (indices.empty()) throw std::invalid_argument("evaluate: empty split");
  const HeadMode head = model.config().head;

  EvalReport rep;
  rep.head = head;
  rep.n = static_cast<int>(indices.size());

  for (size_t start = 0; start < indices.size(); start += static_cast<size_t>(batch_size)) {
    std::vector<int> chunk(indices.begin() + static_cast<long>(start),
                           indices.begin() + static_cast<long>(std::min(
                                                 start + static_cast<size_t>(batch_size),
                                                 indices.size())));
    Batch batch = make_batch(manifest, chunk, model.config().variant, head, cache);
    Logits logits = model.forward(batch, /*training=*/false);

    for (int64_t i = 0; i < batch.size(); ++i) {
      if (logits.tool.numel() > 0) {
        rep.tool_preds.push_back(argmax_row(logits.tool, i));
        rep.tool_labels.push_back(batch.tool_labels[static_cast<size_t>(i)]);
      }
      if (logits.action.numel() > 0) {
        rep.action_preds.push_back(argmax_row(logits.action, i));
        rep.action_labels.push_back(batch.action_labels[static_cast<size_t>(i)]);
      }
      if (logits.joint.numel() > 0) {
        rep.joint_preds.push_back(argmax_row(logits.joint, i));
        rep.joint_labels.push_back(batch.joint_labels[static_cast<size_t>(i)]);
      }
    }
  }

  auto accuracy = [](const std::vector<int>& p, const std::vector<int>& l) {
    int ok = 0;
    for (size_t i = 0; i < p.size(); ++i) ok += p[i] == l[i];
    return p.empty() ? -1.0 : static_cast<double>(ok) / static_cast<double>(p.size());
  };
  rep.tool_acc = accuracy(rep.tool_preds, rep.tool_labels);
  rep.action_acc = accuracy(rep.action_preds, rep.action_labels);

  if (head == HeadMode::joint16) {
    rep.joint_acc = accuracy(rep.joint_preds, rep.joint_labels);
  } else if (head == HeadMode::dual) {
    // Joint correct iff every head is correct.
    int ok = 0;
    for (size_t i = 0; i < rep.tool_preds.size(); ++i)
      ok += rep.tool_preds[i] == rep.tool_labels[i] && rep.action_preds[i] == rep.action_labels[i];
    rep.joint_acc = static_cast<double>(ok) / static_cast<double>(rep.tool_preds.size());
  }
  return rep;
}

int64_t ConfusionMatrix::total() const {
  int64_t t = 0;
  for (int64_t c : counts) t += c;
  return t;
}

std::vector<double> ConfusionMatrix::normalized() const {
  std::vector<double> out(counts.size(), 0.0);
  for (int r = 0; r < n_classes; ++r) {
    int64_t row_sum = 0;
    for (int c = 0; c < n_classes; ++c) row_sum += at(r, c);
    if (row_sum == 0) continue;  // zero-support rows stay all-zero
    for (int c = 0; c < n_classes; ++c)
      out[static_cast<size_t>(r) * n_classes + c] =
          static_cast<double>(at(r, c)) / static_cast<double>(row_sum);
  }
  return out;
}

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels,
                          int n_classes) {
  if (preds.size() != labels.size())
    throw std::invalid_argument("confusion: preds/labels length mismatch");
  ConfusionMatrix m;
  m.n_classes = n_classes;
  m.counts.assign(static_cast<size_t>(n_classes) * n_classes, 0);
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= n_classes || labels[i] < 0 || labels[i] >= n_classes)
      throw std::out_of_range("confusion: class index out of range at position " +
                              std::to_string(i));
    ++m.at(labels[i], preds[i]);
  }
  for (int r = 0; r < n_classes; ++r) {
    int64_t row_sum = 0;
    for (int c = 0; c < n_classes; ++c) row_sum += m.at(r, c);
    if (row_sum == 0) m.zero_support_rows.push_back(r);
  }
  return m;
}

std::pair<double, double> confidence_interval(const std::vector<double>& values, double z) {
  if (values.size() < 2)
    throw std::invalid_argument("confidence_interval needs at least 2 values");
  const double n = static_cast<double>(values.size());
  double mean = 0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0;
  for (double v : values) ss += (v - mean) * (v - mean);
  double s = std::sqrt(ss / (n - 1));
  return {mean, z * s / std::sqrt(n)};
}

namespace {

std::string pm(double mean, double half) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f ± %.2f", 100 * mean, 100 * half);
  return buf;
}

void write_heatmap(const ConfusionMatrix& m, const std::string& path) {
  const int cell = 40, n = m.n_classes;
  const auto norm = m.normalized();
  RawImage img;
  img.width = n * cell;
  img.height = n * cell;
  img.pixels.assign(static_cast<size_t>(img.width) * img.height * 3, 0);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      double v = norm[static_cast<size_t>(r) * n + c];
      // dark blue -> yellow ramp
      auto R = static_cast<uint8_t>(40 + 215 * v);
      auto G = static_cast<uint8_t>(40 + 200 * v);
      auto B = static_cast<uint8_t>(90 + 40 * (1 - v));
      for (int y = r * cell; y < (r + 1) * cell; ++y)
        for (int x = c * cell; x < (c + 1) * cell; ++x) {
          bool border = y % cell == 0 || x % cell == 0;
          img.at(y, x, 0) = border ? 20 : R;
          img.at(y, x, 1) = border ? 20 : G;
          img.at(y, x, 2) = border ? 20 : B;
        }
    }
  save_png(path, img);
}

}  // namespace

void render_report(const std::vector<ReportRow>& rows,
                   const std::vector<std::pair<std::string, ConfusionMatrix>>& confusions,
                   const std::string& out_dir) {
  if (rows.empty()) throw std::invalid_argument("render_report: no rows");
  fs::create_directories(out_dir);

  std::ofstream csv(fs::path(out_dir) / "report.csv");
  if (!csv) throw std::runtime_error("cannot write report.csv in " + out_dir);
  csv << "task,variant,depth,head_mode,n_seeds,mean_acc,ci_half,tool_acc,action_acc,joint_acc,"
         "accuracy_pm\n";
  json jrows = json::array();
  for (const auto& r : rows) {
    csv << r.task << ',' << r.variant << ',' << r.depth << ',' << r.head_mode << ',' << r.n_seeds
        << ',' << r.mean_acc << ',' << r.ci_half << ',' << r.tool_acc << ',' << r.action_acc
        << ',' << r.joint_acc << ',' << '"' << pm(r.mean_acc, r.ci_half) << '"' << '\n';
    jrows.push_back({{"task", r.task},
                     {"variant", r.variant},
                     {"depth", r.depth},
                     {"head_mode", r.head_mode},
                     {"n_seeds", r.n_seeds},
                     {"mean_acc", r.mean_acc},
                     {"ci_half", r.ci_half},
                     {"tool_acc", r.tool_acc},
                     {"action_acc", r.action_acc},
                     {"joint_acc", r.joint_acc},
                     {"accuracy_pm", pm(r.mean_acc, r.ci_half)}});
  }
  std::ofstream(fs::path(out_dir) / "report.json") << jrows.dump(1) << "\n";

  for (const auto& [name, m] : confusions) {
    std::ofstream mc(fs::path(out_dir) / ("confusion_" + name + ".csv"));
    const auto norm = m.normalized();
    for (int r = 0; r < m.n_classes; ++r) {
      for (int c = 0; c < m.n_classes; ++c)
        mc << norm[static_cast<size_t>(r) * m.n_classes + c]
           << (c + 1 == m.n_classes ? "" : ",");
      mc << '\n';
    }
    if (!m.zero_support_rows.empty()) {
      mc << "# zero-support rows:";
      for (int r : m.zero_support_rows) mc << ' ' << r;
      mc << '\n';
    }
    write_heatmap(m, (fs::path(out_dir) / ("confusion_" + name + ".png")).string());
  }
}

}  // namespace affbench
