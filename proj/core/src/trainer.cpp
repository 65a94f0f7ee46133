#include "affbench/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "affbench/evaluator.hpp"

namespace affbench {

uint64_t derive_seed(uint64_t seed, const std::string& stream) {
  uint64_t h = fnv1a64(&seed, sizeof(seed));
  return fnv1a64(stream, h);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  model.validate();
}

std::vector<TrainConfig> GridSpec::enumerate(const TrainConfig& base) const {
  std::vector<TrainConfig> out;
  for (double lr : learning_rates)
    for (int bs : batch_sizes)
      for (int k : first_kernels)
        for (int s : first_strides) {
          TrainConfig c = base;
          c.learning_rate = lr;
          c.batch_size = bs;
          c.model.first_kernel = k;
          c.model.first_stride = s;
          out.push_back(c);
        }
  return out;
}

double cross_entropy(const Tensor& logits, const std::vector<int>& labels, Tensor* grad) {
  const int64_t B = logits.dim(0), C = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != B)
    throw std::invalid_argument("cross_entropy: label count mismatch");
  if (grad) *grad = Tensor({B, C});

  double total = 0;
  for (int64_t n = 0; n < B; ++n) {
    const float* row = logits.data() + n * C;
    int y = labels[static_cast<size_t>(n)];
    if (y < 0 || y >= C) throw std::out_of_range("cross_entropy: label out of range");
    float mx = *std::max_element(row, row + C);
    double lse = 0;
    for (int64_t c = 0; c < C; ++c) lse += std::exp(static_cast<double>(row[c]) - mx);
    double log_z = mx + std::log(lse);
    total += log_z - row[y];
    if (grad) {
      float* g = grad->data() + n * C;
      for (int64_t c = 0; c < C; ++c)
        g[c] = static_cast<float>((std::exp(row[c] - log_z) - (c == y ? 1.0 : 0.0)) / B);
    }
  }
  return total / static_cast<double>(B);
}

double loss(const Logits& logits, const Batch& batch, HeadMode head, Logits* grads) {
  switch (head) {
    case HeadMode::tool:
    case HeadMode::tool_with_action:
      return cross_entropy(logits.tool, batch.tool_labels, grads ? &grads->tool : nullptr);
    case HeadMode::action:
      return cross_entropy(logits.action, batch.action_labels, grads ? &grads->action : nullptr);
    case HeadMode::joint16:
      return cross_entropy(logits.joint, batch.joint_labels, grads ? &grads->joint : nullptr);
    case HeadMode::dual:
      return cross_entropy(logits.tool, batch.tool_labels, grads ? &grads->tool : nullptr) +
             cross_entropy(logits.action, batch.action_labels,
                           grads ? &grads->action : nullptr);
  }
  throw std::invalid_argument("bad HeadMode");
}

Adam::Adam(std::vector<Param*> params, double lr_) : lr(lr_), params_(std::move(params)) {
  for (Param* p : params_) {
    m_.push_back(Tensor::zeros_like(p->value));
    v_.push_back(Tensor::zeros_like(p->value));
  }
}

void Adam::step() {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++t_;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Param* p = params_[i];
    float* w = p->value.data();
    const float* g = p->grad.data();
    float* m = m_[i].data();
    float* v = v_[i].data();
    const int64_t n = p->value.numel();
    for (int64_t j = 0; j < n; ++j) {
      m[j] = static_cast<float>(b1 * m[j] + (1 - b1) * g[j]);
      v[j] = static_cast<float>(b2 * v[j] + (1 - b2) * static_cast<double>(g[j]) * g[j]);
      double mhat = m[j] / bc1, vhat = v[j] / bc2;
      w[j] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

namespace {

double train_batch_accuracy(const Logits& logits, const Batch& batch, HeadMode head) {
  auto acc_of = [](const Tensor& l, const std::vector<int>& labels) {
    const int64_t B = l.dim(0), C = l.dim(1);
    int ok = 0;
    for (int64_t n = 0; n < B; ++n) {
      const float* row = l.data() + n * C;
      ok += (std::max_element(row, row + C) - row) == labels[static_cast<size_t>(n)];
    }
    return std::pair<int, int>(ok, static_cast<int>(B));
  };
  switch (head) {
    case HeadMode::tool:
    case HeadMode::tool_with_action: {
      auto [ok, n] = acc_of(logits.tool, batch.tool_labels);
      return static_cast<double>(ok) / n;
    }
    case HeadMode::action: {
      auto [ok, n] = acc_of(logits.action, batch.action_labels);
      return static_cast<double>(ok) / n;
    }
    case HeadMode::joint16: {
      auto [ok, n] = acc_of(logits.joint, batch.joint_labels);
      return static_cast<double>(ok) / n;
    }
    case HeadMode::dual: {
      const int64_t B = logits.tool.dim(0);
      int ok = 0;
      for (int64_t n = 0; n < B; ++n) {
        const float* tr = logits.tool.data() + n * 4;
        const float* ar = logits.action.data() + n * 4;
        bool t_ok = (std::max_element(tr, tr + 4) - tr) == batch.tool_labels[static_cast<size_t>(n)];
        bool a_ok = (std::max_element(ar, ar + 4) - ar) == batch.action_labels[static_cast<size_t>(n)];
        ok += t_ok && a_ok;
      }
      return static_cast<double>(ok) / static_cast<double>(B);
    }
  }
  return 0;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Manifest& manifest, const SplitSet& splits,
                  PreprocessCache* cache,
                  const std::function<void(int, const EpochStats&)>& on_epoch) {
  cfg.validate();
  if (splits.train.empty()) throw std::invalid_argument("train: empty training split");

  auto model = std::make_unique<FusionModel>(cfg.model);
  model->init_weights(derive_seed(cfg.seed, "init"));

  std::vector<Param*> params;
  model->collect_params(params);
  Adam opt(params, cfg.learning_rate);

  TrainResult result;
  std::vector<float> best_state = model->state();
  bool has_val = !splits.val.empty();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Seed-keyed epoch shuffle.
    std::vector<int> order = splits.train;
    SplitMix64 rng(derive_seed(cfg.seed, "shuffle/" + std::to_string(epoch)));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.next_below(i)]);

    double loss_sum = 0, acc_sum = 0;
    int n_batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      std::vector<int> chunk(
          order.begin() + static_cast<long>(start),
          order.begin() +
              static_cast<long>(std::min(start + static_cast<size_t>(cfg.batch_size), order.size())));
      Batch batch = make_batch(manifest, chunk, cfg.model.variant, cfg.model.head, cache);

      model->zero_grad();
      Logits logits = model->forward(batch, /*training=*/true);
      Logits grads;
      double l = loss(logits, batch, cfg.model.head, &grads);
      if (!std::isfinite(l))
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(n_batches));
      model->backward(grads);
      opt.step();

      loss_sum += l;
      acc_sum += train_batch_accuracy(logits, batch, cfg.model.head);
      ++n_batches;
    }

    EpochStats stats;
    stats.train_loss = loss_sum / n_batches;
    stats.train_acc = acc_sum / n_batches;

    // Recompute batch-norm running statistics for the current weights over a
    // few training batches; momentum-lagged statistics make eval-mode
    // accuracy noisy while the weights are still moving.
    constexpr size_t kRefreshBatches = 8;
    model->visit_layers([](Layer& l) {
      if (auto* bn = dynamic_cast<BatchNorm2d*>(&l)) bn->begin_stat_refresh();
    });
    for (size_t start = 0, used = 0; start < order.size() && used < kRefreshBatches;
         start += static_cast<size_t>(cfg.batch_size), ++used) {
      std::vector<int> chunk(
          order.begin() + static_cast<long>(start),
          order.begin() +
              static_cast<long>(std::min(start + static_cast<size_t>(cfg.batch_size), order.size())));
      Batch batch = make_batch(manifest, chunk, cfg.model.variant, cfg.model.head, cache);
      model->forward(batch, /*training=*/true);
    }
    model->visit_layers([](Layer& l) {
      if (auto* bn = dynamic_cast<BatchNorm2d*>(&l)) bn->end_stat_refresh();
    });

    if (has_val) {
      EvalReport val = evaluate(*model, manifest, splits.val, cache, cfg.batch_size);
      stats.val_tool_acc = val.tool_acc;
      stats.val_action_acc = val.action_acc;
      stats.val_metric = val.headline();
    } else {
      stats.val_metric = stats.train_acc;
    }

    result.history.epochs.push_back(stats);
    // Strict improvement; ties keep the earlier epoch.
    if (result.history.best_epoch < 0 || stats.val_metric > result.history.best_val_metric) {
      result.history.best_epoch = epoch;
      result.history.best_val_metric = stats.val_metric;
      best_state = model->state();
    }
    if (on_epoch) on_epoch(epoch, stats);

    if (cfg.early_stop_val_acc > 0 && result.history.best_val_metric >= cfg.early_stop_val_acc)
      break;
    if (cfg.early_stop_train_acc > 0 && stats.train_acc >= cfg.early_stop_train_acc) break;
  }

  model->set_state(best_state);
  result.model = std::move(model);
  return result;
}

void save_history_csv(const History& h, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write history: " + path);
  out << "epoch,train_loss,train_acc,val_tool_acc,val_action_acc,val_metric,is_best\n";
  for (size_t e = 0; e < h.epochs.size(); ++e) {
    const auto& s = h.epochs[e];
    out << e << ',' << s.train_loss << ',' << s.train_acc << ',' << s.val_tool_acc << ','
        << s.val_action_acc << ',' << s.val_metric << ','
        << (static_cast<int>(e) == h.best_epoch ? 1 : 0) << '\n';
  }
}

namespace {

std::string trial_key(const TrialRow& r) {
  std::ostringstream os;
  os << r.lr << '/' << r.batch << '/' << r.kernel << '/' << r.stride << '/' << r.seed;
  return os.str();
}

}  // namespace

GridSearchResult grid_search(const GridSpec& grid, const TrainConfig& base,
                             const Manifest& manifest, const SplitSet& splits,
                             PreprocessCache* cache, const std::string& resume_csv) {
  auto configs = grid.enumerate(base);
  if (configs.empty()) throw std::invalid_argument("grid_search: empty grid");

  std::map<std::string, TrialRow> done;
  if (!resume_csv.empty()) {
    std::ifstream probe(resume_csv);
    if (probe.good())
      for (const auto& row : load_trial_csv(resume_csv))
        if (!row.failed) done[trial_key(row)] = row;
  }

  GridSearchResult result;
  int n_ok = 0;
  for (const TrainConfig& cfg : configs) {
    TrialRow row;
    row.lr = cfg.learning_rate;
    row.batch = cfg.batch_size;
    row.kernel = cfg.model.first_kernel;
    row.stride = cfg.model.first_stride;
    row.seed = cfg.seed;

    if (auto it = done.find(trial_key(row)); it != done.end()) {
      result.trials.push_back(it->second);
      ++n_ok;
    } else {
      auto t0 = std::chrono::steady_clock::now();
      try {
        TrainResult tr = train(cfg, manifest, splits, cache);
        row.best_val = tr.history.best_val_metric;
        if (!splits.test.empty())
          row.test_acc = evaluate(*tr.model, manifest, splits.test, cache).headline();
        ++n_ok;
      } catch (const std::exception& e) {
        row.failed = true;
        row.error = e.what();
      }
      row.wall_time_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      result.trials.push_back(row);
      if (!resume_csv.empty()) save_trial_csv(result.trials, resume_csv);
    }
  }
  if (n_ok == 0) throw std::runtime_error("grid_search: every trial failed");

  // Highest validation metric; deterministic tie-break toward lower lr,
  // smaller batch, kernel, stride (enumeration is not in that order, so sort).
  int best_i = -1;
  for (size_t i = 0; i < result.trials.size(); ++i) {
    const TrialRow& r = result.trials[i];
    if (r.failed) continue;
    if (best_i < 0) {
      best_i = static_cast<int>(i);
      continue;
    }
    const TrialRow& b = result.trials[static_cast<size_t>(best_i)];
    if (r.best_val > b.best_val ||
        (r.best_val == b.best_val &&
         std::tie(r.lr, r.batch, r.kernel, r.stride) < std::tie(b.lr, b.batch, b.kernel, b.stride)))
      best_i = static_cast<int>(i);
  }
  const TrialRow& b = result.trials[static_cast<size_t>(best_i)];
  result.best = base;
  result.best.learning_rate = b.lr;
  result.best.batch_size = b.batch;
  result.best.model.first_kernel = b.kernel;
  result.best.model.first_stride = b.stride;
  return result;
}

void save_trial_csv(const std::vector<TrialRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trial table: " + path);
  out << "lr,batch,kernel,stride,seed,best_val,test_acc,wall_time_s,failed,error\n";
  for (const auto& r : rows)
    out << r.lr << ',' << r.batch << ',' << r.kernel << ',' << r.stride << ',' << r.seed << ','
        << r.best_val << ',' << r.test_acc << ',' << r.wall_time_s << ',' << (r.failed ? 1 : 0)
        << ',' << '"' << r.error << '"' << '\n';
}

std::vector<TrialRow> load_trial_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("trial table not found: " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<TrialRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    TrialRow r;
    char comma;
    int failed = 0;
    ls >> r.lr >> comma >> r.batch >> comma >> r.kernel >> comma >> r.stride >> comma >> r.seed >>
        comma >> r.best_val >> comma >> r.test_acc >> comma >> r.wall_time_s >> comma >> failed;
    r.failed = failed != 0;
    rows.push_back(r);
  }
  return rows;
}

RunResult multi_seed(const TrainConfig& cfg, const Manifest& manifest, const SplitSet& splits,
                     const std::vector<uint64_t>& seeds, PreprocessCache* cache,
                     const std::function<void(uint64_t, double)>& on_seed) {
  if (seeds.empty()) throw std::invalid_argument("multi_seed: need at least one seed");
  RunResult out;
  out.seeds = seeds;
  out.n_seeds = static_cast<int>(seeds.size());
  for (uint64_t seed : seeds) {
    TrainConfig c = cfg;
    c.seed = seed;
    try {
      TrainResult tr = train(c, manifest, splits, cache);
      EvalReport rep = evaluate(*tr.model, manifest, splits.test, cache, cfg.batch_size);
      out.accuracies.push_back(rep.headline());
      out.tool_accuracies.push_back(rep.tool_acc);
      out.action_accuracies.push_back(rep.action_acc);
      if (on_seed) on_seed(seed, rep.headline());
    } catch (const std::exception& e) {
      throw std::runtime_error("multi_seed: seed " + std::to_string(seed) + ": " + e.what());
    }
  }
  if (out.accuracies.size() >= 2) {
    auto [mean, half] = confidence_interval(out.accuracies);
    out.mean = mean;
    out.ci_half_width = half;
  } else {
    out.mean = out.accuracies[0];
    out.ci_half_width = 0;
  }
  return out;
}

}  // namespace affbench
