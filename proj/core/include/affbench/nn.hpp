#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "affbench/tensor.hpp"

namespace affbench {

/// Trainable parameter: value + gradient accumulator.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  void zero_grad() { grad.fill(0.0f); }
};

/// Per-forward-pass activation cache. Kept outside the layers so one layer
/// object can run several passes per step (weight-shared encoders) without
/// clobbering its own state.
struct Cache {
  std::vector<Tensor> t;
  std::vector<std::vector<int32_t>> idx;
  std::vector<Cache> children;
};

class Layer {
 public:
  virtual ~Layer() = default;
  /// `training` controls batch-norm statistics and cache content.
  virtual Tensor forward(const Tensor& x, Cache& cache, bool training) = 0;
  /// Accumulates into parameter grads; returns grad w.r.t. the input.
  virtual Tensor backward(const Tensor& gy, const Cache& cache) = 0;
  virtual void collect_params(std::vector<Param*>& out) {}
  /// Depth-first visit of this layer and any sub-layers.
  virtual void visit_layers(const std::function<void(Layer&)>& fn) { fn(*this); }
};

class Conv2d : public Layer {
 public:
  Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, std::string name);
  Tensor forward(const Tensor& x, Cache& cache, bool training) override;
  Tensor backward(const Tensor& gy, const Cache& cache) override;
  void collect_params(std::vector<Param*>& out) override { out.push_back(&weight_); }
  void init(SplitMix64& rng);  // He fan-out normal

  int in_ch_, out_ch_, kernel_, stride_, pad_;
  Param weight_;  // [out, in*k*k]
};

class BatchNorm2d : public Layer {
 public:
  BatchNorm2d(int channels, std::string name);
  Tensor forward(const Tensor& x, Cache& cache, bool training) override;
  Tensor backward(const Tensor& gy, const Cache& cache) override;
  void collect_params(std::vector<Param*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }

  /// Between begin/end, training forwards replace the momentum update with
  /// an equal-weighted average, so running statistics are recomputed from
  /// scratch for the current weights ("precise" batch-norm evaluation).
  void begin_stat_refresh() { refresh_n_ = 0; }
  void end_stat_refresh() { refresh_n_ = -1; }

  int channels_;
  float momentum_ = 0.1f;
  float eps_ = 1e-5f;
  Param gamma_, beta_;
  Tensor running_mean_, running_var_;

 private:
  int refresh_n_ = -1;
};

class ReLU : public Layer {
 public:
  Tensor forward(const Tensor& x, Cache& cache, bool training) override;
  Tensor backward(const Tensor& gy, const Cache& cache) override;
};

class MaxPool2d : public Layer {
 public:
  MaxPool2d(int kernel, int stride, int pad) : kernel_(kernel), stride_(stride), pad_(pad) {}
  Tensor forward(const Tensor& x, Cache& cache, bool training) override;
  Tensor backward(const Tensor& gy, const Cache& cache) override;

  int kernel_, stride_, pad_;
};

class GlobalAvgPool : public Layer {
 public:
  Tensor forward(const Tensor& x, Cache& cache, bool training) override;
  Tensor backward(const Tensor& gy, const Cache& cache) override;
};

class Linear : public Layer {
 public:
  Linear(int in_features, int out_features, std::string name);
  Tensor forward(const Tensor& x, Cache& cache, bool training) override;
  Tensor backward(const Tensor& gy, const Cache& cache) override;
  void collect_params(std::vector<Param*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  void init(SplitMix64& rng);  // uniform +-1/sqrt(fan_in)

  int in_, out_;
  Param weight_;  // [out, in]
  Param bias_;    // [out]
};

/// Runs children in order; cache.children[i] belongs to child i.
class Sequential : public Layer {
 public:
  void add(std::unique_ptr<Layer> l) { layers_.push_back(std::move(l)); }
  Tensor forward(const Tensor& x, Cache& cache, bool training) override;
  Tensor backward(const Tensor& gy, const Cache& cache) override;
  void collect_params(std::vector<Param*>& out) override {
    for (auto& l : layers_) l->collect_params(out);
  }
  void visit_layers(const std::function<void(Layer&)>& fn) override {
    fn(*this);
    for (auto& l : layers_) l->visit_layers(fn);
  }
  size_t size() const { return layers_.size(); }
  Layer& at(size_t i) { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Elementwise helpers used by residual blocks and heads.
void add_inplace(Tensor& dst, const Tensor& src);

}  // namespace affbench
