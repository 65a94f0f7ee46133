#pragma once

#include <memory>

#include "affbench/nn.hpp"

namespace affbench {

/// conv3x3 -> bn -> relu -> conv3x3 -> bn, plus identity/projected skip.
class BasicBlock : public Layer {
 public:
  BasicBlock(int in_ch, int out_ch, int stride, const std::string& name);
  Tensor forward(const Tensor& x, Cache& cache, bool training) override;
  Tensor backward(const Tensor& gy, const Cache& cache) override;
  void collect_params(std::vector<Param*>& out) override;
  void visit_layers(const std::function<void(Layer&)>& fn) override;

  static constexpr int expansion = 1;

 private:
  std::unique_ptr<Conv2d> conv1_, conv2_, proj_;
  std::unique_ptr<BatchNorm2d> bn1_, bn2_, proj_bn_;
  ReLU relu1_, relu_out_;
};

/// 1x1 reduce -> 3x3 -> 1x1 expand (x4), plus skip.
class Bottleneck : public Layer {
 public:
  Bottleneck(int in_ch, int mid_ch, int stride, const std::string& name);
  Tensor forward(const Tensor& x, Cache& cache, bool training) override;
  Tensor backward(const Tensor& gy, const Cache& cache) override;
  void collect_params(std::vector<Param*>& out) override;
  void visit_layers(const std::function<void(Layer&)>& fn) override;

  static constexpr int expansion = 4;

 private:
  std::unique_ptr<Conv2d> conv1_, conv2_, conv3_, proj_;
  std::unique_ptr<BatchNorm2d> bn1_, bn2_, bn3_, proj_bn_;
  ReLU relu1_, relu2_, relu_out_;
};

/// ResNet trunk ending in global average pooling; emits a flat embedding of
/// width 512 (depth 18) or 2048 (depths 50/101).
class Encoder : public Layer {
 public:
  Encoder(int depth, int first_kernel, int first_stride, int in_channels,
          const std::string& name);

  Tensor forward(const Tensor& x, Cache& cache, bool training) override;
  Tensor backward(const Tensor& gy, const Cache& cache) override;
  void collect_params(std::vector<Param*>& out) override;
  void visit_layers(const std::function<void(Layer&)>& fn) override;

  void init_weights(SplitMix64& rng);
  int embedding_width() const { return embedding_width_; }
  int depth() const { return depth_; }

 private:
  int depth_;
  int embedding_width_;
  Sequential body_;
};

std::unique_ptr<Encoder> build_backbone(int depth, int first_kernel, int first_stride,
                                        int in_channels, const std::string& name = "encoder");

/// Trainable parameter count of a layer (or whole model).
int64_t count_parameters(Layer& layer);

/// Parameter count of the standard single-backbone configuration used in
/// published tables: 7x7/stride-2 stem and a 1000-way classification head.
int64_t reference_parameter_count(int depth);

}  // namespace affbench
