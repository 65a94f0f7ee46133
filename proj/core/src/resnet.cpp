#include "affbench/resnet.hpp"

#include <stdexcept>

namespace affbench {

namespace {
// Cache slot layout for blocks:
//   children[0..n): sub-layer caches in forward order.
enum BasicSlots { kB_conv1, kB_bn1, kB_relu1, kB_conv2, kB_bn2, kB_proj, kB_projbn, kB_reluout, kB_count };
enum BotSlots {
  kT_conv1, kT_bn1, kT_relu1, kT_conv2, kT_bn2, kT_relu2,
  kT_conv3, kT_bn3, kT_proj, kT_projbn, kT_reluout, kT_count
};
}  // namespace

BasicBlock::BasicBlock(int in_ch, int out_ch, int stride, const std::string& name) {
  conv1_ = std::make_unique<Conv2d>(in_ch, out_ch, 3, stride, 1, name + ".conv1");
  bn1_ = std::make_unique<BatchNorm2d>(out_ch, name + ".bn1");
  conv2_ = std::make_unique<Conv2d>(out_ch, out_ch, 3, 1, 1, name + ".conv2");
  bn2_ = std::make_unique<BatchNorm2d>(out_ch, name + ".bn2");
  if (stride != 1 || in_ch != out_ch) {
    proj_ = std::make_unique<Conv2d>(in_ch, out_ch, 1, stride, 0, name + ".proj");
    proj_bn_ = std::make_unique<BatchNorm2d>(out_ch, name + ".proj_bn");
  }
}

Tensor BasicBlock::forward(const Tensor& x, Cache& cache, bool training) {
  cache.children.resize(kB_count);
  Tensor h = conv1_->forward(x, cache.children[kB_conv1], training);
  h = bn1_->forward(h, cache.children[kB_bn1], training);
  h = relu1_.forward(h, cache.children[kB_relu1], training);
  h = conv2_->forward(h, cache.children[kB_conv2], training);
  h = bn2_->forward(h, cache.children[kB_bn2], training);
  if (proj_) {
    Tensor skip = proj_->forward(x, cache.children[kB_proj], training);
    skip = proj_bn_->forward(skip, cache.children[kB_projbn], training);
    add_inplace(h, skip);
  } else {
    add_inplace(h, x);
  }
  return relu_out_.forward(h, cache.children[kB_reluout], training);
}

Tensor BasicBlock::backward(const Tensor& gy, const Cache& cache) {
  Tensor g = relu_out_.backward(gy, cache.children[kB_reluout]);
  Tensor gm = bn2_->backward(g, cache.children[kB_bn2]);
  gm = conv2_->backward(gm, cache.children[kB_conv2]);
  gm = relu1_.backward(gm, cache.children[kB_relu1]);
  gm = bn1_->backward(gm, cache.children[kB_bn1]);
  gm = conv1_->backward(gm, cache.children[kB_conv1]);
  if (proj_) {
    Tensor gs = proj_bn_->backward(g, cache.children[kB_projbn]);
    gs = proj_->backward(gs, cache.children[kB_proj]);
    add_inplace(gm, gs);
  } else {
    add_inplace(gm, g);
  }
  return gm;
}

void BasicBlock::collect_params(std::vector<Param*>& out) {
  conv1_->collect_params(out);
  bn1_->collect_params(out);
  conv2_->collect_params(out);
  bn2_->collect_params(out);
  if (proj_) {
    proj_->collect_params(out);
    proj_bn_->collect_params(out);
  }
}

Bottleneck::Bottleneck(int in_ch, int mid_ch, int stride, const std::string& name) {
  const int out_ch = mid_ch * expansion;
  conv1_ = std::make_unique<Conv2d>(in_ch, mid_ch, 1, 1, 0, name + ".conv1");
  bn1_ = std::make_unique<BatchNorm2d>(mid_ch, name + ".bn1");
  conv2_ = std::make_unique<Conv2d>(mid_ch, mid_ch, 3, stride, 1, name + ".conv2");
  bn2_ = std::make_unique<BatchNorm2d>(mid_ch, name + ".bn2");
  conv3_ = std::make_unique<Conv2d>(mid_ch, out_ch, 1, 1, 0, name + ".conv3");
  bn3_ = std::make_unique<BatchNorm2d>(out_ch, name + ".bn3");
  if (stride != 1 || in_ch != out_ch) {
    proj_ = std::make_unique<Conv2d>(in_ch, out_ch, 1, stride, 0, name + ".proj");
    proj_bn_ = std::make_unique<BatchNorm2d>(out_ch, name + ".proj_bn");
  }
}

Tensor Bottleneck::forward(const Tensor& x, Cache& cache, bool training) {
  cache.children.resize(kT_count);
  Tensor h = conv1_->forward(x, cache.children[kT_conv1], training);
  h = bn1_->forward(h, cache.children[kT_bn1], training);
  h = relu1_.forward(h, cache.children[kT_relu1], training);
  h = conv2_->forward(h, cache.children[kT_conv2], training);
  h = bn2_->forward(h, cache.children[kT_bn2], training);
  h = relu2_.forward(h, cache.children[kT_relu2], training);
  h = conv3_->forward(h, cache.children[kT_conv3], training);
  h = bn3_->forward(h, cache.children[kT_bn3], training);
  if (proj_) {
    Tensor skip = proj_->forward(x, cache.children[kT_proj], training);
    skip = proj_bn_->forward(skip, cache.children[kT_projbn], training);
    add_inplace(h, skip);
  } else {
    add_inplace(h, x);
  }
  return relu_out_.forward(h, cache.children[kT_reluout], training);
}

Tensor Bottleneck::backward(const Tensor& gy, const Cache& cache) {
  Tensor g = relu_out_.backward(gy, cache.children[kT_reluout]);
  Tensor gm = bn3_->backward(g, cache.children[kT_bn3]);
  gm = conv3_->backward(gm, cache.children[kT_conv3]);
  gm = relu2_.backward(gm, cache.children[kT_relu2]);
  gm = bn2_->backward(gm, cache.children[kT_bn2]);
  gm = conv2_->backward(gm, cache.children[kT_conv2]);
  gm = relu1_.backward(gm, cache.children[kT_relu1]);
  gm = bn1_->backward(gm, cache.children[kT_bn1]);
  gm = conv1_->backward(gm, cache.children[kT_conv1]);
  if (proj_) {
    Tensor gs = proj_bn_->backward(g, cache.children[kT_projbn]);
    gs = proj_->backward(gs, cache.children[kT_proj]);
    add_inplace(gm, gs);
  } else {
    add_inplace(gm, g);
  }
  return gm;
}

void Bottleneck::collect_params(std::vector<Param*>& out) {
  conv1_->collect_params(out);
  bn1_->collect_params(out);
  conv2_->collect_params(out);
  bn2_->collect_params(out);
  conv3_->collect_params(out);
  bn3_->collect_params(out);
  if (proj_) {
    proj_->collect_params(out);
    proj_bn_->collect_params(out);
  }
}

namespace {

struct StagePlan {
  bool bottleneck;
  std::array<int, 4> blocks;
};

StagePlan plan_for_depth(int depth) {
  switch (depth) {
    case 18: return {false, {2, 2, 2, 2}};
    case 50: return {true, {3, 4, 6, 3}};
    case 101: return {true, {3, 4, 23, 3}};
    default: throw std::invalid_argument("unsupported ResNet depth " + std::to_string(depth));
  }
}

}  // namespace

Encoder::Encoder(int depth, int first_kernel, int first_stride, int in_channels,
                 const std::string& name)
    : depth_(depth) {
  if (first_kernel != 3 && first_kernel != 5 && first_kernel != 7)
    throw std::invalid_argument("first_kernel must be 3, 5 or 7");
  if (first_stride != 1 && first_stride != 2)
    throw std::invalid_argument("first_stride must be 1 or 2");

  const StagePlan plan = plan_for_depth(depth);
  const int expansion = plan.bottleneck ? Bottleneck::expansion : BasicBlock::expansion;
  const std::array<int, 4> widths{64, 128, 256, 512};

  body_.add(std::make_unique<Conv2d>(in_channels, 64, first_kernel, first_stride,
                                     first_kernel / 2, name + ".stem"));
  body_.add(std::make_unique<BatchNorm2d>(64, name + ".stem_bn"));
  body_.add(std::make_unique<ReLU>());
  body_.add(std::make_unique<MaxPool2d>(3, 2, 1));

  int in_ch = 64;
  for (int s = 0; s < 4; ++s) {
    int stride = s == 0 ? 1 : 2;
    for (int b = 0; b < plan.blocks[s]; ++b) {
      std::string bname = name + ".s" + std::to_string(s + 1) + "b" + std::to_string(b);
      if (plan.bottleneck)
        body_.add(std::make_unique<Bottleneck>(in_ch, widths[s], b == 0 ? stride : 1, bname));
      else
        body_.add(std::make_unique<BasicBlock>(in_ch, widths[s], b == 0 ? stride : 1, bname));
      in_ch = widths[s] * expansion;
    }
  }
  body_.add(std::make_unique<GlobalAvgPool>());
  embedding_width_ = in_ch;
}

Tensor Encoder::forward(const Tensor& x, Cache& cache, bool training) {
  return body_.forward(x, cache, training);
}

Tensor Encoder::backward(const Tensor& gy, const Cache& cache) {
  return body_.backward(gy, cache);
}

void Encoder::collect_params(std::vector<Param*>& out) { body_.collect_params(out); }

void Encoder::visit_layers(const std::function<void(Layer&)>& fn) {
  fn(*this);
  body_.visit_layers(fn);
}

void BasicBlock::visit_layers(const std::function<void(Layer&)>& fn) {
  fn(*this);
  fn(*conv1_);
  fn(*bn1_);
  fn(*conv2_);
  fn(*bn2_);
  if (proj_) {
    fn(*proj_);
    fn(*proj_bn_);
  }
}

void Bottleneck::visit_layers(const std::function<void(Layer&)>& fn) {
  fn(*this);
  fn(*conv1_);
  fn(*bn1_);
  fn(*conv2_);
  fn(*bn2_);
  fn(*conv3_);
  fn(*bn3_);
  if (proj_) {
    fn(*proj_);
    fn(*proj_bn_);
  }
}

void Encoder::init_weights(SplitMix64& rng) {
  visit_layers([&rng](Layer& l) {
    if (auto* c = dynamic_cast<Conv2d*>(&l)) c->init(rng);
    if (auto* f = dynamic_cast<Linear*>(&l)) f->init(rng);
  });
}

std::unique_ptr<Encoder> build_backbone(int depth, int first_kernel, int first_stride,
                                        int in_channels, const std::string& name) {
  return std::make_unique<Encoder>(depth, first_kernel, first_stride, in_channels, name);
}

int64_t count_parameters(Layer& layer) {
  std::vector<Param*> params;
  layer.collect_params(params);
  int64_t n = 0;
  for (Param* p : params) n += p->value.numel();
  return n;
}

int64_t reference_parameter_count(int depth) {
  Encoder enc(depth, 7, 2, 3, "ref");
  Linear head(enc.embedding_width(), 1000, "ref.fc");
  return count_parameters(enc) + count_parameters(head);
}

}  // namespace affbench
