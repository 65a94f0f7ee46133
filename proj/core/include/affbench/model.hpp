#pragma once

#include <memory>
#include <string>
#include <vector>

#include "affbench/dataset.hpp"
#include "affbench/resnet.hpp"

namespace affbench {

struct ModelConfig {
  int depth = 18;  // 18 | 50 | 101
  FusionVariant variant = FusionVariant::shared_central_1c1n;
  HeadMode head = HeadMode::dual;
  int first_kernel = 7;  // 3 | 5 | 7
  int first_stride = 2;  // 1 | 2

  void validate() const;
  std::string describe() const;
};

/// Raw classifier outputs; populated fields depend on the head mode.
struct Logits {
  Tensor tool;    // [B,4] for tool / tool_with_action / dual
  Tensor action;  // [B,4] for dual / action
  Tensor joint;   // [B,16] for joint16
};

/// One of the five fusion architectures with its classification head(s).
/// Encoders may be shared across streams; a shared encoder accumulates
/// gradient from every pass it participates in.
class FusionModel {
 public:
  explicit FusionModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  int num_encoders() const { return static_cast<int>(encoders_.size()); }
  Encoder& encoder(int i) { return *encoders_[i]; }
  int encoder_for_stream(int k) const { return stream_encoder_[k]; }
  int concat_width() const { return concat_width_; }

  void init_weights(uint64_t seed);

  /// Forward over a batch; the batch must be arranged for cfg.variant.
  Logits forward(const Batch& batch, bool training);

  /// Backward from logit gradients; call immediately after a training
  /// forward. Accumulates into parameter grads.
  void backward(const Logits& grad_logits);

  void collect_params(std::vector<Param*>& out);
  void visit_layers(const std::function<void(Layer&)>& fn);
  void zero_grad();
  int64_t parameter_count();

  /// Flat snapshot of all weights plus batch-norm running statistics.
  std::vector<float> state() const;
  void set_state(const std::vector<float>& s);

  void save_checkpoint(const std::string& path) const;
  static std::unique_ptr<FusionModel> load_checkpoint(const std::string& path);

 private:
  Tensor concat_embeddings(const Batch& batch, bool training);

  ModelConfig cfg_;
  std::vector<std::unique_ptr<Encoder>> encoders_;
  std::vector<int> stream_encoder_;               // stream index -> encoder index
  std::vector<std::vector<int>> encoder_streams_;  // encoder index -> its streams
  std::unique_ptr<Linear> head_tool_, head_action_, head_joint_;
  int concat_width_ = 0;

  // Per-encoder activation caches from the last training forward. A shared
  // encoder sees all of its streams stacked into one batch, so batch-norm
  // statistics cover every stream it serves.
  std::vector<Cache> encoder_caches_;
  std::vector<int64_t> emb_offsets_;  // start of each stream's slice in the concat
  Cache head_tool_cache_, head_action_cache_, head_joint_cache_;
  int64_t last_batch_ = 0;
};

}  // namespace affbench
