#include "affbench/model.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

using nlohmann::json;

namespace affbench {

void ModelConfig::validate() const {
  if (depth != 18 && depth != 50 && depth != 101)
    throw std::invalid_argument("depth must be 18, 50 or 101");
  if (first_kernel != 3 && first_kernel != 5 && first_kernel != 7)
    throw std::invalid_argument("first_kernel must be 3, 5 or 7");
  if (first_stride != 1 && first_stride != 2)
    throw std::invalid_argument("first_stride must be 1 or 2");
}

std::string ModelConfig::describe() const {
  return std::string(to_string(variant)) + "/resnet" + std::to_string(depth) + "/" +
         to_string(head) + "/k" + std::to_string(first_kernel) + "s" +
         std::to_string(first_stride);
}

FusionModel::FusionModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();

  const int in_ch = stream_channels(cfg.variant);
  int n_encoders = 0;
  switch (cfg.variant) {
    case FusionVariant::stacked_3c1n:
      n_encoders = 1;
      stream_encoder_ = {0};
      break;
    case FusionVariant::separate_3c6n:
      n_encoders = 6;
      stream_encoder_ = {0, 1, 2, 3, 4, 5};
      break;
    case FusionVariant::separate_central_1c2n:
      n_encoders = 2;
      stream_encoder_ = {0, 1};
      break;
    case FusionVariant::shared_3c3n:
      // One encoder per camera, applied to that camera's initial and final
      // image. Stream order is L_i, C_i, R_i, L_f, C_f, R_f.
      n_encoders = 3;
      stream_encoder_ = {0, 1, 2, 0, 1, 2};
      break;
    case FusionVariant::shared_central_1c1n:
      n_encoders = 1;
      stream_encoder_ = {0, 0};
      break;
  }

  for (int i = 0; i < n_encoders; ++i)
    encoders_.push_back(build_backbone(cfg.depth, cfg.first_kernel, cfg.first_stride, in_ch,
                                       "enc" + std::to_string(i)));

  concat_width_ = 0;
  emb_offsets_.clear();
  encoder_streams_.assign(encoders_.size(), {});
  for (int k = 0; k < static_cast<int>(stream_encoder_.size()); ++k) {
    emb_offsets_.push_back(concat_width_);
    concat_width_ += encoders_[stream_encoder_[k]]->embedding_width();
    encoder_streams_[static_cast<size_t>(stream_encoder_[k])].push_back(k);
  }
  int head_in = concat_width_ + (cfg.head == HeadMode::tool_with_action ? 4 : 0);

  switch (cfg.head) {
    case HeadMode::tool:
    case HeadMode::tool_with_action:
      head_tool_ = std::make_unique<Linear>(head_in, kNumTools, "head.tool");
      break;
    case HeadMode::dual:
      head_tool_ = std::make_unique<Linear>(head_in, kNumTools, "head.tool");
      head_action_ = std::make_unique<Linear>(head_in, kNumActions, "head.action");
      break;
    case HeadMode::joint16:
      head_joint_ = std::make_unique<Linear>(head_in, kNumTools * kNumActions, "head.joint");
      break;
    case HeadMode::action:
      head_action_ = std::make_unique<Linear>(head_in, kNumActions, "head.action");
      break;
  }
}

void FusionModel::init_weights(uint64_t seed) {
  SplitMix64 rng(fnv1a64("affbench.model.init", fnv1a64(&seed, sizeof(seed))));
  for (auto& e : encoders_) e->init_weights(rng);
  if (head_tool_) head_tool_->init(rng);
  if (head_action_) head_action_->init(rng);
  if (head_joint_) head_joint_->init(rng);
}

Tensor FusionModel::concat_embeddings(const Batch& batch, bool training) {
  const int n_streams = static_cast<int>(stream_encoder_.size());
  if (static_cast<int>(batch.streams.size()) != n_streams)
    throw std::invalid_argument("batch has " + std::to_string(batch.streams.size()) +
                                " streams, model " + cfg_.describe() + " expects " +
                                std::to_string(n_streams));
  const int64_t B = batch.streams[0].dim(0);
  last_batch_ = B;
  encoder_caches_.assign(encoders_.size(), Cache{});

  int head_in = concat_width_ + (cfg_.head == HeadMode::tool_with_action ? 4 : 0);
  Tensor concat({B, head_in});
  for (size_t e = 0; e < encoders_.size(); ++e) {
    const std::vector<int>& ks = encoder_streams_[e];
    const auto m = static_cast<int64_t>(ks.size());
    Tensor emb;
    if (m == 1) {
      emb = encoders_[e]->forward(batch.streams[static_cast<size_t>(ks[0])], encoder_caches_[e],
                                  training);
    } else {
      // Stack every stream this encoder serves into one batch, so one pass
      // (and one set of batch-norm statistics) covers all of them.
      const Tensor& s0 = batch.streams[static_cast<size_t>(ks[0])];
      const int64_t per = s0.numel();  // contiguous [B,C,H,W] block per stream
      Tensor stacked({m * B, s0.dim(1), s0.dim(2), s0.dim(3)});
      for (int64_t j = 0; j < m; ++j)
        std::memcpy(stacked.data() + j * per,
                    batch.streams[static_cast<size_t>(ks[static_cast<size_t>(j)])].data(),
                    static_cast<size_t>(per) * sizeof(float));
      emb = encoders_[e]->forward(stacked, encoder_caches_[e], training);
    }
    const int64_t w = emb.dim(1);
    for (int64_t j = 0; j < m; ++j) {
      const int off = emb_offsets_[static_cast<size_t>(ks[static_cast<size_t>(j)])];
      for (int64_t n = 0; n < B; ++n)
        std::memcpy(concat.data() + n * head_in + off, emb.data() + (j * B + n) * w,
                    static_cast<size_t>(w) * sizeof(float));
    }
  }
  if (cfg_.head == HeadMode::tool_with_action) {
    if (batch.action_onehot.numel() != B * 4)
      throw std::invalid_argument("tool_with_action model needs a [B,4] action one-hot block");
    for (int64_t n = 0; n < B; ++n)
      std::memcpy(concat.data() + n * head_in + concat_width_,
                  batch.action_onehot.data() + n * 4, 4 * sizeof(float));
  }
  return concat;
}

Logits FusionModel::forward(const Batch& batch, bool training) {
  Tensor concat = concat_embeddings(batch, training);
  Logits out;
  switch (cfg_.head) {
    case HeadMode::tool:
    case HeadMode::tool_with_action:
      out.tool = head_tool_->forward(concat, head_tool_cache_, training);
      break;
    case HeadMode::dual:
      out.tool = head_tool_->forward(concat, head_tool_cache_, training);
      out.action = head_action_->forward(concat, head_action_cache_, training);
      break;
    case HeadMode::joint16:
      out.joint = head_joint_->forward(concat, head_joint_cache_, training);
      break;
    case HeadMode::action:
      out.action = head_action_->forward(concat, head_action_cache_, training);
      break;
  }
  return out;
}

void FusionModel::backward(const Logits& grad_logits) {
  const int64_t B = last_batch_;
  int head_in = concat_width_ + (cfg_.head == HeadMode::tool_with_action ? 4 : 0);
  Tensor g_concat({B, head_in});

  auto accumulate = [&](Linear& head, const Tensor& gy, Cache& cache, bool first) {
    Tensor g = head.backward(gy, cache);
    if (first)
      g_concat = std::move(g);
    else
      add_inplace(g_concat, g);
  };

  switch (cfg_.head) {
    case HeadMode::tool:
    case HeadMode::tool_with_action:
      accumulate(*head_tool_, grad_logits.tool, head_tool_cache_, true);
      break;
    case HeadMode::dual:
      accumulate(*head_tool_, grad_logits.tool, head_tool_cache_, true);
      accumulate(*head_action_, grad_logits.action, head_action_cache_, false);
      break;
    case HeadMode::joint16:
      accumulate(*head_joint_, grad_logits.joint, head_joint_cache_, true);
      break;
    case HeadMode::action:
      accumulate(*head_action_, grad_logits.action, head_action_cache_, true);
      break;
  }

  // Route the embedding gradients back, one stacked pass per encoder,
  // mirroring the forward layout.
  for (size_t e = encoders_.size(); e-- > 0;) {
    Encoder& enc = *encoders_[e];
    const std::vector<int>& ks = encoder_streams_[e];
    const auto m = static_cast<int64_t>(ks.size());
    const int64_t w = enc.embedding_width();
    Tensor g_emb({m * B, w});
    for (int64_t j = 0; j < m; ++j) {
      const int off = emb_offsets_[static_cast<size_t>(ks[static_cast<size_t>(j)])];
      for (int64_t n = 0; n < B; ++n)
        std::memcpy(g_emb.data() + (j * B + n) * w, g_concat.data() + n * head_in + off,
                    static_cast<size_t>(w) * sizeof(float));
    }
    enc.backward(g_emb, encoder_caches_[e]);
  }
  encoder_caches_.clear();
}

void FusionModel::collect_params(std::vector<Param*>& out) {
  for (auto& e : encoders_) e->collect_params(out);
  if (head_tool_) head_tool_->collect_params(out);
  if (head_action_) head_action_->collect_params(out);
  if (head_joint_) head_joint_->collect_params(out);
}

void FusionModel::visit_layers(const std::function<void(Layer&)>& fn) {
  for (auto& e : encoders_) e->visit_layers(fn);
  if (head_tool_) head_tool_->visit_layers(fn);
  if (head_action_) head_action_->visit_layers(fn);
  if (head_joint_) head_joint_->visit_layers(fn);
}

void FusionModel::zero_grad() {
  std::vector<Param*> params;
  collect_params(params);
  for (Param* p : params) p->zero_grad();
}

int64_t FusionModel::parameter_count() {
  std::vector<Param*> params;
  collect_params(params);
  int64_t n = 0;
  for (Param* p : params) n += p->value.numel();
  return n;
}

std::vector<float> FusionModel::state() const {
  auto* self = const_cast<FusionModel*>(this);
  std::vector<Param*> params;
  self->collect_params(params);
  std::vector<float> s;
  for (Param* p : params)
    s.insert(s.end(), p->value.data(), p->value.data() + p->value.numel());
  for (auto& e : self->encoders_)
    e->visit_layers([&](Layer& l) {
      if (auto* bn = dynamic_cast<BatchNorm2d*>(&l)) {
        s.insert(s.end(), bn->running_mean_.data(),
                 bn->running_mean_.data() + bn->running_mean_.numel());
        s.insert(s.end(), bn->running_var_.data(),
                 bn->running_var_.data() + bn->running_var_.numel());
      }
    });
  return s;
}

void FusionModel::set_state(const std::vector<float>& s) {
  std::vector<Param*> params;
  collect_params(params);
  size_t off = 0;
  for (Param* p : params) {
    std::memcpy(p->value.data(), s.data() + off, static_cast<size_t>(p->value.numel()) * 4);
    off += static_cast<size_t>(p->value.numel());
  }
  for (auto& e : encoders_)
    e->visit_layers([&](Layer& l) {
      if (auto* bn = dynamic_cast<BatchNorm2d*>(&l)) {
        std::memcpy(bn->running_mean_.data(), s.data() + off,
                    static_cast<size_t>(bn->running_mean_.numel()) * 4);
        off += static_cast<size_t>(bn->running_mean_.numel());
        std::memcpy(bn->running_var_.data(), s.data() + off,
                    static_cast<size_t>(bn->running_var_.numel()) * 4);
        off += static_cast<size_t>(bn->running_var_.numel());
      }
    });
  if (off != s.size()) throw std::invalid_argument("set_state: size mismatch");
}

void FusionModel::save_checkpoint(const std::string& path) const {
  json cfg;
  cfg["depth"] = cfg_.depth;
  cfg["variant"] = to_string(cfg_.variant);
  cfg["head"] = to_string(cfg_.head);
  cfg["first_kernel"] = cfg_.first_kernel;
  cfg["first_stride"] = cfg_.first_stride;
  std::string header = cfg.dump();

  std::vector<float> s = state();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write("AFBCKPT1", 8);
  uint64_t hlen = header.size(), slen = s.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(header.data(), static_cast<std::streamsize>(hlen));
  out.write(reinterpret_cast<const char*>(&slen), 8);
  out.write(reinterpret_cast<const char*>(s.data()), static_cast<std::streamsize>(slen * 4));
}

std::unique_ptr<FusionModel> FusionModel::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint not found: " + path);
  char magic[8];
  in.read(magic, 8);
  if (std::string(magic, 8) != "AFBCKPT1")
    throw std::runtime_error("bad checkpoint magic in " + path);
  uint64_t hlen = 0, slen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  json cfg = json::parse(header);

  ModelConfig mc;
  mc.depth = cfg.at("depth").get<int>();
  mc.variant = variant_from_string(cfg.at("variant").get<std::string>());
  mc.head = head_mode_from_string(cfg.at("head").get<std::string>());
  mc.first_kernel = cfg.at("first_kernel").get<int>();
  mc.first_stride = cfg.at("first_stride").get<int>();

  auto model = std::make_unique<FusionModel>(mc);
  in.read(reinterpret_cast<char*>(&slen), 8);
  std::vector<float> s(slen);
  in.read(reinterpret_cast<char*>(s.data()), static_cast<std::streamsize>(slen * 4));
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);
  model->set_state(s);
  return model;
}

}  // namespace affbench
