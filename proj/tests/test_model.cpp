#include <cstring>
#include <filesystem>

#include "doctest.h"

#include "affbench/model.hpp"
#include "affbench/trainer.hpp"

using namespace affbench;

namespace {

Batch random_batch(int B, FusionVariant v, HeadMode head, uint64_t seed, int hw = 32) {
  SplitMix64 rng(seed);
  Batch b;
  for (int k = 0; k < stream_count(v); ++k) {
    Tensor s({B, stream_channels(v), hw, hw});
    for (int64_t i = 0; i < s.numel(); ++i) s.data()[i] = static_cast<float>(rng.normal() * 0.3);
    b.streams.push_back(std::move(s));
  }
  for (int n = 0; n < B; ++n) {
    auto tool = static_cast<Tool>(rng.next_below(4));
    auto action = static_cast<Action>(rng.next_below(4));
    b.tool_labels.push_back(static_cast<int>(tool));
    b.action_labels.push_back(static_cast<int>(action));
    b.joint_labels.push_back(encode_joint_label(tool, action));
  }
  if (head == HeadMode::tool_with_action) {
    b.action_onehot = Tensor({B, 4});
    for (int n = 0; n < B; ++n) b.action_onehot.data()[n * 4 + b.action_labels[n]] = 1.0f;
  }
  return b;
}

}  // namespace

TEST_CASE("parameter counts match published resnet figures within 2%") {
  struct Row {
    int depth;
    double millions;
  };
  for (Row row : {Row{18, 11.7}, Row{50, 25.6}, Row{101, 44.5}}) {
    auto n = static_cast<double>(reference_parameter_count(row.depth));
    CHECK(std::abs(n / 1e6 - row.millions) / row.millions < 0.02);
  }
}

TEST_CASE("parameter count grows with depth") {
  ModelConfig cfg;
  cfg.variant = FusionVariant::shared_central_1c1n;
  int64_t prev = 0;
  for (int depth : {18, 50, 101}) {
    cfg.depth = depth;
    FusionModel m(cfg);
    int64_t n = m.parameter_count();
    CHECK(n > prev);
    prev = n;
  }
}

TEST_CASE("all variants and head modes produce declared logit shapes") {
  // Small inputs (32x32) keep this fast; spatial size does not change the
  // head shapes because of global average pooling.
  for (FusionVariant v :
       {FusionVariant::stacked_3c1n, FusionVariant::separate_3c6n,
        FusionVariant::separate_central_1c2n, FusionVariant::shared_3c3n,
        FusionVariant::shared_central_1c1n}) {
    for (HeadMode h : {HeadMode::tool, HeadMode::tool_with_action, HeadMode::dual,
                       HeadMode::joint16, HeadMode::action}) {
      ModelConfig cfg;
      cfg.depth = 18;
      cfg.variant = v;
      cfg.head = h;
      FusionModel m(cfg);
      m.init_weights(7);
      Batch b = random_batch(2, v, h, 11);
      Logits out = m.forward(b, false);
      if (h == HeadMode::tool || h == HeadMode::tool_with_action || h == HeadMode::dual) {
        CHECK(out.tool.shape() == std::vector<int64_t>{2, 4});
      }
      if (h == HeadMode::dual || h == HeadMode::action) {
        CHECK(out.action.shape() == std::vector<int64_t>{2, 4});
      }
      if (h == HeadMode::joint16) {
        CHECK(out.joint.shape() == std::vector<int64_t>{2, 16});
      }
    }
  }
}

TEST_CASE("encoder counts per variant") {
  auto encoders_of = [](FusionVariant v) {
    ModelConfig cfg;
    cfg.variant = v;
    return FusionModel(cfg).num_encoders();
  };
  CHECK(encoders_of(FusionVariant::stacked_3c1n) == 1);
  CHECK(encoders_of(FusionVariant::separate_3c6n) == 6);
  CHECK(encoders_of(FusionVariant::separate_central_1c2n) == 2);
  CHECK(encoders_of(FusionVariant::shared_3c3n) == 3);
  CHECK(encoders_of(FusionVariant::shared_central_1c1n) == 1);
}

TEST_CASE("shared variants give bit-identical embeddings for identical inputs") {
  for (FusionVariant v : {FusionVariant::shared_central_1c1n, FusionVariant::shared_3c3n}) {
    ModelConfig cfg;
    cfg.variant = v;
    cfg.head = HeadMode::joint16;
    FusionModel m(cfg);
    m.init_weights(3);

    int n_streams = stream_count(v);
    Batch b = random_batch(2, v, cfg.head, 5);
    // Make the final-phase streams copies of the initial-phase streams.
    for (int k = n_streams / 2; k < n_streams; ++k) b.streams[k] = b.streams[k - n_streams / 2];

    Cache c1, c2;
    int k0 = 0, k1 = n_streams / 2;  // same camera, both phases
    REQUIRE(m.encoder_for_stream(k0) == m.encoder_for_stream(k1));
    Tensor e1 = m.encoder(m.encoder_for_stream(k0)).forward(b.streams[k0], c1, false);
    Tensor e2 = m.encoder(m.encoder_for_stream(k1)).forward(b.streams[k1], c2, false);
    CHECK(std::memcmp(e1.data(), e2.data(), sizeof(float) * e1.numel()) == 0);
  }
}

TEST_CASE("separate variants with independent init give differing embeddings") {
  for (FusionVariant v :
       {FusionVariant::separate_central_1c2n, FusionVariant::separate_3c6n}) {
    ModelConfig cfg;
    cfg.variant = v;
    cfg.head = HeadMode::joint16;
    FusionModel m(cfg);
    m.init_weights(3);

    int n_streams = stream_count(v);
    Batch b = random_batch(1, v, cfg.head, 5);
    for (int k = n_streams / 2; k < n_streams; ++k) b.streams[k] = b.streams[k - n_streams / 2];
    int k0 = 0, k1 = n_streams / 2;
    REQUIRE(m.encoder_for_stream(k0) != m.encoder_for_stream(k1));
    Cache c1, c2;
    Tensor e1 = m.encoder(m.encoder_for_stream(k0)).forward(b.streams[k0], c1, false);
    Tensor e2 = m.encoder(m.encoder_for_stream(k1)).forward(b.streams[k1], c2, false);
    CHECK(std::memcmp(e1.data(), e2.data(), sizeof(float) * e1.numel()) != 0);
  }
}

TEST_CASE("training a shared model accumulates gradient from both passes") {
  ModelConfig cfg;
  cfg.variant = FusionVariant::shared_central_1c1n;
  cfg.head = HeadMode::joint16;
  FusionModel m(cfg);
  m.init_weights(1);
  Batch b = random_batch(2, cfg.variant, cfg.head, 8);

  m.zero_grad();
  Logits out = m.forward(b, true);
  Logits grads;
  loss(out, b, cfg.head, &grads);
  m.backward(grads);

  std::vector<Param*> params;
  m.collect_params(params);
  double total = 0;
  for (Param* p : params)
    for (int64_t i = 0; i < p->grad.numel(); ++i) total += std::abs(p->grad[i]);
  CHECK(total > 0);
}

TEST_CASE("model state round trips through set_state") {
  ModelConfig cfg;
  cfg.head = HeadMode::dual;
  FusionModel a(cfg);
  a.init_weights(10);
  std::vector<float> s = a.state();

  FusionModel b(cfg);
  b.init_weights(11);
  b.set_state(s);
  CHECK(b.state() == s);

  Batch batch = random_batch(2, cfg.variant, cfg.head, 3);
  Logits la = a.forward(batch, false);
  Logits lb = b.forward(batch, false);
  CHECK(std::memcmp(la.tool.data(), lb.tool.data(), sizeof(float) * la.tool.numel()) == 0);
}

TEST_CASE("checkpoint file round trips weights and config") {
  ModelConfig cfg;
  cfg.depth = 18;
  cfg.variant = FusionVariant::separate_central_1c2n;
  cfg.head = HeadMode::joint16;
  FusionModel a(cfg);
  a.init_weights(21);

  auto path = std::filesystem::temp_directory_path() / "affbench_ckpt.bin";
  a.save_checkpoint(path.string());
  auto b = FusionModel::load_checkpoint(path.string());
  CHECK(b->config().variant == cfg.variant);
  CHECK(b->config().head == cfg.head);
  CHECK(b->state() == a.state());
  std::filesystem::remove(path);
}

TEST_CASE("model config validation rejects bad fields") {
  ModelConfig cfg;
  cfg.depth = 34;
  CHECK_THROWS(cfg.validate());
  cfg.depth = 18;
  cfg.first_kernel = 4;
  CHECK_THROWS(cfg.validate());
  cfg.first_kernel = 5;
  cfg.first_stride = 3;
  CHECK_THROWS(cfg.validate());
  cfg.first_stride = 1;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("18-channel stacked input is consumed by 3C-1N") {
  ModelConfig cfg;
  cfg.variant = FusionVariant::stacked_3c1n;
  cfg.head = HeadMode::joint16;
  FusionModel m(cfg);
  m.init_weights(2);
  Batch b = random_batch(2, cfg.variant, cfg.head, 4);
  REQUIRE(b.streams.size() == 1);
  REQUIRE(b.streams[0].dim(1) == 18);
  Logits out = m.forward(b, false);
  CHECK(out.joint.dim(1) == 16);
}

TEST_CASE("residual blocks with zeroed weights pass identity through the skip path") {
  // With all conv/bn weights zeroed, a non-projecting basic block reduces to
  // relu(x + 0) = relu(x).
  BasicBlock block(8, 8, 1, "blk");
  std::vector<Param*> params;
  block.collect_params(params);
  for (Param* p : params) p->value.fill(0.0f);

  Tensor x({1, 8, 4, 4});
  SplitMix64 rng(12);
  for (int64_t i = 0; i < x.numel(); ++i) x.data()[i] = static_cast<float>(rng.normal());
  Cache cache;
  Tensor y = block.forward(x, cache, false);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(y.data()[i] == doctest::Approx(std::max(0.0f, x.data()[i])));
}
