#include <doctest.h>

#include "dmt/models.hpp"
#include "dmt/ops.hpp"
#include "oracles.hpp"

using namespace dmt;
using namespace dmt::testing;

TEST_CASE("models: transformer parameter count with default sizes") {
  nn::ModelConfig c;
  const std::size_t d = 256, f = 512, V = 100;
  const std::size_t attn = 4 * (d * d + d);
  const std::size_t ffn = d * f + f + f * d + d;
  const std::size_t expected = 3 * (attn + ffn + 2 * 2 * d) + 3 * (2 * attn + ffn + 3 * 2 * d) +
                               2 * V * d + 2 * 2 * d + d * V + V;
  CHECK(expected == 4031588);
  CHECK(nn::parameter_count(c, V, V) == expected);
  CHECK(nn::build_model(c, V, V, 1)->parameters().count() == expected);
}

TEST_CASE("models: closed-form parameter counts match built models") {
  for (auto arch : all_archs()) {
    auto c = tiny_config(arch, 6);
    CAPTURE(nn::arch_name(arch));
    CHECK(nn::parameter_count(c, 11, 13) == nn::build_model(c, 11, 13, 3)->parameters().count());
    c.lstm.layers = 2;
    c.lstm.attention = false;
    CHECK(nn::parameter_count(c, 11, 13) == nn::build_model(c, 11, 13, 3)->parameters().count());
  }
}

TEST_CASE("models: initialization is a function of the seed") {
  for (auto arch : all_archs()) {
    auto a = nn::build_model(tiny_config(arch), 9, 9, 5);
    auto b = nn::build_model(tiny_config(arch), 9, 9, 5);
    auto c = nn::build_model(tiny_config(arch), 9, 9, 6);
    const auto& pa = a->parameters().items();
    const auto& pb = b->parameters().items();
    bool differs = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(pa[i].name == pb[i].name);
      CHECK(std::equal(pa[i].tensor.values().begin(), pa[i].tensor.values().end(),
                       pb[i].tensor.values().begin()));
      const auto& pc = c->parameters().items()[i].tensor;
      differs = differs || !std::equal(pa[i].tensor.values().begin(), pa[i].tensor.values().end(),
                                       pc.values().begin());
    }
    CHECK(differs);
  }
}

TEST_CASE("models: configuration validation") {
  nn::ModelConfig c;
  c.transformer.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  c.transformer.allow_uneven_heads = true;
  c.validate();
  CHECK(c.transformer.head_dims() == std::vector<std::size_t>{86, 85, 85});
  c.arch = nn::Arch::conv;
  c.conv.kernel_width = 2;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK_THROWS_AS(nn::parse_arch("rnn"), Error);
  CHECK(nn::parse_arch("bilstm") == nn::Arch::bilstm);
}

TEST_CASE("models: config key-value round trip") {
  nn::ModelConfig c;
  c.arch = nn::Arch::lstm;
  c.lstm.hidden_dim = 17;
  auto back = nn::ModelConfig::from_kv(c.to_kv());
  CHECK(back.arch == nn::Arch::lstm);
  CHECK(back.lstm.hidden_dim == 17);
  auto kv = c.to_kv();
  kv["model.bogus"] = "1";
  CHECK_THROWS_AS(nn::ModelConfig::from_kv(kv), Error);
}

TEST_CASE("models: output shapes and id validation") {
  for (auto arch : all_archs()) {
    auto m = nn::build_model(tiny_config(arch), 9, 11, 1);
    auto src = nn::IdBatch::from_rows({{4, 5, 3}, {6, 3}});
    auto prefix = nn::IdBatch::from_rows({{2, 4}, {2, 7}});
    auto out = m->forward(src, prefix, nn::ForwardContext{});
    CHECK(out.shape() == ad::Shape{2, 2, 11});
    auto bad = nn::IdBatch::from_rows({{4, 50}});
    CHECK_THROWS_AS(m->forward(bad, prefix, nn::ForwardContext{}), Error);
  }
}

TEST_CASE("models: full loss gradients") {
  for (auto arch : all_archs()) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      CAPTURE(nn::arch_name(arch));
      CAPTURE(seed);
      auto r = model_grad_check(arch, seed);
      CHECK(r.checked > 0);
      CHECK(r.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("models: future target tokens never affect earlier logits") {
  for (auto arch : all_archs()) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      CAPTURE(nn::arch_name(arch));
      CHECK(causality_violations(arch, seed) == 0);
    }
  }
}

TEST_CASE("models: padded source positions are invisible") {
  for (auto arch : all_archs()) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      CAPTURE(nn::arch_name(arch));
      CHECK(pad_sensitivity(arch, seed) <= 1e-9);
    }
  }
}

TEST_CASE("models: dropout only acts in training mode") {
  auto cfg = tiny_config(nn::Arch::transformer);
  cfg.transformer.dropout = 0.5;
  auto m = nn::build_model(cfg, 9, 9, 1);
  auto src = nn::IdBatch::from_rows({{4, 5, 3}});
  auto prefix = nn::IdBatch::from_rows({{2, 4}});
  auto a = logits_of(*m, src, prefix);
  CHECK(a == logits_of(*m, src, prefix));
  Rng rng(1);
  nn::ForwardContext train_ctx{true, &rng};
  auto t = m->forward(src, prefix, train_ctx);
  CHECK(std::vector<double>(t.values().begin(), t.values().end()) != a);
}
