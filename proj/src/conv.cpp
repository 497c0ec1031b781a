#include <cmath>
#include <numeric>

#include "dmt/models.hpp"
#include "dmt/ops.hpp"

namespace dmt::nn::detail {

using ad::Tensor;

namespace {

struct ConvBlock {
  Tensor w;  // [K, d, 2d]
  Tensor b;  // [2d]
};

struct DecoderLayer {
  ConvBlock conv;
  Tensor q_w, q_b, o_w, o_b;
};

// Convolutional encoder-decoder: residual GLU blocks, learned positions,
// and dot-product attention in every decoder layer. Attention values are
// encoder outputs plus the source embeddings.
class Conv final : public SeqModel {
public:
  Conv(const ModelConfig& cfg, std::size_t vs, std::size_t vt, Rng& rng) : SeqModel(cfg, vs, vt) {
    const ConvConfig& c = cfg.conv;
    const std::size_t d = c.dim, K = c.kernel_width;
    const double conv_std = 1.0 / std::sqrt(static_cast<double>(K * d));
    const double proj_std = 1.0 / std::sqrt(static_cast<double>(d));
    auto block = [&](const std::string& name) {
      return ConvBlock{params_.add(name + ".w", normal_tensor({K, d, 2 * d}, conv_std, rng)),
                       params_.add(name + ".b", Tensor::zeros({2 * d}))};
    };

    src_emb_ = params_.add("enc.emb", uniform_tensor({vs, d}, 0.1, rng));
    src_pos_ = params_.add("enc.pos", uniform_tensor({c.max_positions, d}, 0.1, rng));
    for (std::size_t l = 0; l < c.enc_layers; ++l) enc_.push_back(block("enc." + std::to_string(l)));

    tgt_emb_ = params_.add("dec.emb", uniform_tensor({vt, d}, 0.1, rng));
    tgt_pos_ = params_.add("dec.pos", uniform_tensor({c.max_positions, d}, 0.1, rng));
    for (std::size_t l = 0; l < c.dec_layers; ++l) {
      const std::string p = "dec." + std::to_string(l);
      DecoderLayer layer;
      layer.conv = block(p);
      layer.q_w = params_.add(p + ".q.w", normal_tensor({d, d}, proj_std, rng));
      layer.q_b = params_.add(p + ".q.b", Tensor::zeros({d}));
      layer.o_w = params_.add(p + ".o.w", normal_tensor({d, d}, proj_std, rng));
      layer.o_b = params_.add(p + ".o.b", Tensor::zeros({d}));
      dec_.push_back(std::move(layer));
    }
    out_w_ = params_.add("out.w", normal_tensor({d, vt}, proj_std, rng));
    out_b_ = params_.add("out.b", Tensor::zeros({vt}));
  }

  // states: [0] encoder outputs (keys), [1] outputs + embeddings (values).
  Memory encode(const IdBatch& src, const ForwardContext& ctx) const override {
    check_ids(src, src_vocab_, "source");
    Memory m;
    m.batch = src.rows;
    m.src_len = src.cols;
    m.mask_bias = pad_mask_bias(src, &m.pad, &m.fully_masked);
    const Tensor keep = keep_mask(src);
    const Tensor e = embed(src_emb_, src_pos_, src, ctx);
    Tensor x = e;
    for (const auto& blk : enc_) {
      // PAD frames are zeroed so they read exactly like the convolution's own padding.
      const Tensor h = ad::glu(ad::conv1d(ad::mul(x, keep), blk.w, blk.b, ad::PadMode::same));
      x = ad::add(x, maybe_dropout(h, ctx));
    }
    m.states.push_back(x);
    m.states.push_back(ad::add(x, e));
    return m;
  }

  Tensor decode_step(const Memory& memory, const IdBatch& prefix,
                     const ForwardContext& ctx) const override {
    check_ids(prefix, tgt_vocab_, "target");
    if (prefix.rows != memory.batch) {
      throw Error(ErrorKind::shape_mismatch, "prefix batch differs from memory batch");
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(config_.conv.dim));
    Tensor x = embed(tgt_emb_, tgt_pos_, prefix, ctx);
    for (const auto& layer : dec_) {
      Tensor h = ad::glu(ad::conv1d(x, layer.conv.w, layer.conv.b, ad::PadMode::causal));
      const Tensor a = attend(linear(h, layer.q_w, layer.q_b), memory.states.at(0),
                              memory.states.at(1), memory.mask_bias, scale);
      h = ad::add(h, linear(a, layer.o_w, layer.o_b));
      x = ad::add(x, maybe_dropout(h, ctx));
    }
    return linear(x, out_w_, out_b_);
  }

private:
  Tensor embed(const Tensor& table, const Tensor& pos_table, const IdBatch& ids,
               const ForwardContext& ctx) const {
    if (ids.cols > config_.conv.max_positions) {
      throw Error(ErrorKind::size_exceeded, "sequence of " + std::to_string(ids.cols) +
                                                " exceeds max_positions " +
                                                std::to_string(config_.conv.max_positions));
    }
    std::vector<std::int32_t> pos(ids.cols);
    std::iota(pos.begin(), pos.end(), 0);
    const Tensor p = ad::embedding(pos_table, pos, {ids.cols});
    return maybe_dropout(ad::add(ad::embedding(table, ids.ids, ids.shape()), p), ctx);
  }

  Tensor src_emb_, src_pos_, tgt_emb_, tgt_pos_, out_w_, out_b_;
  std::vector<ConvBlock> enc_;
  std::vector<DecoderLayer> dec_;
};

}  // namespace

std::unique_ptr<SeqModel> build_conv(const ModelConfig& c, std::size_t vs, std::size_t vt, Rng& rng) {
  return std::make_unique<Conv>(c, vs, vt, rng);
}

}  // namespace dmt::nn::detail
