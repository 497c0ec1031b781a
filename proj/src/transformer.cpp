#include <cmath>

#include "dmt/models.hpp"
#include "dmt/ops.hpp"

namespace dmt::nn::detail {

using ad::Tensor;

namespace {

struct Norm {
  Tensor gamma, beta;
};

struct Attention {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct Ffn {
  Tensor w1, b1, w2, b2;
};

struct EncoderLayer {
  Norm ln1, ln2;
  Attention self;
  Ffn ffn;
};

struct DecoderLayer {
  Norm ln1, ln2, ln3;
  Attention self, cross;
  Ffn ffn;
};

class Transformer final : public SeqModel {
public:
  Transformer(const ModelConfig& c, std::size_t vs, std::size_t vt, Rng& rng)
      : SeqModel(c, vs, vt), heads_(c.transformer.head_dims()) {
    const TransformerConfig& t = c.transformer;
    const std::size_t d = t.d_model;
    const double proj_std = 1.0 / std::sqrt(static_cast<double>(d));
    auto norm = [&](const std::string& name) {
      Norm n;
      n.gamma = params_.add(name + ".g", Tensor::full({d}, 1.0));
      n.beta = params_.add(name + ".b", Tensor::zeros({d}));
      return n;
    };
    auto attention = [&](const std::string& name) {
      Attention a;
      a.wq = params_.add(name + ".q.w", normal_tensor({d, d}, proj_std, rng));
      a.bq = params_.add(name + ".q.b", Tensor::zeros({d}));
      a.wk = params_.add(name + ".k.w", normal_tensor({d, d}, proj_std, rng));
      a.bk = params_.add(name + ".k.b", Tensor::zeros({d}));
      a.wv = params_.add(name + ".v.w", normal_tensor({d, d}, proj_std, rng));
      a.bv = params_.add(name + ".v.b", Tensor::zeros({d}));
      a.wo = params_.add(name + ".o.w", normal_tensor({d, d}, proj_std, rng));
      a.bo = params_.add(name + ".o.b", Tensor::zeros({d}));
      return a;
    };
    auto ffn = [&](const std::string& name) {
      Ffn f;
      f.w1 = params_.add(name + ".w1", normal_tensor({d, t.d_ffn}, proj_std, rng));
      f.b1 = params_.add(name + ".b1", Tensor::zeros({t.d_ffn}));
      f.w2 = params_.add(name + ".w2", normal_tensor({t.d_ffn, d}, proj_std, rng));
      f.b2 = params_.add(name + ".b2", Tensor::zeros({d}));
      return f;
    };

    src_emb_ = params_.add("enc.emb", uniform_tensor({vs, d}, 0.1, rng));
    for (std::size_t l = 0; l < t.enc_layers; ++l) {
      const std::string p = "enc." + std::to_string(l);
      EncoderLayer layer;
      layer.ln1 = norm(p + ".ln1");
      layer.self = attention(p + ".self");
      layer.ln2 = norm(p + ".ln2");
      layer.ffn = ffn(p + ".ffn");
      enc_.push_back(std::move(layer));
    }
    enc_ln_ = norm("enc.ln");

    tgt_emb_ = params_.add("dec.emb", uniform_tensor({vt, d}, 0.1, rng));
    for (std::size_t l = 0; l < t.dec_layers; ++l) {
      const std::string p = "dec." + std::to_string(l);
      DecoderLayer layer;
      layer.ln1 = norm(p + ".ln1");
      layer.self = attention(p + ".self");
      layer.ln2 = norm(p + ".ln2");
      layer.cross = attention(p + ".cross");
      layer.ln3 = norm(p + ".ln3");
      layer.ffn = ffn(p + ".ffn");
      dec_.push_back(std::move(layer));
    }
    dec_ln_ = norm("dec.ln");
    out_w_ = params_.add("out.w", normal_tensor({d, vt}, proj_std, rng));
    out_b_ = params_.add("out.b", Tensor::zeros({vt}));
  }

  Memory encode(const IdBatch& src, const ForwardContext& ctx) const override {
    check_ids(src, src_vocab_, "source");
    Memory m;
    m.batch = src.rows;
    m.src_len = src.cols;
    m.mask_bias = pad_mask_bias(src, &m.pad, &m.fully_masked);
    Tensor x = embed(src_emb_, src, ctx);
    for (const auto& layer : enc_) {
      x = ad::add(x, maybe_dropout(attend_multi(layer.self, norm(layer.ln1, x), Tensor(), m.mask_bias),
                                   ctx));
      x = ad::add(x, maybe_dropout(feed_forward(layer.ffn, norm(layer.ln2, x)), ctx));
    }
    m.states.push_back(norm(enc_ln_, x));
    return m;
  }

  Tensor decode_step(const Memory& memory, const IdBatch& prefix,
                     const ForwardContext& ctx) const override {
    check_ids(prefix, tgt_vocab_, "target");
    if (prefix.rows != memory.batch) {
      throw Error(ErrorKind::shape_mismatch, "prefix batch differs from memory batch");
    }
    const Tensor& enc = memory.states.at(0);
    const Tensor causal = causal_bias(prefix.cols);
    Tensor x = embed(tgt_emb_, prefix, ctx);
    for (const auto& layer : dec_) {
      x = ad::add(x, maybe_dropout(attend_multi(layer.self, norm(layer.ln1, x), Tensor(), causal), ctx));
      x = ad::add(x, maybe_dropout(attend_multi(layer.cross, norm(layer.ln2, x), enc, memory.mask_bias),
                                   ctx));
      x = ad::add(x, maybe_dropout(feed_forward(layer.ffn, norm(layer.ln3, x)), ctx));
    }
    return linear(norm(dec_ln_, x), out_w_, out_b_);
  }

private:
  static Tensor norm(const Norm& n, const Tensor& x) { return ad::layer_norm(x, n.gamma, n.beta); }

  Tensor embed(const Tensor& table, const IdBatch& ids, const ForwardContext& ctx) const {
    const TransformerConfig& t = config_.transformer;
    if (ids.cols > t.max_positions) {
      throw Error(ErrorKind::size_exceeded, "sequence of " + std::to_string(ids.cols) +
                                                " exceeds max_positions " +
                                                std::to_string(t.max_positions));
    }
    Tensor e = ad::scale(ad::embedding(table, ids.ids, ids.shape()),
                         std::sqrt(static_cast<double>(t.d_model)));
    return maybe_dropout(ad::add(e, positions(ids.cols)), ctx);
  }

  Tensor positions(std::size_t len) const {
    const std::size_t d = config_.transformer.d_model;
    std::vector<double> pe(len * d);
    for (std::size_t pos = 0; pos < len; ++pos) {
      for (std::size_t i = 0; i < d; ++i) {
        const double rate =
            std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(d));
        const double angle = static_cast<double>(pos) * rate;
        pe[pos * d + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
      }
    }
    return Tensor::from({len, d}, std::move(pe));
  }

  static Tensor causal_bias(std::size_t len) {
    std::vector<double> b(len * len, 0.0);
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t j = i + 1; j < len; ++j) b[i * len + j] = -INFINITY;
    }
    return Tensor::from({len, len}, std::move(b));
  }

  // Self-attention when `kv` is undefined.
  Tensor attend_multi(const Attention& a, const Tensor& xq, const Tensor& kv, const Tensor& bias) const {
    const Tensor& src = kv.defined() ? kv : xq;
    const Tensor q = linear(xq, a.wq, a.bq);
    const Tensor k = linear(src, a.wk, a.bk);
    const Tensor v = linear(src, a.wv, a.bv);
    std::vector<Tensor> heads;
    std::size_t offset = 0;
    for (std::size_t dh : heads_) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
      heads.push_back(attend(ad::slice(q, -1, offset, dh), ad::slice(k, -1, offset, dh),
                             ad::slice(v, -1, offset, dh), bias, scale));
      offset += dh;
    }
    const Tensor joined = heads.size() == 1 ? heads[0] : ad::concat(heads, -1);
    return linear(joined, a.wo, a.bo);
  }

  static Tensor feed_forward(const Ffn& f, const Tensor& x) {
    return linear(ad::relu(linear(x, f.w1, f.b1)), f.w2, f.b2);
  }

  std::vector<std::size_t> heads_;
  Tensor src_emb_, tgt_emb_, out_w_, out_b_;
  std::vector<EncoderLayer> enc_;
  std::vector<DecoderLayer> dec_;
  Norm enc_ln_, dec_ln_;
};

}  // namespace

std::unique_ptr<SeqModel> build_transformer(const ModelConfig& c, std::size_t vs, std::size_t vt,
                                            Rng& rng) {
  return std::make_unique<Transformer>(c, vs, vt, rng);
}

}  // namespace dmt::nn::detail
