#include "dmt/models.hpp"
#include "dmt/ops.hpp"

namespace dmt::nn::detail {

using ad::Tensor;

namespace {

constexpr double kInitBound = 0.1;

// Gate order in the packed [.., 4H] projections: input, forget, cell, output.
struct Cell {
  Tensor w_ih;  // [in, 4H]
  Tensor w_hh;  // [H, 4H]
  Tensor b;     // [4H]
};

struct State {
  Tensor h, c;  // [B, H]
};

class Lstm final : public SeqModel {
public:
  Lstm(const ModelConfig& cfg, std::size_t vs, std::size_t vt, Rng& rng) : SeqModel(cfg, vs, vt) {
    const LstmConfig& c = cfg.lstm;
    const std::size_t E = c.embed_dim, H = c.hidden_dim;
    const std::size_t dirs = c.bidirectional ? 2 : 1;
    auto cell = [&](const std::string& name, std::size_t in) {
      Cell k;
      k.w_ih = params_.add(name + ".w_ih", uniform_tensor({in, 4 * H}, kInitBound, rng));
      k.w_hh = params_.add(name + ".w_hh", uniform_tensor({H, 4 * H}, kInitBound, rng));
      k.b = params_.add(name + ".b", Tensor::zeros({4 * H}));
      return k;
    };
    auto proj = [&](const std::string& name, std::size_t in, std::size_t out) {
      return std::pair{params_.add(name + ".w", uniform_tensor({in, out}, kInitBound, rng)),
                       params_.add(name + ".b", Tensor::zeros({out}))};
    };

    src_emb_ = params_.add("enc.emb", uniform_tensor({vs, E}, kInitBound, rng));
    for (std::size_t l = 0; l < c.layers; ++l) {
      const std::size_t in = l == 0 ? E : dirs * H;
      enc_fwd_.push_back(cell("enc." + std::to_string(l) + ".fwd", in));
      if (c.bidirectional) enc_bwd_.push_back(cell("enc." + std::to_string(l) + ".bwd", in));
    }
    if (c.bidirectional) {
      std::tie(mem_w_, mem_b_) = proj("enc.mem", 2 * H, H);
      for (std::size_t l = 0; l < c.layers; ++l) {
        init_h_.push_back(proj("enc." + std::to_string(l) + ".init_h", 2 * H, H));
        init_c_.push_back(proj("enc." + std::to_string(l) + ".init_c", 2 * H, H));
      }
    }
    tgt_emb_ = params_.add("dec.emb", uniform_tensor({vt, E}, kInitBound, rng));
    for (std::size_t l = 0; l < c.layers; ++l) {
      dec_.push_back(cell("dec." + std::to_string(l), l == 0 ? E : H));
    }
    if (c.attention) std::tie(comb_w_, comb_b_) = proj("dec.combine", 2 * H, H);
    std::tie(out_w_, out_b_) = proj("out", H, vt);
  }

  // states: [0] attention memory [B,S,H]; then (h, c) per layer.
  Memory encode(const IdBatch& src, const ForwardContext& ctx) const override {
    check_ids(src, src_vocab_, "source");
    const LstmConfig& c = config_.lstm;
    Memory m;
    m.batch = src.rows;
    m.src_len = src.cols;
    m.mask_bias = pad_mask_bias(src, &m.pad, &m.fully_masked);
    const std::vector<Tensor> keep = step_masks(src);

    Tensor x = maybe_dropout(ad::embedding(src_emb_, src.ids, src.shape()), ctx);
    std::vector<State> finals;
    for (std::size_t l = 0; l < c.layers; ++l) {
      std::vector<Tensor> fwd_out;
      State fwd = run(enc_fwd_[l], x, keep, false, zero_state(src.rows), fwd_out);
      if (!c.bidirectional) {
        x = stack(fwd_out);
        finals.push_back(fwd);
        continue;
      }
      std::vector<Tensor> bwd_out;
      State bwd = run(enc_bwd_[l], x, keep, true, zero_state(src.rows), bwd_out);
      x = ad::concat({stack(fwd_out), stack(bwd_out)}, -1);
      finals.push_back({linear(ad::concat({fwd.h, bwd.h}, -1), init_h_[l].first, init_h_[l].second),
                        linear(ad::concat({fwd.c, bwd.c}, -1), init_c_[l].first, init_c_[l].second)});
    }
    x = maybe_dropout(x, ctx);
    m.states.push_back(c.bidirectional ? linear(x, mem_w_, mem_b_) : x);
    for (const State& s : finals) {
      m.states.push_back(s.h);
      m.states.push_back(s.c);
    }
    return m;
  }

  Tensor decode_step(const Memory& memory, const IdBatch& prefix,
                     const ForwardContext& ctx) const override {
    check_ids(prefix, tgt_vocab_, "target");
    if (prefix.rows != memory.batch) {
      throw Error(ErrorKind::shape_mismatch, "prefix batch differs from memory batch");
    }
    const LstmConfig& c = config_.lstm;
    const std::vector<Tensor> all_keep(prefix.cols);  // no masking on the target side
    Tensor x = maybe_dropout(ad::embedding(tgt_emb_, prefix.ids, prefix.shape()), ctx);
    for (std::size_t l = 0; l < c.layers; ++l) {
      const State init{memory.states.at(1 + 2 * l), memory.states.at(2 + 2 * l)};
      std::vector<Tensor> out;
      run(dec_[l], x, all_keep, false, init, out);
      x = stack(out);
    }
    x = maybe_dropout(x, ctx);
    if (c.attention) {
      const Tensor& mem = memory.states.at(0);
      const Tensor context = attend(x, mem, mem, memory.mask_bias, 1.0);
      x = ad::tanh(linear(ad::concat({context, x}, -1), comb_w_, comb_b_));
      x = maybe_dropout(x, ctx);
    }
    return linear(x, out_w_, out_b_);
  }

private:
  State zero_state(std::size_t batch) const {
    const std::size_t H = config_.lstm.hidden_dim;
    return {Tensor::zeros({batch, H}), Tensor::zeros({batch, H})};
  }

  // Per time step [B, 1] keep masks; positions at PAD leave the state untouched.
  static std::vector<Tensor> step_masks(const IdBatch& ids) {
    std::vector<Tensor> masks;
    for (std::size_t t = 0; t < ids.cols; ++t) {
      std::vector<double> k(ids.rows);
      bool any_pad = false;
      for (std::size_t r = 0; r < ids.rows; ++r) {
        k[r] = ids.at(r, t) == 0 ? 0.0 : 1.0;
        any_pad = any_pad || k[r] == 0.0;
      }
      masks.push_back(any_pad ? Tensor::from({ids.rows, 1}, std::move(k)) : Tensor());
    }
    return masks;
  }

  // Runs one direction over x [B, T, in]; per-step outputs [B, H] land in `out`
  // in time order.
  State run(const Cell& cell, const Tensor& x, const std::vector<Tensor>& keep, bool reverse,
            State state, std::vector<Tensor>& out) const {
    const std::size_t B = x.dim(0), T = x.dim(1);
    const std::size_t H = config_.lstm.hidden_dim;
    const Tensor gates_in = linear(x, cell.w_ih, cell.b);  // [B, T, 4H]
    out.assign(T, Tensor());
    for (std::size_t s = 0; s < T; ++s) {
      const std::size_t t = reverse ? T - 1 - s : s;
      const Tensor g = ad::add(ad::reshape(ad::slice(gates_in, 1, t, 1), {B, 4 * H}),
                               ad::matmul(state.h, cell.w_hh));
      const Tensor i = ad::sigmoid(ad::slice(g, 1, 0, H));
      const Tensor f = ad::sigmoid(ad::slice(g, 1, H, H));
      const Tensor cand = ad::tanh(ad::slice(g, 1, 2 * H, H));
      const Tensor o = ad::sigmoid(ad::slice(g, 1, 3 * H, H));
      Tensor c_new = ad::add(ad::mul(f, state.c), ad::mul(i, cand));
      Tensor h_new = ad::mul(o, ad::tanh(c_new));
      if (keep[t].defined()) {
        const Tensor& k = keep[t];
        const Tensor drop = ad::add_scalar(ad::scale(k, -1.0), 1.0);
        c_new = ad::add(ad::mul(k, c_new), ad::mul(drop, state.c));
        h_new = ad::add(ad::mul(k, h_new), ad::mul(drop, state.h));
      }
      state = {h_new, c_new};
      out[t] = h_new;
    }
    return state;
  }

  // [B, H] per step -> [B, T, H]
  static Tensor stack(const std::vector<Tensor>& steps) {
    const std::size_t B = steps[0].dim(0), H = steps[0].dim(1);
    std::vector<Tensor> parts;
    parts.reserve(steps.size());
    for (const auto& s : steps) parts.push_back(ad::reshape(s, {B, 1, H}));
    return parts.size() == 1 ? parts[0] : ad::concat(parts, 1);
  }

  Tensor src_emb_, tgt_emb_;
  std::vector<Cell> enc_fwd_, enc_bwd_, dec_;
  Tensor mem_w_, mem_b_;
  std::vector<std::pair<Tensor, Tensor>> init_h_, init_c_;
  Tensor comb_w_, comb_b_, out_w_, out_b_;
};

}  // namespace

std::unique_ptr<SeqModel> build_lstm(const ModelConfig& c, std::size_t vs, std::size_t vt, Rng& rng) {
  return std::make_unique<Lstm>(c, vs, vt, rng);
}

}  // namespace dmt::nn::detail
