#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dmt/common.hpp"
#include "dmt/tensor.hpp"

namespace dmt::nn {

enum class Arch { lstm, bilstm, conv, transformer };

std::string_view arch_name(Arch arch);
Arch parse_arch(std::string_view name);

struct TransformerConfig {
  std::size_t enc_layers = 3;
  std::size_t dec_layers = 3;
  std::size_t d_model = 256;
  std::size_t n_heads = 4;
  std::size_t d_ffn = 512;
  double dropout = 0.1;
  std::size_t max_positions = 1024;
  // Accept n_heads that do not divide d_model; the first d_model % n_heads
  // heads get one extra dimension.
  bool allow_uneven_heads = false;

  void validate() const;
  /// Per-head widths, e.g. 256/3 -> {86, 85, 85}.
  std::vector<std::size_t> head_dims() const;
};

struct LstmConfig {
  std::size_t embed_dim = 256;
  std::size_t hidden_dim = 512;
  std::size_t layers = 1;
  double dropout = 0.2;
  bool bidirectional = false;
  bool attention = true;

  void validate() const;
};

struct ConvConfig {
  std::size_t enc_layers = 4;
  std::size_t dec_layers = 4;
  std::size_t dim = 256;
  std::size_t kernel_width = 3;
  double dropout = 0.1;
  std::size_t max_positions = 256;

  void validate() const;
};

/// Architecture tag plus the settings of every family; only the one matching
/// `arch` is read. `bilstm` uses `lstm` with bidirectional forced on.
struct ModelConfig {
  Arch arch = Arch::transformer;
  TransformerConfig transformer;
  LstmConfig lstm;
  ConvConfig conv;

  void validate() const;
  double dropout() const;

  /// Flat key=value form used in checkpoints and run configs.
  std::map<std::string, std::string> to_kv() const;
  /// Reads the keys present in `kv` over the defaults. Unknown "model."
  /// keys are rejected.
  static ModelConfig from_kv(const std::map<std::string, std::string>& kv);
};

/// Row-major id matrix padded with PAD (id 0).
struct IdBatch {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int32_t> ids;

  static IdBatch from_rows(const std::vector<std::vector<std::int32_t>>& seqs,
                           std::size_t min_cols = 0);
  std::int32_t at(std::size_t r, std::size_t c) const { return ids[r * cols + c]; }
  ad::Shape shape() const { return {rows, cols}; }
};

/// Encoder output consumed by decode_step.
struct Memory {
  std::size_t batch = 0;
  std::size_t src_len = 0;
  std::vector<std::uint8_t> pad;           // [batch * src_len], 1 at PAD
  std::vector<std::uint8_t> fully_masked;  // per row: every source position is PAD
  ad::Tensor mask_bias;                    // [batch, 1, src_len], 0 or -inf
  std::vector<ad::Tensor> states;          // architecture-specific, batch-major

  /// Rows `rows` of every component, in that order (rows may repeat).
  Memory select(std::span<const std::size_t> rows) const;
};

struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;  // required when training with dropout > 0
};

struct NamedParameter {
  std::string name;
  ad::Tensor tensor;
};

/// Ordered, named parameter set. Order is construction order and fixes the
/// checkpoint layout.
class ParameterStore {
public:
  ad::Tensor add(std::string name, ad::Tensor tensor);
  const ad::Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<NamedParameter>& items() noexcept { return items_; }
  const std::vector<NamedParameter>& items() const noexcept { return items_; }
  std::size_t size() const noexcept { return items_.size(); }
  /// Total scalar count.
  std::size_t count() const;
  void zero_grad();
  void set_requires_grad(bool on);

private:
  std::vector<NamedParameter> items_;
  std::map<std::string, std::size_t> index_;
};

class SeqModel {
public:
  SeqModel(ModelConfig config, std::size_t src_vocab, std::size_t tgt_vocab);
  virtual ~SeqModel() = default;
  SeqModel(const SeqModel&) = delete;
  SeqModel& operator=(const SeqModel&) = delete;

  const ModelConfig& config() const noexcept { return config_; }
  Arch arch() const noexcept { return config_.arch; }
  std::size_t src_vocab_size() const noexcept { return src_vocab_; }
  std::size_t tgt_vocab_size() const noexcept { return tgt_vocab_; }

  ParameterStore& parameters() noexcept { return params_; }
  const ParameterStore& parameters() const noexcept { return params_; }

  double dropout() const noexcept { return dropout_; }
  void set_dropout(double p);

  /// Source ids [B, S] -> memory. PAD positions are masked for attention.
  virtual Memory encode(const IdBatch& src, const ForwardContext& ctx) const = 0;

  /// Teacher-forced logits [B, T, V_tgt] for every position of `prefix`
  /// (which starts with BOS). Position t depends only on prefix[..t].
  virtual ad::Tensor decode_step(const Memory& memory, const IdBatch& prefix,
                                 const ForwardContext& ctx) const = 0;

  ad::Tensor forward(const IdBatch& src, const IdBatch& prefix, const ForwardContext& ctx) const;

protected:
  void check_ids(const IdBatch& batch, std::size_t vocab, const char* side) const;
  ad::Tensor maybe_dropout(const ad::Tensor& x, const ForwardContext& ctx) const;

  ModelConfig config_;
  std::size_t src_vocab_;
  std::size_t tgt_vocab_;
  double dropout_;
  ParameterStore params_;
};

/// Parameters are drawn from Rng(derive_seed(seed, "init")) in construction order.
std::unique_ptr<SeqModel> build_model(const ModelConfig& config, std::size_t src_vocab,
                                      std::size_t tgt_vocab, std::uint64_t seed);

/// Closed-form parameter count of build_model's result.
std::size_t parameter_count(const ModelConfig& config, std::size_t src_vocab,
                            std::size_t tgt_vocab);

/// Mean over non-PAD targets of the label-smoothed negative log likelihood.
ad::Tensor label_smoothed_loss(const ad::Tensor& logits, std::span<const std::int32_t> targets,
                               std::int32_t pad_id, double epsilon);

// Building blocks shared by the architectures.
namespace detail {

/// x [.., in] . w [in, out] + b [out]
ad::Tensor linear(const ad::Tensor& x, const ad::Tensor& w, const ad::Tensor& b);

/// [B, 1, S] additive mask: -inf at PAD positions.
ad::Tensor pad_mask_bias(const IdBatch& batch, std::vector<std::uint8_t>* pad,
                         std::vector<std::uint8_t>* fully_masked);

/// [B, S, 1] multiplicative mask: 0 at PAD positions, 1 elsewhere.
ad::Tensor keep_mask(const IdBatch& batch);

/// Dot-product attention of queries [B, T, d] over keys/values [B, S, d].
/// `scale` multiplies the scores; `bias` is broadcast-added before softmax.
ad::Tensor attend(const ad::Tensor& q, const ad::Tensor& k, const ad::Tensor& v,
                  const ad::Tensor& bias, double scale);

ad::Tensor uniform_tensor(const ad::Shape& shape, double bound, Rng& rng);
ad::Tensor normal_tensor(const ad::Shape& shape, double stddev, Rng& rng);

std::unique_ptr<SeqModel> build_transformer(const ModelConfig& c, std::size_t vs, std::size_t vt,
                                            Rng& rng);
std::unique_ptr<SeqModel> build_lstm(const ModelConfig& c, std::size_t vs, std::size_t vt,
                                     Rng& rng);
std::unique_ptr<SeqModel> build_conv(const ModelConfig& c, std::size_t vs, std::size_t vt,
                                     Rng& rng);

}  // namespace detail

}  // namespace dmt::nn
