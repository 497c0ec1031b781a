#include "dmt/models.hpp"

#include <cmath>
#include <limits>

#include "dmt/ops.hpp"
#include "dmt/subword.hpp"

namespace dmt::nn {

using ad::Tensor;

namespace {

void require_positive(std::size_t v, const char* what) {
  if (v == 0) throw Error(ErrorKind::invalid_config, std::string(what) + " must be positive");
}

void require_probability(double p, const char* what) {
  if (!(p >= 0.0 && p < 1.0)) throw Error(ErrorKind::invalid_config, std::string(what) + " must be in [0,1)");
}

std::size_t to_size(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw Error(ErrorKind::invalid_config, "expected a count for " + key + ", got '" + v + "'");
  }
}

double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error(ErrorKind::invalid_config, "expected a number for " + key + ", got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw Error(ErrorKind::invalid_config, "expected a boolean for " + key + ", got '" + v + "'");
}

std::string b2s(bool b) { return b ? "true" : "false"; }

}  // namespace

std::string_view arch_name(Arch arch) {
  switch (arch) {
    case Arch::lstm: return "lstm";
    case Arch::bilstm: return "bilstm";
    case Arch::conv: return "conv";
    case Arch::transformer: return "transformer";
  }
  return "";
}

Arch parse_arch(std::string_view name) {
  for (Arch a : {Arch::lstm, Arch::bilstm, Arch::conv, Arch::transformer}) {
    if (arch_name(a) == name) return a;
  }
  if (name == "fconv") return Arch::conv;
  throw Error(ErrorKind::invalid_config, "unknown architecture: " + std::string(name));
}

void TransformerConfig::validate() const {
  require_positive(enc_layers, "transformer enc_layers");
  require_positive(dec_layers, "transformer dec_layers");
  require_positive(d_model, "transformer d_model");
  require_positive(n_heads, "transformer n_heads");
  require_positive(d_ffn, "transformer d_ffn");
  require_positive(max_positions, "transformer max_positions");
  require_probability(dropout, "transformer dropout");
  if (n_heads > d_model) throw Error(ErrorKind::invalid_config, "more heads than model dimensions");
  if (d_model % n_heads != 0 && !allow_uneven_heads) {
    throw Error(ErrorKind::invalid_config,
                "d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                    std::to_string(n_heads) + " (enable allow_uneven_heads to split unevenly)");
  }
}

std::vector<std::size_t> TransformerConfig::head_dims() const {
  std::vector<std::size_t> dims(n_heads, d_model / n_heads);
  for (std::size_t i = 0; i < d_model % n_heads; ++i) ++dims[i];
  return dims;
}

void LstmConfig::validate() const {
  require_positive(embed_dim, "lstm embed_dim");
  require_positive(hidden_dim, "lstm hidden_dim");
  require_positive(layers, "lstm layers");
  require_probability(dropout, "lstm dropout");
}

void ConvConfig::validate() const {
  require_positive(enc_layers, "conv enc_layers");
  require_positive(dec_layers, "conv dec_layers");
  require_positive(dim, "conv dim");
  require_positive(kernel_width, "conv kernel_width");
  require_positive(max_positions, "conv max_positions");
  require_probability(dropout, "conv dropout");
  if (kernel_width % 2 == 0) throw Error(ErrorKind::invalid_config, "conv kernel_width must be odd");
}

void ModelConfig::validate() const {
  switch (arch) {
    case Arch::transformer: transformer.validate(); break;
    case Arch::lstm:
    case Arch::bilstm: lstm.validate(); break;
    case Arch::conv: conv.validate(); break;
  }
}

double ModelConfig::dropout() const {
  switch (arch) {
    case Arch::transformer: return transformer.dropout;
    case Arch::lstm:
    case Arch::bilstm: return lstm.dropout;
    case Arch::conv: return conv.dropout;
  }
  return 0.0;
}

std::map<std::string, std::string> ModelConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  kv["model.arch"] = std::string(arch_name(arch));
  switch (arch) {
    case Arch::transformer:
      kv["model.enc_layers"] = std::to_string(transformer.enc_layers);
      kv["model.dec_layers"] = std::to_string(transformer.dec_layers);
      kv["model.d_model"] = std::to_string(transformer.d_model);
      kv["model.n_heads"] = std::to_string(transformer.n_heads);
      kv["model.d_ffn"] = std::to_string(transformer.d_ffn);
      kv["model.dropout"] = format_double(transformer.dropout);
      kv["model.max_positions"] = std::to_string(transformer.max_positions);
      kv["model.allow_uneven_heads"] = b2s(transformer.allow_uneven_heads);
      break;
    case Arch::lstm:
    case Arch::bilstm:
      kv["model.embed_dim"] = std::to_string(lstm.embed_dim);
      kv["model.hidden_dim"] = std::to_string(lstm.hidden_dim);
      kv["model.layers"] = std::to_string(lstm.layers);
      kv["model.dropout"] = format_double(lstm.dropout);
      kv["model.attention"] = b2s(lstm.attention);
      break;
    case Arch::conv:
      kv["model.enc_layers"] = std::to_string(conv.enc_layers);
      kv["model.dec_layers"] = std::to_string(conv.dec_layers);
      kv["model.dim"] = std::to_string(conv.dim);
      kv["model.kernel_width"] = std::to_string(conv.kernel_width);
      kv["model.dropout"] = format_double(conv.dropout);
      kv["model.max_positions"] = std::to_string(conv.max_positions);
      break;
  }
  return kv;
}

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  if (auto it = kv.find("model.arch"); it != kv.end()) c.arch = parse_arch(it->second);
  c.lstm.bidirectional = c.arch == Arch::bilstm;
  for (const auto& [key, v] : kv) {
    if (key.rfind("model.", 0) != 0 || key == "model.arch") continue;
    const std::string k = key.substr(6);
    bool known = true;
    switch (c.arch) {
      case Arch::transformer:
        if (k == "enc_layers") c.transformer.enc_layers = to_size(key, v);
        else if (k == "dec_layers") c.transformer.dec_layers = to_size(key, v);
        else if (k == "d_model") c.transformer.d_model = to_size(key, v);
        else if (k == "n_heads") c.transformer.n_heads = to_size(key, v);
        else if (k == "d_ffn") c.transformer.d_ffn = to_size(key, v);
        else if (k == "dropout") c.transformer.dropout = to_real(key, v);
        else if (k == "max_positions") c.transformer.max_positions = to_size(key, v);
        else if (k == "allow_uneven_heads") c.transformer.allow_uneven_heads = to_bool(key, v);
        else known = false;
        break;
      case Arch::lstm:
      case Arch::bilstm:
        if (k == "embed_dim") c.lstm.embed_dim = to_size(key, v);
        else if (k == "hidden_dim") c.lstm.hidden_dim = to_size(key, v);
        else if (k == "layers") c.lstm.layers = to_size(key, v);
        else if (k == "dropout") c.lstm.dropout = to_real(key, v);
        else if (k == "attention") c.lstm.attention = to_bool(key, v);
        else known = false;
        break;
      case Arch::conv:
        if (k == "enc_layers") c.conv.enc_layers = to_size(key, v);
        else if (k == "dec_layers") c.conv.dec_layers = to_size(key, v);
        else if (k == "dim") c.conv.dim = to_size(key, v);
        else if (k == "kernel_width") c.conv.kernel_width = to_size(key, v);
        else if (k == "dropout") c.conv.dropout = to_real(key, v);
        else if (k == "max_positions") c.conv.max_positions = to_size(key, v);
        else known = false;
        break;
    }
    if (!known) {
      throw Error(ErrorKind::invalid_config,
                  "key " + key + " does not apply to architecture " + std::string(arch_name(c.arch)));
    }
  }
  c.validate();
  return c;
}

IdBatch IdBatch::from_rows(const std::vector<std::vector<std::int32_t>>& seqs, std::size_t min_cols) {
  IdBatch b;
  b.rows = seqs.size();
  b.cols = min_cols;
  for (const auto& s : seqs) b.cols = std::max(b.cols, s.size());
  if (b.rows == 0 || b.cols == 0) throw Error(ErrorKind::empty_input, "id batch has no entries");
  b.ids.assign(b.rows * b.cols, bpe::kPad);
  for (std::size_t r = 0; r < b.rows; ++r) {
    std::copy(seqs[r].begin(), seqs[r].end(), b.ids.begin() + static_cast<long>(r * b.cols));
  }
  return b;
}

Memory Memory::select(std::span<const std::size_t> rows) const {
  Memory out;
  out.batch = rows.size();
  out.src_len = src_len;
  out.pad.reserve(rows.size() * src_len);
  for (std::size_t r : rows) {
    if (r >= batch) throw Error(ErrorKind::out_of_range, "memory row out of range");
    out.pad.insert(out.pad.end(), pad.begin() + static_cast<long>(r * src_len),
                   pad.begin() + static_cast<long>((r + 1) * src_len));
    out.fully_masked.push_back(fully_masked[r]);
  }
  out.mask_bias = ad::index_select(mask_bias, rows);
  for (const auto& s : states) out.states.push_back(ad::index_select(s, rows));
  return out;
}

Tensor ParameterStore::add(std::string name, Tensor tensor) {
  if (index_.count(name)) throw Error(ErrorKind::invalid_argument, "duplicate parameter " + name);
  tensor.set_requires_grad(true);
  index_[name] = items_.size();
  items_.push_back({std::move(name), std::move(tensor)});
  return items_.back().tensor;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorKind::invalid_argument, "no parameter named " + name);
  return items_[it->second].tensor;
}

bool ParameterStore::contains(const std::string& name) const { return index_.count(name) > 0; }

std::size_t ParameterStore::count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.tensor.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : items_) p.tensor.zero_grad();
}

void ParameterStore::set_requires_grad(bool on) {
  for (auto& p : items_) p.tensor.set_requires_grad(on);
}

SeqModel::SeqModel(ModelConfig config, std::size_t src_vocab, std::size_t tgt_vocab)
    : config_(std::move(config)), src_vocab_(src_vocab), tgt_vocab_(tgt_vocab),
      dropout_(config_.dropout()) {}

void SeqModel::set_dropout(double p) {
  require_probability(p, "dropout");
  dropout_ = p;
}

Tensor SeqModel::forward(const IdBatch& src, const IdBatch& prefix, const ForwardContext& ctx) const {
  return decode_step(encode(src, ctx), prefix, ctx);
}

void SeqModel::check_ids(const IdBatch& batch, std::size_t vocab, const char* side) const {
  if (batch.rows == 0 || batch.cols == 0) {
    throw Error(ErrorKind::empty_input, std::string("empty ") + side + " batch");
  }
  for (std::int32_t id : batch.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw Error(ErrorKind::out_of_range, std::string(side) + " id " + std::to_string(id) +
                                               " outside vocabulary of " + std::to_string(vocab));
    }
  }
}

Tensor SeqModel::maybe_dropout(const Tensor& x, const ForwardContext& ctx) const {
  if (!ctx.training || dropout_ == 0.0) return x;
  if (ctx.rng == nullptr) throw Error(ErrorKind::invalid_argument, "training forward needs an Rng");
  return ad::dropout(x, dropout_, *ctx.rng, true);
}

std::unique_ptr<SeqModel> build_model(const ModelConfig& config, std::size_t src_vocab,
                                      std::size_t tgt_vocab, std::uint64_t seed) {
  ModelConfig c = config;
  c.lstm.bidirectional = c.arch == Arch::bilstm;
  c.validate();
  if (src_vocab == 0 || tgt_vocab == 0) throw Error(ErrorKind::invalid_config, "empty vocabulary");
  Rng rng(derive_seed(seed, "init"));
  switch (c.arch) {
    case Arch::transformer: return detail::build_transformer(c, src_vocab, tgt_vocab, rng);
    case Arch::lstm:
    case Arch::bilstm: return detail::build_lstm(c, src_vocab, tgt_vocab, rng);
    case Arch::conv: return detail::build_conv(c, src_vocab, tgt_vocab, rng);
  }
  throw Error(ErrorKind::invalid_config, "unknown architecture");
}

std::size_t parameter_count(const ModelConfig& config, std::size_t vs, std::size_t vt) {
  switch (config.arch) {
    case Arch::transformer: {
      const std::size_t d = config.transformer.d_model, f = config.transformer.d_ffn;
      const std::size_t attn = 4 * d * d + 4 * d;
      const std::size_t ffn = 2 * d * f + f + d;
      const std::size_t enc = attn + 4 * d + ffn;
      const std::size_t dec = 2 * attn + 6 * d + ffn;
      return config.transformer.enc_layers * enc + config.transformer.dec_layers * dec +
             (vs + vt) * d + 4 * d + d * vt + vt;
    }
    case Arch::lstm:
    case Arch::bilstm: {
      const LstmConfig& c = config.lstm;
      const std::size_t E = c.embed_dim, H = c.hidden_dim, L = c.layers;
      const bool bi = config.arch == Arch::bilstm;
      const std::size_t dirs = bi ? 2 : 1;
      std::size_t n = (vs + vt) * E;
      for (std::size_t l = 0; l < L; ++l) {
        const std::size_t in = l == 0 ? E : dirs * H;
        n += dirs * (in * 4 * H + H * 4 * H + 4 * H);
      }
      if (bi) n += (2 * H * H + H) + 2 * L * (2 * H * H + H);
      for (std::size_t l = 0; l < L; ++l) {
        const std::size_t in = l == 0 ? E : H;
        n += in * 4 * H + H * 4 * H + 4 * H;
      }
      if (c.attention) n += 2 * H * H + H;
      return n + H * vt + vt;
    }
    case Arch::conv: {
      const ConvConfig& c = config.conv;
      const std::size_t d = c.dim, K = c.kernel_width;
      const std::size_t block = K * d * 2 * d + 2 * d;
      return (vs + vt) * d + 2 * c.max_positions * d + c.enc_layers * block +
             c.dec_layers * (block + 2 * (d * d + d)) + d * vt + vt;
    }
  }
  return 0;
}

Tensor label_smoothed_loss(const Tensor& logits, std::span<const std::int32_t> targets,
                           std::int32_t pad_id, double epsilon) {
  return ad::label_smoothed_nll(logits, targets, pad_id, epsilon);
}

namespace detail {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return ad::add(ad::matmul(x, w), b);
}

Tensor pad_mask_bias(const IdBatch& batch, std::vector<std::uint8_t>* pad,
                     std::vector<std::uint8_t>* fully_masked) {
  std::vector<double> bias(batch.ids.size(), 0.0);
  if (pad) pad->assign(batch.ids.size(), 0);
  if (fully_masked) fully_masked->assign(batch.rows, 1);
  for (std::size_t r = 0; r < batch.rows; ++r) {
    for (std::size_t c = 0; c < batch.cols; ++c) {
      const std::size_t i = r * batch.cols + c;
      if (batch.ids[i] == bpe::kPad) {
        bias[i] = -std::numeric_limits<double>::infinity();
        if (pad) (*pad)[i] = 1;
      } else if (fully_masked) {
        (*fully_masked)[r] = 0;
      }
    }
  }
  return Tensor::from({batch.rows, 1, batch.cols}, std::move(bias));
}

Tensor keep_mask(const IdBatch& batch) {
  std::vector<double> keep(batch.ids.size());
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = batch.ids[i] == bpe::kPad ? 0.0 : 1.0;
  return Tensor::from({batch.rows, batch.cols, 1}, std::move(keep));
}

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& bias, double scale) {
  Tensor scores = ad::matmul(q, k, /*transpose_b=*/true);
  if (scale != 1.0) scores = ad::scale(scores, scale);
  if (bias.defined()) scores = ad::add(scores, bias);
  return ad::matmul(ad::softmax(scores, -1), v);
}

Tensor uniform_tensor(const ad::Shape& shape, double bound, Rng& rng) {
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(shape, std::move(v));
}

Tensor normal_tensor(const ad::Shape& shape, double stddev, Rng& rng) {
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) x = rng.normal(0.0, stddev);
  return Tensor::from(shape, std::move(v));
}

}  // namespace detail

}  // namespace dmt::nn
