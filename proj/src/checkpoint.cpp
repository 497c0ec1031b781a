#include <bit>
#include <cstring>

#include "dmt/training.hpp"

namespace dmt::train {

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

namespace {

constexpr std::uint8_t kDtypeF64 = 1;
constexpr const char* kFormatVersion = "1";

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_tensor(std::string& out, const std::string& name, const ad::Shape& shape,
                std::span<const double> values) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put<std::uint8_t>(out, kDtypeF64);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) put<std::uint64_t>(out, d);
  out.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
}

class Reader {
public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)).data(), sizeof(T));
    return value;
  }

  std::string_view take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw Error(ErrorKind::truncated, "checkpoint is truncated");
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

struct RawTensor {
  ad::Shape shape;
  std::vector<double> values;
};

std::map<std::string, std::string> parse_meta(std::string_view text) {
  std::map<std::string, std::string> meta;
  for (const auto& line : split_lines(text)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::format_version, "bad checkpoint metadata line");
    meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return meta;
}

std::size_t meta_size(const std::map<std::string, std::string>& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw Error(ErrorKind::format_version, "checkpoint metadata lacks " + key);
  return static_cast<std::size_t>(std::stoull(it->second));
}

}  // namespace

std::map<std::string, std::string> vocab_meta(const bpe::Vocabulary& src, const bpe::Vocabulary& tgt) {
  return {{"vocab.src.fingerprint", src.fingerprint()}, {"vocab.tgt.fingerprint", tgt.fingerprint()}};
}

std::string serialize_checkpoint(const nn::SeqModel& model, const AdamState* adam,
                                 const std::map<std::string, std::string>& extra) {
  std::map<std::string, std::string> meta = extra;
  for (auto& [k, v] : model.config().to_kv()) meta[k] = v;
  meta["format.version"] = kFormatVersion;
  meta["vocab.src.size"] = std::to_string(model.src_vocab_size());
  meta["vocab.tgt.size"] = std::to_string(model.tgt_vocab_size());
  const auto& params = model.parameters().items();
  const bool with_adam = adam != nullptr && adam->m.size() == params.size();
  if (with_adam) meta["adam.t"] = std::to_string(adam->t);

  std::string meta_text;
  for (const auto& [k, v] : meta) {
    if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos ||
        v.find('\n') != std::string::npos) {
      throw Error(ErrorKind::invalid_argument, "checkpoint metadata must be single-line key=value");
    }
    meta_text += k + "=" + v + "\n";
  }

  std::string out(kCheckpointMagic, 4);
  put<std::uint64_t>(out, meta_text.size());
  out += meta_text;
  std::size_t count = params.size();
  if (with_adam) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!adam->m[i].empty()) count += 2;
    }
  }
  put<std::uint64_t>(out, count);
  for (const auto& p : params) put_tensor(out, p.name, p.tensor.shape(), p.tensor.values());
  if (with_adam) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (adam->m[i].empty()) continue;
      put_tensor(out, "adam.m/" + params[i].name, params[i].tensor.shape(), adam->m[i]);
      put_tensor(out, "adam.v/" + params[i].name, params[i].tensor.shape(), adam->v[i]);
    }
  }
  return out;
}

void save_checkpoint(const nn::SeqModel& model, const AdamState* adam,
                     const std::map<std::string, std::string>& meta, const std::string& path) {
  const std::string bytes = serialize_checkpoint(model, adam, meta);
  const std::string tmp = path + ".tmp";
  write_file(tmp, bytes);
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw Error(ErrorKind::io, "cannot move checkpoint into place: " + path);
  }
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw Error(ErrorKind::format_version, "not a DMT1 checkpoint (bad magic)");
  }
  Reader in(bytes.substr(4));
  const auto meta_len = in.get<std::uint64_t>();
  Checkpoint ck;
  ck.meta = parse_meta(in.take(meta_len));
  if (ck.meta["format.version"] != kFormatVersion) {
    throw Error(ErrorKind::format_version, "unsupported checkpoint version " + ck.meta["format.version"]);
  }
  const auto count = in.get<std::uint64_t>();
  std::map<std::string, RawTensor> tensors;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = in.get<std::uint32_t>();
    std::string name(in.take(name_len));
    if (in.get<std::uint8_t>() != kDtypeF64) {
      throw Error(ErrorKind::format_version, "unsupported tensor dtype in " + name);
    }
    RawTensor t;
    t.shape.resize(in.get<std::uint32_t>());
    for (auto& d : t.shape) d = static_cast<std::size_t>(in.get<std::uint64_t>());
    t.values.resize(ad::numel(t.shape));
    const auto raw = in.take(t.values.size() * sizeof(double));
    std::memcpy(t.values.data(), raw.data(), raw.size());
    tensors[name] = std::move(t);
  }
  if (!in.at_end()) throw Error(ErrorKind::format_version, "trailing bytes after checkpoint tensors");

  const nn::ModelConfig config = nn::ModelConfig::from_kv(ck.meta);
  ck.model = nn::build_model(config, meta_size(ck.meta, "vocab.src.size"),
                             meta_size(ck.meta, "vocab.tgt.size"), 0);
  auto& params = ck.model->parameters().items();
  const bool with_adam = ck.meta.count("adam.t") > 0;
  if (with_adam) {
    ck.adam.t = std::stoull(ck.meta["adam.t"]);
    ck.adam.m.resize(params.size());
    ck.adam.v.resize(params.size());
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto it = tensors.find(p.name);
    if (it == tensors.end()) throw Error(ErrorKind::truncated, "checkpoint lacks parameter " + p.name);
    if (it->second.shape != p.tensor.shape()) {
      throw Error(ErrorKind::shape_mismatch, "parameter " + p.name + " has shape " +
                                                 ad::shape_string(it->second.shape));
    }
    std::copy(it->second.values.begin(), it->second.values.end(), p.tensor.mutable_values().begin());
    if (with_adam) {
      auto m = tensors.find("adam.m/" + p.name);
      auto v = tensors.find("adam.v/" + p.name);
      if (m != tensors.end() && v != tensors.end()) {
        ck.adam.m[i] = std::move(m->second.values);
        ck.adam.v[i] = std::move(v->second.values);
      }
    }
  }
  return ck;
}

Checkpoint load_checkpoint(const std::string& path, const std::string& src_fingerprint,
                           const std::string& tgt_fingerprint) {
  Checkpoint ck = parse_checkpoint(read_file(path));
  auto check = [&](const char* key, const std::string& expected) {
    if (expected.empty()) return;
    auto it = ck.meta.find(key);
    if (it == ck.meta.end() || it->second != expected) {
      throw Error(ErrorKind::fingerprint_mismatch,
                  std::string(key) + " of " + path + " does not match the supplied vocabulary");
    }
  };
  check("vocab.src.fingerprint", src_fingerprint);
  check("vocab.tgt.fingerprint", tgt_fingerprint);
  return ck;
}

}  // namespace dmt::train
