#include "dmt/experiment.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "dmt/backtranslation.hpp"
#include "dmt/bleu.hpp"
#include "dmt/common.hpp"
#include "dmt/subword.hpp"
#include "dmt/textnorm.hpp"

namespace dmt::exp {

namespace fs = std::filesystem;

// ------------------------------------------------------------------ config

std::map<std::string, std::string> parse_kv(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::size_t line_no = 0;
  for (const auto& raw : split_lines(text)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::invalid_config, "line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw Error(ErrorKind::invalid_config, "line " + std::to_string(line_no) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::string format_kv(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

namespace {

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(ErrorKind::invalid_config, key + ": expected a boolean, got '" + v + "'");
}

std::size_t to_count(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const auto n = std::stoull(v, &used);
    if (used == v.size() && v[0] != '-') return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::invalid_config, key + ": expected a non-negative integer, got '" + v + "'");
}

double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::invalid_config, key + ": expected a number, got '" + v + "'");
}

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path path(p);
  return (path.is_absolute() ? path : fs::path(base) / path).lexically_normal().string();
}

const char* b2s(bool b) { return b ? "true" : "false"; }

}  // namespace

ExperimentConfig ExperimentConfig::from_kv(const std::map<std::string, std::string>& kv,
                                           const std::string& base_dir) {
  ExperimentConfig c;
  std::map<std::string, std::string> model_kv, train_kv, reverse_kv;
  for (const auto& [k, v] : kv) {
    if (k.rfind("model.", 0) == 0) {
      model_kv[k] = v;
    } else if (k.rfind("train.", 0) == 0) {
      if (k == "train.seed") {
        throw Error(ErrorKind::invalid_config, "train.seed is derived from the top-level seed");
      }
      train_kv[k] = v;
    } else if (k.rfind("bt.reverse.", 0) == 0) {
      reverse_kv["train." + k.substr(11)] = v;
    } else if (k == "name") c.name = v;
    else if (k == "src_lang") c.src_lang = corpus::LanguageTag(v);
    else if (k == "tgt_lang") c.tgt_lang = corpus::LanguageTag(v);
    else if (k == "train_src") c.train_src = resolve(base_dir, v);
    else if (k == "train_tgt") c.train_tgt = resolve(base_dir, v);
    else if (k == "dev_src") c.dev_src = resolve(base_dir, v);
    else if (k == "dev_tgt") c.dev_tgt = resolve(base_dir, v);
    else if (k == "test_src") c.test_src = resolve(base_dir, v);
    else if (k == "test_tgt") c.test_tgt = resolve(base_dir, v);
    else if (k == "mono") c.mono = resolve(base_dir, v);
    else if (k == "transliterate") c.transliterate = to_bool(k, v);
    else if (k == "bpe_merges") c.bpe_merges = to_count(k, v);
    else if (k == "vocab_min_count") c.vocab_min_count = static_cast<std::int64_t>(to_count(k, v));
    else if (k == "decode.beam") c.decode.beam = to_count(k, v);
    else if (k == "decode.max_len") c.decode.max_len = to_count(k, v);
    else if (k == "decode.alpha") c.decode.alpha = to_real(k, v);
    else if (k == "bt") c.bt = to_bool(k, v);
    else if (k == "bt.upsample_real") c.bt_upsample_real = to_count(k, v);
    else if (k == "bt.beam") c.bt_decode.beam = to_count(k, v);
    else if (k == "bt.max_len") c.bt_decode.max_len = to_count(k, v);
    else if (k == "bt.alpha") c.bt_decode.alpha = to_real(k, v);
    else if (k == "system") c.system = v;
    else if (k == "seed") c.seed = to_count(k, v);
    else if (k == "runs_dir") c.runs_dir = resolve(base_dir, v);
    else throw Error(ErrorKind::invalid_config, "unknown config key " + k);
  }
  c.model = nn::ModelConfig::from_kv(model_kv);
  c.train = train::TrainConfig::from_kv(train_kv, train::TrainConfig::defaults_for(c.model.arch));
  c.bt_reverse_train = train::TrainConfig::from_kv(reverse_kv, c.train);
  if (c.system.empty()) c.system = std::string(nn::arch_name(c.model.arch)) + (c.bt ? "+bt" : "");
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path,
                                        const std::map<std::string, std::string>& overrides) {
  auto kv = parse_kv(read_file(path));
  for (const auto& [k, v] : overrides) kv[k] = v;
  const std::string base = fs::absolute(path).parent_path().string();
  return from_kv(kv, base);
}

std::map<std::string, std::string> ExperimentConfig::to_kv() const {
  std::map<std::string, std::string> kv{
      {"name", name},
      {"src_lang", src_lang.code()},
      {"tgt_lang", tgt_lang.code()},
      {"train_src", train_src},
      {"train_tgt", train_tgt},
      {"dev_src", dev_src},
      {"dev_tgt", dev_tgt},
      {"test_src", test_src},
      {"test_tgt", test_tgt},
      {"transliterate", b2s(transliterate)},
      {"bpe_merges", std::to_string(bpe_merges)},
      {"vocab_min_count", std::to_string(vocab_min_count)},
      {"decode.beam", std::to_string(decode.beam)},
      {"decode.max_len", std::to_string(decode.max_len)},
      {"decode.alpha", format_double(decode.alpha)},
      {"bt", b2s(bt)},
      {"system", system},
      {"seed", std::to_string(seed)},
  };
  if (!mono.empty()) kv["mono"] = mono;
  if (!runs_dir.empty()) kv["runs_dir"] = runs_dir;
  for (auto& [k, v] : model.to_kv()) kv[k] = v;
  auto t = train.to_kv();
  t.erase("train.seed");
  for (auto& [k, v] : t) kv[k] = v;
  if (bt) {
    kv["bt.upsample_real"] = std::to_string(bt_upsample_real);
    kv["bt.beam"] = std::to_string(bt_decode.beam);
    kv["bt.max_len"] = std::to_string(bt_decode.max_len);
    kv["bt.alpha"] = format_double(bt_decode.alpha);
    auto r = bt_reverse_train.to_kv();
    r.erase("train.seed");
    for (auto& [k, v] : r) kv["bt.reverse." + k.substr(6)] = v;
  }
  return kv;
}

void ExperimentConfig::validate() const {
  if (name.empty() || name.find('/') != std::string::npos || name == "." || name == "..") {
    throw Error(ErrorKind::invalid_config, "name must be a non-empty single path component");
  }
  if (src_lang.empty() || tgt_lang.empty()) {
    throw Error(ErrorKind::invalid_config, "src_lang and tgt_lang are required");
  }
  if (transliterate) {
    text::script_of(src_lang);
    text::script_of(tgt_lang);
  }
  const std::pair<const char*, const std::string*> paths[] = {
      {"train_src", &train_src}, {"train_tgt", &train_tgt}, {"dev_src", &dev_src},
      {"dev_tgt", &dev_tgt},     {"test_src", &test_src},   {"test_tgt", &test_tgt},
  };
  for (const auto& [key, p] : paths) {
    if (p->empty()) throw Error(ErrorKind::invalid_config, std::string(key) + " is required");
    if (!fs::is_regular_file(*p)) throw Error(ErrorKind::io, std::string(key) + " not found: " + *p);
  }
  if (bt) {
    if (mono.empty()) throw Error(ErrorKind::invalid_config, "bt needs a mono corpus");
    if (!fs::is_regular_file(mono)) throw Error(ErrorKind::io, "mono not found: " + mono);
    if (bt_upsample_real == 0) throw Error(ErrorKind::invalid_config, "bt.upsample_real must be >= 1");
    bt_decode.validate();
    bt_reverse_train.validate();
  }
  if (vocab_min_count < 1) throw Error(ErrorKind::invalid_config, "vocab_min_count must be >= 1");
  model.validate();
  train.validate();
  decode.validate();
}

std::string ExperimentConfig::resolved_runs_dir() const {
  if (!runs_dir.empty()) return runs_dir;
  if (const char* env = std::getenv("DMT_RUNS_DIR"); env != nullptr && *env != '\0') return env;
  return "runs";
}

// -------------------------------------------------------------------- lock

RunLock::RunLock(const std::string& dir) : path_((fs::path(dir) / "lock").string()) {
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) throw Error(ErrorKind::locked, "run directory is locked: " + path_);
    throw Error(ErrorKind::io, "cannot create " + path_ + ": " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

// ------------------------------------------------------------------ runner

namespace {

class Logger {
public:
  Logger(const fs::path& file, bool echo) : out_(file, std::ios::app), echo_(echo) {}

  void operator()(const std::string& message) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
    const std::string line = std::string(stamp) + " " + message;
    out_ << line << '\n' << std::flush;
    if (echo_) std::cerr << line << '\n';
  }

private:
  std::ofstream out_;
  bool echo_;
};

std::string file_hash(const fs::path& p) { return hex64(fnv1a64(read_file(p.string()))); }

/// Runs a stage unless its stamp matches the current inputs and every output
/// it recorded is still on disk with the recorded hash.
class Stages {
public:
  Stages(fs::path root, Logger& log, RunSummary& summary)
      : root_(std::move(root)), log_(log), summary_(summary) {
    fs::create_directories(root_ / "stages");
  }

  void run(const std::string& name, const std::vector<fs::path>& inputs, const std::string& settings,
           const std::vector<std::string>& outputs, const std::function<void()>& work) {
    std::string key_text = name + "\n" + settings + "\n";
    for (const auto& in : inputs) key_text += in.string() + "\t" + file_hash(in) + "\n";
    const std::string key = hex64(fnv1a64(key_text));
    const fs::path stamp = root_ / "stages" / (name + ".stamp");
    if (fresh(stamp, key)) {
      log_("stage " + name + ": up to date");
      summary_.stages_skipped.push_back(name);
      return;
    }
    log_("stage " + name + ": running");
    std::error_code ec;
    fs::remove(stamp, ec);
    try {
      work();
    } catch (const Error& e) {
      log_("stage " + name + " failed: " + e.what());
      throw Error(e.kind(), "stage " + name + ": " + e.what());
    }
    std::string body = key + "\n";
    for (const auto& out : outputs) {
      const fs::path p = root_ / out;
      if (!fs::is_regular_file(p)) {
        throw Error(ErrorKind::io, "stage " + name + " did not produce " + out);
      }
      const std::string h = file_hash(p);
      body += out + "\t" + h + "\n";
      artifacts_[out] = h;
    }
    write_file(stamp.string(), body);
    summary_.stages_run.push_back(name);
  }

  const std::map<std::string, std::string>& artifacts() const { return artifacts_; }

private:
  bool fresh(const fs::path& stamp, const std::string& key) {
    if (!fs::is_regular_file(stamp)) return false;
    const auto lines = read_lines(stamp.string());
    if (lines.empty() || lines[0] != key) return false;
    std::map<std::string, std::string> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto tab = lines[i].find('\t');
      if (tab == std::string::npos) return false;
      const std::string out = lines[i].substr(0, tab);
      const fs::path p = root_ / out;
      if (!fs::is_regular_file(p) || file_hash(p) != lines[i].substr(tab + 1)) return false;
      seen[out] = lines[i].substr(tab + 1);
    }
    artifacts_.insert(seen.begin(), seen.end());
    return true;
  }

  fs::path root_;
  Logger& log_;
  RunSummary& summary_;
  std::map<std::string, std::string> artifacts_;
};

std::string join_tokens(const std::vector<std::string>& tokens) { return join(tokens, " "); }

std::vector<bpe::Subwords> read_token_file(const fs::path& p) {
  std::vector<bpe::Subwords> out;
  for (const auto& line : read_lines(p.string())) out.push_back(split_whitespace(line));
  return out;
}

void write_token_file(const fs::path& p, const std::vector<bpe::Subwords>& rows) {
  std::vector<std::string> lines;
  lines.reserve(rows.size());
  for (const auto& r : rows) lines.push_back(join_tokens(r));
  write_lines(p.string(), lines);
}

void write_ids(const fs::path& p, const std::vector<bpe::Subwords>& rows, const bpe::Vocabulary& vocab) {
  std::vector<std::string> lines;
  lines.reserve(rows.size());
  for (const auto& r : rows) lines.push_back(bpe::format_ids(bpe::encode(vocab, r)));
  write_lines(p.string(), lines);
}

std::vector<train::EncodedPair> read_pairs(const fs::path& src, const fs::path& tgt) {
  const auto s = read_lines(src.string());
  const auto t = read_lines(tgt.string());
  if (s.size() != t.size()) {
    throw Error(ErrorKind::line_count_mismatch, src.string() + " and " + tgt.string() + " differ in length");
  }
  std::vector<train::EncodedPair> out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out.push_back({bpe::parse_ids(s[i]), bpe::parse_ids(t[i])});
  return out;
}

std::string kv_text(const std::map<std::string, std::string>& kv) { return format_kv(kv); }

}  // namespace

RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const fs::path root = fs::path(config.resolved_runs_dir()) / config.name;
  fs::create_directories(root);
  RunLock lock(root.string());

  const std::string snapshot = format_kv(config.to_kv());
  const fs::path snapshot_path = root / "config.txt";
  if (fs::is_regular_file(snapshot_path) && read_file(snapshot_path.string()) != snapshot) {
    throw Error(ErrorKind::invalid_config,
                "run name '" + config.name + "' is already used by a different configuration in " +
                    root.string());
  }
  write_file(snapshot_path.string(), snapshot);

  Logger log(root / "log.txt", options.echo_log);
  RunSummary summary;
  summary.run_dir = root.string();
  Stages stages(root, log, summary);
  log("run " + config.name + " (" + config.system + ", " + config.pair_name() + ")");

  for (const char* d : {"prep", "bpe", "vocab", "bin", "bt", "train", "decode", "score"}) {
    fs::create_directories(root / d);
  }
  const bool translit = config.transliterate;
  const auto& sl = config.src_lang;
  const auto& tl = config.tgt_lang;
  const std::vector<std::string> splits{"train", "dev", "test"};
  auto raw = [&](const std::string& split) -> std::pair<std::string, std::string> {
    if (split == "train") return {config.train_src, config.train_tgt};
    if (split == "dev") return {config.dev_src, config.dev_tgt};
    return {config.test_src, config.test_tgt};
  };

  // prep: normalize, pre-tokenize, transliterate.
  {
    std::vector<fs::path> inputs;
    std::vector<std::string> outputs;
    for (const auto& s : splits) {
      inputs.push_back(raw(s).first);
      inputs.push_back(raw(s).second);
      outputs.push_back("prep/" + s + ".src");
      outputs.push_back("prep/" + s + ".tgt");
    }
    if (config.bt) {
      inputs.push_back(config.mono);
      outputs.push_back("prep/mono.tgt");
    }
    const std::string settings = sl.code() + " " + tl.code() + " translit=" + b2s(translit);
    stages.run("prep", inputs, settings, outputs, [&] {
      for (const auto& s : splits) {
        const auto loaded = corpus::load_parallel(raw(s).first, raw(s).second, sl, tl);
        if (loaded.rejected_one_sided > 0) {
          log(s + ": " + std::to_string(loaded.rejected_one_sided) + " one-sided pairs rejected");
        }
        std::vector<std::string> src, tgt;
        for (const auto& p : loaded.corpus.pairs) {
          src.push_back(join_tokens(decode::preprocess(p.source, sl, translit)));
          tgt.push_back(join_tokens(decode::preprocess(p.target, tl, translit)));
        }
        write_lines((root / ("prep/" + s + ".src")).string(), src);
        write_lines((root / ("prep/" + s + ".tgt")).string(), tgt);
        log(s + ": " + std::to_string(src.size()) + " pairs");
      }
      if (config.bt) {
        const auto mono = corpus::load_monolingual(config.mono, tl);
        std::vector<std::string> lines;
        for (const auto& m : mono.sentences) lines.push_back(join_tokens(decode::preprocess(m, tl, translit)));
        write_lines((root / "prep/mono.tgt").string(), lines);
      }
    });
  }

  // bpe: one joint model over both training sides (and mono text when used).
  {
    std::vector<fs::path> inputs{root / "prep/train.src", root / "prep/train.tgt"};
    if (config.bt) inputs.push_back(root / "prep/mono.tgt");
    std::vector<std::string> outputs{"bpe/codes"};
    for (const auto& s : splits) {
      outputs.push_back("bpe/" + s + ".src");
      outputs.push_back("bpe/" + s + ".tgt");
    }
    if (config.bt) outputs.push_back("bpe/mono.tgt");
    stages.run("bpe", inputs, "merges=" + std::to_string(config.bpe_merges), outputs, [&] {
      std::vector<bpe::TokenizedSentence> learn;
      for (const auto& in : inputs) {
        auto rows = read_token_file(in);
        learn.insert(learn.end(), rows.begin(), rows.end());
      }
      const bpe::BpeModel model = bpe::learn_bpe(learn, config.bpe_merges);
      model.save((root / "bpe/codes").string());
      log("learned " + std::to_string(model.size()) + " merges");
      std::vector<std::string> names;
      for (const auto& s : splits) {
        names.push_back(s + ".src");
        names.push_back(s + ".tgt");
      }
      if (config.bt) names.push_back("mono.tgt");
      for (const auto& n : names) {
        std::vector<bpe::Subwords> seg;
        for (const auto& row : read_token_file(root / ("prep/" + n))) seg.push_back(bpe::apply_bpe(model, row));
        write_token_file(root / ("bpe/" + n), seg);
      }
    });
  }

  // vocab: per side, from training text only (target side includes mono).
  {
    std::vector<fs::path> inputs{root / "bpe/train.src", root / "bpe/train.tgt"};
    if (config.bt) inputs.push_back(root / "bpe/mono.tgt");
    stages.run("vocab", inputs, "min_count=" + std::to_string(config.vocab_min_count),
               {"vocab/src", "vocab/tgt"}, [&] {
                 const auto src = read_token_file(root / "bpe/train.src");
                 auto tgt = read_token_file(root / "bpe/train.tgt");
                 if (config.bt) {
                   auto mono = read_token_file(root / "bpe/mono.tgt");
                   tgt.insert(tgt.end(), mono.begin(), mono.end());
                 }
                 const auto vs = bpe::build_vocab(src, config.vocab_min_count);
                 const auto vt = bpe::build_vocab(tgt, config.vocab_min_count);
                 vs.save((root / "vocab/src").string());
                 vt.save((root / "vocab/tgt").string());
                 log("vocab sizes " + std::to_string(vs.size()) + " / " + std::to_string(vt.size()));
               });
  }

  // binarize: train and dev id files.
  {
    std::vector<fs::path> inputs{root / "vocab/src", root / "vocab/tgt"};
    std::vector<std::string> outputs;
    for (const char* s : {"train", "dev"}) {
      inputs.push_back(root / "bpe" / (std::string(s) + ".src"));
      inputs.push_back(root / "bpe" / (std::string(s) + ".tgt"));
      outputs.push_back("bin/" + std::string(s) + ".src");
      outputs.push_back("bin/" + std::string(s) + ".tgt");
    }
    stages.run("binarize", inputs, "", outputs, [&] {
      const auto vs = bpe::Vocabulary::load((root / "vocab/src").string());
      const auto vt = bpe::Vocabulary::load((root / "vocab/tgt").string());
      for (const char* s : {"train", "dev"}) {
        const std::string n(s);
        write_ids(root / ("bin/" + n + ".src"), read_token_file(root / ("bpe/" + n + ".src")), vs);
        write_ids(root / ("bin/" + n + ".tgt"), read_token_file(root / ("bpe/" + n + ".tgt")), vt);
      }
    });
  }

  // bt: reverse model, pseudo sources for mono, mixed training ids.
  fs::path train_src_ids = root / "bin/train.src";
  fs::path train_tgt_ids = root / "bin/train.tgt";
  if (config.bt) {
    const std::vector<fs::path> inputs{root / "bin/train.src", root / "bin/train.tgt", root / "bin/dev.src",
                                       root / "bin/dev.tgt",   root / "bpe/codes",     root / "vocab/src",
                                       root / "vocab/tgt",     config.train_src,       config.train_tgt,
                                       config.mono};
    std::map<std::string, std::string> settings = config.model.to_kv();
    for (auto& [k, v] : config.bt_reverse_train.to_kv()) settings[k] = v;
    settings["bt.decode"] = config.bt_decode.describe();
    settings["bt.upsample_real"] = std::to_string(config.bt_upsample_real);
    settings["seed"] = std::to_string(config.seed);
    settings["translit"] = b2s(translit);
    stages.run("bt", inputs, kv_text(settings),
               {"bt/reverse/best.dmt", "bt/pseudo.src", "bt/pseudo.tgt", "bt/pseudo.prov", "bin/mix.src",
                "bin/mix.tgt"},
               [&] {
                 const auto vs = bpe::Vocabulary::load((root / "vocab/src").string());
                 const auto vt = bpe::Vocabulary::load((root / "vocab/tgt").string());
                 const auto codes = bpe::BpeModel::load((root / "bpe/codes").string());
                 const auto real_ids = read_pairs(root / "bin/train.src", root / "bin/train.tgt");
                 const auto dev_ids = read_pairs(root / "bin/dev.src", root / "bin/dev.tgt");
                 std::vector<train::EncodedPair> rev_train, rev_dev;
                 for (const auto& p : real_ids) rev_train.push_back({p.tgt, p.src});
                 for (const auto& p : dev_ids) rev_dev.push_back({p.tgt, p.src});

                 auto reverse = nn::build_model(config.model, vt.size(), vs.size(),
                                                derive_seed(config.seed, "bt-reverse"));
                 train::TrainConfig tc = config.bt_reverse_train;
                 tc.seed = derive_seed(config.seed, "bt-reverse-train");
                 train::TrainOutput out{(root / "bt/reverse").string(), train::vocab_meta(vt, vs),
                                        [&](const std::string& l) { log("reverse: " + l); }};
                 train::train(*reverse, rev_train, rev_dev, tc, train::subword_view(vs), out);

                 const std::string fp = file_hash(root / "bt/reverse/best.dmt");
                 decode::PipelineContext ctx{codes, vt, vs, tl, sl, translit, nullptr};
                 const auto mono = corpus::load_monolingual(config.mono, tl);
                 const auto pseudo = bt::generate_pseudo_parallel(*reverse, fp, mono, ctx, config.bt_decode);
                 bt::write_pseudo(pseudo, (root / "bt/pseudo.src").string(), (root / "bt/pseudo.tgt").string(),
                                  (root / "bt/pseudo.prov").string());
                 log("pseudo pairs " + std::to_string(pseudo.corpus.size()) + ", dropped empty " +
                     std::to_string(pseudo.dropped_empty));

                 const auto real = corpus::load_parallel(config.train_src, config.train_tgt, sl, tl).corpus;
                 const auto mixed =
                     bt::mix(real, pseudo.corpus, config.bt_upsample_real, derive_seed(config.seed, "mix"));
                 std::vector<bpe::Subwords> ms, mt;
                 for (const auto& p : mixed.pairs) {
                   ms.push_back(bpe::apply_bpe(codes, decode::preprocess(p.source, sl, translit)));
                   mt.push_back(bpe::apply_bpe(codes, decode::preprocess(p.target, tl, translit)));
                 }
                 write_ids(root / "bin/mix.src", ms, vs);
                 write_ids(root / "bin/mix.tgt", mt, vt);
                 log("mixed corpus " + std::to_string(mixed.size()) + " pairs");
               });
    train_src_ids = root / "bin/mix.src";
    train_tgt_ids = root / "bin/mix.tgt";
  }

  // train
  {
    const std::vector<fs::path> inputs{train_src_ids,       train_tgt_ids,       root / "bin/dev.src",
                                       root / "bin/dev.tgt", root / "vocab/src", root / "vocab/tgt"};
    std::map<std::string, std::string> settings = config.model.to_kv();
    for (auto& [k, v] : config.train.to_kv()) settings[k] = v;
    settings["seed"] = std::to_string(config.seed);
    stages.run("train", inputs, kv_text(settings), {"train/best.dmt", "train/report.tsv"}, [&] {
      const auto vs = bpe::Vocabulary::load((root / "vocab/src").string());
      const auto vt = bpe::Vocabulary::load((root / "vocab/tgt").string());
      const auto train_ids = read_pairs(train_src_ids, train_tgt_ids);
      const auto dev_ids = read_pairs(root / "bin/dev.src", root / "bin/dev.tgt");
      auto model = nn::build_model(config.model, vs.size(), vt.size(), config.seed);
      train::TrainConfig tc = config.train;
      tc.seed = derive_seed(config.seed, "train");
      train::TrainOutput out{(root / "train").string(), train::vocab_meta(vs, vt),
                             [&](const std::string& l) { log(l); }};
      const auto result = train::train(*model, train_ids, dev_ids, tc, train::subword_view(vt), out);
      log("best epoch " + std::to_string(result.report.best_epoch));
    });
  }

  // decode: full text pipeline on the raw test sources.
  {
    const std::vector<fs::path> inputs{root / "train/best.dmt", root / "bpe/codes", root / "vocab/src",
                                       root / "vocab/tgt",      config.test_src,     config.test_tgt};
    stages.run("decode", inputs, config.decode.describe() + " translit=" + b2s(translit), {"decode/test.hyp"},
               [&] {
                 decode::PipelineContext ctx{bpe::BpeModel::load((root / "bpe/codes").string()),
                                             bpe::Vocabulary::load((root / "vocab/src").string()),
                                             bpe::Vocabulary::load((root / "vocab/tgt").string()),
                                             sl, tl, translit, nullptr};
                 const auto ck = train::load_checkpoint((root / "train/best.dmt").string(),
                                                        ctx.src_vocab.fingerprint(), ctx.tgt_vocab.fingerprint());
                 const auto test = corpus::load_parallel(config.test_src, config.test_tgt, sl, tl).corpus;
                 std::vector<std::string> src;
                 for (const auto& p : test.pairs) src.push_back(p.source);
                 write_lines((root / "decode/test.hyp").string(),
                             decode::translate_lines(*ck.model, src, ctx, config.decode));
               });
  }

  // score: mean sentence BLEU on normalized, tokenized native-script text.
  {
    const std::vector<fs::path> inputs{root / "decode/test.hyp", config.test_src, config.test_tgt};
    stages.run("score", inputs, config.system + "\t" + config.pair_name(),
               {"score/cand.tok", "score/ref.tok", "score/report.tsv", "results.tsv"}, [&] {
                 const auto test = corpus::load_parallel(config.test_src, config.test_tgt, sl, tl).corpus;
                 const auto hyps = read_lines((root / "decode/test.hyp").string());
                 if (hyps.size() != test.size()) {
                   throw Error(ErrorKind::line_count_mismatch, "hypotheses and references differ in length");
                 }
                 std::vector<std::string> cand, ref;
                 for (std::size_t i = 0; i < hyps.size(); ++i) {
                   cand.push_back(join_tokens(text::tokenize(text::normalize(hyps[i], tl))));
                   ref.push_back(join_tokens(text::tokenize(text::normalize(test.pairs[i].target, tl))));
                 }
                 write_lines((root / "score/cand.tok").string(), cand);
                 write_lines((root / "score/ref.tok").string(), ref);
                 const auto report = bleu::score_files((root / "score/cand.tok").string(),
                                                       (root / "score/ref.tok").string(), {},
                                                       (root / "score/report.tsv").string());
                 write_file((root / "results.tsv").string(),
                            "system\tpair\tmean_sentence_bleu\n" + config.system + "\t" + config.pair_name() +
                                "\t" + format_fixed(report.mean, 4) + "\n");
                 log("test mean sentence BLEU " + format_fixed(report.mean, 4));
               });
  }

  const auto rows = read_results((root / "results.tsv").string());
  summary.test_bleu = rows.empty() ? 0.0 : rows.front().bleu;

  std::string manifest = "tool_version\t" + std::string(kToolVersion) + "\n";
  manifest += "config\t" + hex64(fnv1a64(snapshot)) + "\n";
  for (const auto& [path, hash] : stages.artifacts()) manifest += path + "\t" + hash + "\n";
  const fs::path manifest_path = root / "manifest.tsv";
  if (!fs::is_regular_file(manifest_path) || read_file(manifest_path.string()) != manifest) {
    write_file(manifest_path.string(), manifest);
  }
  log("done: " + std::to_string(summary.stages_run.size()) + " stages run, " +
      std::to_string(summary.stages_skipped.size()) + " up to date");
  return summary;
}

// ------------------------------------------------------------------ report

std::vector<ResultRow> read_results(const std::string& path) {
  std::vector<ResultRow> rows;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      const auto tab = lines[i].find('\t', start);
      cols.push_back(lines[i].substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() != 3) throw Error(ErrorKind::invalid_argument, path + ": expected 3 columns");
    if (i == 0 && cols[0] == "system") continue;
    rows.push_back({cols[0], cols[1], to_real(path, cols[2])});
  }
  return rows;
}

std::string format_matrix(const std::vector<ResultRow>& rows, bool markdown) {
  std::vector<std::string> systems, pairs;
  std::map<std::pair<std::string, std::string>, double> cell;
  for (const auto& r : rows) {
    if (std::find(systems.begin(), systems.end(), r.system) == systems.end()) systems.push_back(r.system);
    if (std::find(pairs.begin(), pairs.end(), r.pair) == pairs.end()) pairs.push_back(r.pair);
    cell[{r.system, r.pair}] = r.bleu;
  }
  std::string out;
  auto emit = [&](const std::vector<std::string>& cols) {
    out += markdown ? "| " + join(cols, " | ") + " |\n" : join(cols, "\t") + "\n";
  };
  std::vector<std::string> header{"system"};
  header.insert(header.end(), pairs.begin(), pairs.end());
  emit(header);
  if (markdown) emit(std::vector<std::string>(header.size(), "---"));
  for (const auto& s : systems) {
    std::vector<std::string> cols{s};
    for (const auto& p : pairs) {
      auto it = cell.find({s, p});
      cols.push_back(it == cell.end() ? "-" : format_fixed(it->second, 4));
    }
    emit(cols);
  }
  return out;
}

}  // namespace dmt::exp
