#include "dmt/corpus.hpp"

#include <algorithm>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>

#include "dmt/common.hpp"
#include "dmt/utf8.hpp"

namespace dmt::corpus {

namespace {

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

std::set<std::string>& registry() {
  static std::set<std::string> tags{"kn", "ml", "ta", "te", "tu", "sn"};
  return tags;
}

std::string canonical_code(std::string_view code) {
  if (code == "sa") return "sn";
  return std::string(code);
}

void check_utf8(std::string_view text, const std::string& what) {
  if (auto bad = utf8::find_invalid(text)) {
    std::size_t line = 1 + static_cast<std::size_t>(
                               std::count(text.begin(), text.begin() + static_cast<long>(*bad), '\n'));
    throw Error(ErrorKind::invalid_utf8,
                what + ": invalid UTF-8 on line " + std::to_string(line));
  }
}

bool blank(const std::string& s) { return trim(s).empty(); }

}  // namespace

LanguageTag::LanguageTag(std::string_view code) : code_(canonical_code(code)) {
  if (!is_registered_language(code_)) {
    throw Error(ErrorKind::unknown_language, "unregistered language tag: " + std::string(code));
  }
}

void register_language(std::string_view code) {
  if (code.empty()) throw Error(ErrorKind::invalid_argument, "empty language tag");
  std::lock_guard lock(registry_mutex());
  registry().insert(canonical_code(code));
}

bool is_registered_language(std::string_view code) {
  std::lock_guard lock(registry_mutex());
  return registry().count(canonical_code(code)) > 0;
}

LoadedParallel parse_parallel(std::string_view src_text, std::string_view tgt_text,
                              const LanguageTag& src_lang, const LanguageTag& tgt_lang) {
  check_utf8(src_text, "source");
  check_utf8(tgt_text, "target");
  auto src = split_lines(src_text);
  auto tgt = split_lines(tgt_text);
  if (src.size() != tgt.size()) {
    throw Error(ErrorKind::line_count_mismatch,
                "source has " + std::to_string(src.size()) + " lines, target has " +
                    std::to_string(tgt.size()));
  }
  LoadedParallel out;
  out.corpus.src_lang = src_lang;
  out.corpus.tgt_lang = tgt_lang;
  out.corpus.pairs.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    const bool sb = blank(src[i]);
    const bool tb = blank(tgt[i]);
    if (sb && tb) {
      ++out.dropped_blank;
    } else if (sb || tb) {
      ++out.rejected_one_sided;
    } else {
      out.corpus.pairs.push_back({std::move(src[i]), std::move(tgt[i]), false});
    }
  }
  return out;
}

LoadedParallel load_parallel(const std::string& src_path, const std::string& tgt_path,
                             const LanguageTag& src_lang, const LanguageTag& tgt_lang) {
  return parse_parallel(read_file(src_path), read_file(tgt_path), src_lang, tgt_lang);
}

MonolingualCorpus parse_monolingual(std::string_view text, const LanguageTag& lang) {
  check_utf8(text, "monolingual");
  MonolingualCorpus out;
  out.lang = lang;
  for (auto& line : split_lines(text)) {
    if (!blank(line)) out.sentences.push_back(std::move(line));
  }
  return out;
}

MonolingualCorpus load_monolingual(const std::string& path, const LanguageTag& lang) {
  return parse_monolingual(read_file(path), lang);
}

void write_parallel(const ParallelCorpus& corpus, const std::string& src_path,
                    const std::string& tgt_path) {
  std::vector<std::string> src, tgt;
  src.reserve(corpus.size());
  tgt.reserve(corpus.size());
  for (const auto& p : corpus.pairs) {
    src.push_back(p.source);
    tgt.push_back(p.target);
  }
  write_lines(src_path, src);
  write_lines(tgt_path, tgt);
}

SplitResult split(const ParallelCorpus& corpus, std::size_t train_n, std::size_t dev_n,
                  std::size_t test_n, std::uint64_t seed, bool shuffle) {
  if (train_n + dev_n + test_n > corpus.size()) {
    throw Error(ErrorKind::size_exceeded,
                "split sizes " + std::to_string(train_n + dev_n + test_n) + " exceed corpus of " +
                    std::to_string(corpus.size()));
  }
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) {
    Rng rng(derive_seed(seed, "split"));
    rng.shuffle(order);
  }
  SplitResult out;
  for (ParallelCorpus* part : {&out.train, &out.dev, &out.test}) {
    part->src_lang = corpus.src_lang;
    part->tgt_lang = corpus.tgt_lang;
  }
  std::size_t pos = 0;
  auto take = [&](ParallelCorpus& part, std::size_t n) {
    part.pairs.reserve(n);
    for (std::size_t k = 0; k < n; ++k) part.pairs.push_back(corpus.pairs[order[pos++]]);
  };
  take(out.train, train_n);
  take(out.dev, dev_n);
  take(out.test, test_n);
  return out;
}

CorpusStats stats(const ParallelCorpus& corpus) {
  CorpusStats s;
  s.n_pairs = corpus.size();
  for (const auto& p : corpus.pairs) {
    s.n_tokens_src += split_whitespace(p.source).size();
    s.n_tokens_tgt += split_whitespace(p.target).size();
  }
  if (s.n_pairs > 0) {
    s.mean_len_src = static_cast<double>(s.n_tokens_src) / static_cast<double>(s.n_pairs);
    s.mean_len_tgt = static_cast<double>(s.n_tokens_tgt) / static_cast<double>(s.n_pairs);
  }
  return s;
}

std::string format_stats(const CorpusStats& s) {
  std::ostringstream out;
  out << "n_pairs\t" << s.n_pairs << '\n'
      << "n_tokens_src\t" << s.n_tokens_src << '\n'
      << "n_tokens_tgt\t" << s.n_tokens_tgt << '\n'
      << "mean_len_src\t" << format_fixed(s.mean_len_src, 4) << '\n'
      << "mean_len_tgt\t" << format_fixed(s.mean_len_tgt, 4) << '\n';
  return out.str();
}

}  // namespace dmt::corpus
