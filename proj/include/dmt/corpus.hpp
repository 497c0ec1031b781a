#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace dmt::corpus {

/// Short language identifier (kn, ml, ta, te, tu, sn). Construction validates
/// against the registry; "sa" is accepted as an alias of "sn".
class LanguageTag {
public:
  LanguageTag() = default;
  explicit LanguageTag(std::string_view code);

  const std::string& code() const noexcept { return code_; }
  bool empty() const noexcept { return code_.empty(); }

  friend bool operator==(const LanguageTag&, const LanguageTag&) = default;

private:
  std::string code_;
};

/// Adds a user tag to the process-wide registry. Idempotent.
void register_language(std::string_view code);
bool is_registered_language(std::string_view code);

struct SentencePair {
  std::string source;
  std::string target;
  bool synthetic = false;

  friend bool operator==(const SentencePair&, const SentencePair&) = default;
};

struct ParallelCorpus {
  std::vector<SentencePair> pairs;
  LanguageTag src_lang;
  LanguageTag tgt_lang;

  std::size_t size() const noexcept { return pairs.size(); }
  bool empty() const noexcept { return pairs.empty(); }
};

struct MonolingualCorpus {
  std::vector<std::string> sentences;
  LanguageTag lang;

  std::size_t size() const noexcept { return sentences.size(); }
};

struct CorpusStats {
  std::size_t n_pairs = 0;
  std::size_t n_tokens_src = 0;
  std::size_t n_tokens_tgt = 0;
  double mean_len_src = 0.0;
  double mean_len_tgt = 0.0;
};

/// Result of load_parallel: the corpus plus the counted warnings.
struct LoadedParallel {
  ParallelCorpus corpus;
  std::size_t dropped_blank = 0;       // blank on both sides
  std::size_t rejected_one_sided = 0;  // blank on exactly one side
};

LoadedParallel load_parallel(const std::string& src_path, const std::string& tgt_path,
                             const LanguageTag& src_lang, const LanguageTag& tgt_lang);

/// Same contract as load_parallel, over in-memory file contents.
LoadedParallel parse_parallel(std::string_view src_text, std::string_view tgt_text,
                              const LanguageTag& src_lang, const LanguageTag& tgt_lang);

MonolingualCorpus load_monolingual(const std::string& path, const LanguageTag& lang);
MonolingualCorpus parse_monolingual(std::string_view text, const LanguageTag& lang);

void write_parallel(const ParallelCorpus& corpus, const std::string& src_path,
                    const std::string& tgt_path);

struct SplitResult {
  ParallelCorpus train;
  ParallelCorpus dev;
  ParallelCorpus test;
};

/// Deterministic shuffle under `seed` (unless `shuffle` is false), then a
/// contiguous train/dev/test partition of the prefix.
SplitResult split(const ParallelCorpus& corpus, std::size_t train_n, std::size_t dev_n,
                  std::size_t test_n, std::uint64_t seed, bool shuffle = true);

CorpusStats stats(const ParallelCorpus& corpus);

/// "key<TAB>value" lines.
std::string format_stats(const CorpusStats& s);

}  // namespace dmt::corpus
