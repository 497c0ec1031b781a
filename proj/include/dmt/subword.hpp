#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dmt::bpe {

using TokenizedSentence = std::vector<std::string>;
using Subwords = std::vector<std::string>;

inline constexpr std::string_view kEndOfWord = "</w>";
inline constexpr std::string_view kContinuation = "@@";
inline constexpr std::string_view kModelHeader = "#dmt-bpe v1";

/// Ordered merge list. Earlier merges have higher priority when applied.
class BpeModel {
public:
  using Merge = std::pair<std::string, std::string>;

  BpeModel() = default;
  explicit BpeModel(std::vector<Merge> merges);

  const std::vector<Merge>& merges() const noexcept { return merges_; }
  std::size_t size() const noexcept { return merges_.size(); }

  /// The model restricted to its first `n` merges.
  BpeModel prefix(std::size_t n) const;

  /// Segments one token into subwords; all but the last carry "@@".
  Subwords segment(std::string_view token) const;

  std::string serialize() const;
  static BpeModel parse(std::string_view text);
  void save(const std::string& path) const;
  static BpeModel load(const std::string& path);

private:
  std::vector<Merge> merges_;
  std::unordered_map<std::string, std::size_t> rank_;  // "left right" -> position
};

/// Word-frequency table -> merges, most frequent pair first, ties broken by
/// the lexicographically smallest (left, right). Stops early once no pair
/// occurs at least twice.
BpeModel learn_bpe(const std::vector<TokenizedSentence>& corpus, std::size_t num_merges);
BpeModel learn_bpe_from_counts(const std::map<std::string, std::int64_t>& word_counts,
                               std::size_t num_merges);

Subwords apply_bpe(const BpeModel& model, const TokenizedSentence& sentence);

/// Joins "@@"-continued runs. A dangling marker on the final subword is
/// stripped and counted in `*dangling` when non-null.
TokenizedSentence undo_bpe(const Subwords& subwords, std::size_t* dangling = nullptr);

enum SpecialId : std::int32_t { kPad = 0, kUnk = 1, kBos = 2, kEos = 3 };
inline constexpr std::int32_t kNumSpecials = 4;
inline constexpr std::string_view kUnkText = "<unk>";

class Vocabulary {
public:
  Vocabulary();

  std::size_t size() const noexcept { return tokens_.size(); }
  std::int32_t id_of(const std::string& token) const;  // kUnk when absent
  const std::string& token_of(std::int32_t id) const;
  std::int64_t count_of(std::int32_t id) const { return counts_.at(static_cast<std::size_t>(id)); }
  bool contains(const std::string& token) const { return ids_.count(token) > 0; }

  /// Appends a token with the next id. Duplicates are rejected.
  std::int32_t add(const std::string& token, std::int64_t count);

  /// "token<TAB>count" per line in id order, specials omitted.
  std::string serialize() const;
  static Vocabulary parse(std::string_view text);
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  /// Content hash of the serialized form.
  std::string fingerprint() const;

private:
  std::vector<std::string> tokens_;
  std::vector<std::int64_t> counts_;
  std::unordered_map<std::string, std::int32_t> ids_;
};

inline constexpr std::size_t kUnlimited = static_cast<std::size_t>(-1);

/// Types with count >= min_count ranked by (count desc, token asc), truncated
/// to max_size, numbered from 4.
Vocabulary build_vocab(const std::vector<Subwords>& corpus, std::int64_t min_count = 1,
                       std::size_t max_size = kUnlimited);

std::vector<std::int32_t> encode(const Vocabulary& vocab, const Subwords& subwords);
Subwords decode(const Vocabulary& vocab, const std::vector<std::int32_t>& ids);

/// "1 2 3" style id line used by binarized files.
std::string format_ids(const std::vector<std::int32_t>& ids);
std::vector<std::int32_t> parse_ids(std::string_view line);

}  // namespace dmt::bpe
