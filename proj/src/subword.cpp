#include "dmt/subword.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <set>

#include "dmt/common.hpp"
#include "dmt/utf8.hpp"

namespace dmt::bpe {

namespace {

std::string merge_key(std::string_view left, std::string_view right) {
  std::string k;
  k.reserve(left.size() + right.size() + 1);
  k.append(left);
  k.push_back(' ');
  k.append(right);
  return k;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::vector<std::string> initial_symbols(std::string_view word) {
  std::vector<std::string> symbols = utf8::characters(word);
  if (!symbols.empty()) symbols.back() += kEndOfWord;
  return symbols;
}

// Incremental pair statistics over an interned word table.
class MergeLearner {
public:
  explicit MergeLearner(const std::map<std::string, std::int64_t>& word_counts) {
    for (const auto& [word, count] : word_counts) {
      if (word.empty() || count <= 0) continue;
      std::vector<int> syms;
      for (const auto& s : initial_symbols(word)) syms.push_back(intern(s));
      words_.push_back(std::move(syms));
      freqs_.push_back(count);
    }
    for (std::size_t w = 0; w < words_.size(); ++w) add_word_pairs(w, +1);
  }

  std::vector<BpeModel::Merge> run(std::size_t num_merges) {
    std::vector<BpeModel::Merge> merges;
    while (merges.size() < num_merges && !queue_.empty()) {
      const Entry best = *queue_.begin();
      if (best.count < 2) break;
      const int left = static_cast<int>(best.key >> 32);
      const int right = static_cast<int>(best.key & 0xffffffffU);
      merges.emplace_back(symbols_[static_cast<std::size_t>(left)],
                          symbols_[static_cast<std::size_t>(right)]);
      const int merged = intern(symbols_[static_cast<std::size_t>(left)] +
                                symbols_[static_cast<std::size_t>(right)]);
      const std::set<std::size_t> affected = where_[best.key];
      for (std::size_t w : affected) {
        if (!contains_pair(words_[w], left, right)) continue;
        add_word_pairs(w, -1);
        words_[w] = merge_in(words_[w], left, right, merged);
        add_word_pairs(w, +1);
      }
    }
    return merges;
  }

private:
  struct Entry {
    std::int64_t count;
    std::uint64_t key;
  };
  struct EntryLess {
    const MergeLearner* self;
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.count != b.count) return a.count > b.count;
      if (a.key == b.key) return false;
      const auto& sa = self->symbols_;
      const std::string& al = sa[a.key >> 32];
      const std::string& bl = sa[b.key >> 32];
      if (al != bl) return al < bl;
      return sa[a.key & 0xffffffffU] < sa[b.key & 0xffffffffU];
    }
  };

  static std::uint64_t pair_key(int a, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
  }

  int intern(const std::string& s) {
    auto [it, inserted] = ids_.try_emplace(s, static_cast<int>(symbols_.size()));
    if (inserted) symbols_.push_back(s);
    return it->second;
  }

  static bool contains_pair(const std::vector<int>& syms, int a, int b) {
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      if (syms[i] == a && syms[i + 1] == b) return true;
    }
    return false;
  }

  static std::vector<int> merge_in(const std::vector<int>& syms, int a, int b, int merged) {
    std::vector<int> out;
    out.reserve(syms.size());
    for (std::size_t i = 0; i < syms.size();) {
      if (i + 1 < syms.size() && syms[i] == a && syms[i + 1] == b) {
        out.push_back(merged);
        i += 2;
      } else {
        out.push_back(syms[i]);
        ++i;
      }
    }
    return out;
  }

  void adjust(std::uint64_t key, std::int64_t delta) {
    auto it = counts_.find(key);
    std::int64_t old = it == counts_.end() ? 0 : it->second;
    if (old > 0) queue_.erase(Entry{old, key});
    const std::int64_t now = old + delta;
    if (now > 0) {
      counts_[key] = now;
      queue_.insert(Entry{now, key});
    } else if (it != counts_.end()) {
      counts_.erase(it);
    }
  }

  void add_word_pairs(std::size_t w, int sign) {
    const auto& syms = words_[w];
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      const std::uint64_t key = pair_key(syms[i], syms[i + 1]);
      adjust(key, sign * freqs_[w]);
      if (sign > 0) where_[key].insert(w);
    }
  }

  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> ids_;
  std::vector<std::vector<int>> words_;
  std::vector<std::int64_t> freqs_;
  std::unordered_map<std::uint64_t, std::int64_t> counts_;
  std::unordered_map<std::uint64_t, std::set<std::size_t>> where_;
  std::set<Entry, EntryLess> queue_{EntryLess{this}};
};

}  // namespace

BpeModel::BpeModel(std::vector<Merge> merges) : merges_(std::move(merges)) {
  for (std::size_t i = 0; i < merges_.size(); ++i) {
    auto [it, inserted] = rank_.try_emplace(merge_key(merges_[i].first, merges_[i].second), i);
    if (!inserted) {
      throw Error(ErrorKind::invalid_argument,
                  "duplicate merge: " + merges_[i].first + " " + merges_[i].second);
    }
  }
}

BpeModel BpeModel::prefix(std::size_t n) const {
  n = std::min(n, merges_.size());
  return BpeModel(std::vector<Merge>(merges_.begin(), merges_.begin() + static_cast<long>(n)));
}

Subwords BpeModel::segment(std::string_view token) const {
  std::vector<std::string> syms = initial_symbols(token);
  // Replays merges in model order: each round applies the lowest-ranked merge
  // not yet passed, exactly as a sequential sweep over the merge list would.
  std::size_t next_rank = 0;
  while (syms.size() > 1) {
    std::size_t best = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = rank_.find(merge_key(syms[i], syms[i + 1]));
      if (it != rank_.end() && it->second >= next_rank && it->second < best) best = it->second;
    }
    if (best == std::numeric_limits<std::size_t>::max()) break;
    const Merge& m = merges_[best];
    std::vector<std::string> merged;
    merged.reserve(syms.size());
    for (std::size_t i = 0; i < syms.size();) {
      if (i + 1 < syms.size() && syms[i] == m.first && syms[i + 1] == m.second) {
        merged.push_back(syms[i] + syms[i + 1]);
        i += 2;
      } else {
        merged.push_back(std::move(syms[i]));
        ++i;
      }
    }
    syms = std::move(merged);
    next_rank = best + 1;
  }
  if (!syms.empty()) syms.back().resize(syms.back().size() - kEndOfWord.size());
  for (std::size_t i = 0; i + 1 < syms.size(); ++i) syms[i] += kContinuation;
  return syms;
}

std::string BpeModel::serialize() const {
  std::string out(kModelHeader);
  out += '\n';
  for (const auto& [l, r] : merges_) {
    out += l;
    out += ' ';
    out += r;
    out += '\n';
  }
  return out;
}

BpeModel BpeModel::parse(std::string_view text) {
  auto lines = split_lines(text);
  if (lines.empty() || lines[0] != kModelHeader) {
    throw Error(ErrorKind::format_version, "not a dmt BPE model (missing header)");
  }
  std::vector<Merge> merges;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto parts = split_whitespace(lines[i]);
    if (parts.empty()) continue;
    if (parts.size() != 2) {
      throw Error(ErrorKind::invalid_argument, "malformed merge on line " + std::to_string(i + 1));
    }
    merges.emplace_back(parts[0], parts[1]);
  }
  return BpeModel(std::move(merges));
}

void BpeModel::save(const std::string& path) const { write_file(path, serialize()); }
BpeModel BpeModel::load(const std::string& path) { return parse(read_file(path)); }

BpeModel learn_bpe_from_counts(const std::map<std::string, std::int64_t>& word_counts,
                               std::size_t num_merges) {
  MergeLearner learner(word_counts);
  return BpeModel(learner.run(num_merges));
}

BpeModel learn_bpe(const std::vector<TokenizedSentence>& corpus, std::size_t num_merges) {
  std::map<std::string, std::int64_t> counts;
  for (const auto& sentence : corpus) {
    for (const auto& tok : sentence) ++counts[tok];
  }
  return learn_bpe_from_counts(counts, num_merges);
}

Subwords apply_bpe(const BpeModel& model, const TokenizedSentence& sentence) {
  Subwords out;
  for (const auto& tok : sentence) {
    auto pieces = model.segment(tok);
    out.insert(out.end(), std::make_move_iterator(pieces.begin()),
               std::make_move_iterator(pieces.end()));
  }
  return out;
}

TokenizedSentence undo_bpe(const Subwords& subwords, std::size_t* dangling) {
  TokenizedSentence out;
  std::string current;
  bool open = false;
  for (const auto& sw : subwords) {
    if (ends_with(sw, kContinuation)) {
      current.append(sw, 0, sw.size() - kContinuation.size());
      open = true;
    } else {
      current += sw;
      out.push_back(std::move(current));
      current.clear();
      open = false;
    }
  }
  if (open) {
    out.push_back(std::move(current));
    if (dangling) ++*dangling;
  }
  return out;
}

Vocabulary::Vocabulary() {
  for (std::string_view s : {"<pad>", "<unk>", "<s>", "</s>"}) add(std::string(s), 0);
}

std::int32_t Vocabulary::id_of(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw Error(ErrorKind::out_of_range, "token id " + std::to_string(id) + " outside vocabulary of " +
                                             std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::int32_t Vocabulary::add(const std::string& token, std::int64_t count) {
  const auto id = static_cast<std::int32_t>(tokens_.size());
  auto [it, inserted] = ids_.try_emplace(token, id);
  if (!inserted) throw Error(ErrorKind::invalid_argument, "duplicate vocabulary entry: " + token);
  tokens_.push_back(token);
  counts_.push_back(count);
  return id;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (std::size_t i = kNumSpecials; i < tokens_.size(); ++i) {
    out += tokens_[i];
    out += '\t';
    out += std::to_string(counts_[i]);
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::parse(std::string_view text) {
  Vocabulary v;
  std::size_t lineno = 0;
  for (const auto& line : split_lines(text)) {
    ++lineno;
    if (line.empty()) continue;
    auto tab = line.rfind('\t');
    if (tab == std::string::npos || tab == 0) {
      throw Error(ErrorKind::invalid_argument, "malformed vocabulary line " + std::to_string(lineno));
    }
    std::int64_t count = 0;
    auto [p, ec] = std::from_chars(line.data() + tab + 1, line.data() + line.size(), count);
    if (ec != std::errc{} || p != line.data() + line.size()) {
      throw Error(ErrorKind::invalid_argument, "bad count on vocabulary line " + std::to_string(lineno));
    }
    v.add(line.substr(0, tab), count);
  }
  return v;
}

void Vocabulary::save(const std::string& path) const { write_file(path, serialize()); }
Vocabulary Vocabulary::load(const std::string& path) { return parse(read_file(path)); }

std::string Vocabulary::fingerprint() const { return hex64(fnv1a64(serialize())); }

Vocabulary build_vocab(const std::vector<Subwords>& corpus, std::int64_t min_count,
                       std::size_t max_size) {
  std::map<std::string, std::int64_t> counts;
  for (const auto& sentence : corpus) {
    for (const auto& sw : sentence) ++counts[sw];
  }
  std::vector<std::pair<std::string, std::int64_t>> ranked;
  for (auto& [tok, c] : counts) {
    if (c >= min_count) ranked.emplace_back(tok, c);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > max_size) ranked.resize(max_size);
  Vocabulary v;
  for (const auto& [tok, c] : ranked) {
    if (!v.contains(tok)) v.add(tok, c);
  }
  return v;
}

std::vector<std::int32_t> encode(const Vocabulary& vocab, const Subwords& subwords) {
  std::vector<std::int32_t> ids;
  ids.reserve(subwords.size() + 1);
  for (const auto& sw : subwords) ids.push_back(vocab.id_of(sw));
  ids.push_back(kEos);
  return ids;
}

Subwords decode(const Vocabulary& vocab, const std::vector<std::int32_t>& ids) {
  Subwords out;
  for (std::int32_t id : ids) {
    const std::string& tok = vocab.token_of(id);
    if (id == kPad || id == kBos || id == kEos) continue;
    out.push_back(id == kUnk ? std::string(kUnkText) : tok);
  }
  return out;
}

std::string format_ids(const std::vector<std::int32_t>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(ids[i]);
  }
  return out;
}

std::vector<std::int32_t> parse_ids(std::string_view line) {
  std::vector<std::int32_t> ids;
  for (const auto& part : split_whitespace(line)) {
    std::int32_t v = 0;
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc{} || p != part.data() + part.size()) {
      throw Error(ErrorKind::invalid_argument, "bad id: " + part);
    }
    ids.push_back(v);
  }
  return ids;
}

}  // namespace dmt::bpe
