#include "dmt/bleu.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>

#include "dmt/common.hpp"
#include "dmt/subword.hpp"

namespace dmt::bleu {

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(const Tokens& tokens, int n) {
  std::map<Ngram, std::size_t> counts;
  const auto un = static_cast<std::size_t>(n);
  if (tokens.size() < un) return counts;
  for (std::size_t i = 0; i + un <= tokens.size(); ++i) {
    ++counts[Ngram(tokens.begin() + static_cast<long>(i), tokens.begin() + static_cast<long>(i + un))];
  }
  return counts;
}

std::size_t closest_reference_length(std::size_t c, const std::vector<Tokens>& refs) {
  std::size_t best = refs.front().size();
  auto dist = [c](std::size_t r) { return r > c ? r - c : c - r; };
  for (const auto& r : refs) {
    const std::size_t len = r.size();
    if (dist(len) < dist(best) || (dist(len) == dist(best) && len < best)) best = len;
  }
  return best;
}

}  // namespace

void BleuConfig::validate() const {
  if (max_n < 1) throw Error(ErrorKind::invalid_config, "BLEU max_n must be >= 1");
  if (weights.size() != static_cast<std::size_t>(max_n)) {
    throw Error(ErrorKind::invalid_config, "BLEU needs one weight per n-gram order");
  }
  double sum = 0.0;
  for (double w : weights) sum += w;
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorKind::invalid_config, "BLEU weights must sum to 1");
}

NgramTally modified_precision(const Tokens& candidate, const std::vector<Tokens>& references,
                              int n) {
  if (n < 1) throw Error(ErrorKind::invalid_argument, "n-gram order must be >= 1");
  NgramTally tally;
  const auto un = static_cast<std::size_t>(n);
  tally.total = candidate.size() >= un ? candidate.size() - un + 1 : 0;
  if (tally.total == 0) return tally;
  std::map<Ngram, std::size_t> max_ref;
  for (const auto& ref : references) {
    for (const auto& [g, c] : ngram_counts(ref, n)) {
      auto& slot = max_ref[g];
      slot = std::max(slot, c);
    }
  }
  for (const auto& [g, c] : ngram_counts(candidate, n)) {
    auto it = max_ref.find(g);
    if (it != max_ref.end()) tally.matches += std::min(c, it->second);
  }
  return tally;
}

SentenceScore sentence_bleu_detail(const Tokens& candidate, const std::vector<Tokens>& references,
                                   const BleuConfig& config) {
  config.validate();
  if (references.empty()) throw Error(ErrorKind::empty_input, "sentence BLEU needs at least one reference");
  SentenceScore out;
  out.candidate_length = candidate.size();
  out.reference_length = closest_reference_length(candidate.size(), references);
  for (int n = 1; n <= config.max_n; ++n) out.tallies.push_back(modified_precision(candidate, references, n));
  if (candidate.empty()) return out;

  double log_sum = 0.0;
  for (int n = 1; n <= config.max_n; ++n) {
    const NgramTally& t = out.tallies[static_cast<std::size_t>(n - 1)];
    double num = static_cast<double>(t.matches);
    double den = static_cast<double>(t.total);
    if (t.matches == 0) {
      if (config.smoothing == Smoothing::none) return out;
      num = config.epsilon;
      if (den == 0.0) den = 1.0;
    }
    log_sum += config.weights[static_cast<std::size_t>(n - 1)] * std::log(num / den);
  }
  const double c = static_cast<double>(out.candidate_length);
  const double r = static_cast<double>(out.reference_length);
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  out.score = bp * std::exp(log_sum);
  return out;
}

double sentence_bleu(const Tokens& candidate, const std::vector<Tokens>& references,
                     const BleuConfig& config) {
  return sentence_bleu_detail(candidate, references, config).score;
}

BleuReport corpus_average(const std::vector<double>& scores) {
  if (scores.empty()) throw Error(ErrorKind::empty_input, "cannot average an empty score list");
  BleuReport report;
  report.per_sentence = scores;
  double sum = 0.0;
  for (double s : scores) sum += s;
  report.mean = sum / static_cast<double>(scores.size());
  return report;
}

std::string prepare_surface(const std::string& line, const ScoringFlags& flags) {
  std::string s = line;
  if (flags.undo_bpe) s = join(bpe::undo_bpe(split_whitespace(s)), " ");
  if (flags.detok) s = text::detokenize(split_whitespace(s));
  if (flags.detranslit) s = text::detransliterate(s, *flags.detranslit);
  return s;
}

BleuReport score_lines(const std::vector<std::string>& candidates,
                       const std::vector<std::string>& references, const ScoringFlags& flags,
                       const BleuConfig& config) {
  if (candidates.size() != references.size()) {
    throw Error(ErrorKind::line_count_mismatch,
                "candidate has " + std::to_string(candidates.size()) + " lines, reference has " +
                    std::to_string(references.size()));
  }
  std::vector<double> scores;
  std::vector<std::vector<NgramTally>> counts;
  scores.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto detail = sentence_bleu_detail(split_whitespace(prepare_surface(candidates[i], flags)),
                                       {split_whitespace(references[i])}, config);
    scores.push_back(detail.score);
    counts.push_back(std::move(detail.tallies));
  }
  BleuReport report = corpus_average(scores);
  report.counts = std::move(counts);
  return report;
}

BleuReport score_files(const std::string& candidate_path, const std::string& reference_path,
                       const ScoringFlags& flags, const std::string& report_path,
                       const BleuConfig& config) {
  BleuReport report =
      score_lines(read_lines(candidate_path), read_lines(reference_path), flags, config);
  if (!report_path.empty()) write_file(report_path, format_report(report));
  return report;
}

std::string format_report(const BleuReport& report) {
  std::string out;
  for (std::size_t i = 0; i < report.per_sentence.size(); ++i) {
    out += std::to_string(i + 1);
    out += '\t';
    out += format_fixed(report.per_sentence[i], 6);
    out += '\n';
  }
  out += summary_line(report);
  out += '\n';
  return out;
}

std::string summary_line(const BleuReport& report) {
  return "mean_sentence_bleu\t" + format_fixed(report.mean, 4);
}

}  // namespace dmt::bleu
