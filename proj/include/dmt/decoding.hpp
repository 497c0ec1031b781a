#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dmt/corpus.hpp"
#include "dmt/models.hpp"
#include "dmt/subword.hpp"

namespace dmt::decode {

using Ids = std::vector<std::int32_t>;

struct DecodeConfig {
  std::size_t beam = 5;
  std::size_t max_len = 0;  // 0: 2 * source length + 10
  double alpha = 1.0;       // normalized score = logprob / length^alpha

  void validate() const;
  std::size_t max_len_for(std::size_t src_len) const;
  std::string describe() const;  // stable text form, hashed into provenance
};

struct Hypothesis {
  Ids ids;                 // generated tokens; ends with EOS when finished
  double logprob = 0.0;
  double normalized_score = 0.0;
  bool finished = false;   // false when cut off at max_len
};

struct BeamResult {
  Hypothesis best;
  std::vector<Hypothesis> nbest;  // normalized_score descending
};

/// Next-token log-probabilities for a set of equal-length prefixes (each
/// starting with BOS). Lets search run against toy tables as well as models.
class Scorer {
public:
  virtual ~Scorer() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual std::vector<std::vector<double>> next_log_probs(const std::vector<Ids>& prefixes) = 0;
};

/// Scores continuations of one source sentence with a frozen model.
class ModelScorer final : public Scorer {
public:
  ModelScorer(const nn::SeqModel& model, const Ids& src);
  std::size_t vocab_size() const override { return model_.tgt_vocab_size(); }
  std::vector<std::vector<double>> next_log_probs(const std::vector<Ids>& prefixes) override;

private:
  const nn::SeqModel& model_;
  nn::Memory memory_;
  std::size_t expanded_rows_ = 0;
  nn::Memory expanded_;
};

/// Argmax at every step (ties to the lowest id), PAD and BOS excluded; stops
/// after EOS or `max_len` tokens.
Hypothesis greedy_search(Scorer& scorer, std::size_t max_len, double alpha = 1.0);

/// Beam search. Candidates are ranked by (logprob desc, parent asc, token
/// asc); EOS candidates within the top `beam` are finished, the best `beam`
/// other candidates stay live. Stops once `beam` hypotheses are finished, when
/// no live hypothesis can still beat the best finished normalized score, or
/// at `max_len`, where live hypotheses are kept unfinished.
BeamResult beam_search(Scorer& scorer, std::size_t beam, std::size_t max_len, double alpha);

Hypothesis greedy_decode(const nn::SeqModel& model, const Ids& src, const DecodeConfig& config);
BeamResult beam_decode(const nn::SeqModel& model, const Ids& src, const DecodeConfig& config);

/// Greedy decoding of many sources at once; finished rows drop out of the batch.
std::vector<Ids> greedy_decode_batch(const nn::SeqModel& model, const std::vector<Ids>& srcs,
                                     const DecodeConfig& config, std::size_t batch_rows = 64);

/// Artifacts that surround a model: subword model, both vocabularies and the
/// language pair (which fixes the scripts).
struct PipelineContext {
  bpe::BpeModel bpe;
  bpe::Vocabulary src_vocab;
  bpe::Vocabulary tgt_vocab;
  corpus::LanguageTag src_lang;
  corpus::LanguageTag tgt_lang;
  bool transliterate = true;
  std::vector<std::string>* trace = nullptr;  // stage names, appended in order
};

/// normalize -> tokenize -> transliterate into Devanagari.
std::vector<std::string> preprocess(std::string_view text, const corpus::LanguageTag& lang,
                                    bool transliterate, std::vector<std::string>* trace = nullptr);

/// Inverse surface steps for model output tokens: undo BPE -> detokenize ->
/// transliterate back into `lang`'s script.
std::string postprocess(const bpe::Subwords& subwords, const corpus::LanguageTag& lang,
                        bool transliterate, std::vector<std::string>* trace = nullptr);

/// Throws fingerprint_mismatch unless the checkpoint metadata names the
/// context's vocabularies.
void verify_fingerprints(const std::map<std::string, std::string>& checkpoint_meta,
                         const PipelineContext& ctx);

/// Full text-to-text pipeline for one sentence.
std::string translate(const nn::SeqModel& model, std::string_view text, const PipelineContext& ctx,
                      const DecodeConfig& config);

/// Sentence-wise translate; uses batched greedy decoding when beam == 1.
std::vector<std::string> translate_lines(const nn::SeqModel& model,
                                         const std::vector<std::string>& lines,
                                         const PipelineContext& ctx, const DecodeConfig& config);

}  // namespace dmt::decode
