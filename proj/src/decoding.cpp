#include "dmt/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dmt/ops.hpp"
#include "dmt/textnorm.hpp"

namespace dmt::decode {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool searchable(std::size_t token) { return token != bpe::kPad && token != bpe::kBos; }

double normalized(double logprob, std::size_t length, double alpha) {
  if (length == 0) return logprob;
  return logprob / std::pow(static_cast<double>(length), alpha);
}

Ids with_bos(const Ids& ids) {
  Ids p;
  p.reserve(ids.size() + 1);
  p.push_back(bpe::kBos);
  p.insert(p.end(), ids.begin(), ids.end());
  return p;
}

// Log-softmax of the last position of each row of logits [B, T, V].
std::vector<std::vector<double>> last_log_probs(const ad::Tensor& logits) {
  const std::size_t B = logits.dim(0), T = logits.dim(1), V = logits.dim(2);
  const auto lv = logits.values();
  std::vector<std::vector<double>> out(B, std::vector<double>(V));
  for (std::size_t b = 0; b < B; ++b) {
    const double* z = lv.data() + (b * T + T - 1) * V;
    const double mx = *std::max_element(z, z + V);
    double s = 0.0;
    for (std::size_t v = 0; v < V; ++v) s += std::exp(z[v] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t v = 0; v < V; ++v) out[b][v] = z[v] - lse;
  }
  return out;
}

std::size_t argmax_token(const std::vector<double>& lp) {
  std::size_t best = lp.size();
  for (std::size_t v = 0; v < lp.size(); ++v) {
    if (!searchable(v)) continue;
    if (best == lp.size() || lp[v] > lp[best]) best = v;
  }
  return best;
}

bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.normalized_score != b.normalized_score) return a.normalized_score > b.normalized_score;
  if (a.logprob != b.logprob) return a.logprob > b.logprob;
  return a.ids < b.ids;
}

}  // namespace

void DecodeConfig::validate() const {
  if (beam < 1) throw Error(ErrorKind::invalid_config, "beam must be >= 1");
  if (!(alpha >= 0.0)) throw Error(ErrorKind::invalid_config, "length penalty alpha must be >= 0");
}

std::size_t DecodeConfig::max_len_for(std::size_t src_len) const {
  return max_len > 0 ? max_len : 2 * src_len + 10;
}

std::string DecodeConfig::describe() const {
  return "beam=" + std::to_string(beam) + " max_len=" + std::to_string(max_len) +
         " alpha=" + format_double(alpha);
}

ModelScorer::ModelScorer(const nn::SeqModel& model, const Ids& src) : model_(model) {
  ad::NoGradGuard no_grad;
  memory_ = model_.encode(nn::IdBatch::from_rows({src}), {});
}

std::vector<std::vector<double>> ModelScorer::next_log_probs(const std::vector<Ids>& prefixes) {
  ad::NoGradGuard no_grad;
  if (prefixes.size() != expanded_rows_) {
    const std::vector<std::size_t> rows(prefixes.size(), 0);
    expanded_ = memory_.select(rows);
    expanded_rows_ = prefixes.size();
  }
  const ad::Tensor logits = model_.decode_step(expanded_, nn::IdBatch::from_rows(prefixes), {});
  return last_log_probs(logits);
}

Hypothesis greedy_search(Scorer& scorer, std::size_t max_len, double alpha) {
  Hypothesis h;
  Ids prefix{bpe::kBos};
  for (std::size_t step = 0; step < max_len; ++step) {
    const std::vector<double> lp = scorer.next_log_probs({prefix})[0];
    const std::size_t tok = argmax_token(lp);
    if (tok == lp.size() || lp[tok] == kNegInf) break;
    h.ids.push_back(static_cast<std::int32_t>(tok));
    h.logprob += lp[tok];
    prefix.push_back(static_cast<std::int32_t>(tok));
    if (tok == static_cast<std::size_t>(bpe::kEos)) {
      h.finished = true;
      break;
    }
  }
  h.normalized_score = normalized(h.logprob, h.ids.size(), alpha);
  return h;
}

BeamResult beam_search(Scorer& scorer, std::size_t beam, std::size_t max_len, double alpha) {
  if (beam < 1) throw Error(ErrorKind::invalid_config, "beam must be >= 1");
  struct Live {
    Ids ids;
    double logprob;
  };
  struct Candidate {
    double total;
    std::size_t parent;
    double own;
    std::size_t token;
  };
  std::vector<Live> live{{{}, 0.0}};
  std::vector<Hypothesis> done;
  const double bound_div = std::pow(static_cast<double>(std::max<std::size_t>(max_len, 1)), alpha);

  std::size_t step = 0;
  for (; step < max_len && !live.empty(); ++step) {
    std::vector<Ids> prefixes;
    prefixes.reserve(live.size());
    for (const auto& l : live) prefixes.push_back(with_bos(l.ids));
    const auto lps = scorer.next_log_probs(prefixes);

    std::vector<Candidate> cands;
    for (std::size_t p = 0; p < live.size(); ++p) {
      for (std::size_t v = 0; v < lps[p].size(); ++v) {
        if (!searchable(v) || lps[p][v] == kNegInf) continue;
        cands.push_back({live[p].logprob + lps[p][v], p, lps[p][v], v});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.total != b.total) return a.total > b.total;
      if (a.parent != b.parent) return a.parent < b.parent;
      if (a.own != b.own) return a.own > b.own;
      return a.token < b.token;
    });

    std::vector<Live> next;
    for (std::size_t rank = 0; rank < cands.size() && next.size() < beam; ++rank) {
      const Candidate& c = cands[rank];
      Ids ids = live[c.parent].ids;
      ids.push_back(static_cast<std::int32_t>(c.token));
      if (c.token == static_cast<std::size_t>(bpe::kEos)) {
        if (rank < beam && done.size() < beam) {
          Hypothesis h{std::move(ids), c.total, 0.0, true};
          h.normalized_score = normalized(h.logprob, h.ids.size(), alpha);
          done.push_back(std::move(h));
        }
        continue;
      }
      next.push_back({std::move(ids), c.total});
    }
    live = std::move(next);
    if (done.size() >= beam) {
      live.clear();
      break;
    }
    if (!done.empty() && !live.empty()) {
      double best_done = kNegInf;
      for (const auto& h : done) best_done = std::max(best_done, h.normalized_score);
      double best_live = kNegInf;
      for (const auto& l : live) best_live = std::max(best_live, l.logprob);
      // Extensions only lower the log-probability, and length^alpha is at most max_len^alpha.
      if (best_done >= best_live / bound_div) {
        live.clear();
        break;
      }
    }
  }
  for (auto& l : live) {
    Hypothesis h{std::move(l.ids), l.logprob, 0.0, false};
    h.normalized_score = normalized(h.logprob, h.ids.size(), alpha);
    done.push_back(std::move(h));
  }

  BeamResult result;
  std::sort(done.begin(), done.end(), better);
  result.nbest = std::move(done);
  if (!result.nbest.empty()) result.best = result.nbest.front();
  return result;
}

Hypothesis greedy_decode(const nn::SeqModel& model, const Ids& src, const DecodeConfig& config) {
  config.validate();
  ModelScorer scorer(model, src);
  return greedy_search(scorer, config.max_len_for(src.size()), config.alpha);
}

BeamResult beam_decode(const nn::SeqModel& model, const Ids& src, const DecodeConfig& config) {
  config.validate();
  ModelScorer scorer(model, src);
  return beam_search(scorer, config.beam, config.max_len_for(src.size()), config.alpha);
}

std::vector<Ids> greedy_decode_batch(const nn::SeqModel& model, const std::vector<Ids>& srcs,
                                     const DecodeConfig& config, std::size_t batch_rows) {
  config.validate();
  ad::NoGradGuard no_grad;
  std::vector<Ids> out(srcs.size());
  batch_rows = std::max<std::size_t>(batch_rows, 1);
  for (std::size_t start = 0; start < srcs.size(); start += batch_rows) {
    const std::size_t end = std::min(srcs.size(), start + batch_rows);
    const std::vector<Ids> chunk(srcs.begin() + static_cast<long>(start),
                                 srcs.begin() + static_cast<long>(end));
    const nn::Memory memory = model.encode(nn::IdBatch::from_rows(chunk), {});
    std::vector<std::size_t> active(chunk.size());
    for (std::size_t i = 0; i < active.size(); ++i) active[i] = i;
    std::vector<Ids> prefix(chunk.size(), Ids{bpe::kBos});
    nn::Memory mem = memory;
    bool reselect = false;
    while (!active.empty()) {
      if (reselect) {
        mem = memory.select(active);
        reselect = false;
      }
      std::vector<Ids> rows;
      for (std::size_t r : active) rows.push_back(prefix[r]);
      const auto lps = last_log_probs(model.decode_step(mem, nn::IdBatch::from_rows(rows), {}));
      std::vector<std::size_t> still;
      for (std::size_t i = 0; i < active.size(); ++i) {
        const std::size_t r = active[i];
        const std::size_t tok = argmax_token(lps[i]);
        prefix[r].push_back(static_cast<std::int32_t>(tok));
        const bool stop = tok == static_cast<std::size_t>(bpe::kEos) ||
                          prefix[r].size() - 1 >= config.max_len_for(chunk[r].size());
        if (!stop) still.push_back(r);
      }
      reselect = still.size() != active.size();
      active = std::move(still);
    }
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      out[start + i].assign(prefix[i].begin() + 1, prefix[i].end());
    }
  }
  return out;
}

std::vector<std::string> preprocess(std::string_view text, const corpus::LanguageTag& lang,
                                    bool transliterate, std::vector<std::string>* trace) {
  const std::string norm = text::normalize(text, lang);
  if (trace) trace->push_back("normalize");
  std::vector<std::string> tokens = text::tokenize(norm);
  if (trace) trace->push_back("tokenize");
  if (transliterate) {
    const text::Script script = text::script_of(lang);
    if (script != text::Script::devanagari) {
      for (auto& t : tokens) t = text::transliterate(t, script, text::Script::devanagari);
    }
    if (trace) trace->push_back("transliterate");
  }
  return tokens;
}

std::string postprocess(const bpe::Subwords& subwords, const corpus::LanguageTag& lang,
                        bool transliterate, std::vector<std::string>* trace) {
  const auto tokens = bpe::undo_bpe(subwords);
  if (trace) trace->push_back("undo_bpe");
  std::string surface = text::detokenize(tokens);
  if (trace) trace->push_back("detokenize");
  if (transliterate) {
    const text::Script script = text::script_of(lang);
    if (script != text::Script::devanagari) surface = text::detransliterate(surface, script);
    if (trace) trace->push_back("detransliterate");
  }
  return surface;
}

void verify_fingerprints(const std::map<std::string, std::string>& meta, const PipelineContext& ctx) {
  auto check = [&](const char* key, const bpe::Vocabulary& vocab, const char* side) {
    auto it = meta.find(key);
    if (it == meta.end()) {
      throw Error(ErrorKind::fingerprint_mismatch, std::string("checkpoint records no ") + side +
                                                       " vocabulary fingerprint");
    }
    if (it->second != vocab.fingerprint()) {
      throw Error(ErrorKind::fingerprint_mismatch,
                  std::string(side) + " vocabulary " + vocab.fingerprint() +
                      " does not match the checkpoint's " + it->second);
    }
  };
  check("vocab.src.fingerprint", ctx.src_vocab, "source");
  check("vocab.tgt.fingerprint", ctx.tgt_vocab, "target");
}

namespace {

void check_sizes(const nn::SeqModel& model, const PipelineContext& ctx) {
  if (model.src_vocab_size() != ctx.src_vocab.size() ||
      model.tgt_vocab_size() != ctx.tgt_vocab.size()) {
    throw Error(ErrorKind::fingerprint_mismatch, "vocabulary sizes do not match the model");
  }
}

Ids source_ids(std::string_view text, const PipelineContext& ctx) {
  const auto tokens = preprocess(text, ctx.src_lang, ctx.transliterate, ctx.trace);
  const auto subwords = bpe::apply_bpe(ctx.bpe, tokens);
  if (ctx.trace) ctx.trace->push_back("apply_bpe");
  Ids ids = bpe::encode(ctx.src_vocab, subwords);
  if (ctx.trace) ctx.trace->push_back("encode");
  return ids;
}

std::string target_text(const Ids& ids, const PipelineContext& ctx) {
  const auto subwords = bpe::decode(ctx.tgt_vocab, ids);
  if (ctx.trace) ctx.trace->push_back("decode_ids");
  return postprocess(subwords, ctx.tgt_lang, ctx.transliterate, ctx.trace);
}

}  // namespace

std::string translate(const nn::SeqModel& model, std::string_view text, const PipelineContext& ctx,
                      const DecodeConfig& config) {
  check_sizes(model, ctx);
  if (trim(text).empty()) return "";
  const Ids src = source_ids(text, ctx);
  const BeamResult r = beam_decode(model, src, config);
  if (ctx.trace) ctx.trace->push_back("beam_decode");
  return target_text(r.best.ids, ctx);
}

std::vector<std::string> translate_lines(const nn::SeqModel& model,
                                         const std::vector<std::string>& lines,
                                         const PipelineContext& ctx, const DecodeConfig& config) {
  check_sizes(model, ctx);
  config.validate();
  std::vector<std::string> out(lines.size());
  if (config.beam > 1) {
    for (std::size_t i = 0; i < lines.size(); ++i) out[i] = translate(model, lines[i], ctx, config);
    return out;
  }
  std::vector<Ids> srcs;
  std::vector<std::size_t> where;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    srcs.push_back(source_ids(lines[i], ctx));
    where.push_back(i);
  }
  const auto hyps = greedy_decode_batch(model, srcs, config);
  for (std::size_t k = 0; k < hyps.size(); ++k) out[where[k]] = target_text(hyps[k], ctx);
  return out;
}

}  // namespace dmt::decode
