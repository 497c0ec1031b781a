#include "dmt/backtranslation.hpp"

#include <filesystem>

#include "dmt/common.hpp"

namespace dmt::bt {

namespace fs = std::filesystem;

PseudoParallelCorpus generate_pseudo_parallel(const nn::SeqModel& model,
                                              const std::string& checkpoint_fingerprint,
                                              const corpus::MonolingualCorpus& mono,
                                              const decode::PipelineContext& ctx,
                                              const decode::DecodeConfig& config,
                                              const GenerateOptions& options) {
  if (!(ctx.src_lang == mono.lang)) {
    throw Error(ErrorKind::invalid_argument, "model reads " + ctx.src_lang.code() +
                                                 " but the monolingual corpus is " + mono.lang.code());
  }
  if (options.length_ratio &&
      !(options.length_ratio->first > 0.0 && options.length_ratio->first <= options.length_ratio->second)) {
    throw Error(ErrorKind::invalid_config, "length-ratio bounds must satisfy 0 < lo <= hi");
  }
  PseudoParallelCorpus out;
  const bool synth_src = options.direction == Direction::synthetic_source;
  out.corpus.src_lang = synth_src ? ctx.tgt_lang : mono.lang;
  out.corpus.tgt_lang = synth_src ? mono.lang : ctx.tgt_lang;
  if (mono.sentences.empty()) return out;

  const std::string decode_hash = hex64(fnv1a64(config.describe()));
  const auto translations = decode::translate_lines(model, mono.sentences, ctx, config);
  for (std::size_t i = 0; i < mono.sentences.size(); ++i) {
    if (trim(translations[i]).empty()) {
      ++out.dropped_empty;
      continue;
    }
    corpus::SentencePair pair{synth_src ? translations[i] : mono.sentences[i],
                              synth_src ? mono.sentences[i] : translations[i], true};
    if (options.length_ratio) {
      const double ls = static_cast<double>(split_whitespace(pair.source).size());
      const double lt = static_cast<double>(split_whitespace(pair.target).size());
      const double ratio = lt > 0 ? ls / lt : 0.0;
      if (ratio < options.length_ratio->first || ratio > options.length_ratio->second) {
        ++out.filtered;
        continue;
      }
    }
    out.corpus.pairs.push_back(std::move(pair));
    out.provenance.push_back({i + 1, checkpoint_fingerprint, decode_hash});
  }
  return out;
}

void write_pseudo(const PseudoParallelCorpus& pseudo, const std::string& src_path,
                  const std::string& tgt_path, const std::string& provenance_path) {
  corpus::write_parallel(pseudo.corpus, src_path, tgt_path);
  std::vector<std::string> rows;
  for (const auto& p : pseudo.provenance) {
    rows.push_back(std::to_string(p.mono_line) + "\t" + p.checkpoint + "\t" + p.decode_config);
  }
  write_lines(provenance_path, rows);
}

corpus::ParallelCorpus mix(const corpus::ParallelCorpus& real, const corpus::ParallelCorpus& pseudo,
                           std::size_t upsample_real, std::uint64_t seed) {
  if (!pseudo.empty() && (!(real.src_lang == pseudo.src_lang) || !(real.tgt_lang == pseudo.tgt_lang))) {
    throw Error(ErrorKind::invalid_argument,
                "language tags differ: " + real.src_lang.code() + "-" + real.tgt_lang.code() + " vs " +
                    pseudo.src_lang.code() + "-" + pseudo.tgt_lang.code());
  }
  corpus::ParallelCorpus out;
  out.src_lang = real.src_lang;
  out.tgt_lang = real.tgt_lang;
  out.pairs.reserve(upsample_real * real.size() + pseudo.size());
  for (std::size_t k = 0; k < upsample_real; ++k) {
    out.pairs.insert(out.pairs.end(), real.pairs.begin(), real.pairs.end());
  }
  out.pairs.insert(out.pairs.end(), pseudo.pairs.begin(), pseudo.pairs.end());
  Rng rng(derive_seed(seed, "mix"));
  rng.shuffle(out.pairs);
  return out;
}

namespace {

struct Prepared {
  std::vector<bpe::TokenizedSentence> src, tgt;
};

Prepared prepare(const corpus::ParallelCorpus& c, bool translit) {
  Prepared p;
  for (const auto& pair : c.pairs) {
    p.src.push_back(decode::preprocess(pair.source, c.src_lang, translit));
    p.tgt.push_back(decode::preprocess(pair.target, c.tgt_lang, translit));
  }
  return p;
}

std::vector<bpe::Subwords> segment_all(const bpe::BpeModel& model,
                                       const std::vector<bpe::TokenizedSentence>& sents) {
  std::vector<bpe::Subwords> out;
  out.reserve(sents.size());
  for (const auto& s : sents) out.push_back(bpe::apply_bpe(model, s));
  return out;
}

std::vector<train::EncodedPair> encode_pairs(const std::vector<bpe::Subwords>& src,
                                             const std::vector<bpe::Subwords>& tgt,
                                             const bpe::Vocabulary& vs, const bpe::Vocabulary& vt) {
  std::vector<train::EncodedPair> out;
  for (std::size_t i = 0; i < src.size(); ++i) {
    out.push_back({bpe::encode(vs, src[i]), bpe::encode(vt, tgt[i])});
  }
  return out;
}

std::vector<train::EncodedPair> swapped(const std::vector<train::EncodedPair>& pairs) {
  std::vector<train::EncodedPair> out;
  for (const auto& p : pairs) out.push_back({p.tgt, p.src});
  return out;
}

double best_bleu(const train::TrainReport& r) {
  return r.best_epoch == 0 ? 0.0 : r.epochs[r.best_epoch - 1].dev_bleu;
}

std::string sub_dir(const std::string& root, const char* name) {
  return root.empty() ? std::string() : (fs::path(root) / name).string();
}

}  // namespace

BtReport bt_experiment(const BtExperimentConfig& config, const corpus::ParallelCorpus& real,
                       const corpus::ParallelCorpus& dev, const corpus::MonolingualCorpus& mono) {
  if (real.empty()) throw Error(ErrorKind::empty_input, "back-translation needs real pairs");
  if (!(mono.lang == real.tgt_lang) && mono.size() > 0) {
    throw Error(ErrorKind::invalid_argument, "monolingual data must be in the target language");
  }
  const bool translit = config.transliterate;
  const Prepared real_tok = prepare(real, translit);
  const Prepared dev_tok = prepare(dev, translit);
  std::vector<bpe::TokenizedSentence> mono_tok;
  for (const auto& s : mono.sentences) mono_tok.push_back(decode::preprocess(s, mono.lang, translit));

  std::vector<bpe::TokenizedSentence> bpe_input = real_tok.src;
  bpe_input.insert(bpe_input.end(), real_tok.tgt.begin(), real_tok.tgt.end());
  bpe_input.insert(bpe_input.end(), mono_tok.begin(), mono_tok.end());
  const bpe::BpeModel bpe_model = bpe::learn_bpe(bpe_input, config.bpe_merges);

  const auto real_src = segment_all(bpe_model, real_tok.src);
  const auto real_tgt = segment_all(bpe_model, real_tok.tgt);
  const auto mono_sub = segment_all(bpe_model, mono_tok);
  std::vector<bpe::Subwords> tgt_side = real_tgt;
  tgt_side.insert(tgt_side.end(), mono_sub.begin(), mono_sub.end());
  const bpe::Vocabulary src_vocab = bpe::build_vocab(real_src);
  const bpe::Vocabulary tgt_vocab = bpe::build_vocab(tgt_side);

  const auto real_enc = encode_pairs(real_src, real_tgt, src_vocab, tgt_vocab);
  const auto dev_enc = encode_pairs(segment_all(bpe_model, dev_tok.src), segment_all(bpe_model, dev_tok.tgt),
                                    src_vocab, tgt_vocab);

  BtReport report;
  const std::string root = config.run_dir;
  if (!root.empty()) fs::create_directories(root);

  // (1) reverse model on the swapped real corpus.
  auto reverse = nn::build_model(config.model, tgt_vocab.size(), src_vocab.size(),
                                 derive_seed(config.seed, "reverse"));
  train::TrainConfig rev_cfg = config.reverse_train;
  rev_cfg.seed = derive_seed(config.seed, "reverse-train");
  train::TrainOutput rev_out;
  rev_out.run_dir = sub_dir(root, "reverse");
  rev_out.meta = train::vocab_meta(tgt_vocab, src_vocab);
  report.reverse = train::train(*reverse, swapped(real_enc), swapped(dev_enc), rev_cfg,
                                train::subword_view(src_vocab), rev_out)
                       .report;

  // (2) pseudo pairs.
  decode::PipelineContext rev_ctx{bpe_model, tgt_vocab, src_vocab, real.tgt_lang, real.src_lang, translit, nullptr};
  const std::string fingerprint =
      hex64(fnv1a64(train::serialize_checkpoint(*reverse, nullptr, rev_out.meta)));
  report.pseudo = generate_pseudo_parallel(*reverse, fingerprint, mono, rev_ctx, config.bt_decode,
                                           config.generate);
  if (!root.empty()) {
    write_pseudo(report.pseudo, sub_dir(root, "pseudo.src"), sub_dir(root, "pseudo.tgt"),
                 sub_dir(root, "pseudo.prov"));
  }

  // (3) forward baseline and augmented runs share initialization and vocabularies.
  train::TrainConfig fwd_cfg = config.forward_train;
  fwd_cfg.seed = derive_seed(config.seed, "forward-train");
  const std::uint64_t fwd_init = derive_seed(config.seed, "forward");
  const auto fwd_meta = train::vocab_meta(src_vocab, tgt_vocab);

  auto baseline = nn::build_model(config.model, src_vocab.size(), tgt_vocab.size(), fwd_init);
  train::TrainOutput base_out{sub_dir(root, "baseline"), fwd_meta, {}};
  report.baseline =
      train::train(*baseline, real_enc, dev_enc, fwd_cfg, train::subword_view(tgt_vocab), base_out).report;

  // With nothing to add the augmented run sees exactly the baseline corpus.
  const bool nothing_added = report.pseudo.corpus.empty() && config.upsample_real == 1;
  const corpus::ParallelCorpus mixed =
      nothing_added ? real
                    : mix(real, report.pseudo.corpus, config.upsample_real, derive_seed(config.seed, "mix"));
  std::vector<train::EncodedPair> mixed_enc = real_enc;
  if (!nothing_added) {
    const Prepared mixed_tok = prepare(mixed, translit);
    mixed_enc = encode_pairs(segment_all(bpe_model, mixed_tok.src), segment_all(bpe_model, mixed_tok.tgt),
                             src_vocab, tgt_vocab);
  }
  auto augmented = nn::build_model(config.model, src_vocab.size(), tgt_vocab.size(), fwd_init);
  train::TrainOutput aug_out{sub_dir(root, "augmented"), fwd_meta, {}};
  report.augmented =
      train::train(*augmented, mixed_enc, dev_enc, fwd_cfg, train::subword_view(tgt_vocab), aug_out).report;

  // (4) paired comparison.
  report.baseline_dev_bleu = best_bleu(report.baseline);
  report.augmented_dev_bleu = best_bleu(report.augmented);
  if (!root.empty()) {
    write_file(sub_dir(root, "summary.tsv"),
               "system\tdev_bleu\tpairs\n"
               "baseline\t" + format_fixed(report.baseline_dev_bleu, 4) + "\t" + std::to_string(real.size()) +
                   "\n"
                   "augmented\t" + format_fixed(report.augmented_dev_bleu, 4) + "\t" +
                   std::to_string(mixed.size()) + "\n");
  }
  return report;
}

}  // namespace dmt::bt
