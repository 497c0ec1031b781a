// dmt: command-line front end for every pipeline stage and the experiment runner.

#include <filesystem>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dmt/backtranslation.hpp"
#include "dmt/bleu.hpp"
#include "dmt/common.hpp"
#include "dmt/corpus.hpp"
#include "dmt/decoding.hpp"
#include "dmt/experiment.hpp"
#include "dmt/subword.hpp"
#include "dmt/textnorm.hpp"
#include "dmt/training.hpp"

namespace fs = std::filesystem;
using namespace dmt;

namespace {

std::vector<std::string> read_input(const std::string& path) {
  if (!path.empty() && path != "-") return read_lines(path);
  std::string all((std::istreambuf_iterator<char>(std::cin)), std::istreambuf_iterator<char>());
  return split_lines(all);
}

void write_output(const std::string& path, const std::vector<std::string>& lines) {
  if (!path.empty() && path != "-") {
    write_lines(path, lines);
    return;
  }
  for (const auto& l : lines) std::cout << l << '\n';
}

std::map<std::string, std::string> parse_overrides(const std::vector<std::string>& sets) {
  std::map<std::string, std::string> kv;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::invalid_argument, "--set expects key=value: " + s);
    kv[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
  }
  return kv;
}

std::vector<train::EncodedPair> read_id_pairs(const std::string& src, const std::string& tgt) {
  const auto s = read_lines(src);
  const auto t = read_lines(tgt);
  if (s.size() != t.size()) throw Error(ErrorKind::line_count_mismatch, src + " and " + tgt + " differ in length");
  std::vector<train::EncodedPair> out;
  for (std::size_t i = 0; i < s.size(); ++i) out.push_back({bpe::parse_ids(s[i]), bpe::parse_ids(t[i])});
  return out;
}

struct Io {
  std::string in, out;
};

void add_io(CLI::App* cmd, Io& io) {
  cmd->add_option("--in", io.in, "Input file (default stdin)");
  cmd->add_option("--out", io.out, "Output file (default stdout)");
}

struct PipelineFlags {
  std::string checkpoint, bpe_model, vocab_src, vocab_tgt, src_lang, tgt_lang;
  bool no_translit = false;
};

void add_pipeline(CLI::App* cmd, PipelineFlags& f, const char* checkpoint_flag) {
  cmd->add_option(checkpoint_flag, f.checkpoint, "Model checkpoint")->required();
  cmd->add_option("--bpe-model", f.bpe_model, "Subword merge file")->required();
  cmd->add_option("--vocab-src", f.vocab_src, "Source vocabulary")->required();
  cmd->add_option("--vocab-tgt", f.vocab_tgt, "Target vocabulary")->required();
  cmd->add_option("--src-lang,--src-script", f.src_lang, "Source language code")->required();
  cmd->add_option("--tgt-lang,--tgt-script", f.tgt_lang, "Target language code")->required();
  cmd->add_flag("--no-translit", f.no_translit, "Skip transliteration into Devanagari");
}

decode::PipelineContext load_context(const PipelineFlags& f) {
  return {bpe::BpeModel::load(f.bpe_model),
          bpe::Vocabulary::load(f.vocab_src),
          bpe::Vocabulary::load(f.vocab_tgt),
          corpus::LanguageTag(f.src_lang),
          corpus::LanguageTag(f.tgt_lang),
          !f.no_translit,
          nullptr};
}

void add_decode(CLI::App* cmd, decode::DecodeConfig& d) {
  cmd->add_option("--beam", d.beam, "Beam width (1 = greedy)")->capture_default_str();
  cmd->add_option("--max-len", d.max_len, "Output length cap (0 = 2*source+10)")->capture_default_str();
  cmd->add_option("--alpha", d.alpha, "Length-normalization exponent")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dravidian machine translation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", exp::kToolVersion);

  // prep
  auto* prep = app.add_subcommand("prep", "Text preparation steps");
  prep->require_subcommand(1);
  Io prep_io;
  std::string prep_lang, translit_script;
  bool keep_joiners = false, translit_reverse = false;
  auto* normalize = prep->add_subcommand("normalize", "NFC, joiner removal, whitespace cleanup");
  add_io(normalize, prep_io);
  normalize->add_option("--lang", prep_lang, "Language code")->required();
  normalize->add_flag("--keep-joiners", keep_joiners, "Keep ZWJ/ZWNJ");
  auto* tokenize = prep->add_subcommand("tokenize", "Split off punctuation");
  add_io(tokenize, prep_io);
  auto* detok = prep->add_subcommand("detok", "Re-attach punctuation");
  add_io(detok, prep_io);
  auto* translit = prep->add_subcommand("translit", "Transliterate to or from Devanagari");
  add_io(translit, prep_io);
  translit->add_option("--script", translit_script, "Native script or language code")->required();
  translit->add_flag("--reverse", translit_reverse, "Devanagari back to the native script");

  // bpe
  auto* bpe_cmd = app.add_subcommand("bpe", "Subword segmentation");
  bpe_cmd->require_subcommand(1);
  Io bpe_io;
  std::size_t merges = 10000;
  std::string codes;
  auto* learn = bpe_cmd->add_subcommand("learn", "Learn merges from tokenized text");
  add_io(learn, bpe_io);
  learn->add_option("--merges", merges, "Number of merges")->capture_default_str();
  auto* apply = bpe_cmd->add_subcommand("apply", "Segment tokenized text");
  add_io(apply, bpe_io);
  apply->add_option("--codes,--bpe-model", codes, "Merge file")->required();
  auto* undo = bpe_cmd->add_subcommand("undo", "Join @@ continuations");
  add_io(undo, bpe_io);

  // vocab
  auto* vocab_cmd = app.add_subcommand("vocab", "Vocabularies");
  vocab_cmd->require_subcommand(1);
  Io vocab_io;
  std::int64_t min_count = 1;
  std::size_t max_size = 0;
  auto* vocab_build = vocab_cmd->add_subcommand("build", "Count subwords into a vocabulary");
  add_io(vocab_build, vocab_io);
  vocab_build->add_option("--min-count", min_count, "Minimum count")->capture_default_str();
  vocab_build->add_option("--max-size", max_size, "Maximum size (0 = unlimited)")->capture_default_str();

  // binarize
  auto* binarize = app.add_subcommand("binarize", "Subword text to id lines");
  Io bin_io;
  std::string bin_vocab;
  add_io(binarize, bin_io);
  binarize->add_option("--vocab", bin_vocab, "Vocabulary")->required();

  // split / stats
  std::string c_src, c_tgt, c_src_lang, c_tgt_lang, split_prefix;
  std::size_t n_train = 0, n_dev = 0, n_test = 0;
  std::uint64_t split_seed = 1;
  bool no_shuffle = false;
  auto* split = app.add_subcommand("split", "Partition a parallel corpus");
  split->add_option("--src", c_src, "Source file")->required();
  split->add_option("--tgt", c_tgt, "Target file")->required();
  split->add_option("--src-lang", c_src_lang, "Source language")->required();
  split->add_option("--tgt-lang", c_tgt_lang, "Target language")->required();
  split->add_option("--train", n_train, "Training pairs")->required();
  split->add_option("--dev", n_dev, "Dev pairs")->capture_default_str();
  split->add_option("--test", n_test, "Test pairs")->capture_default_str();
  split->add_option("--seed", split_seed, "Shuffle seed")->capture_default_str();
  split->add_flag("--no-shuffle", no_shuffle, "Keep file order");
  split->add_option("--out", split_prefix, "Output prefix; writes PREFIX.{train,dev,test}.{src,tgt}")->required();
  auto* stats = app.add_subcommand("stats", "Corpus statistics");
  stats->add_option("--src", c_src, "Source file")->required();
  stats->add_option("--tgt", c_tgt, "Target file")->required();
  stats->add_option("--src-lang", c_src_lang, "Source language")->required();
  stats->add_option("--tgt-lang", c_tgt_lang, "Target language")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model on binarized data");
  std::string tr_src, tr_tgt, dv_src, dv_tgt, tr_vsrc, tr_vtgt, tr_config, tr_out, tr_arch = "transformer";
  std::vector<std::string> tr_sets;
  std::uint64_t tr_seed = 1;
  train_cmd->add_option("--train-src", tr_src, "Source id file")->required();
  train_cmd->add_option("--train-tgt", tr_tgt, "Target id file")->required();
  train_cmd->add_option("--dev-src", dv_src, "Dev source id file")->required();
  train_cmd->add_option("--dev-tgt", dv_tgt, "Dev target id file")->required();
  train_cmd->add_option("--vocab-src", tr_vsrc, "Source vocabulary")->required();
  train_cmd->add_option("--vocab-tgt", tr_vtgt, "Target vocabulary")->required();
  train_cmd->add_option("--arch", tr_arch, "lstm, bilstm, conv or transformer")->capture_default_str();
  train_cmd->add_option("--config", tr_config, "key=value file with model.* and train.* keys");
  train_cmd->add_option("--set", tr_sets, "Override one key (key=value)");
  train_cmd->add_option("--seed", tr_seed, "Seed")->capture_default_str();
  train_cmd->add_option("--out", tr_out, "Run directory")->required();

  // translate
  auto* translate = app.add_subcommand("translate", "Translate text lines");
  PipelineFlags tl_flags;
  decode::DecodeConfig tl_decode;
  Io tl_io;
  add_pipeline(translate, tl_flags, "--checkpoint");
  add_decode(translate, tl_decode);
  add_io(translate, tl_io);

  // backtranslate
  auto* backtranslate = app.add_subcommand("backtranslate", "Pseudo-parallel data from monolingual text");
  PipelineFlags bt_flags;
  decode::DecodeConfig bt_decode{1, 0, 1.0};
  std::string bt_mono, bt_out;
  bool bt_synth_target = false;
  std::vector<double> bt_ratio;
  add_pipeline(backtranslate, bt_flags, "--reverse-checkpoint");
  add_decode(backtranslate, bt_decode);
  backtranslate->add_option("--mono", bt_mono, "Monolingual text in the reverse model's source language")
      ->required();
  backtranslate->add_option("--out", bt_out, "Output prefix; writes PREFIX.{src,tgt,prov}")->required();
  backtranslate->add_flag("--synthetic-target", bt_synth_target, "Keep the monolingual text as the source");
  backtranslate->add_option("--length-ratio", bt_ratio, "Keep pairs with token ratio in [lo,hi]")
      ->expected(2)
      ->delimiter(',');

  // mix
  auto* mix_cmd = app.add_subcommand("mix", "Concatenate real and pseudo pairs and shuffle");
  std::string mx_real, mx_pseudo, mx_out;
  std::size_t mx_upsample = 1;
  std::uint64_t mx_seed = 1;
  mix_cmd->add_option("--real", mx_real, "Real corpus prefix (PREFIX.src, PREFIX.tgt)")->required();
  mix_cmd->add_option("--pseudo", mx_pseudo, "Pseudo corpus prefix")->required();
  mix_cmd->add_option("--src-lang", c_src_lang, "Source language")->required();
  mix_cmd->add_option("--tgt-lang", c_tgt_lang, "Target language")->required();
  mix_cmd->add_option("--upsample-real", mx_upsample, "Copies of the real corpus")->capture_default_str();
  mix_cmd->add_option("--seed", mx_seed, "Shuffle seed")->capture_default_str();
  mix_cmd->add_option("--out", mx_out, "Output prefix")->required();

  // score
  auto* score = app.add_subcommand("score", "Mean sentence BLEU");
  std::string sc_cand, sc_ref, sc_report, sc_detranslit;
  bool sc_undo = false, sc_detok = false;
  score->add_option("--cand", sc_cand, "Candidate lines")->required();
  score->add_option("--ref", sc_ref, "Reference lines")->required();
  score->add_flag("--undo-bpe", sc_undo, "Join @@ continuations in candidates");
  score->add_flag("--detok", sc_detok, "Detokenize candidates");
  score->add_option("--detranslit", sc_detranslit, "Transliterate candidates back to this script");
  score->add_option("--report", sc_report, "Per-sentence report file");

  // report
  auto* report = app.add_subcommand("report", "Aggregate results.tsv files into a matrix");
  std::vector<std::string> rp_inputs;
  bool rp_markdown = false;
  report->add_option("results", rp_inputs, "results.tsv files or run directories")->required();
  report->add_flag("--markdown", rp_markdown, "Markdown table instead of TSV");

  // run
  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  std::string rn_config;
  std::vector<std::string> rn_sets;
  bool rn_quiet = false;
  run->add_option("--config", rn_config, "key=value experiment file")->required();
  run->add_option("--set", rn_sets, "Override one key (key=value); wins over the file");
  run->add_flag("--quiet", rn_quiet, "Log to log.txt only");

  CLI11_PARSE(app, argc, argv);

  try {
    if (normalize->parsed()) {
      const corpus::LanguageTag lang(prep_lang);
      text::NormalizeOptions opts;
      opts.remove_joiners = !keep_joiners;
      std::vector<std::string> out;
      for (const auto& l : read_input(prep_io.in)) out.push_back(text::normalize(l, lang, opts));
      write_output(prep_io.out, out);
    } else if (tokenize->parsed()) {
      std::vector<std::string> out;
      for (const auto& l : read_input(prep_io.in)) out.push_back(join(text::tokenize(l), " "));
      write_output(prep_io.out, out);
    } else if (detok->parsed()) {
      std::vector<std::string> out;
      for (const auto& l : read_input(prep_io.in)) out.push_back(text::detokenize(split_whitespace(l)));
      write_output(prep_io.out, out);
    } else if (translit->parsed()) {
      const text::Script script = text::parse_script(translit_script);
      std::vector<std::string> out;
      for (const auto& l : read_input(prep_io.in)) {
        out.push_back(translit_reverse ? text::detransliterate(l, script)
                                       : text::transliterate(l, script, text::Script::devanagari));
      }
      write_output(prep_io.out, out);
    } else if (learn->parsed()) {
      std::vector<bpe::TokenizedSentence> sents;
      for (const auto& l : read_input(bpe_io.in)) sents.push_back(split_whitespace(l));
      const std::string text = bpe::learn_bpe(sents, merges).serialize();
      if (bpe_io.out.empty() || bpe_io.out == "-") std::cout << text;
      else write_file(bpe_io.out, text);
    } else if (apply->parsed()) {
      const auto model = bpe::BpeModel::load(codes);
      std::vector<std::string> out;
      for (const auto& l : read_input(bpe_io.in)) out.push_back(join(bpe::apply_bpe(model, split_whitespace(l)), " "));
      write_output(bpe_io.out, out);
    } else if (undo->parsed()) {
      std::vector<std::string> out;
      std::size_t dangling = 0;
      for (const auto& l : read_input(bpe_io.in)) out.push_back(join(bpe::undo_bpe(split_whitespace(l), &dangling), " "));
      write_output(bpe_io.out, out);
      if (dangling > 0) std::cerr << "dmt: warning: " << dangling << " dangling continuation markers\n";
    } else if (vocab_build->parsed()) {
      std::vector<bpe::Subwords> rows;
      for (const auto& l : read_input(vocab_io.in)) rows.push_back(split_whitespace(l));
      const auto v = bpe::build_vocab(rows, min_count, max_size == 0 ? bpe::kUnlimited : max_size);
      if (vocab_io.out.empty() || vocab_io.out == "-") std::cout << v.serialize();
      else v.save(vocab_io.out);
    } else if (binarize->parsed()) {
      const auto v = bpe::Vocabulary::load(bin_vocab);
      std::vector<std::string> out;
      for (const auto& l : read_input(bin_io.in)) out.push_back(bpe::format_ids(bpe::encode(v, split_whitespace(l))));
      write_output(bin_io.out, out);
    } else if (split->parsed()) {
      const auto loaded = corpus::load_parallel(c_src, c_tgt, corpus::LanguageTag(c_src_lang),
                                                corpus::LanguageTag(c_tgt_lang));
      const auto parts = corpus::split(loaded.corpus, n_train, n_dev, n_test, split_seed, !no_shuffle);
      corpus::write_parallel(parts.train, split_prefix + ".train.src", split_prefix + ".train.tgt");
      corpus::write_parallel(parts.dev, split_prefix + ".dev.src", split_prefix + ".dev.tgt");
      corpus::write_parallel(parts.test, split_prefix + ".test.src", split_prefix + ".test.tgt");
    } else if (stats->parsed()) {
      const auto loaded = corpus::load_parallel(c_src, c_tgt, corpus::LanguageTag(c_src_lang),
                                                corpus::LanguageTag(c_tgt_lang));
      std::cout << corpus::format_stats(corpus::stats(loaded.corpus));
      std::cout << "dropped_blank\t" << loaded.dropped_blank << "\nrejected_one_sided\t"
                << loaded.rejected_one_sided << "\n";
    } else if (train_cmd->parsed()) {
      std::map<std::string, std::string> kv;
      if (!tr_config.empty()) kv = exp::parse_kv(read_file(tr_config));
      if (!kv.count("model.arch")) kv["model.arch"] = tr_arch;
      for (const auto& [k, v] : parse_overrides(tr_sets)) kv[k] = v;
      std::map<std::string, std::string> model_kv, train_kv;
      for (const auto& [k, v] : kv) {
        if (k.rfind("model.", 0) == 0) model_kv[k] = v;
        else if (k.rfind("train.", 0) == 0) train_kv[k] = v;
        else throw Error(ErrorKind::invalid_config, "unknown key " + k);
      }
      const auto mc = nn::ModelConfig::from_kv(model_kv);
      auto tc = train::TrainConfig::from_kv(train_kv, train::TrainConfig::defaults_for(mc.arch));
      if (!train_kv.count("train.seed")) tc.seed = derive_seed(tr_seed, "train");
      const auto vs = bpe::Vocabulary::load(tr_vsrc);
      const auto vt = bpe::Vocabulary::load(tr_vtgt);
      auto model = nn::build_model(mc, vs.size(), vt.size(), tr_seed);
      train::TrainOutput out{tr_out, train::vocab_meta(vs, vt),
                             [](const std::string& l) { std::cerr << l << '\n'; }};
      const auto result = train::train(*model, read_id_pairs(tr_src, tr_tgt), read_id_pairs(dv_src, dv_tgt), tc,
                                       train::subword_view(vt), out);
      std::cout << train::format_report(result.report);
    } else if (translate->parsed()) {
      const auto ctx = load_context(tl_flags);
      const auto ck = train::load_checkpoint(tl_flags.checkpoint);
      decode::verify_fingerprints(ck.meta, ctx);
      write_output(tl_io.out, decode::translate_lines(*ck.model, read_input(tl_io.in), ctx, tl_decode));
    } else if (backtranslate->parsed()) {
      const auto ctx = load_context(bt_flags);
      const auto ck = train::load_checkpoint(bt_flags.checkpoint);
      decode::verify_fingerprints(ck.meta, ctx);
      bt::GenerateOptions opts;
      opts.direction = bt_synth_target ? bt::Direction::synthetic_target : bt::Direction::synthetic_source;
      if (!bt_ratio.empty()) opts.length_ratio = std::make_pair(bt_ratio[0], bt_ratio[1]);
      const auto mono = corpus::load_monolingual(bt_mono, ctx.src_lang);
      const std::string fp = hex64(fnv1a64(read_file(bt_flags.checkpoint)));
      const auto pseudo = bt::generate_pseudo_parallel(*ck.model, fp, mono, ctx, bt_decode, opts);
      bt::write_pseudo(pseudo, bt_out + ".src", bt_out + ".tgt", bt_out + ".prov");
      std::cerr << "pseudo pairs " << pseudo.corpus.size() << ", dropped empty " << pseudo.dropped_empty
                << ", filtered " << pseudo.filtered << "\n";
    } else if (mix_cmd->parsed()) {
      const corpus::LanguageTag sl(c_src_lang), tl(c_tgt_lang);
      const auto real = corpus::load_parallel(mx_real + ".src", mx_real + ".tgt", sl, tl).corpus;
      auto pseudo = corpus::load_parallel(mx_pseudo + ".src", mx_pseudo + ".tgt", sl, tl).corpus;
      for (auto& p : pseudo.pairs) p.synthetic = true;
      const auto mixed = bt::mix(real, pseudo, mx_upsample, mx_seed);
      corpus::write_parallel(mixed, mx_out + ".src", mx_out + ".tgt");
      std::cout << "pairs\t" << mixed.size() << "\n";
    } else if (score->parsed()) {
      bleu::ScoringFlags flags;
      flags.undo_bpe = sc_undo;
      flags.detok = sc_detok;
      if (!sc_detranslit.empty()) flags.detranslit = text::parse_script(sc_detranslit);
      const auto r = bleu::score_files(sc_cand, sc_ref, flags, sc_report);
      std::cout << bleu::summary_line(r) << "\n";
    } else if (report->parsed()) {
      std::vector<exp::ResultRow> rows;
      for (const auto& in : rp_inputs) {
        const std::string path = fs::is_directory(in) ? (fs::path(in) / "results.tsv").string() : in;
        auto r = exp::read_results(path);
        rows.insert(rows.end(), r.begin(), r.end());
      }
      std::cout << exp::format_matrix(rows, rp_markdown);
    } else if (run->parsed()) {
      const auto config = exp::ExperimentConfig::load(rn_config, parse_overrides(rn_sets));
      exp::RunOptions opts;
      opts.echo_log = !rn_quiet;
      const auto summary = exp::run_experiment(config, opts);
      std::cout << "run_dir\t" << summary.run_dir << "\nstages_run\t" << summary.stages_run.size()
                << "\nmean_sentence_bleu\t" << format_fixed(summary.test_bleu, 4) << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "dmt: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "dmt: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
