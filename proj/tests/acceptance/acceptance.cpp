// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Run a subset with criterion numbers as arguments.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bleu_cases.hpp"
#include "dmt/backtranslation.hpp"
#include "dmt/bleu.hpp"
#include "dmt/experiment.hpp"
#include "dmt/ops.hpp"
#include "dmt/subword.hpp"
#include "dmt/textnorm.hpp"
#include "dmt/utf8.hpp"
#include "oracles.hpp"

using namespace dmt;
using namespace dmt::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<std::string> random_sentence(Rng& rng, std::size_t vocab, std::size_t max_len,
                                         std::size_t min_len = 0) {
  std::vector<std::string> s(min_len + rng.below(max_len - min_len + 1));
  for (auto& t : s) t = "w" + std::to_string(rng.below(vocab));
  return s;
}

// Deletions, substitutions and insertions applied to a copy of `c`.
std::vector<std::string> noisy_copy(Rng& rng, const std::vector<std::string>& c, std::size_t vocab,
                                    std::size_t max_len) {
  std::vector<std::string> out;
  for (const auto& t : c) {
    const double u = rng.uniform();
    if (u < 0.1) continue;
    if (u < 0.2) {
      out.push_back("w" + std::to_string(rng.below(vocab)));
      continue;
    }
    out.push_back(t);
    if (u > 0.95) out.push_back("w" + std::to_string(rng.below(vocab)));
  }
  if (out.size() > max_len) out.resize(max_len);
  if (out.empty()) out = c;
  return out;
}

// ------------------------------------------------------------- criteria

Outcome bleu_oracle_suite() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::vector<std::string> cands, refs;
  double hand_sum = 0.0;
  for (const auto& c : bleu_cases()) {
    const auto cand = split_whitespace(c.candidate);
    std::vector<bleu::Tokens> rs;
    for (const auto& r : c.references) rs.push_back(split_whitespace(r));
    const double got = bleu::sentence_bleu(cand, rs);
    worst = std::max({worst, std::abs(got - brute_bleu(cand, rs)), std::abs(got - c.expected)});
    if (c.references.size() == 1) {
      cands.push_back(c.candidate);
      refs.push_back(c.references[0]);
      hand_sum += c.expected;
    }
  }
  const auto clipped = bleu::modified_precision(split_whitespace("the the the the the the the"),
                                                {split_whitespace("the cat is on the mat")}, 1);
  const bool clip_ok = clipped.matches == 2 && clipped.total == 7;
  const double mean = bleu::score_lines(cands, refs).mean;
  const double mean_err = std::abs(mean - hand_sum / static_cast<double>(cands.size()));
  const double secs = seconds_since(t0);
  return {bleu_cases().size() == 20 && worst < 1e-12 && clip_ok && mean_err < 1e-12 && secs < 1.0,
          "cases=" + std::to_string(bleu_cases().size()) + " max_dev=" + fmt("%.3g", worst) +
              " clip=" + std::to_string(clipped.matches) + "/" + std::to_string(clipped.total) +
              " mean_dev=" + fmt("%.3g", mean_err) + " secs=" + fmt("%.2f", secs)};
}

Outcome bleu_property_sweep() {
  Rng rng(2);
  double worst = 0.0;
  std::size_t nonzero = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto cand = random_sentence(rng, 10, 12);
    std::vector<bleu::Tokens> refs;
    const std::size_t n_refs = 1 + rng.below(3);
    for (std::size_t r = 0; r < n_refs; ++r) {
      refs.push_back(rng.below(2) == 0 ? random_sentence(rng, 10, 12, 1) : noisy_copy(rng, cand, 10, 12));
    }
    const double got = bleu::sentence_bleu(cand, refs);
    nonzero += got > 0.0 ? 1 : 0;
    worst = std::max(worst, std::abs(got - brute_bleu(cand, refs)));
  }
  std::size_t monotone = 0;
  std::size_t informative = 0;
  std::size_t brevity_driven = 0;
  for (int i = 0; i < 500; ++i) {
    const auto cand = random_sentence(rng, 10, 12, 4);
    std::vector<bleu::Tokens> refs{noisy_copy(rng, cand, 10, 12)};
    const auto before = bleu::sentence_bleu_detail(cand, refs);
    refs.push_back(noisy_copy(rng, cand, 10, 12));
    const auto after = bleu::sentence_bleu_detail(cand, refs);
    informative += before.score > 0.0 ? 1 : 0;
    if (after.score >= before.score) {
      ++monotone;
      continue;
    }
    // A drop with no clipped count falling and a longer effective reference.
    bool counts_held = true;
    for (std::size_t n = 0; n < 4; ++n) {
      counts_held = counts_held && after.tallies[n].matches >= before.tallies[n].matches;
    }
    brevity_driven += counts_held && after.reference_length > before.reference_length ? 1 : 0;
  }
  return {worst < 1e-12 && monotone == 500,
          "pairs=1000 nonzero=" + std::to_string(nonzero) + " max_dev=" + fmt("%.3g", worst) +
              " monotone=" + std::to_string(monotone) + "/500 (nonzero before: " +
              std::to_string(informative) + ", drops from brevity penalty: " +
              std::to_string(brevity_driven) + "/" + std::to_string(500 - monotone) + ")"};
}

Outcome bpe_round_trip() {
  const auto t0 = Clock::now();
  Rng rng(3);
  // Latin letters plus Kannada letters, so segments cross multi-byte codepoints.
  std::vector<std::string> alphabet;
  for (char c = 'a'; c <= 'l'; ++c) alphabet.emplace_back(1, c);
  for (char32_t c = 0x0C95; c <= 0x0C9C; ++c) alphabet.push_back(utf8::encode(std::u32string(1, c)));
  auto word = [&] {
    std::string w;
    const std::size_t n = 1 + rng.below(10);
    for (std::size_t i = 0; i < n; ++i) w += alphabet[rng.below(alphabet.size())];
    return w;
  };
  std::vector<std::size_t> sizes{0, 5000};
  while (sizes.size() < 10) sizes.push_back(rng.below(5001));
  std::size_t exact = 0, total = 0, max_merges = 0;
  for (std::size_t m : sizes) {
    std::vector<bpe::TokenizedSentence> corpus(3000);
    for (auto& s : corpus) {
      s.resize(1 + rng.below(10));
      for (auto& w : s) w = word();
    }
    const auto model = bpe::learn_bpe(corpus, m);
    max_merges = std::max(max_merges, model.size());
    for (int i = 0; i < 100; ++i) {
      bpe::TokenizedSentence s(1 + rng.below(12));
      for (auto& w : s) w = word();
      ++total;
      exact += bpe::undo_bpe(bpe::apply_bpe(model, s)) == s ? 1 : 0;
    }
  }
  const double secs = seconds_since(t0);
  return {exact == total && total == 1000 && secs < 30.0,
          "models=10 largest=" + std::to_string(max_merges) + " merges exact=" + std::to_string(exact) +
              "/" + std::to_string(total) + " secs=" + fmt("%.2f", secs)};
}

Outcome translit_round_trip() {
  const auto t0 = Clock::now();
  std::ostringstream detail;
  bool ok = true;
  for (text::Script s : {text::Script::kannada, text::Script::tamil, text::Script::telugu,
                         text::Script::malayalam}) {
    std::size_t assigned = 0, mapped = 0, round_trip = 0, forward_unmapped = 0;
    for (char32_t cp = text::block_base(s); cp < text::block_base(s) + 128; ++cp) {
      if (!text::is_assigned(cp)) continue;
      ++assigned;
      const std::string c = utf8::encode(std::u32string(1, cp));
      std::size_t unmapped = 0;
      const std::string deva = text::transliterate(c, s, text::Script::devanagari, &unmapped);
      if (unmapped == 0) {
        ++mapped;
        round_trip += text::detransliterate(deva, s) == c ? 1 : 0;
      } else {
        forward_unmapped += unmapped;
        ok = ok && deva == c;
      }
    }
    // Devanagari letters with no slot in the native block pass through unchanged.
    std::size_t back_unmapped = 0, back_passed = 0;
    for (char32_t cp = 0x0900; cp < 0x0980; ++cp) {
      const std::string c = utf8::encode(std::u32string(1, cp));
      const std::size_t before = back_unmapped;
      const std::string out = text::detransliterate(c, s, &back_unmapped);
      if (back_unmapped > before) back_passed += out == c ? 1 : 0;
    }
    ok = ok && round_trip == mapped && back_passed == back_unmapped;
    detail << text::script_name(s) << " " << round_trip << "/" << mapped << " of " << assigned
           << " (unmapped " << forward_unmapped << " fwd, " << back_unmapped << " back) ";
  }
  const double secs = seconds_since(t0);
  detail << "secs=" << fmt("%.3f", secs);
  return {ok && secs < 1.0, detail.str()};
}

// Per-op gradient checks at one random configuration.
std::vector<std::pair<std::string, GradCheck>> op_checks(std::uint64_t seed) {
  using namespace dmt::ad;
  Rng rng(seed);
  std::vector<std::pair<std::string, GradCheck>> out;
  auto probe = [seed](const Tensor& y) {
    Rng w(seed * 31 + 7);
    std::vector<double> v(y.numel());
    for (auto& x : v) x = w.uniform(-1.0, 1.0);
    return sum(mul(y, Tensor::from(y.shape(), v)));
  };
  auto run = [&](const char* name, const std::function<Tensor()>& f, std::vector<Tensor> leaves) {
    Rng pick(seed);
    out.emplace_back(name, check_gradients(f, std::move(leaves), pick, 8));
  };
  const std::size_t B = 1 + rng.below(2), T = 1 + rng.below(4), C = 1 + rng.below(4),
                    O = 1 + rng.below(3), K = 1 + 2 * rng.below(2);
  auto a = random_tensor({B, T, C}, rng);
  auto b = random_tensor({C}, rng);
  auto pos = random_tensor({B, T, C}, rng, 0.5, 2.0);
  auto wm = random_tensor({C, O}, rng);
  auto wb = random_tensor({B, O, C}, rng);
  auto g = random_tensor({C}, rng);
  auto cw = random_tensor({K, C, O}, rng);
  auto cb = random_tensor({O}, rng);
  auto gl = random_tensor({B, T, 2 * C}, rng);
  auto table = random_tensor({6, C}, rng);
  std::vector<std::int32_t> ids(B * T);
  for (auto& v : ids) v = static_cast<std::int32_t>(rng.below(6));
  const std::size_t V = 2 + rng.below(4);
  auto logits = random_tensor({B * T, V}, rng, -2.0, 2.0);
  std::vector<std::int32_t> targets(B * T);
  for (auto& v : targets) v = static_cast<std::int32_t>(rng.below(V));
  targets[0] = 1;
  const std::size_t rows[] = {0, B - 1, 0};

  run("add", [&] { return probe(add(a, b)); }, {a, b});
  run("sub", [&] { return probe(sub(a, b)); }, {a, b});
  run("mul", [&] { return probe(mul(a, b)); }, {a, b});
  run("scale", [&] { return probe(scale(a, -1.3)); }, {a});
  run("add_scalar", [&] { return probe(add_scalar(a, 0.7)); }, {a});
  run("matmul", [&] { return probe(matmul(a, wm)); }, {a, wm});
  run("matmul_t", [&] { return probe(matmul(a, wb, true)); }, {a, wb});
  run("sigmoid", [&] { return probe(sigmoid(a)); }, {a});
  run("tanh", [&] { return probe(ad::tanh(a)); }, {a});
  run("relu", [&] { return probe(relu(pos)); }, {pos});
  run("exp", [&] { return probe(ad::exp(a)); }, {a});
  run("softmax", [&] { return probe(softmax(a)); }, {a});
  run("log_softmax", [&] { return probe(log_softmax(a)); }, {a});
  run("layer_norm", [&] { return probe(layer_norm(a, g, b)); }, {a, g, b});
  run("embedding", [&] { return probe(embedding(table, ids, {B, T})); }, {table});
  run("conv1d_same", [&] { return probe(conv1d(a, cw, cb, PadMode::same)); }, {a, cw, cb});
  run("conv1d_causal", [&] { return probe(conv1d(a, cw, cb, PadMode::causal)); }, {a, cw, cb});
  run("glu", [&] { return probe(glu(gl)); }, {gl});
  run("dropout",
      [&] {
        Rng d(seed);
        return probe(dropout(a, 0.25, d, true));
      },
      {a});
  run("concat", [&] { return probe(concat({a, pos}, 2)); }, {a, pos});
  run("slice", [&] { return probe(slice(a, 1, 0, 1)); }, {a});
  run("transpose", [&] { return probe(transpose(a, 0, 2)); }, {a});
  run("reshape", [&] { return probe(reshape(a, {B * T * C})); }, {a});
  run("index_select", [&] { return probe(index_select(a, rows)); }, {a});
  run("sum", [&] { return scale(sum(a), 0.5); }, {a});
  run("mean", [&] { return mean(a); }, {a});
  run("label_smoothed_nll", [&] { return label_smoothed_nll(logits, targets, 0, 0.1); }, {logits});
  return out;
}

Outcome gradient_checks() {
  const auto t0 = Clock::now();
  std::map<std::string, double> worst;
  std::size_t checked = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    for (const auto& [name, r] : op_checks(seed)) {
      worst[name] = std::max(worst[name], r.max_rel_error);
      checked += r.checked;
    }
    for (auto arch : all_archs()) {
      const auto r = model_grad_check(arch, seed);
      const std::string name = "model:" + std::string(nn::arch_name(arch));
      worst[name] = std::max(worst[name], r.max_rel_error);
      checked += r.checked;
    }
  }
  double overall = 0.0;
  std::string worst_name;
  for (const auto& [name, e] : worst) {
    if (e >= overall) {
      overall = e;
      worst_name = name;
    }
  }
  const double secs = seconds_since(t0);
  return {overall < 1e-4 && secs < 120.0,
          "ops+archs=" + std::to_string(worst.size()) + " configs=10 entries=" + std::to_string(checked) +
              " max_rel_err=" + fmt("%.3g", overall) + " (" + worst_name + ") secs=" + fmt("%.1f", secs)};
}

Outcome causality_and_masking() {
  const auto t0 = Clock::now();
  std::size_t violations = 0;
  double pad_worst = 0.0;
  for (auto arch : all_archs()) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      violations += causality_violations(arch, seed);
      pad_worst = std::max(pad_worst, pad_sensitivity(arch, seed));
    }
  }
  const double secs = seconds_since(t0);
  return {violations == 0 && pad_worst <= 1e-9 && secs < 60.0,
          "archs=4 seeds=10 future_changes=" + std::to_string(violations) +
              " max_pad_delta=" + fmt("%.3g", pad_worst) + " secs=" + fmt("%.1f", secs)};
}

Outcome copy_task() {
  std::ostringstream detail;
  bool ok = true;
  const auto pairs = copy_corpus(7);
  for (auto arch : all_archs()) {
    const auto t0 = Clock::now();
    nn::ModelConfig mc;
    mc.arch = arch;
    mc.lstm.bidirectional = arch == nn::Arch::bilstm;
    mc.transformer.enc_layers = 3;
    mc.transformer.dec_layers = 3;
    mc.transformer.d_model = 256;
    mc.transformer.d_ffn = 512;
    mc.transformer.n_heads = 4;
    mc.transformer.dropout = 0.1;
    auto model = nn::build_model(mc, 20, 20, 1);
    auto tc = train::TrainConfig::defaults_for(arch);
    tc.learning_rate = 0.0005;
    tc.batch_size = 8;
    tc.eval_bleu_every = 1;
    const bool is_transformer = arch == nn::Arch::transformer;
    const double target = is_transformer ? 0.99 : 0.95;
    tc.epochs = is_transformer ? 300 : 500;
    tc.target_dev_bleu = target;
    const auto r = train::train(*model, pairs, pairs, tc, train::id_view());
    const double bleu = r.report.best_epoch ? r.report.epochs[r.report.best_epoch - 1].dev_bleu : 0.0;
    const double secs = seconds_since(t0);
    const bool pass = bleu >= target && secs < 300.0;
    ok = ok && pass;
    detail << nn::arch_name(arch) << " bleu=" << fmt("%.4f", bleu) << "@" << r.report.epochs.size()
           << " " << fmt("%.0f", secs) << "s" << (pass ? "" : "!") << "  ";
  }
  return {ok, detail.str()};
}

Outcome beam_greedy() {
  std::size_t same = 0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    Rng rng(1000 + t);
    const auto arch = all_archs()[t % 4];
    const std::size_t vocab = 6 + rng.below(10);
    auto model = nn::build_model(tiny_config(arch, 4 + 2 * rng.below(3)), vocab, vocab, 500 + t);
    auto src = random_ids(rng, 1 + rng.below(6), vocab);
    src.push_back(3);
    const decode::DecodeConfig cfg{1, 1 + rng.below(12), t % 2 ? 1.0 : 0.6};
    same += decode::greedy_decode(*model, src, cfg).ids == decode::beam_decode(*model, src, cfg).best.ids;
  }
  std::size_t optimal = 0;
  for (std::uint64_t t = 0; t < 50; ++t) {
    Rng rng(2000 + t);
    const auto arch = all_archs()[t % 4];
    auto model = nn::build_model(tiny_config(arch), 5, 5, 700 + t);
    // Larger output weights make the toy distributions peaked and varied.
    for (auto& p : model->parameters().items()) {
      if (p.name == "out.w") {
        for (auto& v : p.tensor.mutable_values()) v *= 8.0;
      }
    }
    auto src = random_ids(rng, 1 + rng.below(4), 5);
    src.push_back(3);
    const std::size_t max_len = 1 + rng.below(4);
    const double alpha = t % 2 ? 1.0 : 0.0;
    decode::ModelScorer oracle_scorer(*model, src);
    const auto best = exhaustive_best(oracle_scorer, max_len, alpha);
    decode::ModelScorer scorer(*model, src);
    const auto r = decode::beam_search(scorer, 81, max_len, alpha);
    optimal += r.best.ids == best.ids && std::abs(r.best.normalized_score - best.normalized_score) < 1e-12;
  }
  return {same == 100 && optimal == 50, "beam1==greedy " + std::to_string(same) +
                                            "/100, full-beam==exhaustive " + std::to_string(optimal) + "/50"};
}

Outcome backtranslation_experiment() {
  const auto t0 = Clock::now();
  std::size_t wins = 0;
  std::ostringstream detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto data = cipher_data(seed);
    bt::BtExperimentConfig cfg;
    cfg.model.arch = nn::Arch::transformer;
    cfg.model.transformer.enc_layers = 2;
    cfg.model.transformer.dec_layers = 2;
    cfg.model.transformer.d_model = 64;
    cfg.model.transformer.d_ffn = 128;
    cfg.model.transformer.n_heads = 4;
    cfg.model.transformer.dropout = 0.1;
    auto tc = train::TrainConfig::defaults_for(nn::Arch::transformer);
    tc.epochs = 20;
    tc.batch_size = 32;
    tc.learning_rate = 0.001;
    cfg.reverse_train = tc;
    cfg.forward_train = tc;
    cfg.transliterate = false;
    cfg.seed = seed;
    const auto rep = bt::bt_experiment(cfg, data.real, data.dev, data.mono);
    const bool win = rep.augmented_dev_bleu > rep.baseline_dev_bleu;
    wins += win ? 1 : 0;
    detail << "s" << seed << " " << fmt("%.3f", rep.baseline_dev_bleu) << "->"
           << fmt("%.3f", rep.augmented_dev_bleu) << "  ";
  }
  const double secs = seconds_since(t0);
  detail << "wins=" << wins << "/5 secs=" << fmt("%.0f", secs);
  return {wins >= 4 && secs < 900.0, detail.str()};
}

Outcome mixing_arithmetic() {
  const auto t0 = Clock::now();
  corpus::ParallelCorpus real, pseudo;
  real.src_lang = pseudo.src_lang = corpus::LanguageTag("kn");
  real.tgt_lang = pseudo.tgt_lang = corpus::LanguageTag("ml");
  real.pairs.assign(90974, {"r", "r", false});
  pseudo.pairs.assign(80000, {"p", "p", true});
  const auto mixed = bt::mix(real, pseudo, 1, 1);
  std::size_t synthetic = 0;
  for (const auto& p : mixed.pairs) synthetic += p.synthetic ? 1 : 0;
  const double secs = seconds_since(t0);
  return {mixed.size() == 170974 && synthetic == 80000 && secs < 10.0,
          "90974 + 80000 = " + std::to_string(mixed.size()) + " (synthetic " + std::to_string(synthetic) +
              ") secs=" + fmt("%.2f", secs)};
}

Outcome determinism_and_persistence() {
  const fs::path root = fs::temp_directory_path() / "dmt_acceptance_c11";
  fs::remove_all(root);
  fs::create_directories(root);
  auto trajectory = [&](const std::string& name) {
    auto model = nn::build_model(tiny_config(nn::Arch::transformer, 16), 20, 20, 3);
    auto cfg = model->config();
    cfg.transformer.dropout = 0.1;
    model = nn::build_model(cfg, 20, 20, 3);
    auto tc = train::TrainConfig::defaults_for(nn::Arch::transformer);
    tc.epochs = 5;
    tc.batch_size = 8;
    tc.learning_rate = 0.002;
    train::TrainOutput out;
    out.run_dir = (root / name).string();
    train::train(*model, copy_corpus(11, 32), copy_corpus(12, 8), tc, train::id_view(), out);
    std::vector<std::string> states;
    for (const auto& e : fs::directory_iterator(root / name / "checkpoints")) {
      states.push_back(e.path().filename().string() + ":" + read_file(e.path().string()));
    }
    std::sort(states.begin(), states.end());
    return states;
  };
  const auto a = trajectory("a");
  const auto b = trajectory("b");
  const bool same_trajectory = a.size() == 5 && a == b;

  std::size_t identical = 0;
  for (auto arch : all_archs()) {
    auto model = nn::build_model(tiny_config(arch), 12, 12, 21);
    const auto path = (root / "m.dmt").string();
    train::save_checkpoint(*model, nullptr, {}, path);
    const auto ck = train::load_checkpoint(path);
    auto src = nn::IdBatch::from_rows({{4, 5, 6, 3}, {7, 3}});
    auto prefix = nn::IdBatch::from_rows({{2, 8, 9}, {2, 10, 11}});
    identical += logits_of(*model, src, prefix) == logits_of(*ck.model, src, prefix) ? 1 : 0;
  }

  const auto config_path = write_tiny_experiment(root.string());
  const auto cfg = exp::ExperimentConfig::load(config_path);
  const auto first = exp::run_experiment(cfg, {false});
  const auto second = exp::run_experiment(cfg, {false});
  fs::remove_all(root);
  const bool rerun_idle = !first.stages_run.empty() && second.stages_run.empty();
  return {same_trajectory && identical == 4 && rerun_idle,
          "epochs_identical=" + std::string(same_trajectory ? "5/5" : "no") +
              " reload_identical=" + std::to_string(identical) + "/4 rerun_stages=" +
              std::to_string(second.stages_run.size()) + " (first run " +
              std::to_string(first.stages_run.size()) + ")"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"BLEU oracle suite", bleu_oracle_suite},
      {"BLEU property sweep", bleu_property_sweep},
      {"BPE round trip", bpe_round_trip},
      {"transliteration round trip", translit_round_trip},
      {"gradient checks", gradient_checks},
      {"causality and masking", causality_and_masking},
      {"copy-task overfit", copy_task},
      {"beam/greedy equivalence", beam_greedy},
      {"back-translation desk experiment", backtranslation_experiment},
      {"mixing arithmetic", mixing_arithmetic},
      {"determinism and persistence", determinism_and_persistence},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(number)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("criterion %2d %s  %s: %s\n", number, o.pass ? "PASS" : "FAIL",
                criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
