#include "dmt/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <numeric>

#include "dmt/bleu.hpp"
#include "dmt/ops.hpp"

namespace dmt::train {

namespace fs = std::filesystem;

namespace {

double kv_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::invalid_config, "expected a number for " + key + ", got '" + v + "'");
}

std::uint64_t kv_count(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const auto n = std::stoull(v, &used);
    if (used == v.size() && v.find('-') == std::string::npos) return n;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::invalid_config, "expected a count for " + key + ", got '" + v + "'");
}

std::string epoch_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch%03zu.dmt", epoch);
  return buf;
}

std::vector<std::vector<double>> snapshot(const nn::ParameterStore& params) {
  std::vector<std::vector<double>> out;
  for (const auto& p : params.items()) out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

void restore(nn::ParameterStore& params, const std::vector<std::vector<double>>& values) {
  auto& items = params.items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::copy(values[i].begin(), values[i].end(), items[i].tensor.mutable_values().begin());
  }
}

}  // namespace

void TrainConfig::validate() const {
  if ((max_tokens == 0) == (batch_size == 0)) {
    throw Error(ErrorKind::invalid_config, "exactly one of max_tokens and batch_size must be set");
  }
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::invalid_config, "learning rate must be positive");
  if (!(lr_shrink > 0.0 && lr_shrink <= 1.0)) {
    throw Error(ErrorKind::invalid_config, "lr_shrink must be in (0,1]");
  }
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw Error(ErrorKind::invalid_config, "label smoothing must be in [0,1)");
  }
  if (dropout && !(*dropout >= 0.0 && *dropout < 1.0)) {
    throw Error(ErrorKind::invalid_config, "dropout must be in [0,1)");
  }
  if (epochs == 0) throw Error(ErrorKind::invalid_config, "epochs must be positive");
  if (patience == 0) throw Error(ErrorKind::invalid_config, "patience must be positive");
  if (eval_bleu_every == 0) throw Error(ErrorKind::invalid_config, "eval_bleu_every must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorKind::invalid_config, "Adam betas must be in [0,1)");
  }
  if (!(adam_eps > 0.0)) throw Error(ErrorKind::invalid_config, "adam_eps must be positive");
  if (clip_norm < 0.0) throw Error(ErrorKind::invalid_config, "clip_norm must be >= 0");
  dev_decode.validate();
}

TrainConfig TrainConfig::defaults_for(nn::Arch arch) {
  TrainConfig c;
  if (arch == nn::Arch::transformer) {
    c.beta2 = 0.98;
    c.clip_norm = 0.0;
  } else {
    c.beta2 = 0.999;
    c.clip_norm = arch == nn::Arch::conv ? 0.0 : 1.0;
  }
  return c;
}

std::map<std::string, std::string> TrainConfig::to_kv() const {
  std::map<std::string, std::string> kv{
      {"train.lr", format_double(learning_rate)},
      {"train.max_tokens", std::to_string(max_tokens)},
      {"train.batch_size", std::to_string(batch_size)},
      {"train.epochs", std::to_string(epochs)},
      {"train.label_smoothing", format_double(label_smoothing)},
      {"train.lr_shrink", format_double(lr_shrink)},
      {"train.patience", std::to_string(patience)},
      {"train.min_improvement", format_double(min_improvement)},
      {"train.clip_norm", format_double(clip_norm)},
      {"train.seed", std::to_string(seed)},
      {"train.beta1", format_double(beta1)},
      {"train.beta2", format_double(beta2)},
      {"train.adam_eps", format_double(adam_eps)},
      {"train.warmup_steps", std::to_string(warmup_steps)},
      {"train.eval_bleu_every", std::to_string(eval_bleu_every)},
      {"train.keep_last", std::to_string(keep_last)},
      {"train.dev_beam", std::to_string(dev_decode.beam)},
      {"train.dev_max_len", std::to_string(dev_decode.max_len)},
      {"train.dev_alpha", format_double(dev_decode.alpha)},
  };
  if (dropout) kv["train.dropout"] = format_double(*dropout);
  if (target_dev_bleu) kv["train.target_dev_bleu"] = format_double(*target_dev_bleu);
  return kv;
}

TrainConfig TrainConfig::from_kv(const std::map<std::string, std::string>& kv, TrainConfig c) {
  for (const auto& [key, v] : kv) {
    if (key.rfind("train.", 0) != 0) continue;
    const std::string k = key.substr(6);
    if (k == "lr") c.learning_rate = kv_real(key, v);
    else if (k == "max_tokens") c.max_tokens = kv_count(key, v);
    else if (k == "batch_size") c.batch_size = kv_count(key, v);
    else if (k == "epochs") c.epochs = kv_count(key, v);
    else if (k == "label_smoothing") c.label_smoothing = kv_real(key, v);
    else if (k == "dropout") c.dropout = kv_real(key, v);
    else if (k == "lr_shrink") c.lr_shrink = kv_real(key, v);
    else if (k == "patience") c.patience = kv_count(key, v);
    else if (k == "min_improvement") c.min_improvement = kv_real(key, v);
    else if (k == "clip_norm") c.clip_norm = kv_real(key, v);
    else if (k == "seed") c.seed = kv_count(key, v);
    else if (k == "beta1") c.beta1 = kv_real(key, v);
    else if (k == "beta2") c.beta2 = kv_real(key, v);
    else if (k == "adam_eps") c.adam_eps = kv_real(key, v);
    else if (k == "warmup_steps") c.warmup_steps = kv_count(key, v);
    else if (k == "eval_bleu_every") c.eval_bleu_every = kv_count(key, v);
    else if (k == "target_dev_bleu") c.target_dev_bleu = kv_real(key, v);
    else if (k == "keep_last") c.keep_last = kv_count(key, v);
    else if (k == "dev_beam") c.dev_decode.beam = kv_count(key, v);
    else if (k == "dev_max_len") c.dev_decode.max_len = kv_count(key, v);
    else if (k == "dev_alpha") c.dev_decode.alpha = kv_real(key, v);
    else throw Error(ErrorKind::invalid_config, "unknown training key " + key);
  }
  c.validate();
  return c;
}

BatchPlan make_batches(const std::vector<EncodedPair>& pairs, const BatchSpec& spec,
                       std::uint64_t seed) {
  if ((spec.max_tokens == 0) == (spec.batch_size == 0)) {
    throw Error(ErrorKind::invalid_config, "exactly one of max_tokens and batch_size must be set");
  }
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pairs[a].src.size() < pairs[b].src.size();
  });

  BatchPlan plan;
  if (spec.batch_size > 0) {
    for (std::size_t i = 0; i < order.size(); i += spec.batch_size) {
      const std::size_t end = std::min(order.size(), i + spec.batch_size);
      plan.batches.emplace_back(order.begin() + static_cast<long>(i), order.begin() + static_cast<long>(end));
    }
  } else {
    std::vector<std::size_t> cur;
    std::size_t width_s = 0, width_t = 0;
    for (std::size_t idx : order) {
      const std::size_t ls = pairs[idx].src.size(), lt = pairs[idx].tgt.size();
      if (ls > spec.max_tokens || lt > spec.max_tokens) {
        ++plan.skipped;
        continue;
      }
      const std::size_t ws = std::max(width_s, ls), wt = std::max(width_t, lt);
      if (!cur.empty() && ((cur.size() + 1) * ws > spec.max_tokens || (cur.size() + 1) * wt > spec.max_tokens)) {
        plan.batches.push_back(std::move(cur));
        cur.clear();
        width_s = ls;
        width_t = lt;
      } else {
        width_s = ws;
        width_t = wt;
      }
      cur.push_back(idx);
    }
    if (!cur.empty()) plan.batches.push_back(std::move(cur));
  }
  Rng rng(seed);
  rng.shuffle(plan.batches);
  return plan;
}

Batch materialize(const std::vector<EncodedPair>& pairs, const std::vector<std::size_t>& indices) {
  std::vector<Ids> src, tgt_in, tgt_out;
  for (std::size_t i : indices) {
    const EncodedPair& p = pairs.at(i);
    if (p.src.empty() || p.tgt.empty()) throw Error(ErrorKind::empty_input, "pair with an empty side");
    src.push_back(p.src);
    Ids in{bpe::kBos};
    in.insert(in.end(), p.tgt.begin(), p.tgt.end() - 1);
    tgt_in.push_back(std::move(in));
    tgt_out.push_back(p.tgt);
  }
  Batch b;
  b.src = nn::IdBatch::from_rows(src);
  b.tgt_in = nn::IdBatch::from_rows(tgt_in);
  const nn::IdBatch out = nn::IdBatch::from_rows(tgt_out, b.tgt_in.cols);
  b.tgt_out = out.ids;
  for (auto id : b.tgt_out) b.target_tokens += id != bpe::kPad;
  return b;
}

double adam_step(nn::ParameterStore& params, AdamState& state, double lr, const AdamOptions& opts) {
  auto& items = params.items();
  if (state.m.size() != items.size()) {
    state.m.assign(items.size(), {});
    state.v.assign(items.size(), {});
  }
  double sq = 0.0;
  for (const auto& p : items) {
    if (!p.tensor.requires_grad() || !p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw Error(ErrorKind::numeric_fault, "non-finite gradient in " + p.name);
      sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  const double clip = opts.clip_norm > 0.0 && norm > opts.clip_norm ? opts.clip_norm / norm : 1.0;
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(opts.beta1, t);
  const double c2 = 1.0 - std::pow(opts.beta2, t);
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto& p = items[i];
    if (!p.tensor.requires_grad() || !p.tensor.has_grad()) continue;
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.empty()) {
      m.assign(p.tensor.numel(), 0.0);
      v.assign(p.tensor.numel(), 0.0);
    }
    const auto g = p.tensor.grad();
    auto w = p.tensor.mutable_values();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j] * clip;
      m[j] = opts.beta1 * m[j] + (1.0 - opts.beta1) * gj;
      v[j] = opts.beta2 * v[j] + (1.0 - opts.beta2) * gj * gj;
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + opts.eps);
    }
  }
  return norm;
}

std::string format_report(const TrainReport& report) {
  std::string out = "epoch\ttrain_loss\tdev_loss\tdev_bleu\tlr\n";
  for (const auto& e : report.epochs) {
    out += std::to_string(e.epoch) + "\t" + format_fixed(e.train_loss, 6) + "\t" +
           format_fixed(e.dev_loss, 6) + "\t" +
           (std::isnan(e.dev_bleu) ? std::string("-") : format_fixed(e.dev_bleu, 4)) + "\t" +
           format_double(e.lr) + "\n";
  }
  return out;
}

TokenView subword_view(const bpe::Vocabulary& tgt_vocab) {
  return [&tgt_vocab](const Ids& ids) { return bpe::undo_bpe(bpe::decode(tgt_vocab, ids)); };
}

TokenView id_view() {
  return [](const Ids& ids) {
    std::vector<std::string> out;
    for (auto id : ids) {
      if (id == bpe::kPad || id == bpe::kBos || id == bpe::kEos) continue;
      out.push_back(std::to_string(id));
    }
    return out;
  };
}

double evaluate_loss(const nn::SeqModel& model, const std::vector<EncodedPair>& pairs, double epsilon,
                     std::size_t batch_size) {
  if (pairs.empty()) throw Error(ErrorKind::empty_input, "no pairs to evaluate");
  ad::NoGradGuard no_grad;
  const BatchPlan plan = make_batches(pairs, {0, batch_size}, 0);
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& idx : plan.batches) {
    const Batch b = materialize(pairs, idx);
    const ad::Tensor logits = model.forward(b.src, b.tgt_in, {});
    total += nn::label_smoothed_loss(logits, b.tgt_out, bpe::kPad, epsilon).item() *
             static_cast<double>(b.target_tokens);
    tokens += b.target_tokens;
  }
  return total / static_cast<double>(tokens);
}

double evaluate_bleu(const nn::SeqModel& model, const std::vector<EncodedPair>& pairs,
                     const TokenView& view, const decode::DecodeConfig& config) {
  if (pairs.empty()) throw Error(ErrorKind::empty_input, "no pairs to evaluate");
  std::vector<Ids> srcs;
  for (const auto& p : pairs) srcs.push_back(p.src);
  std::vector<Ids> hyps;
  if (config.beam == 1) {
    hyps = decode::greedy_decode_batch(model, srcs, config);
  } else {
    for (const auto& s : srcs) hyps.push_back(decode::beam_decode(model, s, config).best.ids);
  }
  std::vector<double> scores;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    scores.push_back(bleu::sentence_bleu(view(hyps[i]), {view(pairs[i].tgt)}));
  }
  return bleu::corpus_average(scores).mean;
}

TrainResult train(nn::SeqModel& model, const std::vector<EncodedPair>& train_set,
                  const std::vector<EncodedPair>& dev_set, const TrainConfig& config,
                  const TokenView& view, const TrainOutput& output) {
  config.validate();
  if (train_set.empty()) throw Error(ErrorKind::empty_input, "empty training corpus");
  if (dev_set.empty()) throw Error(ErrorKind::empty_input, "empty dev corpus");
  const auto started = std::chrono::steady_clock::now();
  if (config.dropout) model.set_dropout(*config.dropout);

  auto log = [&](const std::string& line) {
    if (output.log) output.log(line);
  };
  const bool writing = !output.run_dir.empty();
  if (writing) {
    fs::create_directories(fs::path(output.run_dir) / "checkpoints");
    std::string cfg;
    for (const auto& [k, v] : model.config().to_kv()) cfg += k + "=" + v + "\n";
    for (const auto& [k, v] : config.to_kv()) cfg += k + "=" + v + "\n";
    write_file((fs::path(output.run_dir) / "config.txt").string(), cfg);
  }

  nn::ParameterStore& params = model.parameters();
  bool trainable = false;
  for (const auto& p : params.items()) trainable = trainable || p.tensor.requires_grad();

  TrainResult result;
  TrainReport& report = result.report;
  AdamState& adam = result.adam;
  const AdamOptions adam_opts{config.beta1, config.beta2, config.adam_eps, config.clip_norm};

  std::vector<std::vector<double>> best_params = snapshot(params);
  double best_bleu = -1.0;
  double best_dev_loss = std::numeric_limits<double>::infinity();
  std::size_t stale_epochs = 0;
  std::size_t shrinks = 0;
  std::size_t global_step = 0;
  std::vector<std::size_t> saved_epochs;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = config.learning_rate * std::pow(config.lr_shrink, static_cast<double>(shrinks));
    const BatchPlan plan = make_batches(train_set, {config.max_tokens, config.batch_size},
                                        derive_seed(config.seed, "batches/" + std::to_string(epoch)));
    report.skipped_pairs = plan.skipped;
    Rng dropout_rng(derive_seed(config.seed, "dropout/" + std::to_string(epoch)));
    const nn::ForwardContext ctx{true, &dropout_rng};

    double loss_sum = 0.0;
    std::size_t loss_tokens = 0;
    std::size_t steps = 0;
    for (const auto& idx : plan.batches) {
      const Batch b = materialize(train_set, idx);
      double loss_value = 0.0;
      if (trainable) {
        const ad::Tensor logits = model.forward(b.src, b.tgt_in, ctx);
        const ad::Tensor loss = nn::label_smoothed_loss(logits, b.tgt_out, bpe::kPad, config.label_smoothing);
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) {
          report.diverged = true;
          break;
        }
        params.zero_grad();
        ad::backward(loss);
        ++global_step;
        double step_lr = lr;
        if (config.warmup_steps > 0 && global_step < config.warmup_steps) {
          step_lr = lr * static_cast<double>(global_step) / static_cast<double>(config.warmup_steps);
        }
        try {
          adam_step(params, adam, step_lr, adam_opts);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::numeric_fault) throw;
          report.diverged = true;
          break;
        }
      } else {
        ad::NoGradGuard no_grad;
        const ad::Tensor logits = model.forward(b.src, b.tgt_in, ctx);
        loss_value = nn::label_smoothed_loss(logits, b.tgt_out, bpe::kPad, config.label_smoothing).item();
      }
      loss_sum += loss_value * static_cast<double>(b.target_tokens);
      loss_tokens += b.target_tokens;
      ++steps;
    }
    if (report.diverged) {
      log("epoch " + std::to_string(epoch) + ": non-finite loss or gradient, stopping");
      break;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_tokens ? loss_sum / static_cast<double>(loss_tokens) : 0.0;
    rec.dev_loss = evaluate_loss(model, dev_set, config.label_smoothing);
    rec.lr = lr;
    rec.steps = steps;
    const bool eval_bleu = epoch % config.eval_bleu_every == 0 || epoch == config.epochs;
    rec.dev_bleu = eval_bleu ? evaluate_bleu(model, dev_set, view, config.dev_decode)
                             : std::numeric_limits<double>::quiet_NaN();
    report.epochs.push_back(rec);

    const bool is_best = eval_bleu && rec.dev_bleu > best_bleu;
    if (is_best) {
      best_bleu = rec.dev_bleu;
      report.best_epoch = epoch;
      best_params = snapshot(params);
    }
    if (writing) {
      std::map<std::string, std::string> meta = output.meta;
      meta["epoch"] = std::to_string(epoch);
      meta["dev.loss"] = format_double(rec.dev_loss);
      meta["dev.bleu"] = format_double(rec.dev_bleu);
      const fs::path ckdir = fs::path(output.run_dir) / "checkpoints";
      save_checkpoint(model, &adam, meta, (ckdir / epoch_name(epoch)).string());
      saved_epochs.push_back(epoch);
      if (is_best) fs::copy_file(ckdir / epoch_name(epoch), fs::path(output.run_dir) / "best.dmt",
                                 fs::copy_options::overwrite_existing);
      if (config.keep_last > 0) {
        while (saved_epochs.size() > config.keep_last) {
          const auto victim = std::find_if(saved_epochs.begin(), saved_epochs.end(),
                                           [&](std::size_t e) { return e != report.best_epoch; });
          if (victim == saved_epochs.end() ||
              static_cast<std::size_t>(saved_epochs.end() - victim) <= config.keep_last) {
            break;
          }
          fs::remove(ckdir / epoch_name(*victim));
          saved_epochs.erase(victim);
        }
      }
      write_file((fs::path(output.run_dir) / "report.tsv").string(), format_report(report));
    }
    log("epoch " + std::to_string(epoch) + " train_loss=" + format_fixed(rec.train_loss, 4) +
        " dev_loss=" + format_fixed(rec.dev_loss, 4) +
        (eval_bleu ? " dev_bleu=" + format_fixed(rec.dev_bleu, 4) : std::string()) +
        " lr=" + format_double(lr));

    if (rec.dev_loss < best_dev_loss - config.min_improvement) {
      best_dev_loss = rec.dev_loss;
      stale_epochs = 0;
    } else if (++stale_epochs >= config.patience) {
      ++shrinks;
      stale_epochs = 0;
    }
    if (config.target_dev_bleu && eval_bleu && rec.dev_bleu >= *config.target_dev_bleu) {
      report.stopped_early = true;
      break;
    }
  }

  restore(params, best_params);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace dmt::train
