#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dmt/decoding.hpp"
#include "dmt/models.hpp"
#include "dmt/subword.hpp"

namespace dmt::train {

using Ids = std::vector<std::int32_t>;

/// One binarized pair. Both sides end with EOS (as produced by bpe::encode).
struct EncodedPair {
  Ids src;
  Ids tgt;
};

struct TrainConfig {
  double learning_rate = 0.0005;
  std::size_t max_tokens = 0;    // 0: disabled
  std::size_t batch_size = 128;  // 0: disabled
  std::size_t epochs = 25;
  double label_smoothing = 0.1;
  std::optional<double> dropout;  // overrides the model's rate when set
  double lr_shrink = 0.5;
  std::size_t patience = 1;
  double min_improvement = 1e-4;  // dev-loss gain that counts as progress
  double clip_norm = 0.0;         // global L2 norm; 0: off
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-8;
  std::size_t warmup_steps = 0;  // linear warmup; 0: flat rate

  // Dev BLEU is computed every `eval_bleu_every` epochs and at the last one.
  std::size_t eval_bleu_every = 1;
  // Stop after an epoch whose dev BLEU reaches this value.
  std::optional<double> target_dev_bleu;
  std::size_t keep_last = 0;  // epoch checkpoints kept on disk; 0: all
  decode::DecodeConfig dev_decode{1, 0, 1.0};

  void validate() const;
  /// Optimizer and clipping conventions for each model family.
  static TrainConfig defaults_for(nn::Arch arch);

  std::map<std::string, std::string> to_kv() const;
  /// Applies the "train." keys of `kv` on top of `base`.
  static TrainConfig from_kv(const std::map<std::string, std::string>& kv, TrainConfig base);
};

struct BatchSpec {
  std::size_t max_tokens = 0;
  std::size_t batch_size = 0;
};

struct BatchPlan {
  std::vector<std::vector<std::size_t>> batches;  // indices into the pair list
  std::size_t skipped = 0;                         // pairs longer than max_tokens
};

/// Stable sort by source length, then greedy packing under max_tokens (both
/// sides: longest length times row count) or fixed-size chunks; batch order
/// is shuffled under `seed`.
BatchPlan make_batches(const std::vector<EncodedPair>& pairs, const BatchSpec& spec,
                       std::uint64_t seed);

/// Padded tensors for one batch: decoder input is BOS + target without its
/// final token, decoder output is the target.
struct Batch {
  nn::IdBatch src;
  nn::IdBatch tgt_in;
  std::vector<std::int32_t> tgt_out;
  std::size_t target_tokens = 0;
};

Batch materialize(const std::vector<EncodedPair>& pairs, const std::vector<std::size_t>& indices);

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;
};

/// One bias-corrected Adam update of every parameter that requires grad.
/// Returns the global gradient norm before clipping. A non-finite gradient
/// throws numeric_fault before anything is modified.
double adam_step(nn::ParameterStore& params, AdamState& state, double lr, const AdamOptions& opts);

// ------------------------------------------------------------- checkpoints

inline constexpr char kCheckpointMagic[4] = {'D', 'M', 'T', '1'};

struct Checkpoint {
  std::map<std::string, std::string> meta;  // includes model.* and vocab sizes
  std::unique_ptr<nn::SeqModel> model;
  AdamState adam;
};

std::string serialize_checkpoint(const nn::SeqModel& model, const AdamState* adam,
                                 const std::map<std::string, std::string>& meta);
void save_checkpoint(const nn::SeqModel& model, const AdamState* adam,
                     const std::map<std::string, std::string>& meta, const std::string& path);

Checkpoint parse_checkpoint(std::string_view bytes);
/// When given, fingerprints must equal the recorded vocab.src/vocab.tgt ones.
Checkpoint load_checkpoint(const std::string& path, const std::string& src_fingerprint = "",
                           const std::string& tgt_fingerprint = "");

/// Metadata entries that tie a checkpoint to its vocabularies.
std::map<std::string, std::string> vocab_meta(const bpe::Vocabulary& src, const bpe::Vocabulary& tgt);

// ---------------------------------------------------------------- training

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double dev_bleu = 0.0;  // NaN when not evaluated this epoch
  double lr = 0.0;
  std::size_t steps = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based; max dev BLEU, earliest on ties
  double wall_seconds = 0.0;
  std::size_t skipped_pairs = 0;
  bool diverged = false;
  bool stopped_early = false;
};

/// "epoch train_loss dev_loss dev_bleu lr" TSV with a header line.
std::string format_report(const TrainReport& report);

/// Maps hypothesis/reference ids to the tokens BLEU compares.
using TokenView = std::function<std::vector<std::string>(const Ids&)>;

/// Tokens after dropping specials and undoing BPE.
TokenView subword_view(const bpe::Vocabulary& tgt_vocab);
/// Ids printed as numbers; for tests that have no vocabulary.
TokenView id_view();

struct TrainOutput {
  std::string run_dir;                       // empty: nothing written
  std::map<std::string, std::string> meta;   // merged into every checkpoint
  std::function<void(const std::string&)> log;
};

struct TrainResult {
  TrainReport report;
  AdamState adam;
};

/// Epoch loop with teacher forcing, dev evaluation and lr-shrink. On return
/// the model holds the best epoch's parameters.
TrainResult train(nn::SeqModel& model, const std::vector<EncodedPair>& train_set,
                  const std::vector<EncodedPair>& dev_set, const TrainConfig& config,
                  const TokenView& view, const TrainOutput& output = {});

/// Token-weighted mean label-smoothed loss without gradient tracking.
double evaluate_loss(const nn::SeqModel& model, const std::vector<EncodedPair>& pairs,
                     double epsilon, std::size_t batch_size = 64);

/// Mean sentence BLEU of batched greedy output against the targets.
double evaluate_bleu(const nn::SeqModel& model, const std::vector<EncodedPair>& pairs,
                     const TokenView& view, const decode::DecodeConfig& config);

}  // namespace dmt::train
