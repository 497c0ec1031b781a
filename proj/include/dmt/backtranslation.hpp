#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dmt/corpus.hpp"
#include "dmt/decoding.hpp"
#include "dmt/models.hpp"
#include "dmt/training.hpp"

namespace dmt::bt {

/// Which side of a pseudo pair is machine output. The default keeps the
/// monolingual sentence as the (authentic) target.
enum class Direction { synthetic_source, synthetic_target };

struct ProvenanceRow {
  std::size_t mono_line = 0;  // 1-based line in the monolingual input
  std::string checkpoint;     // fingerprint of the generating checkpoint
  std::string decode_config;  // hash of DecodeConfig::describe()
};

struct PseudoParallelCorpus {
  corpus::ParallelCorpus corpus;  // every pair has synthetic = true
  std::vector<ProvenanceRow> provenance;
  std::size_t dropped_empty = 0;
  std::size_t filtered = 0;  // rejected by the length-ratio filter
};

struct GenerateOptions {
  Direction direction = Direction::synthetic_source;
  // Keep pairs whose source/target token ratio lies in [first, second].
  std::optional<std::pair<double, double>> length_ratio;
};

/// Translates every monolingual sentence with `model`, whose pipeline context
/// must read `mono.lang`. With synthetic_source the pair is (translation,
/// sentence); with synthetic_target it is (sentence, translation).
PseudoParallelCorpus generate_pseudo_parallel(const nn::SeqModel& model,
                                              const std::string& checkpoint_fingerprint,
                                              const corpus::MonolingualCorpus& mono,
                                              const decode::PipelineContext& ctx,
                                              const decode::DecodeConfig& config,
                                              const GenerateOptions& options = {});

/// Writes the pair files plus a "line<TAB>checkpoint<TAB>decode" sidecar.
void write_pseudo(const PseudoParallelCorpus& pseudo, const std::string& src_path,
                  const std::string& tgt_path, const std::string& provenance_path);

/// `upsample_real` copies of `real` followed by `pseudo`, shuffled under seed.
corpus::ParallelCorpus mix(const corpus::ParallelCorpus& real, const corpus::ParallelCorpus& pseudo,
                           std::size_t upsample_real, std::uint64_t seed);

struct BtExperimentConfig {
  nn::ModelConfig model;
  train::TrainConfig reverse_train;
  train::TrainConfig forward_train;
  decode::DecodeConfig bt_decode{1, 0, 1.0};
  std::size_t bpe_merges = 0;
  bool transliterate = true;
  std::size_t upsample_real = 1;
  GenerateOptions generate;
  std::uint64_t seed = 1;
  std::string run_dir;  // empty: nothing written
};

struct BtReport {
  train::TrainReport reverse;
  train::TrainReport baseline;
  train::TrainReport augmented;
  double baseline_dev_bleu = 0.0;   // at each run's best epoch
  double augmented_dev_bleu = 0.0;
  PseudoParallelCorpus pseudo;
};

/// Reverse model on the swapped real corpus, pseudo pairs from `mono`, then a
/// forward baseline (real only) and a forward augmented run (real + pseudo)
/// from the same initialization and vocabularies.
BtReport bt_experiment(const BtExperimentConfig& config, const corpus::ParallelCorpus& real,
                       const corpus::ParallelCorpus& dev, const corpus::MonolingualCorpus& mono);

}  // namespace dmt::bt
