#pragma once

// Mini-batch training with Adam and global-norm clipping, held-out
// diagnostics, checkpoints and exact resumption.
//
// Every random draw during training is a function of (seed, step): the
// batch order comes from a per-epoch shuffle and the reparameterization and
// word-dropout noise from a per-step stream. Resuming from a checkpoint at
// step k therefore replays steps k+1.. exactly.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "autogen/checkpoint.hpp"
#include "autogen/corpus.hpp"
#include "autogen/objectives.hpp"
#include "autogen/seqmodel.hpp"

namespace autogen {

struct TrainConfig {
  std::int64_t embed_dim = 64;
  std::int64_t hidden_dim = 128;
  std::int64_t latent_dim = 16;

  std::int64_t batch_size = 32;       // full scale: 200
  std::int64_t total_steps = 5000;    // full scale: 10^6
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double clip_norm = 5.0;             // <= 0 disables clipping

  ObjectiveConfig objective = ObjectiveConfig::standard();
  double word_dropout = 0.3;

  std::int64_t eval_every = 100;
  std::int64_t eval_sentences = 512;
  std::int64_t eval_samples = 1;
  std::int64_t checkpoint_every = 1000;  // 0: final checkpoint only
  std::uint64_t seed = 0;

  void validate() const;  // ConfigError
  ModelDims dims(std::int64_t vocab_size) const;
  /// key = value lines covering every field.
  std::string describe() const;
};

/// One evaluation point. recon/kl/total/kl_fraction/elbo are held-out
/// values; train_* are the mini-batch values of the step just taken.
struct MetricsRow {
  std::int64_t step = 0;
  double recon = 0.0;
  double kl = 0.0;
  double total = 0.0;
  double kl_fraction = 0.0;
  double elbo = 0.0;
  double train_recon = 0.0;
  double train_kl = 0.0;
  double train_total = 0.0;
  double lambda = 1.0;  // KL weight in force at this step

  bool operator==(const MetricsRow&) const = default;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;

  static constexpr const char* kHeader =
      "step,recon,kl,total,kl_fraction,elbo,train_recon,train_kl,train_total,lambda";

  /// Values printed with 17 significant digits, so equal tables give equal bytes.
  std::string to_csv() const;
  static MetricsTable from_csv(const std::string& text);  // DataError
  void write(const std::filesystem::path& path) const;
  static MetricsTable read(const std::filesystem::path& path);

  bool operator==(const MetricsTable&) const = default;
};

struct EvalResult {
  double recon = 0.0;
  double kl = 0.0;
  double elbo = 0.0;
  Eigen::VectorXd per_sentence_elbo;
};

/// Word dropout off; each sentence's values are averaged over n_samples
/// reparameterized draws. InvalidInputError on an empty set.
EvalResult evaluate_elbo(const ModelParameters& params, std::span<const TokenSequence> sentences,
                         std::int64_t n_samples, std::uint64_t seed);

struct TrainState {
  ModelParameters params;
  AdamState adam;
  std::int64_t step = 0;  // optimizer updates applied so far
};

TrainState initial_state(const TrainConfig& config, std::int64_t vocab_size);

/// Restores state from a checkpoint; ValidationError when it carries no
/// optimizer state or its dims differ from the config's.
TrainState state_from_checkpoint(const Checkpoint& checkpoint, const TrainConfig& config,
                                 std::int64_t vocab_size);

struct TrainHooks {
  /// Checkpoints (ckpt_<step>.bin and latest.bin) go here when non-empty.
  std::filesystem::path checkpoint_dir;
  std::string config_text;  // stored in checkpoints
  std::function<void(const MetricsRow&, double seconds)> on_eval;
  /// Stop after this step even if total_steps is larger (for resume tests).
  std::optional<std::int64_t> stop_after;
};

struct TrainResult {
  TrainState state;
  MetricsTable metrics;
  std::vector<double> wallclock;  // seconds since start, per metrics row
};

/// Runs optimizer updates from state.step to config.total_steps. Rows are
/// logged at step 0 (fresh runs only), every eval_every steps and at the
/// final step. A non-finite loss raises DivergenceError; checkpoints already
/// written stay untouched.
TrainResult train(TrainState state, const SplitCorpus& corpus, const TrainConfig& config,
                  const TrainHooks& hooks = {});

/// Indices of the training sentences forming the batch of a given step.
std::vector<std::size_t> batch_indices(std::size_t corpus_size, std::int64_t batch_size,
                                       std::int64_t step, std::uint64_t seed);

struct NamedTable {
  std::string name;
  MetricsTable table;
};

struct RunComparison {
  std::vector<std::string> names;
  std::vector<std::int64_t> steps;
  std::vector<std::vector<double>> kl_fraction;  // [model][row]
  std::vector<std::vector<double>> elbo;
  std::vector<std::vector<double>> kl;
  std::vector<std::string> kl_fraction_order;  // names, largest final kl_fraction first
  std::vector<std::string> elbo_order;         // names, largest final elbo first

  /// step, then <name>_kl_fraction, <name>_elbo, <name>_kl per model.
  std::string aligned_csv() const;
  std::string summary() const;
};

/// ValidationError unless there are >= 2 tables on the same step grid.
RunComparison compare_runs(const std::vector<NamedTable>& tables);

}  // namespace autogen
