#pragma once

// Decoding: beam search over an autoregressive scorer, reconstruction
// through a sampled latent, generation from the prior and latent
// interpolation.

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "autogen/objectives.hpp"
#include "autogen/seqmodel.hpp"

namespace autogen {

/// Next-token log-distributions of an autoregressive model. Tokens whose
/// entry is -infinity are never proposed.
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  virtual TokenId eos() const = 0;
  virtual Eigen::VectorXd next_log_probs(std::span<const TokenId> prefix) = 0;
};

struct BeamHypothesis {
  std::vector<TokenId> tokens;  // ends with EOS when finished
  double log_prob = 0.0;
  bool finished = false;
};

struct BeamConfig {
  int beam_width = 5;
  int max_length = 40;  // emitted tokens, EOS included
};

/// Plain beam search of one width. Scores are joint log probabilities with
/// no length normalization; equal scores are ordered by lexicographic token
/// ids. Returns the best finished hypothesis, or the best unfinished one
/// (finished = false) when none ends within max_length.
BeamHypothesis beam_search_fixed(StepScorer& scorer, int beam_width, int max_length);

/// Best result over widths 1..beam_width, so the answer never scores below
/// greedy decoding and never gets worse as the width grows.
BeamHypothesis beam_search(StepScorer& scorer, const BeamConfig& config);

/// Drives a DecoderStepper for a fixed z, caching hidden states by prefix.
/// PAD and BOS are never proposed, nor EOS as the first token.
class ModelScorer final : public StepScorer {
 public:
  ModelScorer(const ModelParameters& params, Eigen::VectorXd z);
  TokenId eos() const override { return kEosId; }
  Eigen::VectorXd next_log_probs(std::span<const TokenId> prefix) override;

 private:
  struct Entry {
    Eigen::VectorXd hidden;     // after consuming the prefix
    Eigen::VectorXd log_probs;  // over the following token
  };
  const Entry& lookup(std::span<const TokenId> prefix);

  DecoderStepper stepper_;
  std::map<std::vector<TokenId>, Entry> cache_;
};

struct Decoded {
  TokenSequence tokens;  // EOS stripped
  double log_prob = 0.0;
  bool finished = true;
  Eigen::VectorXd z;
};

Decoded decode_latent(const ModelParameters& params, const Eigen::VectorXd& z, const BeamConfig& config);

/// z drawn once from q(z|x) with the given seed, then beam search.
Decoded reconstruct(const ModelParameters& params, const TokenSequence& x, const BeamConfig& config,
                    std::uint64_t seed);

/// z ~ N(0, I); beam search, or ancestral sampling when `sample` is set.
Decoded generate_from_prior(const ModelParameters& params, const BeamConfig& config, std::uint64_t seed,
                            bool sample = false);

/// The latent generate_from_prior uses for a given seed.
Eigen::VectorXd prior_latent(std::int64_t latent_dim, std::uint64_t seed);

struct InterpolationPath {
  std::vector<Eigen::VectorXd> points;
  GaussianPosterior start;
  GaussianPosterior end;
};

/// z1 ~ q(z|x1), z2 ~ q(z|x2), points z1 + k/(P-1) (z2 - z1) for k = 0..P-1.
InterpolationPath interpolation_path(const ModelParameters& params, const TokenSequence& x1,
                                     const TokenSequence& x2, int points, std::uint64_t seed);

struct Interpolation {
  InterpolationPath path;
  std::vector<Decoded> sentences;
};

Interpolation interpolate(const ModelParameters& params, const TokenSequence& x1, const TokenSequence& x2,
                          int points, const BeamConfig& config, std::uint64_t seed);

/// Sentences with a word count in [min_len, max_len] and no UNK, in input
/// order, at most first_k of them when first_k > 0.
std::vector<TokenSequence> presentation_filter(std::span<const TokenSequence> sentences, int min_len = 4,
                                               int max_len = 20, std::size_t first_k = 0);

}  // namespace autogen
