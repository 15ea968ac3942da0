#pragma once

// Recurrent sentence encoder q(z|x) and autoregressive decoder p(x|z).
//
// Both sides are single-layer GRUs over a shared word embedding. The latent
// z enters the decoder twice: through a tanh map to the initial hidden
// state and by concatenation to every input embedding. Training uses
// teacher forcing; word dropout replaces decoder inputs with UNK.

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "autogen/objectives.hpp"
#include "autogen/vocabulary.hpp"

namespace autogen {

struct ModelDims {
  std::int64_t vocab_size = 0;
  std::int64_t embed_dim = 64;
  std::int64_t hidden_dim = 128;
  std::int64_t latent_dim = 16;

  bool operator==(const ModelDims&) const = default;
};

/// A sentence as word ids, without BOS/EOS.
struct TokenSequence {
  std::vector<TokenId> ids;

  TokenSequence() = default;
  TokenSequence(std::initializer_list<TokenId> init) : ids(init) {}
  explicit TokenSequence(std::vector<TokenId> v) : ids(std::move(v)) {}

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  bool operator==(const TokenSequence&) const = default;
};

struct GruWeights {
  Eigen::MatrixXd w_input;   // 3H x I, gate rows ordered reset, update, candidate
  Eigen::MatrixXd w_hidden;  // 3H x H
  Eigen::VectorXd bias;      // 3H
};

struct TensorView {
  std::string_view name;
  std::span<double> values;
};

struct ConstTensorView {
  std::string_view name;
  std::span<const double> values;
};

struct ModelParameters {
  ModelDims dims;
  Eigen::MatrixXd embedding;  // E x V, one column per token
  GruWeights encoder;         // input E
  Eigen::MatrixXd w_mu;       // D x H
  Eigen::VectorXd b_mu;
  Eigen::MatrixXd w_logvar;   // D x H
  Eigen::VectorXd b_logvar;
  Eigen::MatrixXd w_latent;   // H x D, z -> decoder initial state
  Eigen::VectorXd b_latent;
  GruWeights decoder;         // input [embedding; z], E + D
  Eigen::MatrixXd w_out;      // V x H
  Eigen::VectorXd b_out;

  static ModelParameters zeros(const ModelDims& dims);

  std::vector<TensorView> tensors();
  std::vector<ConstTensorView> tensors() const;
  std::size_t parameter_count() const;
  bool all_finite() const;

  /// Bitwise equality of dims and every weight.
  bool operator==(const ModelParameters& other) const;
};

/// Which decoder input positions (x_1..x_L) are replaced by UNK.
struct DropoutPlan {
  std::vector<bool> replaced;
  double rate = 0.0;
  std::uint64_t seed = 0;

  static DropoutPlan none(std::size_t length);
  static DropoutPlan sample(std::size_t length, double rate, std::uint64_t seed);
  static DropoutPlan all(std::size_t length);
};

/// Per-sentence standard-normal noise and dropout plans for one batch.
struct BatchNoise {
  std::vector<Eigen::VectorXd> eps;
  std::vector<DropoutPlan> plans;
};

BatchNoise sample_batch_noise(std::span<const TokenSequence> batch,
                              std::int64_t latent_dim, double dropout_rate,
                              std::uint64_t seed);

/// Uniform(-0.1, 0.1) weights, zero biases; deterministic in seed.
ModelParameters init_parameters(const ModelDims& dims, std::uint64_t seed);

GaussianPosterior encode(const ModelParameters& params, const TokenSequence& x);

/// Column t (0-based) is the distribution over the token at output
/// position t+1 given z and teacher tokens before it; the last column is the
/// EOS slot. Shape V x (L + 1).
Eigen::MatrixXd decode_step_distributions(const ModelParameters& params,
                                          const Eigen::VectorXd& z,
                                          const TokenSequence& teacher_input,
                                          const DropoutPlan& plan);

/// Sum over positions of log P(token | z, prefix), EOS included. Returns
/// -infinity when some target has zero probability.
double sequence_log_prob(const ModelParameters& params, const Eigen::VectorXd& z,
                         const TokenSequence& x, const DropoutPlan& plan);

struct SentenceScores {
  Eigen::VectorXd recon;  // log p(x_b | z_b)
  Eigen::VectorXd kl;     // KL(q(z|x_b) || N(0, I))
};

/// Forward pass only, one reparameterized sample per sentence.
SentenceScores score_batch(const ModelParameters& params,
                           std::span<const TokenSequence> batch,
                           const BatchNoise& noise);

struct LossAndGradients {
  LossBreakdown loss;         // averaged per sentence
  ModelParameters gradient;   // of -total
};

LossAndGradients loss_and_gradients(const ModelParameters& params,
                                    std::span<const TokenSequence> batch,
                                    const ObjectiveConfig& config,
                                    const BatchNoise& noise, std::int64_t step);

/// Incremental decoder for search: holds z and its projections.
class DecoderStepper {
 public:
  DecoderStepper(const ModelParameters& params, Eigen::VectorXd z);

  Eigen::VectorXd initial_hidden() const;

  /// Feeds `input`, returns the next hidden state and writes the
  /// log-distribution over the following token into `log_probs`.
  Eigen::VectorXd step(const Eigen::VectorXd& hidden, TokenId input,
                       Eigen::VectorXd& log_probs) const;

  const Eigen::VectorXd& latent() const { return z_; }

 private:
  const ModelParameters* params_;
  Eigen::VectorXd z_;
  Eigen::VectorXd latent_projection_;  // decoder input weights applied to z, plus bias
};

}  // namespace autogen
