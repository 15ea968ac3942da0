#pragma once

// Exact evaluation on tiny models with a one-dimensional latent.
//
// A TinyModel enumerates every sequence it can emit (at most 4 content tokens
// plus EOS, length <= 3) and assigns p(x|z) as a softmax over sequences with
// logits offset_x + slope_x * z. Integrals against N(0, 1) use
// Gauss-Hermite quadrature, so the generation, reconstruction and AutoGen
// joint likelihoods can be computed to near machine precision and compared
// against their variational bounds.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "autogen/objectives.hpp"
#include "autogen/vocabulary.hpp"

namespace autogen::oracle {

inline constexpr int kMaxTinyVocab = 4;   // content tokens, EOS excluded
inline constexpr int kMaxTinyLength = 3;

/// Nodes and weights for integrals against the standard normal density.
struct GaussHermiteRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;  // sum to 1
};

/// Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
GaussHermiteRule gauss_hermite_rule(int node_count);

/// A rule together with its doubled refinement for convergence checks.
class Quadrature {
 public:
  explicit Quadrature(int node_count = 64, bool check_convergence = true);

  const GaussHermiteRule& rule() const { return rule_; }
  const GaussHermiteRule& refined() const { return refined_; }
  int node_count() const { return static_cast<int>(rule_.nodes.size()); }
  bool check_convergence() const { return check_; }

 private:
  GaussHermiteRule rule_;
  GaussHermiteRule refined_;
  bool check_;
};

class TinyModel {
 public:
  /// All sequences over tokens 0..vocab-1 with length 1..max_length.
  TinyModel(int vocab, int max_length, Eigen::VectorXd offsets, Eigen::VectorXd slopes);

  static TinyModel random(int vocab, int max_length, std::uint64_t seed,
                          double offset_scale = 1.0, double slope_scale = 0.8);

  /// A decoder that ignores z: p(x|z) = probabilities(x).
  static TinyModel constant(int vocab, int max_length, const Eigen::VectorXd& probabilities);

  int vocab() const { return vocab_; }
  int max_length() const { return max_length_; }
  std::size_t size() const { return sequences_.size(); }
  const std::vector<std::vector<TokenId>>& sequences() const { return sequences_; }
  const Eigen::VectorXd& offsets() const { return offsets_; }
  const Eigen::VectorXd& slopes() const { return slopes_; }

  /// Index of a sequence in the enumeration; throws InvalidInputError if absent.
  std::size_t index_of(const std::vector<TokenId>& sequence) const;

  /// log p(x_i | z) for every enumerated x_i.
  Eigen::VectorXd log_probs(double z) const;
  double log_prob(std::size_t x, double z) const;

  /// Text table: a header line "tiny-model <vocab> <max_length>", then one row
  /// per sequence: space-separated tokens, TAB, offset, TAB, slope.
  std::string to_table() const;
  static TinyModel from_table(const std::string& text);

 private:
  int vocab_;
  int max_length_;
  std::vector<std::vector<TokenId>> sequences_;
  Eigen::VectorXd offsets_;
  Eigen::VectorXd slopes_;
};

/// log of integral p(x|z) N(z) dz.
double log_marginal(const TinyModel& model, std::size_t x, const Quadrature& quad);

/// log of integral p(x'=x|z) p(z|x) dz with p(z|x) = p(x|z) N(z) / p(x).
double log_reconstruction_likelihood(const TinyModel& model, std::size_t x,
                                     const Quadrature& quad);

/// log of integral p(x|z)^(1+m) N(z) dz: the AutoGen(m) joint of one
/// generation and m tied reconstructions.
double exact_autogen_value(const TinyModel& model, std::size_t x, const Quadrature& quad,
                           double m);

/// (1+m) <log p(x|z)>_q - KL(q || N(0,1)) with the expectation by quadrature.
double autogen_bound(const TinyModel& model, std::size_t x, const GaussianPosterior& q,
                     const Quadrature& quad, double m);

/// exact_autogen_value - autogen_bound; nonnegative up to rounding.
double bound_gap(const TinyModel& model, std::size_t x, const GaussianPosterior& q,
                 const Quadrature& quad, double m);

/// A distribution supported on the quadrature nodes.
struct GridPosterior {
  Eigen::VectorXd nodes;
  Eigen::VectorXd probabilities;
};

/// q*(z) proportional to p(x|z)^(1+m) N(z), represented on the base rule.
GridPosterior twisted_posterior(const TinyModel& model, std::size_t x, const Quadrature& quad,
                                double m);

/// The AutoGen(m) bound evaluated for a grid posterior (KL taken against the
/// prior's quadrature weights).
double grid_autogen_bound(const TinyModel& model, std::size_t x, const GridPosterior& q,
                          const Quadrature& quad, double m);

/// Mass of p(z|x) from Bayes' rule, integrated on the refined rule while p(x)
/// comes from the base rule.
double posterior_mass(const TinyModel& model, std::size_t x, const Quadrature& quad);

/// KL(q || p(z|x)) by quadrature against q.
double kl_to_true_posterior(const TinyModel& model, std::size_t x, const GaussianPosterior& q,
                            const Quadrature& quad);

struct OracleSweepReport {
  int models = 0;
  int evaluations = 0;
  double min_bound_gap = 0.0;            // over random q, all m
  double max_identity_error = 0.0;       // joint = generation + reconstruction
  double max_tightness_gap = 0.0;        // grid twisted posterior
  double max_total_probability_error = 0.0;
  double max_posterior_mass_error = 0.0;
  double max_refinement_change = 0.0;    // base vs doubled rule
};

/// Random tiny models x every enumerable x x random Gaussian q, for each m.
OracleSweepReport run_oracle_sweep(int model_count, int posteriors_per_x,
                                   const std::vector<double>& ms, std::uint64_t seed,
                                   const Quadrature& quad);

}  // namespace autogen::oracle
