#pragma once

// Variational objective algebra: Gaussian KL, reparameterization, and the
// four training objectives (standard ELBO, KL-annealed ELBO, AutoGen(m) and
// beta-weighted ELBO). All objectives are maximized.

#include <cstdint>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace autogen {

inline constexpr double kLogvarMin = -10.0;
inline constexpr double kLogvarMax = 10.0;

/// Diagonal Gaussian q(z|x) = N(mu, diag(exp(logvar))). The prior is the
/// mu = 0, logvar = 0 instance.
struct GaussianPosterior {
  Eigen::VectorXd mu;
  Eigen::VectorXd logvar;

  /// Throws InvalidInputError on length mismatch, empty vectors or
  /// non-finite entries. Clamps logvar into [kLogvarMin, kLogvarMax].
  GaussianPosterior(Eigen::VectorXd mu, Eigen::VectorXd logvar);

  static GaussianPosterior standard_normal(Eigen::Index dim);

  Eigen::Index dim() const { return mu.size(); }
  Eigen::VectorXd stddev() const { return (0.5 * logvar.array()).exp(); }
};

enum class AnnealShape { kLinear, kSigmoid };

struct AnnealSchedule {
  AnnealShape shape = AnnealShape::kLinear;
  std::int64_t warmup_steps = 1000;
};

enum class ObjectiveMode { kStandard, kAnnealed, kAutogen, kBeta };

std::string_view to_string(ObjectiveMode mode);
ObjectiveMode parse_objective_mode(std::string_view name);
std::string_view to_string(AnnealShape shape);
AnnealShape parse_anneal_shape(std::string_view name);

/// Which objective to assemble. Use the named constructors; they validate
/// that exactly the fields the mode needs are meaningful.
class ObjectiveConfig {
 public:
  static ObjectiveConfig standard();
  static ObjectiveConfig autogen(double m);
  static ObjectiveConfig beta(double beta);
  static ObjectiveConfig annealed(AnnealSchedule schedule);

  ObjectiveMode mode() const { return mode_; }
  double m() const { return m_; }
  double beta() const { return beta_; }
  const AnnealSchedule& schedule() const { return schedule_; }

  /// Weights (c_recon, c_kl) such that total = c_recon * R - c_kl * K.
  std::pair<double, double> coefficients(std::int64_t step) const;

  /// Equivalent AutoGen m at a given step (infinite when the KL weight is 0).
  double effective_m(std::int64_t step) const;

  std::string describe() const;

 private:
  ObjectiveConfig() = default;

  ObjectiveMode mode_ = ObjectiveMode::kStandard;
  double m_ = 0.0;
  double beta_ = 1.0;
  AnnealSchedule schedule_{};
};

struct LossBreakdown {
  double recon = 0.0;  // R = <log p(x|z)>, nats per sentence
  double kl = 0.0;     // K >= 0
  double total = 0.0;  // assembled objective
  double kl_fraction = 0.0;
};

/// Sum_i 0.5 (mu_i^2 + exp(logvar_i) - 1 - logvar_i).
double kl_gaussian_standard_normal(const GaussianPosterior& q);

struct KlGradient {
  Eigen::VectorXd d_mu;
  Eigen::VectorXd d_logvar;
};
KlGradient kl_gaussian_standard_normal_gradient(const GaussianPosterior& q);

/// mu + exp(logvar / 2) * noise.
Eigen::VectorXd reparameterize(const GaussianPosterior& q,
                               const Eigen::Ref<const Eigen::VectorXd>& noise);

LossBreakdown assemble_objective(double recon, double kl,
                                 const ObjectiveConfig& config,
                                 std::int64_t step);

/// K / ((1 + m_eff)(-R) + K); K / (K + 1e-12) when R >= 0.
double kl_fraction(double recon, double kl, double m_eff);

double beta_of_m(double m);
double m_of_anneal_weight(double lambda);
double anneal_weight(const AnnealSchedule& schedule, std::int64_t step);

}  // namespace autogen
