#include "autogen/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "autogen/errors.hpp"

namespace autogen {

namespace {

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

}  // namespace

GaussianPosterior::GaussianPosterior(Eigen::VectorXd mu_in,
                                     Eigen::VectorXd logvar_in)
    : mu(std::move(mu_in)), logvar(std::move(logvar_in)) {
  if (mu.size() == 0 || mu.size() != logvar.size()) {
    throw InvalidInputError("GaussianPosterior: mu and logvar must have equal length >= 1");
  }
  if (!all_finite(mu) || !all_finite(logvar)) {
    throw InvalidInputError("GaussianPosterior: non-finite parameters");
  }
  logvar = logvar.cwiseMax(kLogvarMin).cwiseMin(kLogvarMax);
}

GaussianPosterior GaussianPosterior::standard_normal(Eigen::Index dim) {
  return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Zero(dim)};
}

std::string_view to_string(ObjectiveMode mode) {
  switch (mode) {
    case ObjectiveMode::kStandard: return "standard";
    case ObjectiveMode::kAnnealed: return "annealed";
    case ObjectiveMode::kAutogen: return "autogen";
    case ObjectiveMode::kBeta: return "beta";
  }
  return "unknown";
}

ObjectiveMode parse_objective_mode(std::string_view name) {
  if (name == "standard") return ObjectiveMode::kStandard;
  if (name == "annealed") return ObjectiveMode::kAnnealed;
  if (name == "autogen") return ObjectiveMode::kAutogen;
  if (name == "beta") return ObjectiveMode::kBeta;
  throw ConfigError("unknown objective mode '" + std::string(name) + "'");
}

std::string_view to_string(AnnealShape shape) {
  return shape == AnnealShape::kLinear ? "linear" : "sigmoid";
}

AnnealShape parse_anneal_shape(std::string_view name) {
  if (name == "linear") return AnnealShape::kLinear;
  if (name == "sigmoid") return AnnealShape::kSigmoid;
  throw ConfigError("unknown anneal shape '" + std::string(name) + "'");
}

ObjectiveConfig ObjectiveConfig::standard() { return ObjectiveConfig{}; }

ObjectiveConfig ObjectiveConfig::autogen(double m) {
  if (!std::isfinite(m) || m < 0.0) {
    throw OutOfDomainError("autogen objective requires finite m >= 0");
  }
  ObjectiveConfig c;
  c.mode_ = ObjectiveMode::kAutogen;
  c.m_ = m;
  return c;
}

ObjectiveConfig ObjectiveConfig::beta(double beta) {
  if (!std::isfinite(beta) || beta <= 0.0) {
    throw OutOfDomainError("beta objective requires finite beta > 0");
  }
  ObjectiveConfig c;
  c.mode_ = ObjectiveMode::kBeta;
  c.beta_ = beta;
  return c;
}

ObjectiveConfig ObjectiveConfig::annealed(AnnealSchedule schedule) {
  if (schedule.warmup_steps <= 0) {
    throw OutOfDomainError("anneal schedule requires warmup_steps > 0");
  }
  ObjectiveConfig c;
  c.mode_ = ObjectiveMode::kAnnealed;
  c.schedule_ = schedule;
  return c;
}

std::pair<double, double> ObjectiveConfig::coefficients(std::int64_t step) const {
  switch (mode_) {
    case ObjectiveMode::kStandard: return {1.0, 1.0};
    case ObjectiveMode::kAutogen: return {1.0 + m_, 1.0};
    case ObjectiveMode::kBeta: return {1.0, beta_};
    case ObjectiveMode::kAnnealed: return {1.0, anneal_weight(schedule_, step)};
  }
  return {1.0, 1.0};
}

double ObjectiveConfig::effective_m(std::int64_t step) const {
  switch (mode_) {
    case ObjectiveMode::kStandard: return 0.0;
    case ObjectiveMode::kAutogen: return m_;
    case ObjectiveMode::kBeta: return 1.0 / beta_ - 1.0;
    case ObjectiveMode::kAnnealed: {
      const double lambda = anneal_weight(schedule_, step);
      if (lambda <= 0.0) return std::numeric_limits<double>::infinity();
      return m_of_anneal_weight(lambda);
    }
  }
  return 0.0;
}

std::string ObjectiveConfig::describe() const {
  std::ostringstream out;
  out << to_string(mode_);
  switch (mode_) {
    case ObjectiveMode::kAutogen: out << "(m=" << m_ << ")"; break;
    case ObjectiveMode::kBeta: out << "(beta=" << beta_ << ")"; break;
    case ObjectiveMode::kAnnealed:
      out << "(" << to_string(schedule_.shape) << ", warmup=" << schedule_.warmup_steps << ")";
      break;
    default: break;
  }
  return out.str();
}

double kl_gaussian_standard_normal(const GaussianPosterior& q) {
  const auto& mu = q.mu.array();
  const auto& lv = q.logvar.array();
  const double kl = 0.5 * (mu.square() + lv.exp() - 1.0 - lv).sum();
  if (!std::isfinite(kl)) throw InvalidInputError("KL: non-finite result");
  // Rounding can leave tiny negative values when q is within ulps of the prior.
  return std::max(kl, 0.0);
}

KlGradient kl_gaussian_standard_normal_gradient(const GaussianPosterior& q) {
  return {q.mu, 0.5 * (q.logvar.array().exp() - 1.0).matrix()};
}

Eigen::VectorXd reparameterize(const GaussianPosterior& q,
                               const Eigen::Ref<const Eigen::VectorXd>& noise) {
  if (noise.size() != q.dim()) {
    throw InvalidInputError("reparameterize: noise length " + std::to_string(noise.size()) +
                            " does not match latent dimension " + std::to_string(q.dim()));
  }
  return q.mu + q.stddev().cwiseProduct(noise);
}

double kl_fraction(double recon, double kl, double m_eff) {
  if (recon >= 0.0) return kl / (kl + 1e-12);
  if (std::isinf(m_eff)) return 0.0;
  const double denom = (1.0 + m_eff) * (-recon) + kl;
  return kl / denom;
}

LossBreakdown assemble_objective(double recon, double kl,
                                 const ObjectiveConfig& config,
                                 std::int64_t step) {
  if (!(kl >= 0.0)) throw InvalidInputError("assemble_objective: kl must be >= 0");
  if (!std::isfinite(recon) && recon != -std::numeric_limits<double>::infinity()) {
    throw InvalidInputError("assemble_objective: recon must not be NaN or +inf");
  }
  LossBreakdown out;
  out.recon = recon;
  out.kl = kl;
  switch (config.mode()) {
    case ObjectiveMode::kStandard: out.total = recon - kl; break;
    case ObjectiveMode::kAutogen: out.total = (1.0 + config.m()) * recon - kl; break;
    case ObjectiveMode::kBeta: out.total = recon - config.beta() * kl; break;
    case ObjectiveMode::kAnnealed:
      out.total = recon - anneal_weight(config.schedule(), step) * kl;
      break;
  }
  out.kl_fraction = kl_fraction(recon, kl, config.effective_m(step));
  return out;
}

double beta_of_m(double m) {
  if (!(m >= 0.0) || !std::isfinite(m)) throw OutOfDomainError("beta_of_m: m must be finite and >= 0");
  return 1.0 / (1.0 + m);
}

double m_of_anneal_weight(double lambda) {
  if (!(lambda > 0.0) || lambda > 1.0) {
    throw OutOfDomainError("m_of_anneal_weight: lambda must lie in (0, 1]");
  }
  return 1.0 / lambda - 1.0;
}

double anneal_weight(const AnnealSchedule& schedule, std::int64_t step) {
  if (step <= 0) return 0.0;
  if (step >= schedule.warmup_steps) return 1.0;
  const double t = static_cast<double>(step) / static_cast<double>(schedule.warmup_steps);
  switch (schedule.shape) {
    case AnnealShape::kLinear: return t;
    case AnnealShape::kSigmoid: {
      // Logistic curve rescaled so that weight(0) = 0 and weight(warmup) = 1.
      auto logistic = [](double u) { return 1.0 / (1.0 + std::exp(-10.0 * (u - 0.5))); };
      const double lo = logistic(0.0);
      const double hi = logistic(1.0);
      return (logistic(t) - lo) / (hi - lo);
    }
  }
  return 1.0;
}

}  // namespace autogen
