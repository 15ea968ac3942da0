#include "autogen/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "autogen/errors.hpp"

namespace autogen::oracle {

using Eigen::VectorXd;

namespace {

constexpr double kConvergenceTolerance = 1e-8;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const VectorXd& v) {
  const double mx = v.maxCoeff();
  if (mx == kNegInf) return kNegInf;
  return mx + std::log((v.array() - mx).exp().sum());
}

// log of sum_j w_j f(z_j) given log f on the rule's nodes.
template <typename LogIntegrand>
double log_integrate(const GaussHermiteRule& rule, LogIntegrand&& log_f) {
  VectorXd terms(rule.nodes.size());
  for (Eigen::Index j = 0; j < rule.nodes.size(); ++j) {
    terms(j) = std::log(rule.weights(j)) + log_f(rule.nodes(j));
  }
  return log_sum_exp(terms);
}

template <typename Compute>
double with_convergence_check(const Quadrature& quad, const char* what, Compute&& compute) {
  const double base = compute(quad.rule());
  if (!quad.check_convergence()) return base;
  const double refined = compute(quad.refined());
  if (base == refined) return base;  // covers matching infinities
  if (!(std::abs(base - refined) <= kConvergenceTolerance)) {
    std::ostringstream msg;
    msg.precision(17);
    msg << what << ": quadrature not converged (" << quad.node_count() << " nodes: " << base
        << ", doubled: " << refined << ")";
    throw PrecisionError(msg.str());
  }
  return base;
}

void enumerate(int vocab, int max_length, std::vector<TokenId>& prefix,
               std::vector<std::vector<TokenId>>& out) {
  if (!prefix.empty()) out.push_back(prefix);
  if (static_cast<int>(prefix.size()) == max_length) return;
  for (TokenId t = 0; t < vocab; ++t) {
    prefix.push_back(t);
    enumerate(vocab, max_length, prefix, out);
    prefix.pop_back();
  }
}

double log_autogen_on(const TinyModel& model, std::size_t x, const GaussHermiteRule& rule,
                      double power) {
  return log_integrate(rule, [&](double z) { return power * model.log_prob(x, z); });
}

double expected_log_prob(const TinyModel& model, std::size_t x, const GaussianPosterior& q,
                         const GaussHermiteRule& rule) {
  const double mu = q.mu(0);
  const double sigma = std::exp(0.5 * q.logvar(0));
  double acc = 0.0;
  for (Eigen::Index j = 0; j < rule.nodes.size(); ++j) {
    acc += rule.weights(j) * model.log_prob(x, mu + sigma * rule.nodes(j));
  }
  return acc;
}

void require_1d(const GaussianPosterior& q) {
  if (q.dim() != 1) throw InvalidInputError("oracle posteriors must be one-dimensional");
}

}  // namespace

GaussHermiteRule gauss_hermite_rule(int node_count) {
  if (node_count < 1) throw InvalidInputError("quadrature needs at least one node");
  // Monic recurrence He_{k+1} = z He_k - k He_{k-1}: zero diagonal,
  // off-diagonal sqrt(k).
  VectorXd diag = VectorXd::Zero(node_count);
  VectorXd sub(std::max(node_count - 1, 0));
  for (int k = 1; k < node_count; ++k) sub(k - 1) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  GaussHermiteRule rule;
  rule.nodes = solver.eigenvalues();
  rule.weights = solver.eigenvectors().row(0).transpose().array().square().matrix();
  // Symmetrize to remove the solver's rounding asymmetry.
  const int n = node_count;
  for (int i = 0; i < n / 2; ++i) {
    const double z = 0.5 * (rule.nodes(n - 1 - i) - rule.nodes(i));
    const double w = 0.5 * (rule.weights(i) + rule.weights(n - 1 - i));
    rule.nodes(i) = -z;
    rule.nodes(n - 1 - i) = z;
    rule.weights(i) = w;
    rule.weights(n - 1 - i) = w;
  }
  if (n % 2 == 1) rule.nodes(n / 2) = 0.0;
  rule.weights /= rule.weights.sum();
  return rule;
}

Quadrature::Quadrature(int node_count, bool check_convergence)
    : rule_(gauss_hermite_rule(node_count)),
      refined_(check_convergence ? gauss_hermite_rule(2 * node_count) : GaussHermiteRule{}),
      check_(check_convergence) {}

TinyModel::TinyModel(int vocab, int max_length, VectorXd offsets, VectorXd slopes)
    : vocab_(vocab), max_length_(max_length), offsets_(std::move(offsets)), slopes_(std::move(slopes)) {
  if (vocab < 1 || vocab > kMaxTinyVocab || max_length < 1 || max_length > kMaxTinyLength) {
    throw InvalidInputError("tiny model needs 1 <= vocab <= 4 and 1 <= max_length <= 3");
  }
  std::vector<TokenId> prefix;
  enumerate(vocab, max_length, prefix, sequences_);
  std::sort(sequences_.begin(), sequences_.end(), [](const auto& a, const auto& b) {
    return a.size() != b.size() ? a.size() < b.size() : a < b;
  });
  const auto n = static_cast<Eigen::Index>(sequences_.size());
  if (offsets_.size() != n || slopes_.size() != n) {
    throw InvalidInputError("tiny model expects " + std::to_string(n) + " offsets and slopes");
  }
  if (!offsets_.allFinite() || !slopes_.allFinite()) throw InvalidInputError("tiny model parameters must be finite");
}

TinyModel TinyModel::random(int vocab, int max_length, std::uint64_t seed, double offset_scale,
                            double slope_scale) {
  Eigen::Index count = 0;
  for (Eigen::Index len = 1, block = vocab; len <= max_length; ++len, block *= vocab) count += block;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> offset_d(0.0, offset_scale);
  std::uniform_real_distribution<double> slope_d(-slope_scale, slope_scale);
  VectorXd offsets(count), slopes(count);
  for (Eigen::Index i = 0; i < count; ++i) {
    offsets(i) = offset_d(rng);
    slopes(i) = slope_d(rng);
  }
  return {vocab, max_length, std::move(offsets), std::move(slopes)};
}

TinyModel TinyModel::constant(int vocab, int max_length, const VectorXd& probabilities) {
  if ((probabilities.array() <= 0.0).any()) throw InvalidInputError("constant tiny model needs positive probabilities");
  return {vocab, max_length, probabilities.array().log().matrix(), VectorXd::Zero(probabilities.size())};
}

std::size_t TinyModel::index_of(const std::vector<TokenId>& sequence) const {
  auto it = std::find(sequences_.begin(), sequences_.end(), sequence);
  if (it == sequences_.end()) throw InvalidInputError("sequence not in the tiny model's space");
  return static_cast<std::size_t>(it - sequences_.begin());
}

VectorXd TinyModel::log_probs(double z) const {
  VectorXd logits = offsets_ + slopes_ * z;
  logits.array() -= log_sum_exp(logits);
  return logits;
}

double TinyModel::log_prob(std::size_t x, double z) const {
  if (x >= sequences_.size()) throw InvalidInputError("sequence index out of range");
  const VectorXd logits = offsets_ + slopes_ * z;
  return logits(static_cast<Eigen::Index>(x)) - log_sum_exp(logits);
}

std::string TinyModel::to_table() const {
  std::ostringstream out;
  out.precision(17);
  out << "tiny-model " << vocab_ << ' ' << max_length_ << '\n';
  for (std::size_t i = 0; i < sequences_.size(); ++i) {
    for (std::size_t k = 0; k < sequences_[i].size(); ++k) out << (k ? " " : "") << sequences_[i][k];
    out << '\t' << offsets_(static_cast<Eigen::Index>(i)) << '\t' << slopes_(static_cast<Eigen::Index>(i))
        << '\n';
  }
  return out.str();
}

TinyModel TinyModel::from_table(const std::string& text) {
  std::istringstream in(text);
  std::string tag;
  int vocab = 0, max_length = 0;
  if (!(in >> tag >> vocab >> max_length) || tag != "tiny-model") {
    throw DataError("tiny model table: missing header");
  }
  std::string line;
  std::getline(in, line);
  std::vector<std::pair<std::vector<TokenId>, std::pair<double, double>>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = line.find('\t', tab1 + 1);
    if (tab1 == std::string::npos || tab2 == std::string::npos) throw DataError("tiny model table: bad row " + line);
    std::istringstream toks(line.substr(0, tab1));
    std::vector<TokenId> seq;
    TokenId t;
    while (toks >> t) seq.push_back(t);
    rows.push_back({seq, {std::stod(line.substr(tab1 + 1, tab2 - tab1 - 1)), std::stod(line.substr(tab2 + 1))}});
  }
  TinyModel model(vocab, max_length, VectorXd::Zero(static_cast<Eigen::Index>(rows.size())),
                  VectorXd::Zero(static_cast<Eigen::Index>(rows.size())));
  for (const auto& [seq, params] : rows) {
    const auto i = static_cast<Eigen::Index>(model.index_of(seq));
    model.offsets_(i) = params.first;
    model.slopes_(i) = params.second;
  }
  return model;
}

double log_marginal(const TinyModel& model, std::size_t x, const Quadrature& quad) {
  return with_convergence_check(quad, "log_marginal", [&](const GaussHermiteRule& rule) {
    return log_autogen_on(model, x, rule, 1.0);
  });
}

double log_reconstruction_likelihood(const TinyModel& model, std::size_t x, const Quadrature& quad) {
  const double log_px = log_marginal(model, x, quad);
  if (log_px == kNegInf) return kNegInf;
  const double log_joint = with_convergence_check(
      quad, "log_reconstruction_likelihood",
      [&](const GaussHermiteRule& rule) { return log_autogen_on(model, x, rule, 2.0); });
  return log_joint - log_px;
}

double exact_autogen_value(const TinyModel& model, std::size_t x, const Quadrature& quad, double m) {
  if (!(m >= 0.0) || !std::isfinite(m)) throw OutOfDomainError("exact_autogen_value: m must be finite and >= 0");
  return with_convergence_check(quad, "exact_autogen_value", [&](const GaussHermiteRule& rule) {
    return log_autogen_on(model, x, rule, 1.0 + m);
  });
}

double autogen_bound(const TinyModel& model, std::size_t x, const GaussianPosterior& q,
                     const Quadrature& quad, double m) {
  require_1d(q);
  const double expected = with_convergence_check(
      quad, "autogen_bound", [&](const GaussHermiteRule& rule) { return expected_log_prob(model, x, q, rule); });
  return (1.0 + m) * expected - kl_gaussian_standard_normal(q);
}

double bound_gap(const TinyModel& model, std::size_t x, const GaussianPosterior& q,
                 const Quadrature& quad, double m) {
  return exact_autogen_value(model, x, quad, m) - autogen_bound(model, x, q, quad, m);
}

GridPosterior twisted_posterior(const TinyModel& model, std::size_t x, const Quadrature& quad, double m) {
  const auto& rule = quad.rule();
  VectorXd log_w(rule.nodes.size());
  for (Eigen::Index j = 0; j < rule.nodes.size(); ++j) {
    log_w(j) = std::log(rule.weights(j)) + (1.0 + m) * model.log_prob(x, rule.nodes(j));
  }
  log_w.array() -= log_sum_exp(log_w);
  return {rule.nodes, log_w.array().exp().matrix()};
}

double grid_autogen_bound(const TinyModel& model, std::size_t x, const GridPosterior& q,
                          const Quadrature& quad, double m) {
  const auto& rule = quad.rule();
  if (q.nodes.size() != rule.nodes.size()) throw InvalidInputError("grid posterior does not match the quadrature rule");
  double expected = 0.0, kl = 0.0;
  for (Eigen::Index j = 0; j < rule.nodes.size(); ++j) {
    const double p = q.probabilities(j);
    if (p <= 0.0) continue;
    expected += p * model.log_prob(x, rule.nodes(j));
    kl += p * std::log(p / rule.weights(j));
  }
  return (1.0 + m) * expected - kl;
}

double posterior_mass(const TinyModel& model, std::size_t x, const Quadrature& quad) {
  const double log_px = log_autogen_on(model, x, quad.rule(), 1.0);
  const GaussHermiteRule& fine = quad.check_convergence() ? quad.refined() : quad.rule();
  double mass = 0.0;
  for (Eigen::Index j = 0; j < fine.nodes.size(); ++j) {
    mass += fine.weights(j) * std::exp(model.log_prob(x, fine.nodes(j)) - log_px);
  }
  return mass;
}

double kl_to_true_posterior(const TinyModel& model, std::size_t x, const GaussianPosterior& q,
                            const Quadrature& quad) {
  require_1d(q);
  const double log_px = log_marginal(model, x, quad);
  const double mu = q.mu(0);
  const double logvar = q.logvar(0);
  const double sigma = std::exp(0.5 * logvar);
  const auto& rule = quad.rule();
  double acc = 0.0;
  for (Eigen::Index j = 0; j < rule.nodes.size(); ++j) {
    const double n = rule.nodes(j);
    const double z = mu + sigma * n;
    // log q(z) - log N(z; 0, 1) - log p(x|z) + log p(x)
    const double log_ratio = -0.5 * n * n - 0.5 * logvar + 0.5 * z * z;
    acc += rule.weights(j) * (log_ratio - model.log_prob(x, z) + log_px);
  }
  return acc;
}

OracleSweepReport run_oracle_sweep(int model_count, int posteriors_per_x, const std::vector<double>& ms,
                                   std::uint64_t seed, const Quadrature& quad) {
  OracleSweepReport report;
  report.min_bound_gap = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> vocab_d(2, kMaxTinyVocab), length_d(1, kMaxTinyLength);
  std::uniform_real_distribution<double> mu_d(-2.0, 2.0), logvar_d(-3.0, 1.0);
  const Quadrature plain(quad.node_count(), false);
  const Quadrature doubled(2 * quad.node_count(), false);

  for (int i = 0; i < model_count; ++i) {
    const TinyModel model = TinyModel::random(vocab_d(rng), length_d(rng), rng());
    ++report.models;
    double total_probability = 0.0;
    for (std::size_t x = 0; x < model.size(); ++x) {
      const double gen = log_marginal(model, x, quad);
      const double rec = log_reconstruction_likelihood(model, x, quad);
      total_probability += std::exp(gen);
      report.max_identity_error =
          std::max(report.max_identity_error, std::abs(exact_autogen_value(model, x, quad, 1.0) - (gen + rec)));
      report.max_posterior_mass_error =
          std::max(report.max_posterior_mass_error, std::abs(posterior_mass(model, x, quad) - 1.0));
      for (double m : ms) {
        const double exact = exact_autogen_value(model, x, quad, m);
        report.max_refinement_change = std::max(
            report.max_refinement_change, std::abs(exact - exact_autogen_value(model, x, doubled, m)));
        const auto star = twisted_posterior(model, x, plain, m);
        report.max_tightness_gap =
            std::max(report.max_tightness_gap, std::abs(exact - grid_autogen_bound(model, x, star, plain, m)));
        for (int k = 0; k < posteriors_per_x; ++k) {
          Eigen::VectorXd mu(1), lv(1);
          mu(0) = mu_d(rng);
          lv(0) = logvar_d(rng);
          const GaussianPosterior q(mu, lv);
          report.min_bound_gap = std::min(report.min_bound_gap, bound_gap(model, x, q, quad, m));
          ++report.evaluations;
        }
      }
    }
    report.max_total_probability_error =
        std::max(report.max_total_probability_error, std::abs(total_probability - 1.0));
  }
  return report;
}

}  // namespace autogen::oracle
