#include <cmath>
#include <random>

#include "autogen/errors.hpp"
#include "autogen/objectives.hpp"
#include "doctest.h"

using namespace autogen;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Monte Carlo KL(q || N(0, I)): mean of log q(z) - log p(z), z ~ q.
double monte_carlo_kl(const GaussianPosterior& q, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const VectorXd sigma = q.stddev();
  double acc = 0.0;
  for (int s = 0; s < samples; ++s) {
    double log_ratio = 0.0;
    for (Eigen::Index i = 0; i < q.dim(); ++i) {
      const double eps = normal(rng);
      const double z = q.mu(i) + sigma(i) * eps;
      // log N(z; mu, s^2) - log N(z; 0, 1); the 2*pi terms cancel.
      log_ratio += -0.5 * eps * eps - 0.5 * q.logvar(i) + 0.5 * z * z;
    }
    acc += log_ratio;
  }
  return acc / samples;
}

}  // namespace

TEST_CASE("kl closed form examples") {
  CHECK(kl_gaussian_standard_normal({vec({0}), vec({0})}) == 0.0);
  CHECK(kl_gaussian_standard_normal({vec({1}), vec({0})}) == doctest::Approx(0.5).epsilon(1e-15));
  const GaussianPosterior q(vec({0, 0}), vec({std::log(4.0), 0}));
  const double closed = kl_gaussian_standard_normal(q);
  CHECK(closed == doctest::Approx(0.5 * (4.0 - 1.0 - std::log(4.0))).epsilon(1e-14));
  CHECK(closed == doctest::Approx(0.806853).epsilon(1e-6));
  CHECK(std::abs(monte_carlo_kl(q, 1000000, 11) - closed) <= 1e-2);
}

TEST_CASE("kl is zero only at the prior") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 500; ++trial) {
    VectorXd mu(3), lv(3);
    for (int i = 0; i < 3; ++i) {
      mu(i) = u(rng);
      lv(i) = u(rng);
    }
    CHECK(kl_gaussian_standard_normal({mu, lv}) > 0.0);
  }
  CHECK(kl_gaussian_standard_normal(GaussianPosterior::standard_normal(5)) == 0.0);
}

TEST_CASE("kl gradient matches central differences") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const double h = 1e-5;
  for (int trial = 0; trial < 50; ++trial) {
    VectorXd mu(4), lv(4);
    for (int i = 0; i < 4; ++i) {
      mu(i) = u(rng);
      lv(i) = u(rng);
    }
    const auto grad = kl_gaussian_standard_normal_gradient({mu, lv});
    for (int i = 0; i < 4; ++i) {
      VectorXd mp = mu, mm = mu, lp = lv, lm = lv;
      mp(i) += h;
      mm(i) -= h;
      lp(i) += h;
      lm(i) -= h;
      const double fd_mu =
          (kl_gaussian_standard_normal({mp, lv}) - kl_gaussian_standard_normal({mm, lv})) / (2 * h);
      const double fd_lv =
          (kl_gaussian_standard_normal({mu, lp}) - kl_gaussian_standard_normal({mu, lm})) / (2 * h);
      CHECK(std::abs(fd_mu - grad.d_mu(i)) <= 1e-6 * std::max(1.0, std::abs(grad.d_mu(i))));
      CHECK(std::abs(fd_lv - grad.d_logvar(i)) <= 1e-6 * std::max(1.0, std::abs(grad.d_logvar(i))));
    }
  }
}

TEST_CASE("posterior validation and clamping") {
  CHECK_THROWS_AS(GaussianPosterior(vec({0, 1}), vec({0})), InvalidInputError);
  CHECK_THROWS_AS(GaussianPosterior(VectorXd(0), VectorXd(0)), InvalidInputError);
  CHECK_THROWS_AS(GaussianPosterior(vec({NAN}), vec({0})), InvalidInputError);
  const GaussianPosterior q(vec({0, 0}), vec({-50, 50}));
  CHECK(q.logvar(0) == kLogvarMin);
  CHECK(q.logvar(1) == kLogvarMax);
}

TEST_CASE("reparameterize") {
  const GaussianPosterior q(vec({1.0, -2.0}), vec({0.3, -0.7}));
  CHECK(reparameterize(q, VectorXd::Zero(2)) == q.mu);
  const GaussianPosterior unit(vec({1.0, -2.0}), vec({0.0, 0.0}));
  CHECK(reparameterize(unit, vec({0.5, 0.25})) == vec({1.5, -1.75}));
  CHECK_THROWS_AS(reparameterize(q, VectorXd::Zero(3)), InvalidInputError);

  // Sample mean within 3 standard errors of mu.
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal;
  const int n = 100000;
  VectorXd sum = VectorXd::Zero(2);
  for (int s = 0; s < n; ++s) sum += reparameterize(q, vec({normal(rng), normal(rng)}));
  const VectorXd mean = sum / n;
  const VectorXd se = q.stddev() / std::sqrt(static_cast<double>(n));
  for (int i = 0; i < 2; ++i) CHECK(std::abs(mean(i) - q.mu(i)) <= 3 * se(i));
}

TEST_CASE("assemble objective examples") {
  CHECK(assemble_objective(-10, 2, ObjectiveConfig::standard(), 0).total == -12);
  CHECK(assemble_objective(-10, 2, ObjectiveConfig::autogen(1), 0).total == -22);
  const auto beta = assemble_objective(-10, 2, ObjectiveConfig::beta(0.5), 0);
  CHECK(beta.total == -11);
  CHECK(2 * beta.total == assemble_objective(-10, 2, ObjectiveConfig::autogen(1), 0).total);
  CHECK_THROWS_AS(assemble_objective(-10, -1, ObjectiveConfig::standard(), 0), InvalidInputError);

  const auto annealed = ObjectiveConfig::annealed({AnnealShape::kLinear, 100});
  CHECK(assemble_objective(-10, 2, annealed, 50).total == -11);
  CHECK(assemble_objective(-10, 2, annealed, 0).kl_fraction == 0.0);
  CHECK(assemble_objective(-10, 2, annealed, 100).total == -12);
}

TEST_CASE("kl fraction") {
  // K / ((1+m)(-R) + K)
  CHECK(assemble_objective(-10, 2, ObjectiveConfig::standard(), 0).kl_fraction ==
        doctest::Approx(2.0 / 12.0));
  CHECK(assemble_objective(-10, 2, ObjectiveConfig::autogen(1), 0).kl_fraction ==
        doctest::Approx(2.0 / 22.0));
  CHECK(assemble_objective(-10, 2, ObjectiveConfig::beta(0.5), 0).kl_fraction ==
        doctest::Approx(2.0 / 22.0));
  CHECK(assemble_objective(0.0, 2, ObjectiveConfig::standard(), 0).kl_fraction ==
        doctest::Approx(1.0));
  const auto f = assemble_objective(-3, 0.7, ObjectiveConfig::autogen(2.5), 0).kl_fraction;
  CHECK(f >= 0.0);
  CHECK(f <= 1.0);
}

TEST_CASE("objective equivalences hold pointwise") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> recon_d(-200.0, 0.0), kl_d(0.0, 50.0), m_d(0.0, 10.0);
  for (int i = 0; i < 20000; ++i) {
    const double r = recon_d(rng), k = kl_d(rng), m = m_d(rng);
    CHECK(assemble_objective(r, k, ObjectiveConfig::autogen(0), 0).total ==
          assemble_objective(r, k, ObjectiveConfig::standard(), 0).total);
    const double a = assemble_objective(r, k, ObjectiveConfig::autogen(m), 0).total;
    const double b = (1 + m) * assemble_objective(r, k, ObjectiveConfig::beta(beta_of_m(m)), 0).total;
    CHECK(std::abs(a - b) <= 1e-12 * std::abs(a));
  }
}

TEST_CASE("beta and anneal maps") {
  CHECK(beta_of_m(0) == 1.0);
  CHECK(beta_of_m(1) == 0.5);
  CHECK(beta_of_m(2) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(beta_of_m(-0.5), OutOfDomainError);

  CHECK(m_of_anneal_weight(1.0) == 0.0);
  CHECK(m_of_anneal_weight(0.5) == 1.0);
  CHECK(m_of_anneal_weight(0.25) == 3.0);
  CHECK_THROWS_AS(m_of_anneal_weight(0.0), OutOfDomainError);
  CHECK_THROWS_AS(m_of_anneal_weight(1.5), OutOfDomainError);

  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> m_d(0.0, 100.0);
  for (int i = 0; i < 1000; ++i) {
    const double m = m_d(rng);
    CHECK(std::abs(m_of_anneal_weight(beta_of_m(m)) - m) <= 1e-12 * std::max(1.0, m));
    const double lambda = beta_of_m(m);
    CHECK(std::abs(beta_of_m(m_of_anneal_weight(lambda)) - lambda) <= 1e-12);
  }
}

TEST_CASE("anneal schedules") {
  const AnnealSchedule linear{AnnealShape::kLinear, 1000};
  CHECK(anneal_weight(linear, 0) == 0.0);
  CHECK(anneal_weight(linear, 500) == 0.5);
  CHECK(anneal_weight(linear, 1000) == 1.0);
  CHECK(anneal_weight(linear, 5000) == 1.0);

  const AnnealSchedule sigmoid{AnnealShape::kSigmoid, 300};
  CHECK(anneal_weight(sigmoid, 0) <= 0.01);
  CHECK(anneal_weight(sigmoid, 300) == 1.0);
  for (const auto& s : {linear, sigmoid}) {
    double prev = -1.0;
    for (std::int64_t step = 0; step <= 2 * s.warmup_steps; ++step) {
      const double w = anneal_weight(s, step);
      CHECK(w >= prev);
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
      prev = w;
    }
  }
}

TEST_CASE("objective config validation") {
  CHECK_THROWS_AS(ObjectiveConfig::autogen(-1), OutOfDomainError);
  CHECK_THROWS_AS(ObjectiveConfig::autogen(INFINITY), OutOfDomainError);
  CHECK_THROWS_AS(ObjectiveConfig::beta(0), OutOfDomainError);
  CHECK_THROWS_AS(ObjectiveConfig::annealed({AnnealShape::kLinear, 0}), OutOfDomainError);
  CHECK(ObjectiveConfig::autogen(2.5).m() == 2.5);
  CHECK(parse_objective_mode("beta") == ObjectiveMode::kBeta);
  CHECK_THROWS_AS(parse_objective_mode("vae"), ConfigError);
}
