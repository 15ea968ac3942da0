#include "autogen/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "autogen/errors.hpp"
#include "autogen/seeding.hpp"

namespace autogen {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool ranks_before(const BeamHypothesis& a, const BeamHypothesis& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  return a.tokens < b.tokens;
}

void check_config(int beam_width, int max_length) {
  if (beam_width < 1) throw InvalidInputError("beam search: beam_width must be >= 1");
  if (max_length < 1) throw InvalidInputError("beam search: max_length must be >= 1");
}

Decoded to_decoded(const BeamHypothesis& h, Eigen::VectorXd z) {
  Decoded out;
  out.tokens.ids = h.tokens;
  if (h.finished && !out.tokens.ids.empty()) out.tokens.ids.pop_back();
  out.log_prob = h.log_prob;
  out.finished = h.finished;
  out.z = std::move(z);
  return out;
}

Eigen::VectorXd draw_posterior(const GaussianPosterior& q, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd eps(q.dim());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = normal(rng);
  return reparameterize(q, eps);
}

}  // namespace

BeamHypothesis beam_search_fixed(StepScorer& scorer, int beam_width, int max_length) {
  check_config(beam_width, max_length);
  const TokenId eos = scorer.eos();
  std::vector<BeamHypothesis> live{BeamHypothesis{}};
  std::vector<BeamHypothesis> candidates;
  BeamHypothesis best_finished;
  bool have_finished = false;

  for (int len = 1; len <= max_length && !live.empty(); ++len) {
    candidates.clear();
    for (const auto& h : live) {
      const Eigen::VectorXd lp = scorer.next_log_probs(h.tokens);
      for (Eigen::Index v = 0; v < lp.size(); ++v) {
        if (lp(v) == kNegInf) continue;
        BeamHypothesis c{h.tokens, h.log_prob + lp(v), static_cast<TokenId>(v) == eos};
        c.tokens.push_back(static_cast<TokenId>(v));
        candidates.push_back(std::move(c));
      }
    }
    const auto keep = std::min(candidates.size(), static_cast<std::size_t>(beam_width));
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      ranks_before);
    candidates.resize(keep);

    std::vector<BeamHypothesis> next;
    for (auto& c : candidates) {
      if (c.finished) {
        if (!have_finished || ranks_before(c, best_finished)) best_finished = c;
        have_finished = true;
      } else {
        next.push_back(std::move(c));
      }
    }
    // Scores never increase along a path, so a strictly better finished
    // hypothesis cannot be overtaken.
    if (have_finished && (next.empty() || best_finished.log_prob > next.front().log_prob)) return best_finished;
    if (next.empty()) break;
    live = std::move(next);
  }
  if (have_finished) return best_finished;
  if (live.empty()) return BeamHypothesis{};  // nothing had finite probability
  return *std::min_element(live.begin(), live.end(), ranks_before);
}

BeamHypothesis beam_search(StepScorer& scorer, const BeamConfig& config) {
  check_config(config.beam_width, config.max_length);
  BeamHypothesis best = beam_search_fixed(scorer, 1, config.max_length);
  for (int w = 2; w <= config.beam_width; ++w) {
    auto h = beam_search_fixed(scorer, w, config.max_length);
    // Finished beats unfinished; then score; then token order.
    if ((h.finished && !best.finished) || (h.finished == best.finished && ranks_before(h, best))) best = std::move(h);
  }
  return best;
}

ModelScorer::ModelScorer(const ModelParameters& params, Eigen::VectorXd z) : stepper_(params, std::move(z)) {}

const ModelScorer::Entry& ModelScorer::lookup(std::span<const TokenId> prefix) {
  std::vector<TokenId> key(prefix.begin(), prefix.end());
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  Entry e;
  if (prefix.empty()) {
    e.hidden = stepper_.step(stepper_.initial_hidden(), kBosId, e.log_probs);
  } else {
    const Entry& parent = lookup(prefix.first(prefix.size() - 1));
    e.hidden = stepper_.step(parent.hidden, prefix.back(), e.log_probs);
  }
  e.log_probs(kPadId) = kNegInf;
  e.log_probs(kBosId) = kNegInf;
  if (prefix.empty()) e.log_probs(kEosId) = kNegInf;  // sentences are never empty
  return cache_.emplace(std::move(key), std::move(e)).first->second;
}

Eigen::VectorXd ModelScorer::next_log_probs(std::span<const TokenId> prefix) { return lookup(prefix).log_probs; }

Decoded decode_latent(const ModelParameters& params, const Eigen::VectorXd& z, const BeamConfig& config) {
  ModelScorer scorer(params, z);
  return to_decoded(beam_search(scorer, config), z);
}

Decoded reconstruct(const ModelParameters& params, const TokenSequence& x, const BeamConfig& config,
                    std::uint64_t seed) {
  const auto q = encode(params, x);
  return decode_latent(params, draw_posterior(q, derive_seed(seed, seed_tag::kDecode, 0)), config);
}

Eigen::VectorXd prior_latent(std::int64_t latent_dim, std::uint64_t seed) {
  return draw_posterior(GaussianPosterior::standard_normal(latent_dim), derive_seed(seed, seed_tag::kDecode, 3));
}

Decoded generate_from_prior(const ModelParameters& params, const BeamConfig& config, std::uint64_t seed,
                            bool sample) {
  Eigen::VectorXd z = prior_latent(params.dims.latent_dim, seed);
  if (!sample) return decode_latent(params, z, config);

  check_config(config.beam_width, config.max_length);
  ModelScorer scorer(params, z);
  std::mt19937_64 rng(derive_seed(seed, seed_tag::kDecode, 4));
  BeamHypothesis h;
  for (int len = 0; len < config.max_length && !h.finished; ++len) {
    const Eigen::VectorXd lp = scorer.next_log_probs(h.tokens);
    std::vector<double> weights(static_cast<std::size_t>(lp.size()));
    for (Eigen::Index v = 0; v < lp.size(); ++v) weights[static_cast<std::size_t>(v)] = std::exp(lp(v));
    std::discrete_distribution<int> pick(weights.begin(), weights.end());
    const auto v = static_cast<TokenId>(pick(rng));
    h.tokens.push_back(v);
    h.log_prob += lp(v);
    h.finished = v == kEosId;
  }
  return to_decoded(h, std::move(z));
}

InterpolationPath interpolation_path(const ModelParameters& params, const TokenSequence& x1,
                                     const TokenSequence& x2, int points, std::uint64_t seed) {
  if (points < 2) throw InvalidInputError("interpolate: need at least 2 points");
  InterpolationPath path{{}, encode(params, x1), encode(params, x2)};
  const Eigen::VectorXd z1 = draw_posterior(path.start, derive_seed(seed, seed_tag::kDecode, 1));
  const Eigen::VectorXd z2 = draw_posterior(path.end, derive_seed(seed, seed_tag::kDecode, 2));
  for (int k = 0; k < points; ++k) {
    if (k == points - 1) {
      path.points.push_back(z2);
    } else {
      path.points.push_back(z1 + (static_cast<double>(k) / (points - 1)) * (z2 - z1));
    }
  }
  return path;
}

Interpolation interpolate(const ModelParameters& params, const TokenSequence& x1, const TokenSequence& x2,
                          int points, const BeamConfig& config, std::uint64_t seed) {
  Interpolation out{interpolation_path(params, x1, x2, points, seed), {}};
  for (const auto& z : out.path.points) out.sentences.push_back(decode_latent(params, z, config));
  return out;
}

std::vector<TokenSequence> presentation_filter(std::span<const TokenSequence> sentences, int min_len, int max_len,
                                               std::size_t first_k) {
  std::vector<TokenSequence> out;
  for (const auto& s : sentences) {
    if (first_k > 0 && out.size() == first_k) break;
    const auto n = static_cast<int>(s.size());
    if (n < min_len || n > max_len) continue;
    if (std::find(s.ids.begin(), s.ids.end(), kUnkId) != s.ids.end()) continue;
    out.push_back(s);
  }
  return out;
}

}  // namespace autogen
