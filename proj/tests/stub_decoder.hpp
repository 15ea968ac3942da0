#pragma once

// A table-driven autoregressive decoder over content tokens 0..V-1 with EOS
// id V. Every prefix of at most L tokens has its own random next-token
// distribution; after L tokens only EOS is possible.

#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <vector>

#include "autogen/inference.hpp"

namespace autogen::testing {

class StubScorer final : public StepScorer {
 public:
  StubScorer(int vocab, int max_len, std::uint64_t seed, double scale = 2.0) : vocab_(vocab), max_len_(max_len) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, scale);
    std::vector<TokenId> prefix;
    fill(prefix, rng, normal);
  }

  TokenId eos() const override { return vocab_; }
  Eigen::VectorXd next_log_probs(std::span<const TokenId> prefix) override {
    return table_.at(std::vector<TokenId>(prefix.begin(), prefix.end()));
  }

  /// Forbid EOS before `min_len` tokens.
  void forbid_early_eos(int min_len) {
    for (auto& [prefix, lp] : table_) {
      if (static_cast<int>(prefix.size()) < min_len) {
        lp(vocab_) = -std::numeric_limits<double>::infinity();
        const double m = lp.maxCoeff();
        lp.array() -= m + std::log((lp.array() - m).exp().sum());
      }
    }
  }

  /// Brute force over every sequence; ties go to the smaller token list.
  BeamHypothesis exhaustive_argmax() const {
    BeamHypothesis best;
    best.log_prob = -std::numeric_limits<double>::infinity();
    for (const auto& [prefix, lp] : table_) {
      const double score = prefix_score(prefix) + lp(vocab_);
      if (score == -std::numeric_limits<double>::infinity()) continue;
      std::vector<TokenId> full = prefix;
      full.push_back(vocab_);
      if (score > best.log_prob || (score == best.log_prob && full < best.tokens)) {
        best = {full, score, true};
      }
    }
    return best;
  }

  /// Repeatedly take the most likely token (smallest id on ties).
  BeamHypothesis greedy(int max_length) const {
    BeamHypothesis h;
    for (int i = 0; i < max_length && !h.finished; ++i) {
      const auto& lp = table_.at(h.tokens);
      Eigen::Index arg = 0;
      for (Eigen::Index v = 1; v < lp.size(); ++v) {
        if (lp(v) > lp(arg)) arg = v;
      }
      h.tokens.push_back(static_cast<TokenId>(arg));
      h.log_prob += lp(arg);
      h.finished = arg == vocab_;
    }
    return h;
  }

  double prefix_score(const std::vector<TokenId>& tokens) const {
    double s = 0.0;
    std::vector<TokenId> p;
    for (auto t : tokens) {
      s += table_.at(p)(t);
      p.push_back(t);
    }
    return s;
  }

 private:
  void fill(std::vector<TokenId>& prefix, std::mt19937_64& rng, std::normal_distribution<double>& normal) {
    Eigen::VectorXd lp(vocab_ + 1);
    if (static_cast<int>(prefix.size()) == max_len_) {
      lp.setConstant(-std::numeric_limits<double>::infinity());
      lp(vocab_) = 0.0;
    } else {
      for (Eigen::Index v = 0; v < lp.size(); ++v) lp(v) = normal(rng);
      const double m = lp.maxCoeff();
      lp.array() -= m + std::log((lp.array() - m).exp().sum());
    }
    table_[prefix] = lp;
    if (static_cast<int>(prefix.size()) == max_len_) return;
    for (TokenId t = 0; t < vocab_; ++t) {
      prefix.push_back(t);
      fill(prefix, rng, normal);
      prefix.pop_back();
    }
  }

  int vocab_;
  int max_len_;
  std::map<std::vector<TokenId>, Eigen::VectorXd> table_;
};

}  // namespace autogen::testing
