#pragma once

// Reconstruction metrics, exact binomial and Fisher tests, blind survey
// sheets with a hidden key, tallying, and plot-data CSVs.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "autogen/trainer.hpp"

namespace autogen {

using Words = std::vector<std::string>;

std::size_t edit_distance(std::span<const std::string> a, std::span<const std::string> b);

/// Positions i < min(len) where a[i] == b[i], divided by max(len). Two empty
/// sequences score 1.
double token_accuracy(std::span<const std::string> a, std::span<const std::string> b);

struct ReconstructionMetrics {
  std::size_t pairs = 0;
  double exact_match = 0.0;
  double token_accuracy = 0.0;
  double mean_edit_distance = 0.0;
};

/// pairs[i] = (input, reconstruction). InvalidInputError when empty.
ReconstructionMetrics reconstruction_metrics(std::span<const std::pair<Words, Words>> pairs);

Words id_words(const TokenSequence& s);  // token ids spelled as decimal strings

// --- exact tests ----------------------------------------------------------

double binomial_pmf(std::int64_t k, std::int64_t n, double p);

/// Sum of the probabilities of all outcomes no more likely than k.
double binomial_two_sided_p(std::int64_t k, std::int64_t n, double p = 0.5);

/// P(X >= k) for X ~ Binomial(n, p).
double binomial_upper_tail(std::int64_t k, std::int64_t n, double p = 0.5);

struct SignTestResult {
  std::size_t a_better = 0;
  std::size_t b_better = 0;
  std::size_t ties = 0;
  double p_two_sided = 1.0;
  double p_a_greater = 1.0;  // one-sided, H1: a tends to exceed b
};

/// Paired sign test; ties are dropped.
SignTestResult sign_test(std::span<const double> a, std::span<const double> b);

/// Two-sided Fisher exact test on [[a, b], [c, d]].
double fisher_exact_two_sided(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d);

// --- survey ---------------------------------------------------------------

enum class SurveyKind { kReconstructionPair, kGenerationSingle };
std::string_view to_string(SurveyKind kind);
SurveyKind parse_survey_kind(std::string_view name);  // ConfigError

struct ModelOutputs {
  std::string model_id;
  std::vector<std::string> sentences;  // aligned with the inputs for the pair kind
};

struct SurveyItem {
  std::string item_id;
  std::string original;  // pair kind only
  std::string text_a;    // the sentence, for the single kind
  std::string text_b;
  std::string model_a;
  std::string model_b;   // "-" for the single kind
  std::string length_class;  // "le10" or "gt10"
};

struct Survey {
  SurveyKind kind = SurveyKind::kGenerationSingle;
  std::vector<std::vector<SurveyItem>> sheets;  // at most items_per_sheet each
};

inline constexpr std::size_t kItemsPerSheet = 20;

/// "le10" for at most 10 whitespace-separated tokens, else "gt10".
std::string length_class(const std::string& sentence);

/// Pair kind: for every input and every pair of models, one item with the A/B
/// order drawn at random; the length class is that of the input. Single kind:
/// one item per sentence, interleaved so each sheet covers the models evenly.
/// Deterministic in seed. ValidationError when outputs are missing or
/// misaligned.
Survey make_survey(SurveyKind kind, const std::vector<ModelOutputs>& outputs,
                   const std::vector<std::string>& inputs, std::uint64_t seed,
                   std::size_t items_per_sheet = kItemsPerSheet);

/// Writes sheet_NNN.tsv files (no model names) and key.tsv into dir.
void write_survey(const Survey& survey, const std::filesystem::path& dir);

struct SurveyKeyEntry {
  std::string model_a;
  std::string model_b;
  std::string length_class;
};
std::map<std::string, SurveyKeyEntry> read_survey_key(const std::filesystem::path& path);

struct Response {
  std::string item_id;
  std::string choice;  // A, B, discard (pair) or yes, no (single)
};
std::vector<Response> read_responses(const std::filesystem::path& path);

struct PairTally {
  std::string model_a;  // lexicographically smaller id
  std::string model_b;
  std::int64_t wins_a = 0;
  std::int64_t wins_b = 0;
  double percent_a = 0.0;
  double p_value = 1.0;  // exact two-sided binomial against 50%
  bool significant = false;
};

struct SingleTally {
  std::string model;
  std::string length_class;  // "all", "le10" or "gt10"
  std::int64_t yes = 0;
  std::int64_t no = 0;
  double percent_yes = 0.0;
};

struct ProportionTest {
  std::string model_a;
  std::string model_b;
  std::string length_class;
  double p_value = 1.0;  // Fisher exact, two-sided
  bool significant = false;
};

struct TallyResult {
  SurveyKind kind = SurveyKind::kGenerationSingle;
  std::int64_t responses = 0;
  std::int64_t discarded = 0;
  std::map<std::string, std::int64_t> counts;  // wins (pair) or yes answers (single) per model
  std::vector<PairTally> pairs;
  std::vector<SingleTally> singles;
  std::vector<ProportionTest> proportion_tests;

  std::string report() const;
};

inline constexpr double kSignificanceLevel = 0.01;  // 99% confidence

/// ValidationError on unknown item ids, bad choices, or when nothing is left
/// after discards.
TallyResult tally_survey(const std::vector<Response>& responses, const std::map<std::string, SurveyKeyEntry>& key);

// --- plots ----------------------------------------------------------------

/// kl_fraction.csv and elbo.csv, each with a step column then one column per
/// model in input order. Returns the written paths.
std::vector<std::filesystem::path> emit_plot_data(const std::vector<NamedTable>& tables,
                                                  const std::filesystem::path& dir);

}  // namespace autogen
