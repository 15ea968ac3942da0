#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "autogen/errors.hpp"
#include "autogen/evalkit.hpp"
#include "doctest.h"

using namespace autogen;

namespace {

Words split(const std::string& s) {
  std::istringstream in(s);
  Words w;
  for (std::string t; in >> t;) w.push_back(t);
  return w;
}

// Exact binomial coefficient by Pascal's rule; fine for n <= 60.
double choose(int n, int k) {
  std::vector<double> row{1.0};
  for (int i = 1; i <= n; ++i) {
    std::vector<double> next(static_cast<std::size_t>(i) + 1, 1.0);
    for (int j = 1; j < i; ++j) next[j] = row[j - 1] + row[j];
    row = next;
  }
  return row[static_cast<std::size_t>(k)];
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream b;
  b << in.rdbuf();
  return b.str();
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("autogen_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("reconstruction metrics") {
  const auto s = split("more or less ?");
  const std::vector<std::pair<Words, Words>> same{{s, s}};
  const auto m = reconstruction_metrics(same);
  CHECK(m.exact_match == 1.0);
  CHECK(m.token_accuracy == 1.0);
  CHECK(m.mean_edit_distance == 0.0);

  const std::vector<std::pair<Words, Words>> disjoint{{split("a b c d e"), split("v w x y z")}};
  const auto d = reconstruction_metrics(disjoint);
  CHECK(d.exact_match == 0.0);
  CHECK(d.token_accuracy == 0.0);
  CHECK(d.mean_edit_distance == 5.0);

  const std::vector<std::pair<Words, Words>> poor{{s, split("oh yeah .")}};
  const auto p = reconstruction_metrics(poor);
  CHECK(m.exact_match > p.exact_match);
  CHECK(m.token_accuracy > p.token_accuracy);
  CHECK(m.mean_edit_distance < p.mean_edit_distance);

  CHECK(edit_distance(split("a b c"), split("a c")) == 1);
  CHECK(edit_distance(split("kitten"), split("sitting")) == 1);
  CHECK(edit_distance(Words{}, split("x y")) == 2);
  CHECK(token_accuracy(split("a b c d"), split("a b")) == 0.5);
  CHECK(token_accuracy(Words{}, Words{}) == 1.0);
  CHECK_THROWS_AS(reconstruction_metrics(std::vector<std::pair<Words, Words>>{}), InvalidInputError);
}

TEST_CASE("binomial tests against direct summation") {
  for (int n = 1; n <= 30; ++n) {
    double total = 0.0;
    for (int k = 0; k <= n; ++k) {
      const double exact = choose(n, k) / std::pow(2.0, n);
      CHECK(binomial_pmf(k, n, 0.5) == doctest::Approx(exact).epsilon(1e-12));
      total += binomial_pmf(k, n, 0.5);
      // Two-sided: outcomes at least as far from n/2 as k.
      double tail = 0.0;
      for (int j = 0; j <= n; ++j) {
        if (std::abs(2 * j - n) >= std::abs(2 * k - n)) tail += choose(n, j) / std::pow(2.0, n);
      }
      CHECK(binomial_two_sided_p(k, n) == doctest::Approx(std::min(1.0, tail)).epsilon(1e-10));
      double upper = 0.0;
      for (int j = k; j <= n; ++j) upper += choose(n, j) / std::pow(2.0, n);
      CHECK(binomial_upper_tail(k, n) == doctest::Approx(upper).epsilon(1e-10));
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  // Monotone decreasing in |k - n/2|.
  const int n = 260;
  for (int k = 130; k < 260; ++k) CHECK(binomial_two_sided_p(k + 1, n) <= binomial_two_sided_p(k, n));
  CHECK(binomial_two_sided_p(130, 260) == doctest::Approx(1.0));
  CHECK(binomial_two_sided_p(229, 260) < 1e-30);
}

TEST_CASE("sign test and fisher") {
  const std::vector<double> a{3, 4, 5, 6, 7, 8, 9, 1}, b{1, 2, 3, 4, 5, 6, 7, 1};
  const auto r = sign_test(a, b);
  CHECK(r.a_better == 7);
  CHECK(r.ties == 1);
  CHECK(r.p_a_greater == doctest::Approx(1.0 / 128));
  CHECK(r.p_two_sided == doctest::Approx(2.0 / 128));
  CHECK_THROWS_AS(sign_test(a, std::vector<double>{1.0}), InvalidInputError);

  // Classic tea-tasting table: p = 0.4857 two-sided.
  CHECK(fisher_exact_two_sided(3, 1, 1, 3) == doctest::Approx(0.4857142857).epsilon(1e-9));
  CHECK(fisher_exact_two_sided(10, 0, 0, 10) == doctest::Approx(2.0 / choose(20, 10)).epsilon(1e-9));
  CHECK(fisher_exact_two_sided(5, 5, 5, 5) == doctest::Approx(1.0));
}

TEST_CASE("tally of the 229 of 260 survey") {
  std::map<std::string, SurveyKeyEntry> key;
  std::vector<Response> responses;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 260; ++i) {
    const bool autogen_first = rng() % 2 == 0;
    const std::string id = "item_" + std::to_string(i);
    key[id] = autogen_first ? SurveyKeyEntry{"autogen_m1", "vae_annealed", "le10"}
                            : SurveyKeyEntry{"vae_annealed", "autogen_m1", "gt10"};
    const bool autogen_wins = i < 229;
    responses.push_back({id, (autogen_wins == autogen_first) ? "A" : "B"});
  }
  responses.push_back({"item_0", "discard"});
  const auto t = tally_survey(responses, key);
  REQUIRE(t.pairs.size() == 1);
  CHECK(t.pairs[0].model_a == "autogen_m1");
  CHECK(t.pairs[0].wins_a == 229);
  CHECK(t.pairs[0].wins_b == 31);
  CHECK(std::lround(t.pairs[0].percent_a) == 88);
  CHECK(t.pairs[0].significant);
  CHECK(t.discarded == 1);
  CHECK(t.counts.at("autogen_m1") + t.counts.at("vae_annealed") == 260);

  // Permutation invariance.
  auto shuffled = responses;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto t2 = tally_survey(shuffled, key);
  CHECK(t2.pairs[0].wins_a == 229);
  CHECK(t2.pairs[0].p_value == t.pairs[0].p_value);

  // Null case.
  std::vector<Response> even;
  for (int i = 0; i < 260; ++i) {
    const auto& k = key.at("item_" + std::to_string(i));
    even.push_back({"item_" + std::to_string(i), ((k.model_a == "autogen_m1") == (i < 130)) ? "A" : "B"});
  }
  const auto t3 = tally_survey(even, key);
  CHECK(t3.pairs[0].percent_a == 50.0);
  CHECK(t3.pairs[0].p_value == doctest::Approx(1.0));
  CHECK_FALSE(t3.pairs[0].significant);

  CHECK_THROWS_AS(tally_survey({{"nope", "A"}}, key), ValidationError);
  CHECK_THROWS_AS(tally_survey({{"item_1", "C"}}, key), ValidationError);
  CHECK_THROWS_AS(tally_survey({{"item_1", "discard"}, {"item_2", "discard"}}, key), ValidationError);
}

TEST_CASE("single-sentence tally") {
  std::map<std::string, SurveyKeyEntry> key{{"1", {"m1", "-", "le10"}}, {"2", {"m1", "-", "gt10"}},
                                            {"3", {"m2", "-", "le10"}}, {"4", {"m2", "-", "gt10"}}};
  std::vector<Response> responses;
  for (int r = 0; r < 20; ++r) {
    responses.push_back({"1", "yes"});
    responses.push_back({"2", r < 15 ? "yes" : "no"});
    responses.push_back({"3", r < 5 ? "yes" : "no"});
    responses.push_back({"4", "no"});
  }
  const auto t = tally_survey(responses, key);
  CHECK(t.kind == SurveyKind::kGenerationSingle);
  CHECK(t.counts.at("m1") == 35);
  CHECK(t.counts.at("m2") == 5);
  bool saw = false;
  for (const auto& s : t.singles) {
    if (s.model == "m1" && s.length_class == "all") {
      CHECK(s.percent_yes == 87.5);
      saw = true;
    }
  }
  CHECK(saw);
  REQUIRE(t.proportion_tests.size() == 3);
  for (const auto& p : t.proportion_tests) {
    CHECK(p.model_a == "m1");
    CHECK(p.significant);
  }
}

TEST_CASE("survey sheets") {
  std::vector<std::string> inputs;
  for (int i = 0; i < 1000; ++i) inputs.push_back(i % 3 ? "a short input ." : "a much longer input sentence that has more than ten words .");
  std::vector<ModelOutputs> outputs{{"model_alpha", {}}, {"model_beta", {}}};
  for (int i = 0; i < 1000; ++i) {
    outputs[0].sentences.push_back("first reconstruction " + std::to_string(i));
    outputs[1].sentences.push_back("second reconstruction " + std::to_string(i));
  }
  const auto survey = make_survey(SurveyKind::kReconstructionPair, outputs, inputs, 5);
  std::size_t items = 0, alpha_first = 0;
  for (const auto& sheet : survey.sheets) {
    CHECK(sheet.size() <= 20);
    for (const auto& item : sheet) {
      ++items;
      alpha_first += item.model_a == "model_alpha";
      CHECK(item.length_class == length_class(item.original));
    }
  }
  CHECK(items == 1000);
  CHECK(std::abs(static_cast<double>(alpha_first) / items - 0.5) <= 0.05);

  const auto again = make_survey(SurveyKind::kReconstructionPair, outputs, inputs, 5);
  CHECK(again.sheets.front().front().item_id == survey.sheets.front().front().item_id);
  CHECK(again.sheets.front().front().text_a == survey.sheets.front().front().text_a);

  const auto dir = scratch_dir("survey");
  write_survey(survey, dir);
  std::size_t sheet_files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("sheet_", 0) != 0) continue;
    ++sheet_files;
    const auto text = slurp(entry.path());
    CHECK(text.find("model_alpha") == std::string::npos);
    CHECK(text.find("model_beta") == std::string::npos);
  }
  CHECK(sheet_files == survey.sheets.size());
  const auto key = read_survey_key(dir / "key.tsv");
  CHECK(key.size() == 1000);

  // A second write gives identical bytes.
  const auto dir2 = scratch_dir("survey2");
  write_survey(make_survey(SurveyKind::kReconstructionPair, outputs, inputs, 5), dir2);
  CHECK(slurp(dir / "key.tsv") == slurp(dir2 / "key.tsv"));
  CHECK(slurp(dir / "sheet_001.tsv") == slurp(dir2 / "sheet_001.tsv"));
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);

  CHECK_THROWS_AS(make_survey(SurveyKind::kReconstructionPair, {outputs[0]}, inputs, 1), ValidationError);
  auto short_outputs = outputs;
  short_outputs[1].sentences.pop_back();
  CHECK_THROWS_AS(make_survey(SurveyKind::kReconstructionPair, short_outputs, inputs, 1), ValidationError);
}

TEST_CASE("generation survey covers models evenly") {
  std::vector<ModelOutputs> outputs;
  for (const char* name : {"m_a", "m_b", "m_c", "m_d"}) {
    ModelOutputs o{name, {}};
    for (int i = 0; i < 25; ++i) o.sentences.push_back(std::string(name) + " says " + std::to_string(i));
    outputs.push_back(o);
  }
  const auto survey = make_survey(SurveyKind::kGenerationSingle, outputs, {}, 9);
  REQUIRE(survey.sheets.size() == 5);
  for (const auto& sheet : survey.sheets) {
    std::map<std::string, int> per_model;
    for (const auto& item : sheet) ++per_model[item.model_a];
    CHECK(per_model.size() == 4);
    for (const auto& [m, c] : per_model) CHECK(c == 5);
  }
}

TEST_CASE("plot data") {
  MetricsTable t1, t2;
  for (int s = 0; s <= 300; s += 100) {
    t1.rows.push_back({s, -10.0 - s, 0.1 * s, -11.0, 0.01 * s + 1e-17, -10.5 - s / 3.0, 0, 0, 0, 1.0});
    t2.rows.push_back({s, -12.0, 0.3, -12.3, 0.2, -12.3, 0, 0, 0, 0.5});
  }
  const auto dir = scratch_dir("plots");
  const auto paths = emit_plot_data({{"standard", t1}, {"autogen_m1", t2}}, dir);
  REQUIRE(paths.size() == 2);
  const auto text = slurp(dir / "elbo.csv");
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,standard,autogen_m1");
  int rows = 0;
  while (std::getline(in, line)) {
    std::stringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    CHECK(cells.size() == 3);
    CHECK(std::stod(cells[1]) == t1.rows[static_cast<std::size_t>(rows)].elbo);
    ++rows;
  }
  CHECK(rows == 4);
  const auto before = slurp(dir / "kl_fraction.csv");
  emit_plot_data({{"standard", t1}, {"autogen_m1", t2}}, dir);
  CHECK(slurp(dir / "kl_fraction.csv") == before);

  MetricsTable shifted = t2;
  shifted.rows[1].step = 150;
  CHECK_THROWS_AS(emit_plot_data({{"standard", t1}, {"x", shifted}}, dir), ValidationError);
  std::filesystem::remove_all(dir);
}
