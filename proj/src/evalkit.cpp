#include "autogen/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "autogen/errors.hpp"

namespace autogen {

namespace {

// Outcomes within this relative distance of the observed probability count
// as "no more likely" (guards against rounding in the pmf).
constexpr double kPmfTolerance = 1e-7;

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    cells.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return cells;
}

std::vector<std::string> read_rows(const std::filesystem::path& path, std::string& header) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<std::string> rows;
  std::string line;
  if (!std::getline(in, header)) throw DataError(path.string() + " is empty");
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) rows.push_back(line);
  }
  return rows;
}

std::string item_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "item_%05zu", i + 1);
  return buf;
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", v);
  return buf;
}

}  // namespace

std::size_t edit_distance(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

double token_accuracy(std::span<const std::string> a, std::span<const std::string> b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 1.0;
  std::size_t matched = 0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) matched += a[i] == b[i];
  return static_cast<double>(matched) / static_cast<double>(longest);
}

ReconstructionMetrics reconstruction_metrics(std::span<const std::pair<Words, Words>> pairs) {
  if (pairs.empty()) throw InvalidInputError("reconstruction_metrics: no pairs");
  ReconstructionMetrics m;
  m.pairs = pairs.size();
  for (const auto& [input, recon] : pairs) {
    m.exact_match += input == recon ? 1.0 : 0.0;
    m.token_accuracy += token_accuracy(input, recon);
    m.mean_edit_distance += static_cast<double>(edit_distance(input, recon));
  }
  const auto n = static_cast<double>(pairs.size());
  m.exact_match /= n;
  m.token_accuracy /= n;
  m.mean_edit_distance /= n;
  return m;
}

Words id_words(const TokenSequence& s) {
  Words out;
  out.reserve(s.size());
  for (auto id : s.ids) out.push_back(std::to_string(id));
  return out;
}

double binomial_pmf(std::int64_t k, std::int64_t n, double p) {
  if (n < 0 || !(p >= 0.0 && p <= 1.0)) throw InvalidInputError("binomial_pmf: need n >= 0 and p in [0, 1]");
  if (k < 0 || k > n) return 0.0;
  if (p == 0.0) return k == 0 ? 1.0 : 0.0;
  if (p == 1.0) return k == n ? 1.0 : 0.0;
  const auto kd = static_cast<double>(k), nd = static_cast<double>(n);
  return std::exp(std::lgamma(nd + 1) - std::lgamma(kd + 1) - std::lgamma(nd - kd + 1) + kd * std::log(p) +
                  (nd - kd) * std::log1p(-p));
}

double binomial_two_sided_p(std::int64_t k, std::int64_t n, double p) {
  if (k < 0 || k > n) throw InvalidInputError("binomial test: need 0 <= k <= n");
  const double observed = binomial_pmf(k, n, p);
  double total = 0.0;
  for (std::int64_t i = 0; i <= n; ++i) {
    const double pi = binomial_pmf(i, n, p);
    if (pi <= observed * (1.0 + kPmfTolerance)) total += pi;
  }
  return std::min(1.0, total);
}

double binomial_upper_tail(std::int64_t k, std::int64_t n, double p) {
  double total = 0.0;
  for (std::int64_t i = std::max<std::int64_t>(k, 0); i <= n; ++i) total += binomial_pmf(i, n, p);
  return std::min(1.0, total);
}

SignTestResult sign_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidInputError("sign_test: samples differ in length");
  SignTestResult r;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) {
      ++r.a_better;
    } else if (b[i] > a[i]) {
      ++r.b_better;
    } else {
      ++r.ties;
    }
  }
  const auto n = static_cast<std::int64_t>(r.a_better + r.b_better);
  if (n > 0) {
    r.p_two_sided = binomial_two_sided_p(static_cast<std::int64_t>(r.a_better), n);
    r.p_a_greater = binomial_upper_tail(static_cast<std::int64_t>(r.a_better), n);
  }
  return r;
}

double fisher_exact_two_sided(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
  if (a < 0 || b < 0 || c < 0 || d < 0) throw InvalidInputError("fisher test: negative cell");
  const std::int64_t row1 = a + b, col1 = a + c, n = a + b + c + d;
  auto log_choose = [](std::int64_t n_, std::int64_t k_) {
    return std::lgamma(static_cast<double>(n_) + 1) - std::lgamma(static_cast<double>(k_) + 1) -
           std::lgamma(static_cast<double>(n_ - k_) + 1);
  };
  auto prob = [&](std::int64_t x) {
    return std::exp(log_choose(col1, x) + log_choose(n - col1, row1 - x) - log_choose(n, row1));
  };
  const double observed = prob(a);
  double total = 0.0;
  for (std::int64_t x = std::max<std::int64_t>(0, row1 + col1 - n); x <= std::min(row1, col1); ++x) {
    const double px = prob(x);
    if (px <= observed * (1.0 + kPmfTolerance)) total += px;
  }
  return std::min(1.0, total);
}

std::string_view to_string(SurveyKind kind) {
  return kind == SurveyKind::kReconstructionPair ? "pair" : "single";
}

SurveyKind parse_survey_kind(std::string_view name) {
  if (name == "pair") return SurveyKind::kReconstructionPair;
  if (name == "single") return SurveyKind::kGenerationSingle;
  throw ConfigError("unknown survey kind '" + std::string(name) + "' (expected pair or single)");
}

std::string length_class(const std::string& sentence) {
  std::istringstream in(sentence);
  std::size_t n = 0;
  for (std::string w; in >> w;) ++n;
  return n <= 10 ? "le10" : "gt10";
}

Survey make_survey(SurveyKind kind, const std::vector<ModelOutputs>& outputs, const std::vector<std::string>& inputs,
                   std::uint64_t seed, std::size_t items_per_sheet) {
  if (items_per_sheet == 0 || items_per_sheet > kItemsPerSheet) {
    throw ConfigError("survey: items per sheet must lie in [1, " + std::to_string(kItemsPerSheet) + "]");
  }
  std::set<std::string> ids;
  for (const auto& o : outputs) {
    if (o.model_id.empty() || o.model_id == "-" || !ids.insert(o.model_id).second) {
      throw ValidationError("survey: model ids must be unique and non-empty");
    }
  }
  std::mt19937_64 rng(seed);
  Survey survey;
  survey.kind = kind;
  std::vector<SurveyItem> items;

  if (kind == SurveyKind::kReconstructionPair) {
    if (outputs.size() < 2) throw ValidationError("survey: the pair kind needs at least two models");
    if (inputs.empty()) throw ValidationError("survey: the pair kind needs the input sentences");
    for (const auto& o : outputs) {
      if (o.sentences.size() != inputs.size()) {
        throw ValidationError("survey: " + o.model_id + " has " + std::to_string(o.sentences.size()) +
                              " reconstructions for " + std::to_string(inputs.size()) + " inputs");
      }
    }
    std::bernoulli_distribution swap(0.5);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      for (std::size_t a = 0; a < outputs.size(); ++a) {
        for (std::size_t b = a + 1; b < outputs.size(); ++b) {
          SurveyItem item;
          item.original = inputs[i];
          const bool flip = swap(rng);
          const auto& first = outputs[flip ? b : a];
          const auto& second = outputs[flip ? a : b];
          item.text_a = first.sentences[i];
          item.text_b = second.sentences[i];
          item.model_a = first.model_id;
          item.model_b = second.model_id;
          item.length_class = length_class(inputs[i]);
          items.push_back(std::move(item));
        }
      }
    }
    std::shuffle(items.begin(), items.end(), rng);
  } else {
    if (outputs.empty()) throw ValidationError("survey: the single kind needs at least one model");
    std::vector<std::vector<SurveyItem>> per_model;
    for (const auto& o : outputs) {
      if (o.sentences.empty()) throw ValidationError("survey: " + o.model_id + " has no sentences");
      std::vector<SurveyItem> mine;
      for (const auto& s : o.sentences) {
        SurveyItem item;
        item.text_a = s;
        item.model_a = o.model_id;
        item.model_b = "-";
        item.length_class = length_class(s);
        mine.push_back(std::move(item));
      }
      std::shuffle(mine.begin(), mine.end(), rng);
      per_model.push_back(std::move(mine));
    }
    // Round-robin so every run of |models| consecutive items holds one per model.
    std::size_t longest = 0;
    for (const auto& m : per_model) longest = std::max(longest, m.size());
    for (std::size_t r = 0; r < longest; ++r) {
      for (auto& m : per_model) {
        if (r < m.size()) items.push_back(std::move(m[r]));
      }
    }
  }

  for (std::size_t i = 0; i < items.size(); ++i) items[i].item_id = item_id(i);
  for (std::size_t start = 0; start < items.size(); start += items_per_sheet) {
    std::vector<SurveyItem> sheet(items.begin() + static_cast<std::ptrdiff_t>(start),
                                  items.begin() + static_cast<std::ptrdiff_t>(std::min(items.size(), start + items_per_sheet)));
    std::shuffle(sheet.begin(), sheet.end(), rng);
    survey.sheets.push_back(std::move(sheet));
  }
  return survey;
}

void write_survey(const Survey& survey, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const bool pair = survey.kind == SurveyKind::kReconstructionPair;
  std::ofstream key(dir / "key.tsv");
  if (!key) throw IoError("cannot write " + (dir / "key.tsv").string());
  key << "item_id\tmodel_id\tlength_class\tmodel_b\n";
  for (std::size_t s = 0; s < survey.sheets.size(); ++s) {
    char name[32];
    std::snprintf(name, sizeof name, "sheet_%03zu.tsv", s + 1);
    std::ofstream out(dir / name);
    if (!out) throw IoError("cannot write " + (dir / name).string());
    out << (pair ? "item_id\toriginal\ttext_A\ttext_B\n" : "item_id\ttext\n");
    for (const auto& item : survey.sheets[s]) {
      if (pair) {
        out << item.item_id << '\t' << sanitize(item.original) << '\t' << sanitize(item.text_a) << '\t'
            << sanitize(item.text_b) << '\n';
      } else {
        out << item.item_id << '\t' << sanitize(item.text_a) << '\n';
      }
      key << item.item_id << '\t' << item.model_a << '\t' << item.length_class << '\t' << item.model_b << '\n';
    }
  }
}

std::map<std::string, SurveyKeyEntry> read_survey_key(const std::filesystem::path& path) {
  std::string header;
  const auto rows = read_rows(path, header);
  if (header.rfind("item_id\tmodel_id\tlength_class", 0) != 0) throw DataError("survey key: unexpected header");
  std::map<std::string, SurveyKeyEntry> key;
  for (const auto& row : rows) {
    const auto cells = split_tabs(row);
    if (cells.size() < 3) throw DataError("survey key: short row: " + row);
    key[cells[0]] = {cells[1], cells.size() > 3 ? cells[3] : "-", cells[2]};
  }
  return key;
}

std::vector<Response> read_responses(const std::filesystem::path& path) {
  std::string header;
  const auto rows = read_rows(path, header);
  if (header.rfind("item_id\tchoice", 0) != 0) throw DataError("responses: expected header item_id<TAB>choice");
  std::vector<Response> out;
  for (const auto& row : rows) {
    const auto cells = split_tabs(row);
    if (cells.size() < 2) throw DataError("responses: short row: " + row);
    out.push_back({cells[0], cells[1]});
  }
  return out;
}

TallyResult tally_survey(const std::vector<Response>& responses, const std::map<std::string, SurveyKeyEntry>& key) {
  if (key.empty()) throw ValidationError("survey tally: empty key");
  const bool pair = key.begin()->second.model_b != "-";
  for (const auto& [id, entry] : key) {
    if ((entry.model_b != "-") != pair) throw ValidationError("survey tally: key mixes pair and single items");
  }
  TallyResult result;
  result.kind = pair ? SurveyKind::kReconstructionPair : SurveyKind::kGenerationSingle;

  std::map<std::pair<std::string, std::string>, std::pair<std::int64_t, std::int64_t>> pair_wins;
  std::map<std::pair<std::string, std::string>, std::pair<std::int64_t, std::int64_t>> yes_no;  // (model, class)
  for (const auto& r : responses) {
    const auto it = key.find(r.item_id);
    if (it == key.end()) throw ValidationError("survey tally: unknown item id " + r.item_id);
    const auto& entry = it->second;
    ++result.responses;
    if (r.choice == "discard") {
      ++result.discarded;
      continue;
    }
    if (pair) {
      if (r.choice != "A" && r.choice != "B") {
        throw ValidationError("survey tally: choice for " + r.item_id + " must be A, B or discard");
      }
      const std::string& winner = r.choice == "A" ? entry.model_a : entry.model_b;
      ++result.counts[winner];
      const bool ordered = entry.model_a < entry.model_b;
      auto& w = pair_wins[ordered ? std::make_pair(entry.model_a, entry.model_b)
                                  : std::make_pair(entry.model_b, entry.model_a)];
      (winner == (ordered ? entry.model_a : entry.model_b) ? w.first : w.second) += 1;
    } else {
      if (r.choice != "yes" && r.choice != "no") {
        throw ValidationError("survey tally: choice for " + r.item_id + " must be yes, no or discard");
      }
      const bool yes = r.choice == "yes";
      result.counts[entry.model_a] += yes ? 1 : 0;
      for (const auto& cls : {std::string("all"), entry.length_class}) {
        auto& c = yes_no[{entry.model_a, cls}];
        (yes ? c.first : c.second) += 1;
      }
    }
  }
  if (result.responses == result.discarded) throw ValidationError("survey tally: every response was discarded");

  for (const auto& [models, wins] : pair_wins) {
    PairTally t;
    t.model_a = models.first;
    t.model_b = models.second;
    t.wins_a = wins.first;
    t.wins_b = wins.second;
    const auto n = t.wins_a + t.wins_b;
    t.percent_a = 100.0 * static_cast<double>(t.wins_a) / static_cast<double>(n);
    t.p_value = binomial_two_sided_p(t.wins_a, n);
    t.significant = t.p_value < kSignificanceLevel;
    result.pairs.push_back(t);
  }
  for (const auto& [mc, c] : yes_no) {
    SingleTally s;
    s.model = mc.first;
    s.length_class = mc.second;
    s.yes = c.first;
    s.no = c.second;
    s.percent_yes = 100.0 * static_cast<double>(s.yes) / static_cast<double>(s.yes + s.no);
    result.singles.push_back(s);
  }
  for (std::size_t i = 0; i < result.singles.size(); ++i) {
    for (std::size_t j = 0; j < result.singles.size(); ++j) {
      const auto& a = result.singles[i];
      const auto& b = result.singles[j];
      if (a.length_class != b.length_class || !(a.model < b.model)) continue;
      ProportionTest t{a.model, b.model, a.length_class, fisher_exact_two_sided(a.yes, a.no, b.yes, b.no), false};
      t.significant = t.p_value < kSignificanceLevel;
      result.proportion_tests.push_back(t);
    }
  }
  return result;
}

std::string TallyResult::report() const {
  std::ostringstream out;
  out << "kind: " << to_string(kind) << "\nresponses: " << responses << " (discarded " << discarded << ")\n";
  for (const auto& p : pairs) {
    out << p.model_a << " vs " << p.model_b << ": " << p.wins_a << " of " << (p.wins_a + p.wins_b) << " = "
        << percent(p.percent_a) << ", p = " << p.p_value << (p.significant ? " (significant at 99%)" : "") << '\n';
  }
  for (const auto& s : singles) {
    out << s.model << " [" << s.length_class << "]: " << s.yes << " yes of " << (s.yes + s.no) << " = "
        << percent(s.percent_yes) << '\n';
  }
  for (const auto& t : proportion_tests) {
    out << t.model_a << " vs " << t.model_b << " [" << t.length_class << "]: Fisher p = " << t.p_value
        << (t.significant ? " (significant at 99%)" : "") << '\n';
  }
  return out.str();
}

std::vector<std::filesystem::path> emit_plot_data(const std::vector<NamedTable>& tables,
                                                  const std::filesystem::path& dir) {
  const auto cmp = compare_runs(tables);
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto panel = [&](const char* name, const std::vector<std::vector<double>>& values) {
    std::string text = "step";
    for (const auto& n : cmp.names) text += "," + n;
    text += '\n';
    for (std::size_t r = 0; r < cmp.steps.size(); ++r) {
      text += std::to_string(cmp.steps[r]);
      for (const auto& col : values) {
        char buf[32];
        std::snprintf(buf, sizeof buf, ",%.17g", col[r]);
        text += buf;
      }
      text += '\n';
    }
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    written.push_back(path);
  };
  panel("kl_fraction.csv", cmp.kl_fraction);
  panel("elbo.csv", cmp.elbo);
  return written;
}

}  // namespace autogen
