#include "autogen/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <random>
#include <set>
#include <unordered_map>

#include "autogen/errors.hpp"
#include "json.hpp"

namespace autogen {

namespace {

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// ASCII punctuation only; bytes of multi-byte UTF-8 sequences are word
// characters.
bool is_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u) != 0;
}

// Punctuation c between prev and next that stays inside the word.
bool inner_punct(char prev, char c, char next) {
  if ((c == '\'' || c == '-') && is_alpha(prev) && is_alpha(next)) return true;
  return (c == '.' || c == ',') && is_digit(prev) && is_digit(next);
}

}  // namespace

void CorpusConfig::validate() const {
  if (min_len < 1 || max_len < min_len) throw ConfigError("corpus: need 1 <= min_len <= max_len");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("corpus: train_fraction must lie in (0, 1)");
  if (vocab_cap == 0) throw ConfigError("corpus: vocab_cap must be positive");
}

std::vector<std::string> tokenize(std::string_view line) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      const char next = i + 1 < line.size() ? line[i + 1] : ' ';
      if (!word.empty() && inner_punct(word.back(), c, next)) {
        word.push_back(c);
      } else {
        flush();
        out.emplace_back(1, c);
      }
    } else {
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  return out;
}

std::vector<std::vector<std::string>> filter_by_length(const std::vector<std::string>& lines,
                                                       const CorpusConfig& config) {
  config.validate();
  std::vector<std::vector<std::string>> kept;
  for (const auto& line : lines) {
    auto words = tokenize(line);
    const auto n = static_cast<int>(words.size());
    if (n >= config.min_len && n <= config.max_len) kept.push_back(std::move(words));
  }
  return kept;
}

SplitCorpus filter_and_split(const std::vector<std::string>& lines, const CorpusConfig& config,
                             std::string source) {
  auto kept = filter_by_length(lines, config);
  if (kept.empty()) throw DataError("corpus: no sentence has between " + std::to_string(config.min_len) +
                                    " and " + std::to_string(config.max_len) + " words");

  std::vector<std::size_t> order(kept.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(config.seed);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_train = static_cast<std::size_t>(config.train_fraction * static_cast<double>(kept.size()));
  n_train = std::clamp<std::size_t>(n_train, 1, kept.size());

  SplitCorpus corpus;
  corpus.train_index.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  corpus.test_index.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());

  std::unordered_map<std::string, std::int64_t> counts;
  for (auto i : corpus.train_index) {
    for (const auto& w : kept[i]) ++counts[w];
  }
  std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  corpus.vocabulary = Vocabulary(config.vocab_cap);
  for (const auto& [word, freq] : ranked) {
    if (corpus.vocabulary.contains(word)) continue;  // a literal "<unk>" in the text
    if (!corpus.vocabulary.add(word, freq)) break;
  }

  for (auto i : corpus.train_index) corpus.train.emplace_back(corpus.vocabulary.encode(kept[i]));
  for (auto i : corpus.test_index) corpus.test.emplace_back(corpus.vocabulary.encode(kept[i]));
  corpus.provenance = {std::move(source), config.seed, lines.size(), kept.size(), corpus.train.size(),
                       corpus.test.size()};
  return corpus;
}

// ---------------------------------------------------------------------------
// Synthetic grammar

namespace {

struct Topic {
  std::array<const char*, 12> nouns;
  std::array<const char*, 8> verbs;
  std::array<const char*, 8> adjectives;
};

constexpr std::array<Topic, 8> kTopics{{
    {{"cook", "knife", "onion", "kettle", "oven", "spoon", "bread", "soup", "pan", "baker", "plate", "butter"},
     {"chopped", "stirred", "baked", "tasted", "washed", "served", "boiled", "peeled"},
     {"hot", "salty", "fresh", "greasy", "sweet", "burnt", "crisp", "sour"}},
    {{"sailor", "boat", "wave", "anchor", "harbor", "gull", "net", "captain", "island", "shell", "mast", "tide"},
     {"rowed", "anchored", "sailed", "hauled", "steered", "towed", "sank", "spotted"},
     {"wet", "stormy", "blue", "briny", "calm", "rusty", "distant", "foggy"}},
    {{"hunter", "fox", "oak", "moss", "deer", "owl", "trail", "branch", "wolf", "cabin", "stream", "fern"},
     {"tracked", "climbed", "chased", "gathered", "carved", "followed", "trapped", "hid"},
     {"green", "shady", "wild", "mossy", "ancient", "tangled", "damp", "quiet"}},
    {{"driver", "taxi", "tower", "street", "subway", "banker", "office", "bridge", "crowd", "lamp", "mayor", "alley"},
     {"parked", "crossed", "honked", "rented", "painted", "blocked", "bought", "sold"},
     {"busy", "noisy", "grey", "crowded", "modern", "dirty", "tall", "bright"}},
    {{"teacher", "pupil", "lesson", "chalk", "desk", "exam", "book", "principal", "essay", "ruler", "bell", "library"},
     {"graded", "studied", "wrote", "read", "erased", "copied", "taught", "failed"},
     {"boring", "strict", "clever", "difficult", "long", "neat", "early", "late"}},
    {{"singer", "drum", "violin", "choir", "piano", "song", "guitar", "band", "stage", "melody", "trumpet", "chord"},
     {"played", "tuned", "sang", "hummed", "recorded", "strummed", "practiced", "composed"},
     {"loud", "soft", "sharp", "flat", "lovely", "slow", "catchy", "sad"}},
    {{"farmer", "cow", "barn", "tractor", "field", "goat", "fence", "harvest", "hen", "pig", "plow", "hay"},
     {"milked", "fed", "plowed", "planted", "fenced", "herded", "sheared", "harvested"},
     {"muddy", "golden", "fat", "lazy", "dusty", "ripe", "dry", "hungry"}},
    {{"pilot", "rocket", "planet", "comet", "moon", "star", "orbit", "engine", "crater", "astronaut", "signal", "probe"},
     {"launched", "orbited", "landed", "scanned", "repaired", "detected", "fueled", "guided"},
     {"cold", "dark", "huge", "silent", "frozen", "shiny", "alien", "remote"}},
}};

constexpr std::array<const char*, 10> kDeterminers{"the", "this", "that", "every", "one",
                                                   "his", "her", "their", "our", "some"};
constexpr std::array<const char*, 10> kPrepositions{"near", "under", "behind", "beside", "across",
                                                    "into", "over", "with", "from", "toward"};
constexpr std::array<const char*, 8> kAdverbs{"quietly", "slowly", "quickly", "suddenly",
                                              "gladly", "barely", "often", "never"};
constexpr std::array<const char*, 4> kConjunctions{"and", "but", "while", "so"};

template <typename Array>
const char* pick(const Array& options, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, options.size() - 1);
  return options[d(rng)];
}

bool chance(double p, std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

void noun_phrase(const Topic& topic, const GrammarSpec& spec, std::mt19937_64& rng,
                 std::vector<std::string>& out) {
  out.emplace_back(pick(kDeterminers, rng));
  if (chance(spec.adjective_prob, rng)) out.emplace_back(pick(topic.adjectives, rng));
  out.emplace_back(pick(topic.nouns, rng));
}

void clause(const Topic& topic, const GrammarSpec& spec, std::mt19937_64& rng,
            std::vector<std::string>& out) {
  noun_phrase(topic, spec, rng, out);
  if (chance(spec.adverb_prob, rng)) out.emplace_back(pick(kAdverbs, rng));
  out.emplace_back(pick(topic.verbs, rng));
  noun_phrase(topic, spec, rng, out);
  for (int i = 0; i < spec.max_phrases && chance(spec.phrase_prob, rng); ++i) {
    out.emplace_back(pick(kPrepositions, rng));
    noun_phrase(topic, spec, rng, out);
  }
}

}  // namespace

void GrammarSpec::validate() const {
  if (topics < 1 || topics > static_cast<int>(kTopics.size())) {
    throw ConfigError("grammar: topics must lie in [1, " + std::to_string(kTopics.size()) + "]");
  }
  for (double p : {adjective_prob, adverb_prob, phrase_prob, clause_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("grammar: probabilities must lie in [0, 1]");
  }
  if (max_phrases < 0) throw ConfigError("grammar: max_phrases must be >= 0");
}

std::vector<std::string> generate_synthetic(const GrammarSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n == 0) throw InvalidInputError("generate_synthetic: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> topic_d(0, spec.topics - 1);
  std::vector<std::string> lines;
  lines.reserve(n);
  std::vector<std::string> words;
  while (lines.size() < n) {
    words.clear();
    const Topic& topic = kTopics[static_cast<std::size_t>(topic_d(rng))];
    clause(topic, spec, rng, words);
    if (chance(spec.clause_prob, rng)) {
      words.emplace_back(",");
      words.emplace_back(pick(kConjunctions, rng));
      clause(topic, spec, rng, words);
    }
    words.emplace_back(".");
    if (words.size() > 30) continue;  // the shortest clause already has 5 words
    std::string line;
    for (const auto& w : words) {
      if (!line.empty()) line.push_back(' ');
      line += w;
    }
    lines.push_back(std::move(line));
  }
  return lines;
}

std::size_t synthetic_vocabulary_size(int topics) {
  std::set<std::string> words{",", "."};
  for (int t = 0; t < topics && t < static_cast<int>(kTopics.size()); ++t) {
    const auto& topic = kTopics[static_cast<std::size_t>(t)];
    words.insert(topic.nouns.begin(), topic.nouns.end());
    words.insert(topic.verbs.begin(), topic.verbs.end());
    words.insert(topic.adjectives.begin(), topic.adjectives.end());
  }
  words.insert(kDeterminers.begin(), kDeterminers.end());
  words.insert(kPrepositions.begin(), kPrepositions.end());
  words.insert(kAdverbs.begin(), kAdverbs.end());
  words.insert(kConjunctions.begin(), kConjunctions.end());
  return words.size();
}

CorpusStats corpus_stats(const SplitCorpus& corpus) {
  CorpusStats stats;
  stats.vocab_size = corpus.vocabulary.size();
  std::size_t unk = 0;
  for (const auto* split : {&corpus.train, &corpus.test}) {
    for (const auto& s : *split) {
      ++stats.sentences;
      stats.tokens += s.size();
      ++stats.length_histogram[s.size()];
      unk += static_cast<std::size_t>(std::count(s.ids.begin(), s.ids.end(), kUnkId));
    }
  }
  stats.unk_rate = stats.tokens == 0 ? 0.0 : static_cast<double>(unk) / static_cast<double>(stats.tokens);
  return stats;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

void save_corpus(const SplitCorpus& corpus, const CorpusConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto dump = [&](const std::vector<TokenSequence>& split, const char* name) {
    std::vector<std::string> lines;
    lines.reserve(split.size());
    for (const auto& s : split) lines.push_back(corpus.vocabulary.join(s.ids));
    write_lines(dir / name, lines);
  };
  dump(corpus.train, "train.txt");
  dump(corpus.test, "test.txt");
  corpus.vocabulary.write_tsv((dir / "vocab.tsv").string());

  const auto stats = corpus_stats(corpus);
  nlohmann::ordered_json histogram;
  for (const auto& [len, count] : stats.length_histogram) histogram[std::to_string(len)] = count;
  nlohmann::ordered_json manifest = {
      {"source", corpus.provenance.source},
      {"seed", corpus.provenance.seed},
      {"config",
       {{"min_len", config.min_len},
        {"max_len", config.max_len},
        {"vocab_cap", config.vocab_cap},
        {"train_fraction", config.train_fraction}}},
      {"tokenizer", kTokenizerDescription},
      {"counts",
       {{"lines_read", corpus.provenance.lines_read},
        {"retained", corpus.provenance.retained},
        {"train", corpus.provenance.train},
        {"test", corpus.provenance.test},
        {"tokens", stats.tokens},
        {"vocab_size", stats.vocab_size},
        {"unk_rate", stats.unk_rate}}},
      {"length_histogram", histogram},
  };
  std::ofstream out(dir / "corpus_manifest.json");
  if (!out) throw IoError("cannot write corpus manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

SplitCorpus load_corpus(const std::filesystem::path& dir) {
  std::ifstream in(dir / "corpus_manifest.json");
  if (!in) throw DataError("no corpus_manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corpus manifest: ") + e.what());
  }
  SplitCorpus corpus;
  try {
    const auto cap = manifest.at("config").at("vocab_cap").get<std::size_t>();
    corpus.vocabulary = Vocabulary::read_tsv((dir / "vocab.tsv").string(), cap);
    corpus.provenance.source = manifest.at("source").get<std::string>();
    corpus.provenance.seed = manifest.at("seed").get<std::uint64_t>();
    const auto& counts = manifest.at("counts");
    corpus.provenance.lines_read = counts.at("lines_read").get<std::size_t>();
    corpus.provenance.retained = counts.at("retained").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corpus manifest: ") + e.what());
  }
  auto slurp = [&](const char* name) {
    std::vector<TokenSequence> split;
    for (const auto& line : read_lines(dir / name)) {
      std::vector<std::string> words;
      std::size_t start = 0;
      while (start < line.size()) {
        auto end = line.find(' ', start);
        if (end == std::string::npos) end = line.size();
        if (end > start) words.push_back(line.substr(start, end - start));
        start = end + 1;
      }
      if (!words.empty()) split.emplace_back(corpus.vocabulary.encode(words));
    }
    return split;
  };
  corpus.train = slurp("train.txt");
  corpus.test = slurp("test.txt");
  corpus.provenance.train = corpus.train.size();
  corpus.provenance.test = corpus.test.size();
  if (corpus.train.empty()) throw DataError("corpus in " + dir.string() + " has no training sentences");
  return corpus;
}

}  // namespace autogen
