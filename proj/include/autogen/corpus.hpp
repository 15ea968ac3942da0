#pragma once

// Sentence corpora: tokenization, length filtering, vocabulary, the
// train/test split, and a template grammar for synthetic text.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "autogen/seqmodel.hpp"
#include "autogen/vocabulary.hpp"

namespace autogen {

struct CorpusConfig {
  int min_len = 5;
  int max_len = 30;
  std::size_t vocab_cap = 20000;
  double train_fraction = 0.9;
  std::uint64_t seed = 0;

  void validate() const;  // ConfigError
};

/// Lowercases ASCII letters, splits on whitespace and separates punctuation
/// into standalone tokens. Apostrophes and hyphens between letters stay
/// inside the word ("don't", "well-known"); so do periods and commas between
/// digits ("3.5").
std::vector<std::string> tokenize(std::string_view line);

inline constexpr std::string_view kTokenizerDescription =
    "lowercase ascii; whitespace split; punctuation standalone except intra-word ' and - and "
    "intra-number . and ,";

struct CorpusProvenance {
  std::string source;
  std::uint64_t seed = 0;
  std::size_t lines_read = 0;
  std::size_t retained = 0;
  std::size_t train = 0;
  std::size_t test = 0;
};

struct SplitCorpus {
  std::vector<TokenSequence> train;
  std::vector<TokenSequence> test;
  std::vector<std::size_t> train_index;  // positions among the retained sentences
  std::vector<std::size_t> test_index;
  Vocabulary vocabulary;
  CorpusProvenance provenance;
};

/// Tokenized lines whose word count lies in [min_len, max_len], in input order.
std::vector<std::vector<std::string>> filter_by_length(const std::vector<std::string>& lines,
                                                       const CorpusConfig& config);

/// Builds the vocabulary from the vocab_cap most frequent training tokens
/// (ties broken lexicographically) and encodes both splits with it.
/// DataError when no sentence survives the filter.
SplitCorpus filter_and_split(const std::vector<std::string>& lines, const CorpusConfig& config,
                             std::string source = "memory");

struct GrammarSpec {
  int topics = 8;                 // at most the number of built-in topics
  double adjective_prob = 0.4;
  double adverb_prob = 0.25;
  double phrase_prob = 0.5;       // chance of each further prepositional phrase
  double clause_prob = 0.3;       // chance of a conjoined second clause
  int max_phrases = 4;

  void validate() const;  // ConfigError
};

/// n sentences from a topic-driven subject-verb-object grammar. Each sentence
/// draws one topic that supplies its nouns, verbs and adjectives. Every
/// sentence has between 5 and 30 tokens; deterministic in seed.
std::vector<std::string> generate_synthetic(const GrammarSpec& spec, std::size_t n,
                                            std::uint64_t seed);

/// Number of distinct words the grammar can emit with `topics` topics.
std::size_t synthetic_vocabulary_size(int topics);

struct CorpusStats {
  std::size_t sentences = 0;
  std::size_t tokens = 0;
  std::size_t vocab_size = 0;
  std::map<std::size_t, std::size_t> length_histogram;
  double unk_rate = 0.0;
};

CorpusStats corpus_stats(const SplitCorpus& corpus);

std::vector<std::string> read_lines(const std::filesystem::path& path);
void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines);

/// A prepared corpus on disk: train.txt and test.txt (one space-joined token
/// line per sentence, UNK already substituted), vocab.tsv and
/// corpus_manifest.json.
void save_corpus(const SplitCorpus& corpus, const CorpusConfig& config,
                 const std::filesystem::path& dir);
SplitCorpus load_corpus(const std::filesystem::path& dir);

}  // namespace autogen
