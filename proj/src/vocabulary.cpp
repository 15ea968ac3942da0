#include "autogen/vocabulary.hpp"

#include <fstream>
#include <sstream>

#include "autogen/errors.hpp"

namespace autogen {

namespace {
constexpr const char* kSpecialTokens[] = {"<pad>", "<s>", "</s>", "<unk>"};
}

Vocabulary::Vocabulary(std::size_t max_size) : max_size_(max_size) {
  for (const char* special : kSpecialTokens) {
    token_to_id_.emplace(special, static_cast<TokenId>(id_to_token_.size()));
    id_to_token_.emplace_back(special);
    frequencies_.push_back(0);
  }
}

std::optional<TokenId> Vocabulary::add(std::string_view word, std::int64_t frequency) {
  if (auto it = token_to_id_.find(std::string(word)); it != token_to_id_.end()) {
    return it->second;
  }
  if (size() >= max_size_ + kNumSpecial) return std::nullopt;
  const auto id = static_cast<TokenId>(id_to_token_.size());
  token_to_id_.emplace(std::string(word), id);
  id_to_token_.emplace_back(word);
  frequencies_.push_back(frequency);
  return id;
}

TokenId Vocabulary::id_of(std::string_view word) const {
  auto it = token_to_id_.find(std::string(word));
  return it == token_to_id_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view word) const {
  return token_to_id_.count(std::string(word)) != 0;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (!valid(id)) throw InvalidInputError("token id " + std::to_string(id) + " out of range");
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> words) const {
  std::vector<TokenId> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(id_of(w));
  return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> words;
  words.reserve(ids.size());
  for (TokenId id : ids) words.push_back(token(id));
  return words;
}

std::string Vocabulary::join(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

void Vocabulary::write_tsv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocabulary file " + path);
  for (std::size_t i = 0; i < size(); ++i) {
    out << id_to_token_[i] << '\t' << i << '\t' << frequencies_[i] << '\n';
  }
}

Vocabulary Vocabulary::read_tsv(const std::string& path, std::size_t max_size) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read vocabulary file " + path);
  Vocabulary vocab(max_size);
  std::string line;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string token;
    std::size_t id = 0;
    std::int64_t freq = 0;
    if (!std::getline(row, token, '\t') || !(row >> id >> freq)) {
      throw DataError("malformed vocabulary row: " + line);
    }
    if (id != expected++) throw DataError("vocabulary ids must be dense and ordered: " + line);
    if (id < static_cast<std::size_t>(kNumSpecial)) {
      if (token != kSpecialTokens[id]) throw DataError("unexpected special token " + token);
      continue;
    }
    if (!vocab.add(token, freq)) throw DataError("vocabulary exceeds max size");
  }
  return vocab;
}

}  // namespace autogen
