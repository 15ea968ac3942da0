#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace autogen {

using TokenId = std::int32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kBosId = 1;
inline constexpr TokenId kEosId = 2;
inline constexpr TokenId kUnkId = 3;
inline constexpr TokenId kNumSpecial = 4;

/// Word <-> id map. Ids 0-3 are the specials PAD, BOS, EOS, UNK; ordinary
/// words follow in the order they were added.
class Vocabulary {
 public:
  explicit Vocabulary(std::size_t max_size = 20000);

  /// Adds a word if absent. Returns its id, or nullopt when the vocabulary
  /// is full (the word then maps to UNK).
  std::optional<TokenId> add(std::string_view word, std::int64_t frequency = 0);

  TokenId id_of(std::string_view word) const;  // UNK when unknown
  bool contains(std::string_view word) const;
  const std::string& token(TokenId id) const;
  std::int64_t frequency(TokenId id) const { return frequencies_.at(static_cast<std::size_t>(id)); }

  std::size_t size() const { return id_to_token_.size(); }
  std::size_t max_size() const { return max_size_; }
  bool valid(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < size(); }

  std::vector<TokenId> encode(std::span<const std::string> words) const;
  std::vector<std::string> decode(std::span<const TokenId> ids) const;
  std::string join(std::span<const TokenId> ids) const;

  /// TSV with columns token, id, frequency (specials included).
  void write_tsv(const std::string& path) const;
  static Vocabulary read_tsv(const std::string& path, std::size_t max_size = 20000);

  bool operator==(const Vocabulary& other) const {
    return id_to_token_ == other.id_to_token_ && frequencies_ == other.frequencies_;
  }

 private:
  std::size_t max_size_;
  std::vector<std::string> id_to_token_;
  std::vector<std::int64_t> frequencies_;
  std::unordered_map<std::string, TokenId> token_to_id_;
};

}  // namespace autogen
