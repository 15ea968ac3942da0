#pragma once

// Versioned binary checkpoint: dims, vocabulary, weights, optimizer moments
// and the training step, followed by a CRC-32 of everything before it.

#include <cstdint>
#include <optional>
#include <string>

#include "autogen/seqmodel.hpp"
#include "autogen/vocabulary.hpp"

namespace autogen {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct AdamState {
  ModelParameters first_moment;
  ModelParameters second_moment;
  std::int64_t updates = 0;

  static AdamState zeros(const ModelDims& dims);
  bool operator==(const AdamState& other) const = default;
};

struct Checkpoint {
  ModelParameters params;
  std::optional<Vocabulary> vocabulary;
  std::optional<AdamState> optimizer;
  std::int64_t step = 0;
  std::string config_text;  // resolved training config, informational
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);

/// Throws ValidationError on bad magic, version mismatch or checksum failure.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace autogen
