#include "autogen/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "autogen/errors.hpp"

namespace autogen {

namespace {

constexpr char kMagic[8] = {'A', 'G', 'C', 'K', 'P', 'T', '\n', '\0'};

class Writer {
 public:
  template <typename T>
  void pod(const T& v) {
    const auto* bytes = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), bytes, bytes + sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void params(const ModelParameters& p) {
    pod(p.dims.vocab_size);
    pod(p.dims.embed_dim);
    pod(p.dims.hidden_dim);
    pod(p.dims.latent_dim);
    for (const auto& t : p.tensors()) {
      str(std::string(t.name));
      pod<std::uint64_t>(t.values.size());
      const auto* bytes = reinterpret_cast<const char*>(t.values.data());
      buf_.insert(buf_.end(), bytes, bytes + t.values.size_bytes());
    }
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  ModelParameters params() {
    ModelDims dims;
    dims.vocab_size = pod<std::int64_t>();
    dims.embed_dim = pod<std::int64_t>();
    dims.hidden_dim = pod<std::int64_t>();
    dims.latent_dim = pod<std::int64_t>();
    ModelParameters p = ModelParameters::zeros(dims);
    for (auto& t : p.tensors()) {
      if (str() != t.name) throw ValidationError("checkpoint tensor order mismatch at " + std::string(t.name));
      if (pod<std::uint64_t>() != t.values.size()) {
        throw ValidationError("checkpoint tensor size mismatch for " + std::string(t.name));
      }
      need(t.values.size_bytes());
      std::memcpy(t.values.data(), data_.data() + pos_, t.values.size_bytes());
      pos_ += t.values.size_bytes();
    }
    return p;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw ValidationError("checkpoint truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

}  // namespace

AdamState AdamState::zeros(const ModelDims& dims) {
  return {ModelParameters::zeros(dims), ModelParameters::zeros(dims), 0};
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  Writer w;
  w.pod(kCheckpointVersion);
  w.params(checkpoint.params);
  w.pod<std::uint8_t>(checkpoint.vocabulary ? 1 : 0);
  if (checkpoint.vocabulary) {
    const auto& v = *checkpoint.vocabulary;
    w.pod<std::uint64_t>(v.max_size());
    w.pod<std::uint64_t>(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      w.str(v.token(static_cast<TokenId>(i)));
      w.pod(v.frequency(static_cast<TokenId>(i)));
    }
  }
  w.pod<std::uint8_t>(checkpoint.optimizer ? 1 : 0);
  if (checkpoint.optimizer) {
    w.params(checkpoint.optimizer->first_moment);
    w.params(checkpoint.optimizer->second_moment);
    w.pod(checkpoint.optimizer->updates);
  }
  w.pod(checkpoint.step);
  w.str(checkpoint.config_text);

  const std::string& payload = w.bytes();
  const std::uint32_t crc = crc_of(payload);
  // Write-then-rename so a crash never leaves a half-written checkpoint.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp);
    out.write(kMagic, sizeof(kMagic));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    out.write(reinterpret_cast<const char*>(&crc), sizeof(crc));
    if (!out) throw IoError("failed writing checkpoint " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot rename checkpoint to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < sizeof(kMagic) + sizeof(std::uint32_t) ||
      std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ValidationError("not a checkpoint file: " + path);
  }
  const std::string_view payload(data.data() + sizeof(kMagic),
                                 data.size() - sizeof(kMagic) - sizeof(std::uint32_t));
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, data.data() + data.size() - sizeof(stored_crc), sizeof(stored_crc));
  if (crc_of(payload) != stored_crc) throw ValidationError("checkpoint checksum mismatch: " + path);

  Reader r(payload);
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ValidationError("checkpoint version " + std::to_string(version) +
                          " not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c{r.params(), std::nullopt, std::nullopt, 0, {}};
  if (r.pod<std::uint8_t>()) {
    const auto max_size = r.pod<std::uint64_t>();
    const auto n = r.pod<std::uint64_t>();
    Vocabulary v(max_size);
    for (std::uint64_t i = 0; i < n; ++i) {
      std::string token = r.str();
      const auto freq = r.pod<std::int64_t>();
      if (i >= static_cast<std::uint64_t>(kNumSpecial)) v.add(token, freq);
    }
    c.vocabulary = std::move(v);
  }
  if (r.pod<std::uint8_t>()) {
    AdamState s{r.params(), r.params(), 0};
    s.updates = r.pod<std::int64_t>();
    c.optimizer = std::move(s);
  }
  c.step = r.pod<std::int64_t>();
  c.config_text = r.str();
  if (!r.done()) throw ValidationError("trailing bytes in checkpoint");
  return c;
}

}  // namespace autogen
