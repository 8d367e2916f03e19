#include "metaadamw/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace metaadamw {

namespace {

constexpr std::string_view kMagic = "MADWCKPT";

template <typename T>
void put(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
  }
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(std::string_view blob) : blob_(blob) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<unsigned char>(blob_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string() {
    const auto len = get<std::uint32_t>();
    need(len);
    std::string s(blob_.substr(pos_, len));
    pos_ += len;
    return s;
  }

  std::string_view raw(std::size_t n) {
    need(n);
    auto s = blob_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == blob_.size(); }

 private:
  void need(std::size_t n) const {
    if (blob_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated blob");
  }

  std::string_view blob_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put_string(out, ckpt.kind);
  put<std::uint64_t>(out, ckpt.step);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const auto& a : ckpt.arrays) {
    if (element_count(a.shape) != a.data.size()) {
      throw CheckpointError("checkpoint: array " + a.name + " does not fill its shape");
    }
    put_string(out, a.name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto e : a.shape) put<std::uint64_t>(out, e);
  }
  for (const auto& a : ckpt.arrays) {
    for (double v : a.data) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view blob) {
  Reader r(blob);
  if (r.raw(kMagic.size()) != kMagic) throw CheckpointError("checkpoint: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: schema version " + std::to_string(version) +
                          " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ckpt;
  ckpt.kind = r.get_string();
  ckpt.step = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.get_string();
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw CheckpointError("checkpoint: implausible rank for " + a.name);
    for (std::uint32_t d = 0; d < rank; ++d) a.shape.push_back(r.get<std::uint64_t>());
    ckpt.arrays.push_back(std::move(a));
  }
  for (auto& a : ckpt.arrays) {
    const std::size_t n = element_count(a.shape);
    if (n > blob.size() / 8) throw CheckpointError("checkpoint: truncated blob");
    a.data.resize(n);
    for (auto& v : a.data) v = std::bit_cast<double>(r.get<std::uint64_t>());
  }
  if (!r.done()) throw CheckpointError("checkpoint: trailing bytes");
  return ckpt;
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace metaadamw
