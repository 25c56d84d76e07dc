#include "styleinv/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace styleinv {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[6] = {'S', 'I', 'S', 'E', 'G', '1'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b, std::size_t end) : buf_(b), end_(end) {}
  template <typename T>
  T get() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }
  void bytes(void* dst, std::size_t n) {
    if (n > end_ - pos_) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
    std::memcpy(dst, buf_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == end_; }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

}  // namespace

std::string kind_name(NetKind kind) { return kind == NetKind::seg ? "seg" : "st"; }

std::vector<std::uint8_t> encode_checkpoint(const ModelParams<float>& params, NetKind kind) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(kind));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto& e : params.entries()) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.put<std::uint8_t>(e.trainable ? 1 : 0);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.value.rank()));
    for (int d : e.value.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.bytes(e.value.data(), e.value.numel() * sizeof(float));
  }
  w.put<std::uint32_t>(crc(w.out.data(), w.out.size()));
  return std::move(w.out);
}

DecodedCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof kMagic + 4) throw FormatError("checkpoint too short");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  Reader r(bytes, body);
  char magic[sizeof kMagic];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw FormatError("not a checkpoint (bad magic)");
  if (stored != crc(bytes.data(), body)) throw FormatError("checkpoint checksum mismatch");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto kind = r.get<std::uint8_t>();
  if (kind > 1) throw FormatError("unknown network kind tag " + std::to_string(kind));
  DecodedCheckpoint out{static_cast<NetKind>(kind), {}};
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(r.get<std::uint32_t>(), '\0');
    r.bytes(name.data(), name.size());
    const bool trainable = r.get<std::uint8_t>() != 0;
    Shape shape(r.get<std::uint32_t>());
    for (auto& d : shape) d = static_cast<int>(r.get<std::uint32_t>());
    TensorF t(shape);
    r.bytes(t.data(), t.numel() * sizeof(float));
    out.params.add(name, std::move(t), trainable);
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint records");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params, NetKind kind) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto bytes = encode_checkpoint(params, kind);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write checkpoint " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ModelParams<float> load_checkpoint(const std::filesystem::path& path, NetKind expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingArtifactError("checkpoint not found: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  DecodedCheckpoint d = decode_checkpoint(bytes);
  if (d.kind != expected)
    throw CheckpointKindError(path.string() + " holds a " + kind_name(d.kind) + " network, expected " +
                              kind_name(expected));
  return std::move(d.params);
}

}  // namespace styleinv
