#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hdk/dataio.hpp"
#include "hdk/error.hpp"

namespace hdk::io {
namespace {

static_assert(std::endian::native == std::endian::little,
              "weight container I/O assumes a little-endian host");

constexpr char kMagic[4] = {'H', 'D', 'N', 'W'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      fail(ErrorKind::kCorrupt, std::string("weights: truncated while reading ") + what +
                                    " at byte offset " + std::to_string(pos_));
    }
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = ::crc32(crc, bytes.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> serialize_weights(const engine::WeightStore& store) {
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint16_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(store.size()));
  std::uint64_t offset = 0;
  for (const auto& name : store.names()) {
    const Tensor& t = store.get(name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name.data(), name.size());
    w.put<std::uint8_t>(kDtypeF32);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) w.put<std::uint64_t>(static_cast<std::uint64_t>(d));
    w.put<std::uint64_t>(offset);
    offset += static_cast<std::uint64_t>(t.numel()) * sizeof(float);
  }
  const std::size_t payload_start = w.out.size();
  for (const auto& name : store.names()) {
    const Tensor& t = store.get(name);
    w.put_bytes(t.data(), sizeof(float) * t.numel());
  }
  const std::uint32_t crc =
      crc32(std::span(w.out).subspan(payload_start, w.out.size() - payload_start));
  w.put<std::uint32_t>(crc);
  return std::move(w.out);
}

engine::WeightStore deserialize_weights(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const std::string magic = r.get_string(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    fail(ErrorKind::kCorrupt, "weights: bad magic, expected \"HDNW\"");
  }
  const auto version = r.get<std::uint16_t>("version");
  if (version != kVersion) {
    fail(ErrorKind::kCorrupt, "weights: unsupported container version " +
                                  std::to_string(version) + " (expected 1)");
  }
  const auto count = r.get<std::uint32_t>("entry count");

  struct Entry {
    std::string name;
    Tensor::Shape shape;
    std::uint64_t offset = 0;
    std::uint64_t bytes = 0;
  };
  std::vector<Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    const auto len = r.get<std::uint32_t>("name length");
    e.name = r.get_string(len, "name");
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype != kDtypeF32) {
      fail(ErrorKind::kCorrupt, "weights: tensor '" + e.name + "' has unsupported dtype " +
                                    std::to_string(dtype));
    }
    const auto rank = r.get<std::uint8_t>("rank");
    if (rank < 1 || rank > 4) {
      fail(ErrorKind::kCorrupt, "weights: tensor '" + e.name + "' has rank " +
                                    std::to_string(rank));
    }
    std::uint64_t elems = 1;
    for (int d = 0; d < rank; ++d) {
      const auto dim = r.get<std::uint64_t>("dims");
      if (dim == 0 || dim > (1ULL << 32)) {
        fail(ErrorKind::kCorrupt, "weights: tensor '" + e.name + "' has invalid dim " +
                                      std::to_string(dim));
      }
      e.shape.push_back(static_cast<std::int64_t>(dim));
      elems *= dim;
    }
    e.offset = r.get<std::uint64_t>("payload offset");
    e.bytes = elems * sizeof(float);
    entries.push_back(std::move(e));
  }

  const std::size_t payload_start = r.pos();
  if (bytes.size() < payload_start + 4) {
    fail(ErrorKind::kCorrupt, "weights: missing payload checksum");
  }
  const std::size_t payload_len = bytes.size() - payload_start - 4;
  std::uint64_t expected_offset = 0;
  for (const auto& e : entries) {
    if (e.offset != expected_offset || e.offset + e.bytes > payload_len) {
      fail(ErrorKind::kCorrupt, "weights: tensor '" + e.name + "' payload range [" +
                                    std::to_string(e.offset) + ", " +
                                    std::to_string(e.offset + e.bytes) +
                                    ") is inconsistent with a " + std::to_string(payload_len) +
                                    "-byte payload");
    }
    expected_offset += e.bytes;
  }
  if (expected_offset != payload_len) {
    fail(ErrorKind::kCorrupt, "weights: payload holds " + std::to_string(payload_len) +
                                  " bytes, entries describe " + std::to_string(expected_offset));
  }
  const auto payload = bytes.subspan(payload_start, payload_len);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + payload_start + payload_len, 4);
  const std::uint32_t computed = crc32(payload);
  if (stored != computed) {
    std::ostringstream os;
    os << "weights: CRC-32 mismatch over payload bytes [" << payload_start << ", "
       << payload_start + payload_len << ") (checksum at byte offset "
       << payload_start + payload_len << "): stored 0x" << std::hex << stored << ", computed 0x"
       << computed;
    fail(ErrorKind::kCorrupt, os.str());
  }

  engine::WeightStore store;
  store.provenance = engine::Provenance::kFile;
  for (const auto& e : entries) {
    std::vector<float> data(e.bytes / sizeof(float));
    std::memcpy(data.data(), payload.data() + e.offset, e.bytes);
    store.add(e.name, Tensor(e.shape, std::move(data)));
  }
  return store;
}

void save_weights(const engine::WeightStore& store, const std::string& path) {
  write_file_atomic(path, serialize_weights(store));
}

engine::WeightStore load_weights(const std::string& path) {
  const auto bytes = read_file(path);
  try {
    engine::WeightStore store = deserialize_weights(bytes);
    store.source = path;
    return store;
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_atomic(const std::string& path, std::span<const std::uint8_t> bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::kIo, "cannot write '" + tmp + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::kIo, "short write to '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::kIo, "cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

}  // namespace hdk::io
