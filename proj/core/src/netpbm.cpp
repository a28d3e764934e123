#include <algorithm>
#include <cctype>

#include "hdk/dataio.hpp"
#include "hdk/error.hpp"

namespace hdk::io {
namespace {

class HeaderReader {
 public:
  HeaderReader(std::span<const std::uint8_t> b, std::size_t start) : bytes_(b), pos_(start) {}

  std::size_t pos() const { return pos_; }

  [[noreturn]] void error(const std::string& msg) const {
    fail(ErrorKind::kParse, "netpbm: " + msg + " at byte offset " + std::to_string(pos_));
  }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long long number(const char* what) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) error(std::string("header ends before ") + what);
    if (!std::isdigit(bytes_[pos_])) error(std::string("expected decimal ") + what);
    long long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > (1LL << 24)) error(std::string(what) + " is too large");
      ++pos_;
    }
    return v;
  }

  void single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      error("expected one whitespace byte after maxval");
    }
    ++pos_;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_;
};

}  // namespace

Netpbm parse_netpbm(std::span<const std::uint8_t> bytes) {
  HeaderReader r(bytes, 0);
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    r.error("expected magic P5 or P6");
  }
  Netpbm out;
  out.channels = bytes[1] == '5' ? 1 : 3;
  r = HeaderReader(bytes, 2);
  if (bytes.size() > 2 && !std::isspace(bytes[2]) && bytes[2] != '#') {
    r.error("expected whitespace after magic");
  }
  const long long w = r.number("width");
  const long long h = r.number("height");
  const long long maxval = r.number("maxval");
  if (w < 1 || h < 1) r.error("image dimensions must be >= 1");
  if (maxval < 1 || maxval > 65535) r.error("maxval must lie in 1..65535");
  r.single_whitespace();

  const std::size_t bytes_per_sample = maxval < 256 ? 1 : 2;
  const std::size_t count = static_cast<std::size_t>(w) * h * out.channels;
  const std::size_t need = count * bytes_per_sample;
  const std::size_t start = r.pos();
  if (bytes.size() - start < need) {
    fail(ErrorKind::kParse, "netpbm: payload truncated at byte offset " +
                                std::to_string(bytes.size()) + ", expected " +
                                std::to_string(need) + " payload bytes starting at offset " +
                                std::to_string(start));
  }
  out.width = static_cast<int>(w);
  out.height = static_cast<int>(h);
  out.maxval = static_cast<int>(maxval);
  out.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint16_t v = bytes_per_sample == 1
                          ? bytes[start + i]
                          : static_cast<std::uint16_t>((bytes[start + 2 * i] << 8) |
                                                       bytes[start + 2 * i + 1]);
    if (v > maxval) {
      fail(ErrorKind::kParse, "netpbm: sample " + std::to_string(v) + " exceeds maxval at byte offset " +
                                  std::to_string(start + i * bytes_per_sample));
    }
    out.samples[i] = v;
  }
  return out;
}

Netpbm read_netpbm(const std::string& path) {
  const auto bytes = read_file(path);
  try {
    return parse_netpbm(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

Tensor decode_image(const Netpbm& pbm) {
  Tensor t({1, pbm.channels, pbm.height, pbm.width});
  const float maxval = static_cast<float>(pbm.maxval);
  for (int y = 0; y < pbm.height; ++y) {
    for (int x = 0; x < pbm.width; ++x) {
      for (int c = 0; c < pbm.channels; ++c) {
        const auto s = pbm.samples[(static_cast<std::size_t>(y) * pbm.width + x) * pbm.channels + c];
        t.at(0, c, y, x) = static_cast<float>(s) / maxval;
      }
    }
  }
  return t;
}

Tensor read_image(const std::string& path) { return decode_image(read_netpbm(path)); }

BinaryMask read_mask(const std::string& path) {
  const Netpbm pbm = read_netpbm(path);
  BinaryMask m(pbm.height, pbm.width);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const long long v = pbm.samples[i * pbm.channels];
    m.data[i] = v * 255 >= 128LL * pbm.maxval ? 1 : 0;
  }
  return m;
}

std::vector<std::uint8_t> encode_mask(const BinaryMask& mask) {
  const std::string header =
      "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + mask.size());
  for (auto v : mask.data) out.push_back(v ? 255 : 0);
  return out;
}

void write_mask(const std::string& path, const BinaryMask& mask) {
  require(mask.height >= 1 && mask.width >= 1, "write_mask: empty mask");
  write_file_atomic(path, encode_mask(mask));
}

void write_image(const std::string& path, const Tensor& image) {
  require(image.rank() == 4 && image.n() == 1 && image.c() == 3,
          "write_image: expected a 1 x 3 x H x W tensor, got " + shape_str(image.shape()));
  const std::string header =
      "P6\n" + std::to_string(image.w()) + " " + std::to_string(image.h()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (std::int64_t y = 0; y < image.h(); ++y) {
    for (std::int64_t x = 0; x < image.w(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(0, c, y, x), 0.0f, 1.0f);
        out.push_back(static_cast<std::uint8_t>(v * 255.0f + 0.5f));
      }
    }
  }
  write_file_atomic(path, out);
}

}  // namespace hdk::io
