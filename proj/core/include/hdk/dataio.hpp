#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hdk/grid.hpp"
#include "hdk/tensor.hpp"
#include "hdk/weights.hpp"

namespace hdk::io {

// ---- NetPBM --------------------------------------------------------------

// Binary PGM (P5) or PPM (P6). maxval may be 1..65535; two-byte samples are
// big-endian as the format requires.
struct Netpbm {
  int channels = 1;  // 1 for P5, 3 for P6
  int width = 0;
  int height = 0;
  int maxval = 255;
  std::vector<std::uint16_t> samples;  // interleaved, row-major
};

// Throws Error(kParse) with the byte offset of the first malformed token or
// of a truncated payload.
Netpbm parse_netpbm(std::span<const std::uint8_t> bytes);
Netpbm read_netpbm(const std::string& path);

// P6 -> 1 x 3 x H x W, P5 -> 1 x 1 x H x W, samples scaled by 1 / maxval.
Tensor read_image(const std::string& path);
Tensor decode_image(const Netpbm& pbm);

// Binarizes a P5/P6 file (first channel): value * 255 >= 128 * maxval -> 1.
BinaryMask read_mask(const std::string& path);

// P5, maxval 255, pixels {0, 255}. Written to a temporary file and renamed.
void write_mask(const std::string& path, const BinaryMask& mask);
std::vector<std::uint8_t> encode_mask(const BinaryMask& mask);

// P6 with maxval 255 from a 1 x 3 x H x W tensor with values clamped to [0, 1].
void write_image(const std::string& path, const Tensor& image);

// ---- geometry ------------------------------------------------------------

// Zero-pad right/bottom to a square of side max(H, W), then resize to target.
struct Geometry {
  int orig_h = 0;
  int orig_w = 0;
  int pad_bottom = 0;
  int pad_right = 0;
  int side = 0;    // padded square side
  int target = 0;  // network input side
  double scale() const { return static_cast<double>(target) / side; }
};

struct Prepared {
  Tensor image;  // N x C x target x target
  Geometry geometry;
};

Prepared pad_resize(const Tensor& image, int target = 512);

// Maps a target x target mask back to the original H x W: pixel (r, c) takes
// the nearest target pixel floor((r + 0.5) * target / side), same for c.
BinaryMask invert(const BinaryMask& mask, const Geometry& g);

// ---- folds ---------------------------------------------------------------

struct FoldAssignment {
  int k = 5;
  std::uint64_t seed = 0;
  std::map<std::string, int> fold_of;

  std::vector<std::vector<std::string>> folds() const;  // ids per fold, sorted
  std::vector<int> sizes() const;
};

// Fisher-Yates shuffle of `ids` with Rng(seed) (for i = n-1 .. 1 swap i with
// below(i + 1)), then position p goes to fold p % k.
FoldAssignment split_folds(const std::vector<std::string>& ids, int k, std::uint64_t seed);

nlohmann::json to_json(const FoldAssignment& f);
FoldAssignment folds_from_json(const nlohmann::json& j);

// ---- weight container ----------------------------------------------------

// Layout, all integers little-endian:
//   "HDNW" | u16 version (1) | u32 entry count
//   per entry: u32 name length | name bytes (UTF-8) | u8 dtype (0 = f32)
//              | u8 rank | rank x u64 dims | u64 payload byte offset
//   payload: f32 values of every entry, little-endian, in entry order
//   u32 CRC-32 (IEEE 802.3) of the payload
std::vector<std::uint8_t> serialize_weights(const engine::WeightStore& store);
engine::WeightStore deserialize_weights(std::span<const std::uint8_t> bytes);

void save_weights(const engine::WeightStore& store, const std::string& path);
engine::WeightStore load_weights(const std::string& path);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

// ---- small file helpers --------------------------------------------------

std::vector<std::uint8_t> read_file(const std::string& path);
// Writes to `path.tmp` and renames over `path`.
void write_file_atomic(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace hdk::io
