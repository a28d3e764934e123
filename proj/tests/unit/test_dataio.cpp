#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "hdk/dataio.hpp"
#include "hdk/error.hpp"
#include "hdk/model.hpp"
#include "hdk/netspec.hpp"
#include "hdk/rng.hpp"
#include "oracles.hpp"

using namespace hdk;
using namespace hdk::io;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> bytes(const std::string& header, std::vector<std::uint8_t> payload = {}) {
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("hdk_dataio_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
           "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
  fs::path dir;
};

std::vector<std::string> make_ids(int n) {
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) ids.push_back("img" + std::to_string(100000 + i));
  return ids;
}

}  // namespace

TEST(Netpbm, P6AllMaxIsOne) {
  const Tensor t = decode_image(parse_netpbm(bytes("P6\n2 2\n255\n", std::vector<std::uint8_t>(12, 255))));
  EXPECT_EQ(t.shape(), (Tensor::Shape{1, 3, 2, 2}));
  for (float v : t.values()) EXPECT_EQ(v, 1.0f);
}

TEST(Netpbm, MaxvalScaling) {
  const Tensor t = decode_image(parse_netpbm(bytes("P5 1 3 127\n", {127, 0, 64})));
  EXPECT_EQ(t.at(0, 0, 0, 0), 1.0f);
  EXPECT_EQ(t.at(0, 0, 1, 0), 0.0f);
  EXPECT_FLOAT_EQ(t.at(0, 0, 2, 0), 64.0f / 127.0f);
}

TEST(Netpbm, SixteenBitBigEndian) {
  const Netpbm p = parse_netpbm(bytes("P5\n2 1\n65535\n", {0x01, 0x02, 0xff, 0xff}));
  EXPECT_EQ(p.samples, (std::vector<std::uint16_t>{0x0102, 0xffff}));
}

TEST(Netpbm, CommentsInHeader) {
  const Netpbm p = parse_netpbm(bytes("P5 # comment\n# more\n1 1\n255\n", {7}));
  EXPECT_EQ(p.samples[0], 7);
}

TEST(Netpbm, MalformedCorpusRejectedWithOffsets) {
  const std::vector<std::vector<std::uint8_t>> corpus = {
      bytes(""),
      bytes("P"),
      bytes("P3\n1 1\n255\n", {0}),
      bytes("P7\n1 1\n255\n", {0}),
      bytes("Q5\n1 1\n255\n", {0}),
      bytes("P51 1\n255\n", {0}),
      bytes("P5\n"),
      bytes("P5\n1"),
      bytes("P5\n1 1"),
      bytes("P5\n1 1\n255"),
      bytes("P5\nx 1\n255\n", {0}),
      bytes("P5\n0 1\n255\n", {0}),
      bytes("P5\n1 0\n255\n", {0}),
      bytes("P5\n1 1\n0\n", {0}),
      bytes("P5\n1 1\n70000\n", {0, 0}),
      bytes("P5\n1 1\n-1\n", {0}),
      bytes("P5\n99999999999 1\n255\n", {0}),
      bytes("P5\n2 2\n255\n", {0, 0, 0}),
      bytes("P6\n2 2\n255\n", std::vector<std::uint8_t>(11, 0)),
      bytes("P5\n1 1\n100\n", {200}),
      bytes("P5\n1 1\n1000\n", {0x10, 0x00}),
      bytes("P5\n1 1\n255", {0}),
  };
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    try {
      parse_netpbm(corpus[i]);
      ADD_FAILURE() << "fixture " << i << " accepted";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kParse) << i;
      EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos) << e.what();
    }
  }
}

TEST(Netpbm, FuzzedHeadersNeverCrash) {
  const auto good = bytes("P6\n3 2\n255\n", std::vector<std::uint8_t>(18, 9));
  Rng rng(77);
  for (int t = 0; t < 3000; ++t) {
    auto b = good;
    const int edits = 1 + static_cast<int>(rng.below(3));
    for (int e = 0; e < edits; ++e) {
      const auto pos = rng.below(11);
      b[pos] = static_cast<std::uint8_t>(rng.below(256));
    }
    if (rng.bernoulli(0.2)) b.resize(rng.below(b.size()));
    try {
      const Netpbm p = parse_netpbm(b);
      EXPECT_EQ(p.samples.size(), static_cast<std::size_t>(p.width) * p.height * p.channels);
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kParse);
    }
  }
}

TEST_F(TempDir, MaskRoundTripIsBitIdentical) {
  Rng rng(3);
  const BinaryMask m = oracle::random_mask(rng, 13, 29);
  write_mask(path("m.pgm"), m);
  EXPECT_EQ(read_mask(path("m.pgm")), m);
  const auto raw = read_file(path("m.pgm"));
  EXPECT_EQ(raw, encode_mask(m));
  write_mask(path("m2.pgm"), read_mask(path("m.pgm")));
  EXPECT_EQ(read_file(path("m2.pgm")), raw);
  EXPECT_FALSE(fs::exists(path("m.pgm.tmp")));
}

TEST_F(TempDir, MaskBinarizationThreshold) {
  const auto b = bytes("P5\n4 1\n255\n", {0, 127, 128, 255});
  write_file_atomic(path("t.pgm"), b);
  EXPECT_EQ(read_mask(path("t.pgm")).data, (std::vector<std::uint8_t>{0, 0, 1, 1}));
}

TEST_F(TempDir, ImageRoundTrip) {
  Tensor t({1, 3, 3, 5});
  for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<float>(i % 256) / 255.0f;
  write_image(path("i.ppm"), t);
  EXPECT_TRUE(bitwise_equal(read_image(path("i.ppm")), t));
}

TEST_F(TempDir, ReadErrorsNamePath) {
  try {
    read_image(path("absent.ppm"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
    EXPECT_NE(std::string(e.what()).find("absent.ppm"), std::string::npos);
  }
}

TEST(Geometry, Landscape640x480) {
  const Prepared p = pad_resize(Tensor({1, 3, 480, 640}, 0.5f));
  EXPECT_EQ(p.image.shape(), (Tensor::Shape{1, 3, 512, 512}));
  EXPECT_EQ(p.geometry.side, 640);
  EXPECT_EQ(p.geometry.pad_bottom, 160);
  EXPECT_EQ(p.geometry.pad_right, 0);
  EXPECT_DOUBLE_EQ(p.geometry.scale(), 512.0 / 640.0);
  // zero padding at the bottom survives the resize
  EXPECT_EQ(p.image.at(0, 0, 511, 100), 0.0f);
  EXPECT_FLOAT_EQ(p.image.at(0, 0, 10, 100), 0.5f);
}

TEST(Geometry, SquareTargetIsIdentity) {
  Tensor t({1, 3, 512, 512});
  Rng rng(1);
  for (float& v : t.values()) v = static_cast<float>(rng.uniform01());
  const Prepared p = pad_resize(t);
  EXPECT_TRUE(bitwise_equal(p.image, t));
  EXPECT_EQ(p.geometry.pad_bottom, 0);
  EXPECT_EQ(p.geometry.pad_right, 0);
  EXPECT_DOUBLE_EQ(p.geometry.scale(), 1.0);
}

TEST(Geometry, InvertAllOnes) {
  const Prepared p = pad_resize(Tensor({1, 3, 100, 60}, 1.0f));
  EXPECT_EQ(p.geometry.pad_right, 40);
  BinaryMask net(512, 512);
  for (int y = 0; y < 512; ++y)
    for (int x = 0; x < 512; ++x) net(y, x) = p.image.at(0, 0, y, x) >= 0.5f ? 1 : 0;
  const BinaryMask back = invert(net, p.geometry);
  EXPECT_EQ(back.height, 100);
  EXPECT_EQ(back.width, 60);
  for (auto v : back.data) EXPECT_EQ(v, 1);
}

TEST(Geometry, InversionDimsExactForAllSmallShapes) {
  for (int h = 1; h <= 64; ++h) {
    for (int w = 1; w <= 64; ++w) {
      const Prepared p = pad_resize(Tensor({1, 1, h, w}, 1.0f), 32);
      ASSERT_EQ(p.geometry.side, std::max(h, w));
      const BinaryMask back = invert(BinaryMask(32, 32, 1), p.geometry);
      ASSERT_EQ(back.height, h);
      ASSERT_EQ(back.width, w);
    }
  }
}

TEST(Geometry, Errors) {
  EXPECT_THROW(pad_resize(Tensor({1, 3, 0, 4})), Error);
  EXPECT_THROW(pad_resize(Tensor({1, 3, 8, 8}), 100), Error);
  const Prepared p = pad_resize(Tensor({1, 3, 40, 30}), 64);
  EXPECT_THROW(invert(BinaryMask(32, 32), p.geometry), Error);
}

TEST(Folds, TwoThousandIntoFive) {
  const FoldAssignment f = split_folds(make_ids(2000), 5, 0);
  EXPECT_EQ(f.sizes(), (std::vector<int>{400, 400, 400, 400, 400}));
}

TEST(Folds, SevenIntoFive) {
  const FoldAssignment f = split_folds(make_ids(7), 5, 1);
  EXPECT_EQ(f.sizes(), (std::vector<int>{2, 2, 1, 1, 1}));
}

TEST(Folds, DeterministicPerSeed) {
  const auto ids = make_ids(50);
  EXPECT_EQ(split_folds(ids, 5, 9).fold_of, split_folds(ids, 5, 9).fold_of);
  EXPECT_NE(split_folds(ids, 5, 9).fold_of, split_folds(ids, 5, 10).fold_of);
}

TEST(Folds, DocumentedShuffle) {
  // independent replay of the documented procedure
  const auto ids = make_ids(23);
  auto order = ids;
  Rng rng(31);
  for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  const FoldAssignment f = split_folds(ids, 4, 31);
  for (std::size_t p = 0; p < order.size(); ++p) EXPECT_EQ(f.fold_of.at(order[p]), int(p % 4));
}

TEST(Folds, PartitionProperty) {
  Rng rng(8);
  for (int t = 0; t < 300; ++t) {
    const int n = 2 + static_cast<int>(rng.below(200));
    const int k = 2 + static_cast<int>(rng.below(n - 1));
    const auto ids = make_ids(n);
    const FoldAssignment f = split_folds(ids, k, rng.next_u64());
    std::multiset<std::string> seen;
    for (const auto& fold : f.folds()) seen.insert(fold.begin(), fold.end());
    ASSERT_EQ(seen, std::multiset<std::string>(ids.begin(), ids.end()));
    const auto s = f.sizes();
    ASSERT_EQ(static_cast<int>(s.size()), k);
    ASSERT_LE(*std::max_element(s.begin(), s.end()) - *std::min_element(s.begin(), s.end()), 1);
  }
}

TEST(Folds, Errors) {
  EXPECT_THROW(split_folds(make_ids(10), 1, 0), Error);
  EXPECT_THROW(split_folds(make_ids(3), 5, 0), Error);
  EXPECT_THROW(split_folds({"a", "b", "a"}, 2, 0), Error);
}

TEST(Folds, JsonRoundTrip) {
  const FoldAssignment f = split_folds(make_ids(12), 3, 5);
  const auto j = to_json(f);
  EXPECT_EQ(j["k"], 3);
  EXPECT_EQ(j["seed"], 5);
  EXPECT_EQ(j["assignments"].size(), 12u);
  const FoldAssignment g = folds_from_json(j);
  EXPECT_EQ(g.fold_of, f.fold_of);
  EXPECT_THROW(folds_from_json(nlohmann::json{{"k", 3}}), Error);
}

namespace {

engine::WeightStore small_store() {
  engine::WeightStore s;
  Rng rng(6);
  Tensor a({2, 3, 3, 3});
  for (float& v : a.values()) v = static_cast<float>(rng.uniform(-1, 1));
  s.add("a.w", a);
  s.add("a.b", Tensor({2}, std::vector<float>{-0.0f, 1e-30f}));
  s.add("mix", Tensor({1, 2, 2}, std::vector<float>{1, 2, 3, 4}));
  return s;
}

}  // namespace

TEST_F(TempDir, WeightRoundTrip) {
  const auto s = small_store();
  save_weights(s, path("w.hdnw"));
  const auto l = load_weights(path("w.hdnw"));
  EXPECT_TRUE(engine::bitwise_equal(s, l));
  EXPECT_EQ(l.provenance, engine::Provenance::kFile);
  EXPECT_EQ(l.source, path("w.hdnw"));
  const auto raw = read_file(path("w.hdnw"));
  EXPECT_EQ(std::string(raw.begin(), raw.begin() + 4), "HDNW");
  EXPECT_EQ(raw[4], 1);
  EXPECT_EQ(raw[5], 0);
  EXPECT_EQ(raw[6], 3);  // entry count
}

TEST(WeightFile, FlippedPayloadByteNamesOffset) {
  auto raw = serialize_weights(small_store());
  const std::size_t payload_len = (54 + 2 + 4) * 4;
  const std::size_t payload_start = raw.size() - 4 - payload_len;
  raw[payload_start + 17] ^= 0x40;
  try {
    deserialize_weights(raw);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCorrupt);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("CRC"), std::string::npos);
    EXPECT_NE(msg.find(std::to_string(payload_start)), std::string::npos) << msg;
  }
}

TEST(WeightFile, HeaderCorruption) {
  const auto good = serialize_weights(small_store());
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_weights(bad_magic), Error);
  auto bad_version = good;
  bad_version[4] = 2;
  try {
    deserialize_weights(bad_version);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  for (std::size_t cut : {std::size_t{3}, std::size_t{9}, std::size_t{30}, good.size() - 1}) {
    EXPECT_THROW(deserialize_weights(std::span(good).first(cut)), Error) << cut;
  }
}

TEST(WeightFile, MissingTensorAgainstNetSpec) {
  const auto net = graph::load_netspec_file(graph::resolve_config("hardnetv2-53"));
  auto w = engine::init_weights(net, 0);
  w.remove("stage3.block.conv5.w");
  const auto loaded = deserialize_weights(serialize_weights(w));
  try {
    engine::Model(net).check(loaded);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMissing);
    EXPECT_NE(std::string(e.what()).find("stage3.block.conv5.w"), std::string::npos);
  }
}

TEST(Crc32, KnownVector) {
  const std::string s = "123456789";
  EXPECT_EQ(crc32(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())),
            0xCBF43926u);
}
