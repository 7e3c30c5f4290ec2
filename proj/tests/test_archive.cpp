#include <gtest/gtest.h>

#include <fstream>

#include "strkm/archive.hpp"
#include "strkm/energy.hpp"
#include "test_support.hpp"

using namespace strkm;

namespace {

StRkmModel sample_model(std::uint64_t seed) {
  Rng rng(seed);
  StRkmModel model = fixture::random_model(rng, 4, 6, 3);
  model.encoder.layers.back().activation = Activation::PRelu;
  model.encoder.layers.back().slope = 0.37;
  return model;
}

}  // namespace

TEST(Archive, RoundTripPreservesEnergiesBitwise) {
  const StRkmModel model = sample_model(1);
  const auto loaded = deserialize_model(serialize_model(model, {0x123456789abcdefULL, 42}));
  EXPECT_EQ(loaded.meta.seed, 0x123456789abcdefULL);
  EXPECT_EQ(loaded.meta.epochs, 42u);
  EXPECT_EQ(loaded.model.lambda, model.lambda);
  EXPECT_EQ(loaded.model.U.matrix(), model.U.matrix());
  EXPECT_EQ(loaded.model.feature_mean, model.feature_mean);
  EXPECT_EQ(loaded.model.encoder.layers.back().activation, Activation::PRelu);
  EXPECT_EQ(loaded.model.encoder.layers.back().slope, 0.37);
  Rng rng(2);
  const Matrix probes = fixture::random_unit_data(rng, 100, 4);
  for (auto kind : kAllEnergyKinds) {
    EXPECT_EQ(energies(loaded.model, probes, kind), energies(model, probes, kind)) << to_string(kind);
  }
}

TEST(Archive, FileRoundTripAndDeterministicBytes) {
  const auto dir = fixture::temp_dir("archive_file");
  const StRkmModel model = sample_model(3);
  save_model((dir / "m.bin").string(), model, {7, 3});
  const auto loaded = load_model((dir / "m.bin").string());
  EXPECT_EQ(serialize_model(loaded.model, loaded.meta), serialize_model(model, {7, 3}));
  EXPECT_EQ(serialize_model(model), serialize_model(model));
}

TEST(Archive, UntrainedModelNotSerialized) {
  StRkmModel model = sample_model(4);
  model.feature_mean.clear();
  EXPECT_THROW(serialize_model(model), ValidationError);
}

TEST(Archive, AnyFlippedByteIsDetected) {
  const auto bytes = serialize_model(sample_model(5));
  Rng rng(6);
  for (int t = 0; t < 200; ++t) {
    auto bad = bytes;
    const std::size_t at = rng.below(bad.size());
    bad[at] ^= static_cast<unsigned char>(1 + rng.below(255));
    EXPECT_THROW(deserialize_model(bad), FormatError) << "byte " << at;
  }
}

TEST(Archive, TruncationIsDetected) {
  const auto bytes = serialize_model(sample_model(7));
  for (std::size_t len : {std::size_t{0}, std::size_t{7}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    const std::vector<unsigned char> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(len));
    EXPECT_THROW(deserialize_model(cut), FormatError) << len;
  }
}

TEST(Archive, BadMagicMentionsOffset) {
  auto bytes = serialize_model(sample_model(8));
  bytes[0] = 'X';
  try {
    deserialize_model(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos);
  }
}

TEST(Archive, ChecksumValidButInconsistentContentRejected) {
  // rewrite meta.dims' first value and recompute the trailer
  auto bytes = serialize_model(sample_model(9));
  const std::string key = "meta.dims";
  const auto it = std::search(bytes.begin(), bytes.end(), key.begin(), key.end());
  ASSERT_NE(it, bytes.end());
  const std::size_t value_at = static_cast<std::size_t>(it - bytes.begin()) + key.size() + 4 + 8;
  const double bogus = 5.0;
  std::memcpy(bytes.data() + value_at, &bogus, 8);
  const std::size_t end = bytes.size() - 8;
  const std::uint64_t sum = detail::fnv1a64(bytes.data() + 8, end - 8);
  for (int i = 0; i < 8; ++i) bytes[end + i] = static_cast<unsigned char>(sum >> (8 * i));
  EXPECT_THROW(deserialize_model(bytes), FormatError);
}

TEST(Archive, MissingFileIsIoError) {
  EXPECT_THROW(load_model("/nonexistent/model.bin"), IoError);
  const auto dir = fixture::temp_dir("archive_io");
  EXPECT_THROW(save_model((dir / "no" / "m.bin").string(), sample_model(10)), IoError);
}

TEST(Archive, FormatErrorIsIoError) {
  EXPECT_THROW(deserialize_model({1, 2, 3}), IoError);
}
