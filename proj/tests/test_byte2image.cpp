#include <gtest/gtest.h>

#include <random>
#include <string>
#include <vector>

#include "b2i/byte2image.hpp"
#include "oracles.hpp"

using namespace b2i;

namespace {

std::vector<std::uint8_t> column(const ByteMatrix& m, std::size_t i) { return m.column(i); }

}  // namespace

TEST(Sector, AcceptsOnlyProductionLengths) {
  EXPECT_NO_THROW(Sector(std::vector<std::uint8_t>(512)));
  EXPECT_NO_THROW(Sector(std::vector<std::uint8_t>(4096)));
  EXPECT_THROW(Sector(std::vector<std::uint8_t>(511)), LengthError);
  EXPECT_THROW(Sector(std::vector<std::uint8_t>(1024)), LengthError);
  EXPECT_THROW(Sector(std::vector<std::uint8_t>{}), LengthError);
}

TEST(ShiftStack, ZeroInputGivesZeroMatrix) {
  const std::vector<std::uint8_t> s{0x00, 0x00};
  const ByteMatrix m = shift_stack(s);
  for (auto v : m.data()) EXPECT_EQ(v, 0);
  EXPECT_EQ(m.data().size(), 16u);
}

TEST(ShiftStack, JpegMarkerColumns) {
  const std::vector<std::uint8_t> s{0xFF, 0xD8};
  const ByteMatrix m = shift_stack(s);
  EXPECT_EQ(column(m, 0), (std::vector<std::uint8_t>{0xFF, 0xD8}));
  EXPECT_EQ(column(m, 1), (std::vector<std::uint8_t>{0xFF, 0xB0}));
  EXPECT_EQ(column(m, 2), (std::vector<std::uint8_t>{0xFF, 0x60}));
  EXPECT_EQ(column(m, 7), (std::vector<std::uint8_t>{0xEC, 0x00}));
  // The same four columns from the bitstream oracle.
  const auto o = oracle::byte_matrix(s);
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(m.at(j, i), o[j * 8 + i]);
}

TEST(ShiftStack, ColumnZeroIsTheSector) {
  std::mt19937 gen(11);
  for (int t = 0; t < 20; ++t) {
    const auto s = oracle::random_bytes(512, gen);
    EXPECT_EQ(column(shift_stack(s), 0), s);
  }
}

TEST(ShiftStack, RejectsEmptyInput) {
  EXPECT_THROW(shift_stack(std::span<const std::uint8_t>{}), LengthError);
}

TEST(ShiftStack, MatchesBitstreamOracleOnRandomSectors) {
  std::mt19937 gen(12345);
  for (int t = 0; t < 200; ++t) {
    const auto s = oracle::random_bytes(512, gen);
    const ByteMatrix m = shift_stack(s);
    const auto o = oracle::byte_matrix(s);
    ASSERT_TRUE(std::equal(m.data().begin(), m.data().end(), o.begin(), o.end()));
  }
}

TEST(ShiftStack, NeighbouringEntriesAreOneBitApart) {
  // Entry i+1 must be the window starting one bit after entry i, checked
  // against windows pulled from the raw bitstream.
  std::mt19937 gen(3);
  const auto s = oracle::random_bytes(512, gen);
  const ByteMatrix m = shift_stack(s);
  for (std::size_t j = 0; j < s.size(); ++j)
    for (std::size_t i = 0; i + 1 < 8; ++i) {
      ASSERT_EQ(m.at(j, i), oracle::window(s, 8 * j + i));
      ASSERT_EQ(m.at(j, i + 1), oracle::window(s, 8 * j + i + 1));
    }
}

TEST(ShiftStack, TailIsZeroFilled) {
  const std::vector<std::uint8_t> s{0x12, 0x34, 0xFF};
  const ByteMatrix m = shift_stack(s);
  // last row: bits of 0xFF followed by zeros
  EXPECT_EQ(m.at(2, 0), 0xFF);
  EXPECT_EQ(m.at(2, 1), 0xFE);
  EXPECT_EQ(m.at(2, 4), 0xF0);
  EXPECT_EQ(m.at(2, 7), 0x80);
}

TEST(NGramImage, DefaultShape) {
  const NGramImage im = ngram_image(shift_stack(std::vector<std::uint8_t>(512, 7)), 16);
  EXPECT_EQ(im.height(), 497u);
  EXPECT_EQ(im.width(), 128u);
  EXPECT_EQ(im.channels(), 1u);
}

TEST(NGramImage, UnigramEqualsMatrix) {
  std::mt19937 gen(5);
  const auto s = oracle::random_bytes(512, gen);
  const ByteMatrix m = shift_stack(s);
  const NGramImage im = ngram_image(m, 1);
  EXPECT_EQ(im.height(), 512u);
  EXPECT_EQ(im.width(), 8u);
  EXPECT_TRUE(std::equal(im.pixels().begin(), im.pixels().end(), m.data().begin()));
}

TEST(NGramImage, ToyStackingByHand) {
  // Rows A, B, C, D of a 4-row matrix; bigram rows are A|B, B|C, C|D.
  std::vector<std::uint8_t> data;
  for (std::uint8_t r = 0; r < 4; ++r)
    for (std::uint8_t i = 0; i < 8; ++i) data.push_back(static_cast<std::uint8_t>(16 * r + i));
  const ByteMatrix m(4, data);
  const NGramImage im = ngram_image(m, 2);
  ASSERT_EQ(im.height(), 3u);
  ASSERT_EQ(im.width(), 16u);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t col = 0; col < 16; ++col) {
      const std::size_t src_row = r + col / 8;
      EXPECT_EQ(im.at(r, col), 16 * src_row + col % 8);
    }
}

TEST(NGramImage, RejectsOutOfRangeOrder) {
  const ByteMatrix m = shift_stack(std::vector<std::uint8_t>(16, 1));
  EXPECT_THROW(ngram_image(m, 0), ParameterError);
  EXPECT_THROW(ngram_image(m, 17), ParameterError);
  EXPECT_NO_THROW(ngram_image(m, 16));
}

TEST(NGramImage, ShapeLawAndOverlapLaw) {
  std::mt19937 gen(9);
  const auto s = oracle::random_bytes(512, gen);
  const ByteMatrix m = shift_stack(s);
  for (std::size_t n : {1, 2, 3, 4, 8, 16, 32, 100, 512}) {
    const NGramImage im = ngram_image(m, n);
    ASSERT_EQ(im.height(), 512 - n + 1);
    ASSERT_EQ(im.width(), 8 * n);
    for (std::size_t r = 0; r + 1 < im.height(); ++r)
      for (std::size_t c = 8; c < 8 * n; ++c) ASSERT_EQ(im.at(r, c), im.at(r + 1, c - 8));
  }
}

TEST(NGramImage, MatchesOracle) {
  std::mt19937 gen(77);
  for (std::size_t n : {1, 5, 16}) {
    const auto s = oracle::random_bytes(64, gen);
    const NGramImage im = ngram_image(shift_stack(s), n);
    const auto o = oracle::ngram(s, n);
    ASSERT_TRUE(std::equal(im.pixels().begin(), im.pixels().end(), o.begin(), o.end()));
  }
}

TEST(Convert4k, ZeroSector) {
  const NGramImage im = convert_4k(std::vector<std::uint8_t>(4096, 0), 16);
  EXPECT_EQ(im.height(), 497u);
  EXPECT_EQ(im.width(), 128u);
  EXPECT_EQ(im.channels(), 8u);
  for (auto v : im.pixels()) ASSERT_EQ(v, 0);
}

TEST(Convert4k, IdenticalPartsGiveIdenticalChannels) {
  std::mt19937 gen(1);
  const auto part = oracle::random_bytes(512, gen);
  std::vector<std::uint8_t> s;
  for (int i = 0; i < 8; ++i) s.insert(s.end(), part.begin(), part.end());
  const NGramImage im = convert_4k(s);
  for (std::size_t c = 1; c < 8; ++c) EXPECT_EQ(im.plane(c), im.plane(0));
}

TEST(Convert4k, ChannelIsIndependentPartPipeline) {
  std::mt19937 gen(2);
  const auto s = oracle::random_bytes(4096, gen);
  const NGramImage im = convert_4k(s, 16);
  for (std::size_t c = 0; c < 8; ++c) {
    const std::span<const std::uint8_t> part(s.data() + 512 * c, 512);
    const NGramImage single = ngram_image(shift_stack(part), 16);
    EXPECT_EQ(im.plane(c), single.plane(0)) << "channel " << c;
  }
}

TEST(Convert4k, RejectsWrongLength) {
  EXPECT_THROW(convert_4k(std::vector<std::uint8_t>(512)), LengthError);
}

TEST(Convert, DispatchesOnLength) {
  EXPECT_EQ(convert(std::vector<std::uint8_t>(512)).channels(), 1u);
  EXPECT_EQ(convert(std::vector<std::uint8_t>(4096)).channels(), 8u);
}

TEST(Convert, Deterministic) {
  std::mt19937 gen(4);
  const auto s = oracle::random_bytes(4096, gen);
  EXPECT_EQ(convert(s), convert(s));
  EXPECT_EQ(export_pgm(convert(s), 3), export_pgm(convert(s), 3));
}

TEST(ExportPgm, TwoByTwo) {
  NGramImage im(2, 2, ImageMeta{2, 1, 1});
  im.at(0, 0) = 0;
  im.at(0, 1) = 255;
  im.at(1, 0) = 255;
  im.at(1, 1) = 0;
  const std::string pgm = export_pgm(im);
  EXPECT_EQ(pgm, std::string("P5\n2 2\n255\n") + std::string("\x00\xFF\xFF\x00", 4));
}

TEST(ExportPgm, PayloadSize) {
  const NGramImage im = convert(std::vector<std::uint8_t>(512, 0xFF));
  const std::string pgm = export_pgm(im);
  const std::string header = "P5\n128 497\n255\n";
  ASSERT_EQ(pgm.substr(0, header.size()), header);
  EXPECT_EQ(pgm.size() - header.size(), 63616u);
  // All 0xFF except the last row, whose final windows reach into the zero tail.
  const auto o = oracle::ngram(std::vector<std::uint8_t>(512, 0xFF), 16);
  EXPECT_TRUE(std::equal(pgm.begin() + static_cast<std::ptrdiff_t>(header.size()), pgm.end(),
                         o.begin(), o.end(), [](char a, std::uint8_t b) {
                           return static_cast<unsigned char>(a) == b;
                         }));
  EXPECT_EQ(static_cast<unsigned char>(pgm[pgm.size() - 9]), 0xFF);
  EXPECT_EQ(static_cast<unsigned char>(pgm.back()), 0x80);
}

TEST(ExportPgm, ChannelOutOfRange) {
  const NGramImage im = convert(std::vector<std::uint8_t>(512));
  EXPECT_THROW(export_pgm(im, 1), ParameterError);
}
