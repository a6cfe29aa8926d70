#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "b2i/corpus.hpp"

using namespace b2i;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("b2i_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

double chi_square_p(const std::vector<double>& observed, const std::vector<double>& expected,
                    double dof) {
  double stat = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double d = observed[i] - expected[i];
    stat += d * d / expected[i];
  }
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), stat));
}

std::vector<double> byte_histogram(GeneratorKind kind, std::size_t sectors, std::uint64_t seed) {
  std::vector<double> h(256, 0.0);
  for (std::size_t i = 0; i < sectors; ++i) {
    Rng rng(derive_seed({seed, i}));
    for (auto b : generate_sector(kind, 512, rng)) h[b] += 1;
  }
  return h;
}

Manifest toy_manifest(std::size_t per_class, std::size_t classes) {
  Manifest m;
  for (std::size_t c = 0; c < classes; ++c) m.labels.push_back("c" + std::to_string(c));
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i)
      m.entries.push_back({"c" + std::to_string(c) + ".bin", i * 512, 512,
                           static_cast<std::uint32_t>(c), std::nullopt});
  return m;
}

constexpr const char* kSpec = R"(# two classes
seed = 42
sector_len = 512
samples = 20
class = noise uniform-random
class = codes prefix-code 30
)";

}  // namespace

TEST(PrefixCode, StandardCodewords) {
  const auto& c = PrefixCode::standard();
  ASSERT_EQ(c.symbols(), 9u);
  const std::vector<std::uint32_t> expect{0b00, 0b01, 0b10, 0b110, 0b1110, 0b11110,
                                          0b111110, 0b1111110, 0b1111111};
  for (std::size_t s = 0; s < 9; ++s) EXPECT_EQ(c.code(s), expect[s]);
}

TEST(PrefixCode, EncodeDecodeRoundTrip) {
  Rng rng(3);
  const auto& c = PrefixCode::standard();
  std::vector<std::uint32_t> syms;
  std::vector<std::uint8_t> bits;
  for (int i = 0; i < 1000; ++i) {
    syms.push_back(c.sample(rng));
    c.encode(syms.back(), bits);
  }
  EXPECT_EQ(c.decode(bits), syms);
  bits.push_back(1);  // partial codeword
  EXPECT_EQ(c.decode(bits), syms);
}

TEST(PrefixCode, RejectsIncompleteCode) {
  EXPECT_THROW(PrefixCode({2, 2, 2}), ParameterError);
  EXPECT_THROW(PrefixCode({2, 1}), ParameterError);
}

TEST(PrefixCodeSector, DecodesFromAnySurvivingCopy) {
  // Rebuild the coded stream from the sector using the recorded phase: coded
  // bit q sits in group q/13 at offset q%13 and is repeated 4 times; take the
  // copies that landed inside the sector, check they agree, and decode.
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const PrefixCodeSector s = generate_prefix_code_sector(512, rng);
    ASSERT_LT(s.phase, 13u);
    const auto sector_bits = unpack_bits(s.bytes);
    std::vector<std::uint8_t> coded;
    for (std::size_t q = 0;; ++q) {
      int value = -1;
      for (std::size_t k = 0; k < 4; ++k) {
        const std::size_t pos = (q / 13) * 52 + k * 13 + q % 13;
        if (pos < s.phase || pos - s.phase >= sector_bits.size()) continue;
        const int b = sector_bits[pos - s.phase];
        if (value >= 0) {
          ASSERT_EQ(value, b) << "copies disagree at coded bit " << q;
        }
        value = b;
      }
      if (value < 0) break;
      coded.push_back(static_cast<std::uint8_t>(value));
    }
    EXPECT_GE(coded.size(), 512u * 8 / 4);
    const auto decoded = PrefixCode::standard().decode(coded);
    ASSERT_LE(decoded.size(), s.symbols.size());
    EXPECT_GT(decoded.size(), 300u);
    EXPECT_TRUE(std::equal(decoded.begin(), decoded.end(), s.symbols.begin())) << "seed " << seed;
  }
}

TEST(Generators, ExactLengthAndDeterminism) {
  for (auto kind : {GeneratorKind::uniform_random, GeneratorKind::ascii_text,
                    GeneratorKind::prefix_code, GeneratorKind::structured_records,
                    GeneratorKind::sparse_markers}) {
    for (std::size_t len : {512u, 4096u}) {
      Rng a(9), b(9);
      const auto x = generate_sector(kind, len, a);
      EXPECT_EQ(x.size(), len) << to_string(kind);
      EXPECT_EQ(x, generate_sector(kind, len, b)) << to_string(kind);
    }
    EXPECT_EQ(parse_generator_kind(to_string(kind)), kind);
  }
  EXPECT_FALSE(parse_generator_kind("gzip"));
}

TEST(Generators, UniformBytesPassChiSquare) {
  const auto h = byte_histogram(GeneratorKind::uniform_random, 10000, 1);
  const std::vector<double> e(256, 10000.0 * 512 / 256);
  EXPECT_GT(chi_square_p(h, e, 255), 0.001);
}

TEST(Generators, PrefixCodeBytesLookUniform) {
  const auto h = byte_histogram(GeneratorKind::prefix_code, 4000, 2);
  const std::vector<double> e(256, 4000.0 * 512 / 256);
  EXPECT_GT(chi_square_p(h, e, 255), 0.001);
}

TEST(Generators, PrefixCodeAndUniformHistogramsDoNotSeparate) {
  // Two-sample chi-square on the 256-bin byte histograms.
  const auto a = byte_histogram(GeneratorKind::uniform_random, 4000, 3);
  const auto b = byte_histogram(GeneratorKind::prefix_code, 4000, 4);
  double na = 0, nb = 0;
  for (std::size_t i = 0; i < 256; ++i) {
    na += a[i];
    nb += b[i];
  }
  double stat = 0;
  for (std::size_t i = 0; i < 256; ++i) {
    const double pooled = a[i] + b[i];
    const double ea = pooled * na / (na + nb), eb = pooled * nb / (na + nb);
    stat += (a[i] - ea) * (a[i] - ea) / ea + (b[i] - eb) * (b[i] - eb) / eb;
  }
  const double p =
      boost::math::cdf(boost::math::complement(boost::math::chi_squared(255), stat));
  EXPECT_GT(p, 0.001);
}

TEST(Generators, AsciiTextIsPrintable) {
  Rng rng(5);
  for (auto b : generate_sector(GeneratorKind::ascii_text, 4096, rng))
    EXPECT_TRUE((b >= 0x20 && b < 0x7F) || b == '\n') << int(b);
}

TEST(SynthSpec, ParsesFieldsAndCounts) {
  const SynthSpec s = parse_synth_spec(kSpec);
  EXPECT_EQ(s.seed, 42u);
  EXPECT_EQ(s.sector_len, 512u);
  ASSERT_EQ(s.classes.size(), 2u);
  EXPECT_EQ(s.classes[0].count, 20u);
  EXPECT_EQ(s.classes[1].count, 30u);
  EXPECT_EQ(s.classes[1].kind, GeneratorKind::prefix_code);
}

TEST(SynthSpec, ErrorsNameLineAndField) {
  auto message = [](const std::string& text) {
    try {
      parse_synth_spec(text);
    } catch (const SpecError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("seed = 1\nsector_len = 1000\n").find("line 2, field 'sector_len'"),
            std::string::npos);
  EXPECT_NE(message("class = a uniform-random 5\nclass = b zip 5\n").find("field 'class'"),
            std::string::npos);
  EXPECT_NE(message("colour = red\n").find("unknown field 'colour'"), std::string::npos);
  EXPECT_NE(message("class = a uniform-random 5\n").find("at least twice"), std::string::npos);
  EXPECT_NE(message("class = a uniform-random\nclass = b ascii-text\n").find("samples"),
            std::string::npos);
  EXPECT_NE(message("samples = x\n").find("line 1"), std::string::npos);
  EXPECT_NE(message("split = 0.5 0.5 0.5\n").find("sum"), std::string::npos);
  EXPECT_NE(message("class = ../a uniform-random 5\nclass = b ascii-text 5\n").find("class name"),
            std::string::npos);
}

TEST(Generate, DeterministicAndWorkerIndependent) {
  const SynthSpec s = parse_synth_spec(kSpec);
  const Corpus a = generate(s, 1);
  const Corpus b = generate(s, 3);
  ASSERT_EQ(a.samples.size(), 50u);
  ASSERT_EQ(b.samples.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(a.samples[i].bytes, b.samples[i].bytes);
    EXPECT_EQ(a.samples[i].label, b.samples[i].label);
  }
  EXPECT_EQ(a.labels, (std::vector<std::string>{"noise", "codes"}));
}

TEST(Manifest, FormatParseRoundTrip) {
  Manifest m = toy_manifest(4, 2);
  m.entries[1].split = Split::val;
  for (auto& e : m.entries)
    if (!e.split) e.split = Split::train;
  const Manifest back = parse_manifest(format_manifest(m));
  EXPECT_EQ(back.labels, m.labels);
  EXPECT_EQ(back.entries, m.entries);
}

TEST(Manifest, ParseRejectsGarbage) {
  EXPECT_THROW(parse_manifest("not json\n"), IngestionError);
  const std::string header = R"({"format":"b2i-manifest","version":1,"labels":["a","b"]})";
  EXPECT_THROW(parse_manifest(header + "\nx.bin\t0\t512\tzzz\n"), LabelError);
  EXPECT_THROW(parse_manifest(header + "\nx.bin\tabc\t512\ta\n"), IngestionError);
}

TEST(Manifest, WriteCorpusThenSliceMatchesGenerator) {
  const SynthSpec s = parse_synth_spec(kSpec);
  const Corpus c = generate(s);
  const fs::path dir = scratch_dir("write_corpus");
  write_corpus(c, s, dir);
  const Manifest m = read_manifest(dir / "manifest.tsv");
  EXPECT_TRUE(m.has_splits());
  validate_manifest(m);
  const auto slices = slice_files(m);
  ASSERT_EQ(slices.size(), c.samples.size());
  for (std::size_t i = 0; i < slices.size(); ++i) {
    EXPECT_EQ(slices[i].bytes, c.samples[i].bytes);
    EXPECT_EQ(slices[i].label, c.samples[i].label);
  }
  fs::remove_all(dir);
}

TEST(Manifest, IndexOneMebibyte) {
  const fs::path dir = scratch_dir("index");
  write_file(dir / "blob.bin", std::string(1 << 20, '\x5a'));
  write_file(dir / "odd.bin", std::string(1000, '\x01'));
  const Manifest m = index_file(dir / "blob.bin", "blob");
  ASSERT_EQ(m.entries.size(), 2048u);
  EXPECT_EQ(m.entries.back().offset, (1u << 20) - 512);
  EXPECT_EQ(index_file(dir / "odd.bin", "odd").entries.size(), 1u);
  EXPECT_EQ(index_file(dir / "blob.bin", "blob", 4096).entries.size(), 256u);
  EXPECT_THROW(index_file(dir / "missing.bin", "x"), IngestionError);
  fs::remove_all(dir);
}

TEST(Manifest, OffsetPastEndIsIngestionErrorNamingEntry) {
  const fs::path dir = scratch_dir("past_end");
  write_file(dir / "small.bin", std::string(1024, '\0'));
  Manifest m{{"a"}, {{"small.bin", 0, 512, 0, {}}, {"small.bin", 768, 512, 0, {}}}, dir};
  try {
    validate_manifest(m);
    FAIL() << "expected IngestionError";
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find("entry 1"), std::string::npos) << e.what();
  }
  try {
    slice_files(m);
    FAIL() << "expected IngestionError";
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find("entry 1"), std::string::npos) << e.what();
  }
  fs::remove_all(dir);
}

TEST(Manifest, ShuffleIsSeedDeterministic) {
  const SynthSpec s = parse_synth_spec(kSpec);
  const fs::path dir = scratch_dir("shuffle");
  const Manifest m = write_corpus(generate(s), s, dir);
  const auto a = slice_files(m, 11);
  const auto b = slice_files(m, 11);
  const auto c = slice_files(m, 12);
  ASSERT_EQ(a.size(), b.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].bytes, b[i].bytes);
    differs |= a[i].bytes != c[i].bytes;
  }
  EXPECT_TRUE(differs);
  fs::remove_all(dir);
}

TEST(Permutation, IsAPermutation) {
  const auto p = permutation(1000, 5);
  std::set<std::size_t> seen(p.begin(), p.end());
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_EQ(*seen.rbegin(), 999u);
  EXPECT_EQ(p, permutation(1000, 5));
}

TEST(Split, StratifiedCountsDisjointExhaustive) {
  const Manifest m = toy_manifest(100, 3);
  const auto parts = split(m, {0.8, 0.1, 0.1}, 7);
  std::set<std::pair<std::string, std::uint64_t>> seen;
  for (std::size_t s = 0; s < 3; ++s) {
    std::vector<std::size_t> per_class(3, 0);
    for (const auto& e : parts[s].entries) {
      EXPECT_EQ(e.split, static_cast<Split>(s));
      EXPECT_TRUE(seen.insert({e.path, e.offset}).second);
      ++per_class[e.label];
    }
    for (auto n : per_class) EXPECT_EQ(n, s == 0 ? 80u : 10u);
  }
  EXPECT_EQ(seen.size(), 300u);
}

TEST(Split, SeedChangesMembershipNotCounts) {
  const Manifest m = toy_manifest(50, 2);
  const auto a = split(m, {0.8, 0.1, 0.1}, 1);
  const auto b = split(m, {0.8, 0.1, 0.1}, 2);
  for (std::size_t s = 0; s < 3; ++s) EXPECT_EQ(a[s].entries.size(), b[s].entries.size());
  EXPECT_NE(a[2].entries, b[2].entries);
  EXPECT_EQ(a[2].entries, split(m, {0.8, 0.1, 0.1}, 1)[2].entries);
}

TEST(Split, SmallClassesStillFillEverySplit) {
  const auto parts = split(toy_manifest(3, 2), {0.8, 0.1, 0.1}, 1);
  for (const auto& p : parts) EXPECT_EQ(p.entries.size(), 2u);
  EXPECT_THROW(split(toy_manifest(2, 2), {0.8, 0.1, 0.1}, 1), SplitError);
  EXPECT_THROW(split(toy_manifest(5, 2), {0.8, 0.1, 0.2}, 1), ParameterError);
}

TEST(Augment, FlipIsAnInvolution) {
  Rng rng(1);
  std::vector<std::uint8_t> s(4096);
  for (auto& b : s) b = static_cast<std::uint8_t>(uniform_below(rng, 256));
  NGramImage im = convert(s);
  const NGramImage original = im;
  hflip(im);
  EXPECT_NE(im, original);
  EXPECT_EQ(im.at(3, 0, 5), original.at(3, im.width() - 1, 5));
  hflip(im);
  EXPECT_EQ(im, original);
}

TEST(Augment, EraseZeroesOnlyTheRectangle) {
  NGramImage im = convert(std::vector<std::uint8_t>(512, 0xFF));
  const NGramImage before = im;
  const Rect r{10, 20, 5, 7};
  erase(im, r);
  for (std::size_t y = 0; y < im.height(); ++y)
    for (std::size_t x = 0; x < im.width(); ++x) {
      const bool inside = y >= 10 && y < 15 && x >= 20 && x < 27;
      ASSERT_EQ(im.at(y, x), inside ? 0 : before.at(y, x));
    }
  EXPECT_EQ(im.height(), 497u);
  EXPECT_EQ(im.width(), 128u);
  NGramImage full = convert(std::vector<std::uint8_t>(512, 0xFF));
  erase(full, Rect{0, 0, full.height(), full.width()});
  for (auto v : full.pixels()) ASSERT_EQ(v, 0);
  EXPECT_THROW(erase(full, Rect{495, 0, 5, 5}), ParameterError);
}

TEST(Augment, SampledRectanglesRespectBounds) {
  Rng rng(2);
  const AugmentConfig cfg;
  for (int i = 0; i < 500; ++i) {
    const auto r = sample_erase_rect(497, 128, rng, cfg);
    if (!r) continue;
    EXPECT_LE(r->top + r->height, 497u);
    EXPECT_LE(r->left + r->width, 128u);
    const double frac = double(r->height * r->width) / (497.0 * 128.0);
    EXPECT_GT(frac, 0.01);
    EXPECT_LT(frac, 0.25);
  }
}

TEST(Augment, DeterministicForSeed) {
  const NGramImage base = convert(std::vector<std::uint8_t>(512, 0x3C));
  AugmentConfig always{1.0, 1.0};
  NGramImage a = base, b = base;
  Rng ra(derive_seed({1, 2, 3})), rb(derive_seed({1, 2, 3}));
  const auto rec_a = augment(a, ra, always);
  const auto rec_b = augment(b, rb, always);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(rec_a.flipped);
  EXPECT_EQ(rec_a.erased, rec_b.erased);
}
