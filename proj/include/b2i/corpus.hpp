#pragma once

// Labeled sector corpora: synthetic generators, the manifest index format,
// file slicing, stratified splits and image augmentation.
//
// Manifest layout (UTF-8 text):
//   line 1   {"format":"b2i-manifest","version":1,"labels":["a","b",...]}
//   line 2+  path<TAB>offset<TAB>length<TAB>label[<TAB>train|val|test]
// Relative paths resolve against the manifest's directory.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"

#include "b2i/byte2image.hpp"
#include "b2i/error.hpp"
#include "b2i/rng.hpp"

namespace b2i {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- prefix code

/// Canonical prefix code built from a list of code lengths (one per symbol,
/// nondecreasing). The code must be complete (Kraft sum exactly 1).
class PrefixCode {
 public:
  explicit PrefixCode(std::vector<unsigned> lengths) : lengths_(std::move(lengths)) {
    if (lengths_.empty()) throw ParameterError("prefix code needs symbols");
    if (!std::is_sorted(lengths_.begin(), lengths_.end())) {
      throw ParameterError("canonical code lengths must be nondecreasing");
    }
    max_len_ = lengths_.back();
    if (lengths_.front() == 0 || max_len_ > 31) {
      throw ParameterError("code lengths must lie in [1, 31]");
    }
    std::uint64_t kraft = 0;
    for (unsigned l : lengths_) kraft += std::uint64_t{1} << (max_len_ - l);
    if (kraft != (std::uint64_t{1} << max_len_)) {
      throw ParameterError("prefix code is not complete");
    }
    std::uint32_t code = 0;
    unsigned prev = lengths_.front();
    for (unsigned l : lengths_) {
      code <<= (l - prev);
      codes_.push_back(code++);
      prev = l;
    }
  }

  /// Lengths 2,2,2,3,4,5,6,7,7: codewords 00 01 10 110 1110 11110 111110
  /// 1111110 1111111. Mean length under the sampling law is 3 bits.
  static const PrefixCode& standard() {
    static const PrefixCode code({2, 2, 2, 3, 4, 5, 6, 7, 7});
    return code;
  }

  std::size_t symbols() const noexcept { return lengths_.size(); }
  unsigned length(std::size_t s) const { return lengths_.at(s); }
  std::uint32_t code(std::size_t s) const { return codes_.at(s); }
  unsigned max_length() const noexcept { return max_len_; }

  /// Draws a symbol with probability 2^-length: read max_length fair bits
  /// and return the symbol whose codeword prefixes them.
  std::uint32_t sample(Rng& rng) const {
    const std::uint32_t word =
        static_cast<std::uint32_t>(uniform_below(rng, std::uint64_t{1} << max_len_));
    for (std::size_t s = 0; s < lengths_.size(); ++s) {
      if ((word >> (max_len_ - lengths_[s])) == codes_[s])
        return static_cast<std::uint32_t>(s);
    }
    throw ParameterError("unreachable: complete code failed to match");
  }

  /// Appends codeword bits (one 0/1 value per element), MSB first.
  void encode(std::uint32_t symbol, std::vector<std::uint8_t>& bits) const {
    const unsigned l = length(symbol);
    const std::uint32_t c = codes_[symbol];
    for (unsigned k = 0; k < l; ++k)
      bits.push_back(static_cast<std::uint8_t>((c >> (l - 1 - k)) & 1u));
  }

  /// Decodes as many whole symbols as the bits hold; a trailing partial
  /// codeword is ignored.
  std::vector<std::uint32_t> decode(std::span<const std::uint8_t> bits) const {
    std::vector<std::uint32_t> out;
    std::uint32_t acc = 0;
    unsigned len = 0;
    for (std::uint8_t b : bits) {
      acc = (acc << 1) | (b & 1u);
      ++len;
      for (std::size_t s = 0; s < lengths_.size(); ++s) {
        if (lengths_[s] == len && codes_[s] == acc) {
          out.push_back(static_cast<std::uint32_t>(s));
          acc = 0;
          len = 0;
          break;
        }
      }
    }
    return out;
  }

 private:
  std::vector<unsigned> lengths_;
  std::vector<std::uint32_t> codes_;
  unsigned max_len_ = 0;
};

inline std::vector<std::uint8_t> unpack_bits(std::span<const std::uint8_t> bytes) {
  std::vector<std::uint8_t> bits(bytes.size() * 8);
  for (std::size_t i = 0; i < bytes.size(); ++i)
    for (unsigned k = 0; k < 8; ++k)
      bits[i * 8 + k] = static_cast<std::uint8_t>((bytes[i] >> (7 - k)) & 1u);
  return bits;
}

inline std::vector<std::uint8_t> pack_bits(std::span<const std::uint8_t> bits) {
  std::vector<std::uint8_t> bytes((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) bytes[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
  return bytes;
}

/// The coded stream is cut into blocks of `block_bits` and every block is
/// emitted `repeats` times in a row. The stream starts `phase` bits into the
/// first group, phase < block_bits, so every coded bit still has a copy
/// inside the sector. Single 8-bit windows stay uniformly distributed; the
/// redundancy is only visible as correlation between bits 13 apart.
struct EchoLayout {
  std::size_t block_bits = 13;
  std::size_t repeats = 4;
};

struct PrefixCodeSector {
  std::vector<std::uint8_t> bytes;
  std::vector<std::uint32_t> symbols;  // every symbol that was encoded
  std::size_t phase = 0;
};

inline PrefixCodeSector generate_prefix_code_sector(std::size_t len, Rng& rng,
                                                    EchoLayout layout = {},
                                                    const PrefixCode& code =
                                                        PrefixCode::standard()) {
  const std::size_t d = layout.block_bits, r = layout.repeats;
  PrefixCodeSector out;
  out.phase = static_cast<std::size_t>(uniform_below(rng, d));
  const std::size_t out_bits = len * 8 + out.phase;
  const std::size_t groups = (out_bits + d * r - 1) / (d * r);
  std::vector<std::uint8_t> coded;
  while (coded.size() < groups * d) {
    const std::uint32_t s = code.sample(rng);
    out.symbols.push_back(s);
    code.encode(s, coded);
  }
  std::vector<std::uint8_t> stream;
  stream.reserve(groups * d * r);
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t k = 0; k < r; ++k)
      stream.insert(stream.end(), coded.begin() + static_cast<std::ptrdiff_t>(g * d),
                    coded.begin() + static_cast<std::ptrdiff_t>((g + 1) * d));
  out.bytes = pack_bits(std::span(stream).subspan(out.phase, len * 8));
  return out;
}

// ---------------------------------------------------------------- generators

enum class GeneratorKind {
  uniform_random,
  ascii_text,
  prefix_code,
  structured_records,
  sparse_markers,
};

inline const char* to_string(GeneratorKind k) noexcept {
  switch (k) {
    case GeneratorKind::uniform_random: return "uniform-random";
    case GeneratorKind::ascii_text: return "ascii-text";
    case GeneratorKind::prefix_code: return "prefix-code";
    case GeneratorKind::structured_records: return "structured-records";
    case GeneratorKind::sparse_markers: return "sparse-markers";
  }
  return "?";
}

inline std::optional<GeneratorKind> parse_generator_kind(std::string_view s) {
  for (auto k : {GeneratorKind::uniform_random, GeneratorKind::ascii_text,
                 GeneratorKind::prefix_code, GeneratorKind::structured_records,
                 GeneratorKind::sparse_markers}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

namespace detail {

inline void put_u32le(std::vector<std::uint8_t>& out, std::size_t at,
                      std::uint32_t v) {
  for (unsigned i = 0; i < 4; ++i)
    out[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

inline std::vector<std::uint8_t> uniform_bytes(std::size_t len, Rng& rng) {
  std::vector<std::uint8_t> out(len);
  for (auto& b : out) b = static_cast<std::uint8_t>(rng() >> 56);
  return out;
}

inline std::vector<std::uint8_t> ascii_text(std::size_t len, Rng& rng) {
  static constexpr std::string_view words[] = {
      "the",     "of",     "and",    "to",      "in",      "is",     "that",
      "for",     "it",     "as",     "was",     "with",    "be",     "by",
      "on",      "not",    "he",     "this",    "are",     "or",     "his",
      "from",    "at",     "which",  "but",     "have",    "an",     "had",
      "they",    "you",    "were",   "their",   "one",     "all",    "we",
      "can",     "her",    "has",    "there",   "been",    "if",     "more",
      "when",    "will",   "would",  "who",     "so",      "no",     "file",
      "system",  "data",   "memory", "sector",  "record",  "report", "image",
      "between", "number", "people", "through", "however", "during", "without"};
  constexpr std::size_t n_words = std::size(words);
  std::string text;
  const std::size_t skip = static_cast<std::size_t>(uniform_below(rng, 64));
  bool capital = true;
  while (text.size() < len + skip) {
    std::string w(words[uniform_below(rng, n_words)]);
    if (capital) w[0] = static_cast<char>(w[0] - 'a' + 'A');
    text += w;
    capital = false;
    const auto p = uniform_below(rng, 100);
    if (p < 8) {
      text += ".";
      text += uniform_below(rng, 4) == 0 ? "\n" : " ";
      capital = true;
    } else if (p < 14) {
      text += ", ";
    } else {
      text += " ";
    }
  }
  return std::vector<std::uint8_t>(text.begin() + static_cast<std::ptrdiff_t>(skip),
                                   text.begin() + static_cast<std::ptrdiff_t>(skip + len));
}

/// 32-byte records: id u32, timestamp u32, type u8, flags u8, name[12],
/// amount u32, reserved u16, checksum u32 (byte sum of the first 28 bytes).
inline std::vector<std::uint8_t> structured_records(std::size_t len, Rng& rng) {
  constexpr std::size_t rec = 32;
  const std::size_t skip = static_cast<std::size_t>(uniform_below(rng, rec));
  const std::size_t count = (len + skip) / rec + 1;
  std::vector<std::uint8_t> buf(count * rec, 0);
  auto id = static_cast<std::uint32_t>(uniform_below(rng, 1u << 20));
  auto ts = static_cast<std::uint32_t>(1600000000u + uniform_below(rng, 1u << 24));
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t at = r * rec;
    put_u32le(buf, at, id++);
    ts += static_cast<std::uint32_t>(1 + uniform_below(rng, 600));
    put_u32le(buf, at + 4, ts);
    buf[at + 8] = static_cast<std::uint8_t>(uniform_below(rng, 8));
    buf[at + 9] = static_cast<std::uint8_t>(uniform_below(rng, 16) << 4);
    const std::size_t name_len = 3 + static_cast<std::size_t>(uniform_below(rng, 9));
    for (std::size_t i = 0; i < name_len; ++i)
      buf[at + 10 + i] = static_cast<std::uint8_t>('a' + uniform_below(rng, 26));
    put_u32le(buf, at + 22, static_cast<std::uint32_t>(uniform_below(rng, 100000)));
    std::uint32_t sum = 0;
    for (std::size_t i = 0; i < 28; ++i) sum += buf[at + i];
    put_u32le(buf, at + 28, sum);
  }
  return std::vector<std::uint8_t>(buf.begin() + static_cast<std::ptrdiff_t>(skip),
                                   buf.begin() + static_cast<std::ptrdiff_t>(skip + len));
}

/// Mostly zero bytes with a few short runs of marker values.
inline std::vector<std::uint8_t> sparse_markers(std::size_t len, Rng& rng) {
  static constexpr std::uint8_t markers[] = {0xFF, 0x7F, 0x80, 0x01, 0x10};
  std::vector<std::uint8_t> out(len, 0);
  const std::size_t runs = 4 + static_cast<std::size_t>(uniform_below(rng, 13));
  for (std::size_t r = 0; r < runs; ++r) {
    const std::size_t start = static_cast<std::size_t>(uniform_below(rng, len));
    const std::size_t run = 1 + static_cast<std::size_t>(uniform_below(rng, 24));
    const std::uint8_t v = markers[uniform_below(rng, std::size(markers))];
    for (std::size_t i = start; i < std::min(len, start + run); ++i) out[i] = v;
  }
  return out;
}

}  // namespace detail

inline std::vector<std::uint8_t> generate_sector(GeneratorKind kind,
                                                 std::size_t len, Rng& rng) {
  if (len == 0) throw LengthError("cannot generate an empty sector");
  switch (kind) {
    case GeneratorKind::uniform_random: return detail::uniform_bytes(len, rng);
    case GeneratorKind::ascii_text: return detail::ascii_text(len, rng);
    case GeneratorKind::prefix_code: return generate_prefix_code_sector(len, rng).bytes;
    case GeneratorKind::structured_records: return detail::structured_records(len, rng);
    case GeneratorKind::sparse_markers: return detail::sparse_markers(len, rng);
  }
  throw SpecError("unknown generator kind");
}

// ---------------------------------------------------------------- synth spec

struct SynthClass {
  std::string name;
  GeneratorKind kind = GeneratorKind::uniform_random;
  std::size_t count = 0;
};

struct SynthSpec {
  std::vector<SynthClass> classes;
  std::size_t sector_len = kSmallSector;
  std::uint64_t seed = 1;
  std::array<double, 3> split{0.8, 0.1, 0.1};
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

inline bool is_safe_name(std::string_view s) {
  if (s.empty() || s == "." || s == "..") return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ||
           c == '.';
  });
}

template <typename Int, typename Err>
Int parse_uint(const std::string& s, const std::string& where) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    if (s.empty() || s[0] == '-') throw std::invalid_argument(s);
    v = std::stoull(s, &pos, 10);
  } catch (const std::exception&) {
    throw Err(where + ": expected a non-negative integer, got '" + s + "'");
  }
  if (pos != s.size()) {
    throw Err(where + ": expected a non-negative integer, got '" + s + "'");
  }
  return static_cast<Int>(v);
}

template <typename Err>
double parse_double(const std::string& s, const std::string& where) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw Err(where + ": expected a number, got '" + s + "'");
  }
  if (pos != s.size() || !std::isfinite(v)) {
    throw Err(where + ": expected a number, got '" + s + "'");
  }
  return v;
}

}  // namespace detail

/// Line-oriented key = value text; '#' starts a comment. Keys: seed,
/// sector_len, samples (default per-class count), split (three fractions),
/// and one `class = <name> <kind> [count]` line per class.
inline SynthSpec parse_synth_spec(std::string_view text) {
  SynthSpec spec;
  std::optional<std::size_t> default_count;
  struct Pending {
    SynthClass cls;
    bool has_count;
  };
  std::vector<Pending> pending;
  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "spec line " + std::to_string(line_no);
    if (eq == std::string::npos) throw SpecError(where + ": expected key = value");
    const std::string key = detail::trim(std::string_view(line).substr(0, eq));
    const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
    const std::string field = where + ", field '" + key + "'";
    if (key == "seed") {
      spec.seed = detail::parse_uint<std::uint64_t, SpecError>(value, field);
    } else if (key == "sector_len") {
      spec.sector_len = detail::parse_uint<std::size_t, SpecError>(value, field);
      if (!is_sector_length(spec.sector_len)) {
        throw SpecError(field + ": sector length must be 512 or 4096");
      }
    } else if (key == "samples") {
      default_count = detail::parse_uint<std::size_t, SpecError>(value, field);
      if (*default_count < 1) throw SpecError(field + ": must be >= 1");
    } else if (key == "split") {
      std::string v = value;
      std::replace(v.begin(), v.end(), ',', ' ');
      const auto parts = detail::split_ws(v);
      if (parts.size() != 3) throw SpecError(field + ": expected three fractions");
      double sum = 0;
      for (std::size_t i = 0; i < 3; ++i) {
        spec.split[i] = detail::parse_double<SpecError>(parts[i], field);
        if (spec.split[i] < 0) throw SpecError(field + ": negative fraction");
        sum += spec.split[i];
      }
      if (std::abs(sum - 1.0) > 1e-9) throw SpecError(field + ": fractions must sum to 1");
    } else if (key == "class") {
      const auto parts = detail::split_ws(value);
      if (parts.size() < 2 || parts.size() > 3) {
        throw SpecError(field + ": expected '<name> <kind> [count]'");
      }
      if (!detail::is_safe_name(parts[0])) {
        throw SpecError(field + ": class name '" + parts[0] +
                        "' must use only letters, digits, '_', '-', '.'");
      }
      const auto kind = parse_generator_kind(parts[1]);
      if (!kind) {
        throw SpecError(field + ": unknown generator kind '" + parts[1] + "'");
      }
      for (const auto& p : pending) {
        if (p.cls.name == parts[0]) {
          throw SpecError(field + ": duplicate class name '" + parts[0] + "'");
        }
      }
      Pending p{{parts[0], *kind, 0}, parts.size() == 3};
      if (p.has_count) {
        p.cls.count = detail::parse_uint<std::size_t, SpecError>(parts[2], field);
        if (p.cls.count < 1) throw SpecError(field + ": count must be >= 1");
      }
      pending.push_back(std::move(p));
    } else {
      throw SpecError(where + ": unknown field '" + key + "'");
    }
  }
  if (pending.size() < 2) throw SpecError("spec: field 'class' must appear at least twice");
  for (auto& p : pending) {
    if (!p.has_count) {
      if (!default_count) {
        throw SpecError("spec: class '" + p.cls.name +
                        "' has no count and field 'samples' is not set");
      }
      p.cls.count = *default_count;
    }
    spec.classes.push_back(std::move(p.cls));
  }
  return spec;
}

// ---------------------------------------------------------------- labeled data

struct LabeledSector {
  std::vector<std::uint8_t> bytes;
  std::uint32_t label = 0;
};

struct Corpus {
  std::vector<std::string> labels;
  std::vector<LabeledSector> samples;  // grouped by class, generation order
};

namespace detail {
/// Runs fn(i) for i in [0, n) on `workers` threads. Each index is handled by
/// exactly one thread, so results written by index are order-independent.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex mu;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}
}  // namespace detail

/// Sample i of class c is drawn from its own stream seeded by
/// (seed, c, i), so the output is independent of worker count.
inline Corpus generate(const SynthSpec& spec, std::size_t workers = 1) {
  Corpus corpus;
  std::vector<std::pair<std::uint32_t, std::size_t>> jobs;
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    corpus.labels.push_back(spec.classes[c].name);
    for (std::size_t i = 0; i < spec.classes[c].count; ++i)
      jobs.emplace_back(static_cast<std::uint32_t>(c), i);
  }
  corpus.samples.resize(jobs.size());
  detail::parallel_for(jobs.size(), workers, [&](std::size_t j) {
    const auto [c, i] = jobs[j];
    Rng rng(derive_seed({spec.seed, c, i}));
    corpus.samples[j] = {generate_sector(spec.classes[c].kind, spec.sector_len, rng), c};
  });
  return corpus;
}

// ---------------------------------------------------------------- manifest

enum class Split : std::uint8_t { train, val, test };

inline const char* to_string(Split s) noexcept {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

struct ManifestEntry {
  std::string path;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
  std::uint32_t label = 0;
  std::optional<Split> split;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct Manifest {
  std::vector<std::string> labels;
  std::vector<ManifestEntry> entries;
  fs::path base_dir;  // relative entry paths resolve against this

  std::optional<std::uint32_t> label_index(std::string_view name) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == name) return static_cast<std::uint32_t>(i);
    return std::nullopt;
  }

  bool has_splits() const {
    return !entries.empty() &&
           std::all_of(entries.begin(), entries.end(),
                       [](const ManifestEntry& e) { return e.split.has_value(); });
  }

  Manifest subset(Split s) const {
    Manifest out{labels, {}, base_dir};
    for (const auto& e : entries)
      if (e.split == s) out.entries.push_back(e);
    return out;
  }

  fs::path resolve(const ManifestEntry& e) const {
    const fs::path p(e.path);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  }
};

inline std::string entry_name(const Manifest& m, std::size_t i) {
  const auto& e = m.entries[i];
  return "entry " + std::to_string(i) + " (" + e.path + " @ " +
         std::to_string(e.offset) + ")";
}

inline std::string format_manifest(const Manifest& m) {
  nlohmann::json header = {{"format", "b2i-manifest"}, {"version", 1}, {"labels", m.labels}};
  std::string out = header.dump() + "\n";
  for (const auto& e : m.entries) {
    out += e.path + "\t" + std::to_string(e.offset) + "\t" +
           std::to_string(e.length) + "\t" + m.labels.at(e.label);
    if (e.split) out += std::string("\t") + to_string(*e.split);
    out += "\n";
  }
  return out;
}

inline Manifest parse_manifest(std::string_view text, fs::path base_dir = {}) {
  Manifest m;
  m.base_dir = std::move(base_dir);
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw IngestionError("manifest is empty");
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.value("format", "") != "b2i-manifest") {
      throw IngestionError("manifest header: unexpected format tag");
    }
    m.labels = header.at("labels").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(std::string("manifest header: ") + e.what());
  }
  if (m.labels.empty()) throw IngestionError("manifest header: empty label table");
  std::map<std::string, std::uint32_t> index;
  for (std::size_t i = 0; i < m.labels.size(); ++i) {
    if (!index.emplace(m.labels[i], static_cast<std::uint32_t>(i)).second) {
      throw IngestionError("manifest header: duplicate label '" + m.labels[i] + "'");
    }
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = "manifest line " + std::to_string(line_no);
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      f.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (f.size() != 4 && f.size() != 5) {
      throw IngestionError(where + ": expected 4 or 5 tab-separated fields");
    }
    ManifestEntry e;
    e.path = f[0];
    e.offset = detail::parse_uint<std::uint64_t, IngestionError>(f[1], where + " offset");
    e.length = detail::parse_uint<std::uint64_t, IngestionError>(f[2], where + " length");
    const auto it = index.find(f[3]);
    if (it == index.end()) {
      throw LabelError(where + ": label '" + f[3] + "' not in the label table");
    }
    e.label = it->second;
    if (f.size() == 5) {
      if (f[4] == "train") e.split = Split::train;
      else if (f[4] == "val") e.split = Split::val;
      else if (f[4] == "test") e.split = Split::test;
      else throw IngestionError(where + ": unknown split '" + f[4] + "'");
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline std::string read_text_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IngestionError("cannot open " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, std::string_view data) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IngestionError("cannot write " + p.string());
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!f) throw IngestionError("short write to " + p.string());
}

inline Manifest read_manifest(const fs::path& p) {
  return parse_manifest(read_text_file(p), p.parent_path());
}

inline void write_manifest(const Manifest& m, const fs::path& p) {
  write_file(p, format_manifest(m));
}

/// Cuts a file into fixed-length sectors at the given stride. A tail shorter
/// than one sector is skipped.
inline Manifest index_file(const fs::path& file, const std::string& label,
                           std::uint64_t sector_len = kSmallSector,
                           std::uint64_t stride = 0) {
  if (sector_len == 0) throw ParameterError("sector length must be positive");
  if (stride == 0) stride = sector_len;
  std::error_code ec;
  const auto size = fs::file_size(file, ec);
  if (ec) throw IngestionError("cannot stat " + file.string() + ": " + ec.message());
  Manifest m{{label}, {}, {}};
  for (std::uint64_t off = 0; off + sector_len <= size; off += stride)
    m.entries.push_back({file.string(), off, sector_len, 0, std::nullopt});
  return m;
}

/// Checks every entry against its source file size.
inline void validate_manifest(const Manifest& m) {
  std::map<fs::path, std::uintmax_t> sizes;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    if (e.label >= m.labels.size()) {
      throw LabelError(entry_name(m, i) + ": label index out of range");
    }
    const fs::path p = m.resolve(e);
    auto it = sizes.find(p);
    if (it == sizes.end()) {
      std::error_code ec;
      const auto sz = fs::file_size(p, ec);
      if (ec) throw IngestionError(entry_name(m, i) + ": cannot stat " + p.string());
      it = sizes.emplace(p, sz).first;
    }
    if (e.offset + e.length > it->second) {
      throw IngestionError(entry_name(m, i) + ": offset " + std::to_string(e.offset) +
                           " + length " + std::to_string(e.length) +
                           " exceeds file size " + std::to_string(it->second));
    }
  }
}

/// Fisher-Yates permutation of [0, n) from a portable stream.
inline std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i)
    std::swap(p[i - 1], p[uniform_below(rng, i)]);
  return p;
}

/// Reads every entry; manifest order unless a shuffle seed is given.
inline std::vector<LabeledSector> slice_files(
    const Manifest& m, std::optional<std::uint64_t> shuffle_seed = std::nullopt) {
  std::vector<std::size_t> order(m.entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (shuffle_seed) order = permutation(order.size(), *shuffle_seed);

  std::map<fs::path, std::ifstream> files;
  std::vector<LabeledSector> out;
  out.reserve(order.size());
  for (std::size_t i : order) {
    const auto& e = m.entries[i];
    if (e.label >= m.labels.size()) {
      throw LabelError(entry_name(m, i) + ": label index out of range");
    }
    const fs::path p = m.resolve(e);
    auto it = files.find(p);
    if (it == files.end()) {
      std::ifstream f(p, std::ios::binary);
      if (!f) throw IngestionError(entry_name(m, i) + ": cannot open " + p.string());
      it = files.emplace(p, std::move(f)).first;
    }
    auto& f = it->second;
    f.clear();
    f.seekg(static_cast<std::streamoff>(e.offset));
    LabeledSector s{std::vector<std::uint8_t>(e.length), e.label};
    f.read(reinterpret_cast<char*>(s.bytes.data()), static_cast<std::streamsize>(e.length));
    if (!f || static_cast<std::uint64_t>(f.gcount()) != e.length) {
      throw IngestionError(entry_name(m, i) + ": short read, wanted " +
                           std::to_string(e.length) + " bytes");
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------- split

/// Stratified, deterministic. Per class, entries are permuted with a stream
/// derived from (seed, label) and cut by largest-remainder rounding; each
/// split with a positive fraction gets at least one sample.
inline std::array<Manifest, 3> split(const Manifest& m,
                                     std::array<double, 3> fractions = {0.8, 0.1, 0.1},
                                     std::uint64_t seed = 1) {
  double sum = 0;
  for (double f : fractions) {
    if (!(f >= 0)) throw ParameterError("split fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ParameterError("split fractions must sum to 1");

  std::vector<std::vector<std::size_t>> by_label(m.labels.size());
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    if (m.entries[i].label >= m.labels.size()) {
      throw LabelError(entry_name(m, i) + ": label index out of range");
    }
    by_label[m.entries[i].label].push_back(i);
  }
  std::vector<Split> assign(m.entries.size(), Split::train);
  for (std::size_t c = 0; c < by_label.size(); ++c) {
    const auto& idx = by_label[c];
    const std::size_t n = idx.size();
    if (n < fractions.size()) {
      throw SplitError("class '" + m.labels[c] + "' has " + std::to_string(n) +
                       " samples, fewer than the 3 splits");
    }
    std::array<std::size_t, 3> count{};
    std::array<double, 3> rem{};
    std::size_t given = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      const double exact = fractions[s] * static_cast<double>(n);
      count[s] = static_cast<std::size_t>(std::floor(exact));
      rem[s] = exact - static_cast<double>(count[s]);
      given += count[s];
    }
    while (given < n) {
      std::size_t best = 0;
      for (std::size_t s = 1; s < 3; ++s)
        if (rem[s] > rem[best]) best = s;
      ++count[best];
      rem[best] = -1;
      ++given;
    }
    for (std::size_t s = 0; s < 3; ++s) {
      if (fractions[s] > 0 && count[s] == 0) {
        const auto donor = static_cast<std::size_t>(
            std::max_element(count.begin(), count.end()) - count.begin());
        --count[donor];
        ++count[s];
      }
    }
    const auto perm = permutation(n, derive_seed({seed, c, 0x5eed}));
    std::size_t k = 0;
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t j = 0; j < count[s]; ++j)
        assign[idx[perm[k++]]] = static_cast<Split>(s);
  }
  std::array<Manifest, 3> out;
  for (auto& o : out) {
    o.labels = m.labels;
    o.base_dir = m.base_dir;
  }
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    ManifestEntry e = m.entries[i];
    e.split = assign[i];
    out[static_cast<std::size_t>(assign[i])].entries.push_back(std::move(e));
  }
  return out;
}

/// Same assignment as split(), written into the entries' split field.
inline Manifest assign_splits(const Manifest& m, std::array<double, 3> fractions,
                              std::uint64_t seed) {
  const auto parts = split(m, fractions, seed);
  Manifest out = m;
  std::map<std::pair<std::string, std::uint64_t>, Split> lookup;
  for (const auto& part : parts)
    for (const auto& e : part.entries) lookup[{e.path, e.offset}] = *e.split;
  for (auto& e : out.entries) e.split = lookup.at({e.path, e.offset});
  return out;
}

/// Writes <label>.bin blobs plus manifest.tsv (with splits) into `dir`.
inline Manifest write_corpus(const Corpus& corpus, const SynthSpec& spec,
                             const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IngestionError("cannot create " + dir.string() + ": " + ec.message());
  Manifest m{corpus.labels, {}, dir};
  std::vector<std::string> blobs(corpus.labels.size());
  for (const auto& s : corpus.samples) {
    auto& blob = blobs[s.label];
    m.entries.push_back({corpus.labels[s.label] + ".bin", blob.size(), s.bytes.size(),
                         s.label, std::nullopt});
    blob.append(s.bytes.begin(), s.bytes.end());
  }
  for (std::size_t c = 0; c < blobs.size(); ++c)
    write_file(dir / (corpus.labels[c] + ".bin"), blobs[c]);
  m = assign_splits(m, spec.split, spec.seed);
  write_manifest(m, dir / "manifest.tsv");
  return m;
}

// ---------------------------------------------------------------- augmentation

struct AugmentConfig {
  double flip_p = 0.5;
  double erase_p = 0.25;
  double area_min = 0.02;
  double area_max = 0.20;
  double aspect_min = 0.3;
  double aspect_max = 3.3;
  int attempts = 10;
};

struct Rect {
  std::size_t top = 0, left = 0, height = 0, width = 0;
  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Mirrors the W axis of every channel.
inline void hflip(NGramImage& im) {
  const std::size_t w = im.width(), c = im.channels();
  for (std::size_t r = 0; r < im.height(); ++r)
    for (std::size_t x = 0; x < w / 2; ++x)
      for (std::size_t ch = 0; ch < c; ++ch)
        std::swap(im.at(r, x, ch), im.at(r, w - 1 - x, ch));
}

/// Zeroes the rectangle on every channel.
inline void erase(NGramImage& im, const Rect& rect) {
  if (rect.top + rect.height > im.height() || rect.left + rect.width > im.width()) {
    throw ParameterError("erase rectangle outside the image");
  }
  for (std::size_t r = rect.top; r < rect.top + rect.height; ++r)
    for (std::size_t x = rect.left; x < rect.left + rect.width; ++x)
      for (std::size_t ch = 0; ch < im.channels(); ++ch) im.at(r, x, ch) = 0;
}

/// Area fraction uniform in [area_min, area_max], aspect (h/w) log-uniform in
/// [aspect_min, aspect_max]; gives up after `attempts` misfits.
inline std::optional<Rect> sample_erase_rect(std::size_t height, std::size_t width,
                                             Rng& rng, const AugmentConfig& cfg = {}) {
  const double area = static_cast<double>(height * width);
  for (int a = 0; a < cfg.attempts; ++a) {
    const double target = area * uniform_real(rng, cfg.area_min, cfg.area_max);
    const double aspect = std::exp(
        uniform_real(rng, std::log(cfg.aspect_min), std::log(cfg.aspect_max)));
    const auto h = static_cast<std::size_t>(std::lround(std::sqrt(target * aspect)));
    const auto w = static_cast<std::size_t>(std::lround(std::sqrt(target / aspect)));
    if (h == 0 || w == 0 || h >= height || w >= width) continue;
    const auto top = static_cast<std::size_t>(uniform_below(rng, height - h + 1));
    const auto left = static_cast<std::size_t>(uniform_below(rng, width - w + 1));
    return Rect{top, left, h, w};
  }
  return std::nullopt;
}

struct AugmentRecord {
  bool flipped = false;
  std::optional<Rect> erased;
};

inline AugmentRecord augment(NGramImage& im, Rng& rng, const AugmentConfig& cfg = {}) {
  AugmentRecord rec;
  rec.flipped = bernoulli(rng, cfg.flip_p);
  if (rec.flipped) hflip(im);
  if (bernoulli(rng, cfg.erase_p)) {
    rec.erased = sample_erase_rect(im.height(), im.width(), rng, cfg);
    if (rec.erased) erase(im, *rec.erased);
  }
  return rec;
}

}  // namespace b2i
