#pragma once

// Sector → intra-byte byte matrix → n-gram gray-scale image.
//
// A sector of N bytes is read as one 8N-bit big-endian bitstream. Window i of
// byte j is the 8 bits starting at bit offset 8j+i; bits past the end of the
// sector read as zero. Stacking the eight windows of every byte gives an N×8
// byte matrix, and concatenating n consecutive matrix rows gives one row of
// the n-gram image (height N-n+1, width 8n).

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "b2i/error.hpp"

namespace b2i {

inline constexpr std::size_t kSmallSector = 512;
inline constexpr std::size_t kLargeSector = 4096;
inline constexpr std::size_t kLargeSectorParts = kLargeSector / kSmallSector;
inline constexpr std::size_t kWindowsPerByte = 8;
inline constexpr std::size_t kDefaultNgram = 16;

inline bool is_sector_length(std::size_t len) noexcept {
  return len == kSmallSector || len == kLargeSector;
}

/// A raw memory sector with an optional class label.
class Sector {
 public:
  explicit Sector(std::vector<std::uint8_t> bytes,
                  std::optional<std::uint32_t> label = std::nullopt)
      : bytes_(std::move(bytes)), label_(label) {
    if (!is_sector_length(bytes_.size())) {
      throw LengthError("sector length must be 512 or 4096 bytes, got " +
                        std::to_string(bytes_.size()));
    }
  }

  std::span<const std::uint8_t> bytes() const noexcept { return bytes_; }
  std::size_t size() const noexcept { return bytes_.size(); }
  std::optional<std::uint32_t> label() const noexcept { return label_; }

 private:
  std::vector<std::uint8_t> bytes_;
  std::optional<std::uint32_t> label_;
};

/// N×8 intra-byte expansion. Row j holds the eight bit-offset windows of
/// byte j; column i is the sector left-shifted by i bits.
class ByteMatrix {
 public:
  ByteMatrix() = default;
  ByteMatrix(std::size_t sector_len, std::vector<std::uint8_t> data)
      : sector_len_(sector_len), data_(std::move(data)) {
    if (data_.size() != sector_len_ * kWindowsPerByte) {
      throw ShapeError("byte matrix data does not match sector length");
    }
  }

  std::size_t sector_len() const noexcept { return sector_len_; }
  std::size_t rows() const noexcept { return sector_len_; }
  static constexpr std::size_t cols() noexcept { return kWindowsPerByte; }

  std::uint8_t at(std::size_t row, std::size_t col) const {
    return data_[row * kWindowsPerByte + col];
  }
  std::span<const std::uint8_t> row(std::size_t r) const {
    return std::span<const std::uint8_t>(data_).subspan(r * kWindowsPerByte,
                                                        kWindowsPerByte);
  }
  std::vector<std::uint8_t> column(std::size_t i) const {
    std::vector<std::uint8_t> out(sector_len_);
    for (std::size_t j = 0; j < sector_len_; ++j) out[j] = at(j, i);
    return out;
  }
  std::span<const std::uint8_t> data() const noexcept { return data_; }

  friend bool operator==(const ByteMatrix&, const ByteMatrix&) = default;

 private:
  std::size_t sector_len_ = 0;
  std::vector<std::uint8_t> data_;
};

struct ImageMeta {
  std::size_t sector_len = 0;
  std::size_t ngram = 0;
  std::size_t channels = 0;

  friend bool operator==(const ImageMeta&, const ImageMeta&) = default;
};

/// H×W×C gray-scale image, channel-last. Pixel values are raw bytes.
class NGramImage {
 public:
  NGramImage() = default;
  NGramImage(std::size_t height, std::size_t width, ImageMeta meta)
      : height_(height),
        width_(width),
        meta_(meta),
        pixels_(height * width * meta.channels, 0) {}

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return meta_.channels; }
  const ImageMeta& meta() const noexcept { return meta_; }

  std::uint8_t at(std::size_t r, std::size_t col, std::size_t c = 0) const {
    return pixels_[(r * width_ + col) * meta_.channels + c];
  }
  std::uint8_t& at(std::size_t r, std::size_t col, std::size_t c = 0) {
    return pixels_[(r * width_ + col) * meta_.channels + c];
  }

  /// One row across all channels: W·C bytes, index col·C + c.
  std::span<const std::uint8_t> row(std::size_t r) const {
    const std::size_t stride = width_ * meta_.channels;
    return std::span<const std::uint8_t>(pixels_).subspan(r * stride, stride);
  }

  std::vector<std::uint8_t> plane(std::size_t channel) const {
    if (channel >= channels()) {
      throw ParameterError("channel " + std::to_string(channel) +
                           " out of range for " + std::to_string(channels()) +
                           "-channel image");
    }
    std::vector<std::uint8_t> out(height_ * width_);
    for (std::size_t r = 0; r < height_; ++r)
      for (std::size_t col = 0; col < width_; ++col)
        out[r * width_ + col] = at(r, col, channel);
    return out;
  }

  std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }
  std::span<std::uint8_t> pixels() noexcept { return pixels_; }

  friend bool operator==(const NGramImage&, const NGramImage&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  ImageMeta meta_{};
  std::vector<std::uint8_t> pixels_;
};

/// Sliding 8-bit window, stride 1 bit. Accepts any non-empty byte run so that
/// toy sectors can be used in tests; `Sector` enforces production lengths.
inline ByteMatrix shift_stack(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw LengthError("cannot expand an empty sector");
  const std::size_t n = bytes.size();
  std::vector<std::uint8_t> data(n * kWindowsPerByte);
  for (std::size_t j = 0; j < n; ++j) {
    const unsigned hi = bytes[j];
    const unsigned lo = j + 1 < n ? bytes[j + 1] : 0u;
    const unsigned pair = (hi << 8) | lo;
    for (std::size_t i = 0; i < kWindowsPerByte; ++i) {
      data[j * kWindowsPerByte + i] =
          static_cast<std::uint8_t>((pair >> (8 - i)) & 0xFFu);
    }
  }
  return ByteMatrix(n, std::move(data));
}

inline ByteMatrix shift_stack(const Sector& sector) {
  return shift_stack(sector.bytes());
}

inline NGramImage ngram_image(const ByteMatrix& matrix,
                              std::size_t n = kDefaultNgram) {
  const std::size_t rows = matrix.rows();
  if (n < 1 || n > rows) {
    throw ParameterError("n-gram order " + std::to_string(n) +
                         " outside [1, " + std::to_string(rows) + "]");
  }
  const std::size_t height = rows - n + 1;
  const std::size_t width = kWindowsPerByte * n;
  NGramImage image(height, width, ImageMeta{rows, n, 1});
  const auto src = matrix.data();
  auto dst = image.pixels();
  // Row r is the contiguous run of matrix rows r..r+n-1.
  for (std::size_t r = 0; r < height; ++r) {
    const auto from = src.subspan(r * kWindowsPerByte, width);
    std::copy(from.begin(), from.end(), dst.begin() + r * width);
  }
  return image;
}

/// Eight 512-byte parts, each converted independently, stacked as channels.
inline NGramImage convert_4k(std::span<const std::uint8_t> bytes,
                             std::size_t n = kDefaultNgram) {
  if (bytes.size() != kLargeSector) {
    throw LengthError("4k conversion needs 4096 bytes, got " +
                      std::to_string(bytes.size()));
  }
  if (n < 1 || n > kSmallSector) {
    throw ParameterError("n-gram order " + std::to_string(n) +
                         " outside [1, 512]");
  }
  const std::size_t height = kSmallSector - n + 1;
  const std::size_t width = kWindowsPerByte * n;
  NGramImage image(height, width,
                   ImageMeta{kLargeSector, n, kLargeSectorParts});
  for (std::size_t c = 0; c < kLargeSectorParts; ++c) {
    const NGramImage part = ngram_image(
        shift_stack(bytes.subspan(c * kSmallSector, kSmallSector)), n);
    for (std::size_t r = 0; r < height; ++r)
      for (std::size_t col = 0; col < width; ++col)
        image.at(r, col, c) = part.at(r, col);
  }
  return image;
}

inline NGramImage convert_4k(const Sector& sector,
                             std::size_t n = kDefaultNgram) {
  return convert_4k(sector.bytes(), n);
}

/// Length dispatch: 4096-byte input takes the 8-channel path, anything else
/// is a single-channel image of the whole run.
inline NGramImage convert(std::span<const std::uint8_t> bytes,
                          std::size_t n = kDefaultNgram) {
  if (bytes.size() == kLargeSector) return convert_4k(bytes, n);
  return ngram_image(shift_stack(bytes), n);
}

inline NGramImage convert(const Sector& sector, std::size_t n = kDefaultNgram) {
  return convert(sector.bytes(), n);
}

/// Binary PGM (P5), maxval 255, one channel. 0x00 is black, 0xFF white.
inline std::string export_pgm(const NGramImage& image, std::size_t channel = 0) {
  const std::vector<std::uint8_t> plane = image.plane(channel);
  std::string out = "P5\n" + std::to_string(image.width()) + " " +
                    std::to_string(image.height()) + "\n255\n";
  out.append(plane.begin(), plane.end());
  return out;
}

}  // namespace b2i
