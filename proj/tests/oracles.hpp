#pragma once

// Reference implementations used only by tests. They are written for
// obviousness, not speed, and share no code with the library.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

/// Bit k of the sector read as one big-endian bitstream; zero past the end.
inline unsigned bit_at(const std::vector<std::uint8_t>& bytes, std::size_t k) {
  const std::size_t byte = k / 8;
  if (byte >= bytes.size()) return 0;
  return (bytes[byte] >> (7 - k % 8)) & 1u;
}

/// The 8-bit window whose first bit is bit `offset`.
inline std::uint8_t window(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
  unsigned v = 0;
  for (std::size_t b = 0; b < 8; ++b) v = (v << 1) | bit_at(bytes, offset + b);
  return static_cast<std::uint8_t>(v);
}

/// N×8, entry (j, i) = window at bit 8j + i.
inline std::vector<std::uint8_t> byte_matrix(const std::vector<std::uint8_t>& bytes) {
  std::vector<std::uint8_t> m;
  for (std::size_t j = 0; j < bytes.size(); ++j)
    for (std::size_t i = 0; i < 8; ++i) m.push_back(window(bytes, 8 * j + i));
  return m;
}

/// (N-n+1) × 8n image, one channel, straight from the bitstream: pixel
/// (r, 8t + i) is the window at bit 8(r + t) + i.
inline std::vector<std::uint8_t> ngram(const std::vector<std::uint8_t>& bytes, std::size_t n) {
  std::vector<std::uint8_t> im;
  for (std::size_t r = 0; r + n <= bytes.size(); ++r)
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t i = 0; i < 8; ++i) im.push_back(window(bytes, 8 * (r + t) + i));
  return im;
}

inline std::vector<std::uint8_t> random_bytes(std::size_t n, std::mt19937& gen) {
  std::uniform_int_distribution<int> d(0, 255);
  std::vector<std::uint8_t> out(n);
  for (auto& b : out) b = static_cast<std::uint8_t>(d(gen));
  return out;
}

/// out[i][o] = sum_d w[o][d] x[i][d] + b[o]
inline std::vector<double> dense(const std::vector<double>& x, const std::vector<double>& w,
                                 const std::vector<double>& b, std::size_t batch,
                                 std::size_t in, std::size_t out) {
  std::vector<double> y(batch * out);
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t o = 0; o < out; ++o) {
      double s = b[o];
      for (std::size_t d = 0; d < in; ++d) s += w[o * in + d] * x[i * in + d];
      y[i * out + o] = s;
    }
  return y;
}

/// Direct-loop cross-correlation on NCHW.
inline std::vector<double> conv2d(const std::vector<double>& x, const std::vector<double>& k,
                                  const std::vector<double>& b, std::size_t batch,
                                  std::size_t c, std::size_t h, std::size_t w, std::size_t f,
                                  std::size_t kh, std::size_t kw, std::size_t stride,
                                  std::size_t pad, std::size_t& ho, std::size_t& wo) {
  ho = (h + 2 * pad - kh) / stride + 1;
  wo = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> y(batch * f * ho * wo);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < f; ++o)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double s = b[o];
          for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t a = 0; a < kh; ++a)
              for (std::size_t e = 0; e < kw; ++e) {
                const long iy = static_cast<long>(oy * stride + a) - static_cast<long>(pad);
                const long ix = static_cast<long>(ox * stride + e) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w))
                  continue;
                s += k[((o * c + ci) * kh + a) * kw + e] *
                     x[((n * c + ci) * h + static_cast<std::size_t>(iy)) * w +
                       static_cast<std::size_t>(ix)];
              }
          y[((n * f + o) * ho + oy) * wo + ox] = s;
        }
  return y;
}

inline std::vector<double> softmax_row(const std::vector<double>& z) {
  long double mx = z[0];
  for (double v : z) mx = std::max<long double>(mx, v);
  long double sum = 0;
  for (double v : z) sum += std::exp(static_cast<long double>(v) - mx);
  std::vector<double> p;
  for (double v : z) p.push_back(static_cast<double>(std::exp(static_cast<long double>(v) - mx) / sum));
  return p;
}

}  // namespace oracle
