#include "cbfn/fft.hpp"

#include <cmath>
#include <numbers>

#include "cbfn/errors.hpp"

namespace cbfn {

namespace {

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey on a contiguous line.
void fft_radix2(std::complex<double>* a, int n, bool inverse) {
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * std::numbers::pi / len;
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (int k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

void dft_direct(std::complex<double>* a, int n, bool inverse) {
  std::vector<std::complex<double>> out(static_cast<std::size_t>(n));
  const double sign = inverse ? 2.0 : -2.0;
  for (int k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (int j = 0; j < n; ++j) {
      const double ang = sign * std::numbers::pi * k * j / n;
      acc += a[j] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[static_cast<std::size_t>(k)] = acc;
  }
  std::copy(out.begin(), out.end(), a);
}

void transform_line(std::complex<double>* a, int n, bool inverse) {
  if (n == 1) return;
  if (is_pow2(n)) {
    fft_radix2(a, n, inverse);
  } else {
    dft_direct(a, n, inverse);
  }
}

}  // namespace

void fft2d(std::vector<std::complex<double>>& data, int h, int w, bool inverse) {
  if (h < 1 || w < 1 ||
      data.size() != static_cast<std::size_t>(h) * static_cast<std::size_t>(w)) {
    throw UsageError("fft2d: buffer does not match " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
  for (int y = 0; y < h; ++y) {
    transform_line(data.data() + static_cast<std::size_t>(y) * w, w, inverse);
  }
  std::vector<std::complex<double>> col(static_cast<std::size_t>(h));
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) col[static_cast<std::size_t>(y)] = data[static_cast<std::size_t>(y) * w + x];
    transform_line(col.data(), h, inverse);
    for (int y = 0; y < h; ++y) data[static_cast<std::size_t>(y) * w + x] = col[static_cast<std::size_t>(y)];
  }
  if (inverse) {
    const double scale = 1.0 / (static_cast<double>(h) * static_cast<double>(w));
    for (auto& v : data) v *= scale;
  }
}

}  // namespace cbfn
