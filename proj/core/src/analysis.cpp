#include "cbfn/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "cbfn/fft.hpp"

namespace cbfn {

double psnr(const Image& a, const Image& b, double peak) {
  if (a.h != b.h || a.w != b.w || a.c != b.c) {
    throw ShapeError("psnr: image dimensions differ");
  }
  if (a.numel() == 0) throw UsageError("psnr: empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.data.size());
  if (mse < 1e-10) return 100.0;
  return 10.0 * std::log10(peak * peak / mse);
}

std::vector<double> luminance(const Image& img) {
  std::vector<double> out(static_cast<std::size_t>(img.h) * img.w, 0.0);
  for (int ch = 0; ch < img.c; ++ch) {
    for (int y = 0; y < img.h; ++y) {
      for (int x = 0; x < img.w; ++x) {
        out[static_cast<std::size_t>(y) * img.w + x] += img.at(ch, y, x);
      }
    }
  }
  const double inv = 1.0 / img.c;
  for (double& v : out) v *= inv;
  return out;
}

namespace {

// Separable valid-window Gaussian filter; out is (h-win+1) x (w-win+1).
std::vector<double> gauss_valid(const std::vector<double>& img, int h, int w,
                                const std::vector<double>& g1) {
  const int win = static_cast<int>(g1.size());
  const int oh = h - win + 1, ow = w - win + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < win; ++k) acc += g1[static_cast<std::size_t>(k)] * img[static_cast<std::size_t>(y) * w + x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < win; ++k) acc += g1[static_cast<std::size_t>(k)] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double ssim(const Image& a, const Image& b, const SsimParams& params) {
  if (a.h != b.h || a.w != b.w || a.c != b.c) {
    throw ShapeError("ssim: image dimensions differ");
  }
  if (a.h < params.window || a.w < params.window) {
    throw UsageError("ssim: image smaller than the " +
                     std::to_string(params.window) + "x" +
                     std::to_string(params.window) + " window");
  }

  const std::vector<double> x = luminance(a);
  const std::vector<double> y = luminance(b);
  const int h = a.h, w = a.w;

  std::vector<double> g1(static_cast<std::size_t>(params.window));
  const int half = params.window / 2;
  double gsum = 0.0;
  for (int i = 0; i < params.window; ++i) {
    const double d = i - half;
    g1[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * params.sigma * params.sigma));
    gsum += g1[static_cast<std::size_t>(i)];
  }
  for (double& v : g1) v /= gsum;

  std::vector<double> xx(x.size()), yy(y.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const std::vector<double> mx = gauss_valid(x, h, w, g1);
  const std::vector<double> my = gauss_valid(y, h, w, g1);
  const std::vector<double> mxx = gauss_valid(xx, h, w, g1);
  const std::vector<double> myy = gauss_valid(yy, h, w, g1);
  const std::vector<double> mxy = gauss_valid(xy, h, w, g1);

  const double L = params.dynamic_range;
  const double c1 = (params.k1 * L) * (params.k1 * L);
  const double c2 = (params.k2 * L) * (params.k2 * L);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = mxx[i] - mx[i] * mx[i];
    const double vy = myy[i] - my[i] * my[i];
    const double vxy = mxy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * vxy + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

Image gray_probe(Network& net, int h, int w, float level) {
  Tensor<float> x = Tensor<float>::full({1, 3, h, w}, level);
  Tensor<float> out;
  if (net.config().variant == Variant::local_global) {
    const int gis = net.config().global_input_size;
    Tensor<float> gx = Tensor<float>::full({1, 3, gis, gis}, level);
    out = net.forward(nullptr, x, &gx, Mode::eval);
  } else {
    out = net.forward(nullptr, x, nullptr, Mode::eval);
  }
  return tensor_to_image(out);
}

std::vector<double> log_amplitude_spectrum(const std::vector<double>& lum, int h,
                                           int w) {
  if (h < 2 || w < 2 || lum.size() != static_cast<std::size_t>(h) * w) {
    throw UsageError("log_amplitude_spectrum: need a single-channel image, dims >= 2");
  }
  std::vector<std::complex<double>> freq(lum.size());
  for (std::size_t i = 0; i < lum.size(); ++i) freq[i] = {lum[i], 0.0};
  fft2d(freq, h, w, false);

  std::vector<double> shifted(lum.size(), 0.0);
  const int cy = h / 2, cx = w / 2;
  double maxv = 0.0;
  for (int u = 0; u < h; ++u) {
    for (int v = 0; v < w; ++v) {
      const double amp = std::log1p(std::abs(freq[static_cast<std::size_t>(u) * w + v]));
      const int su = (u + cy) % h;
      const int sv = (v + cx) % w;
      shifted[static_cast<std::size_t>(su) * w + sv] = amp;
      maxv = std::max(maxv, amp);
    }
  }
  if (maxv > 0.0) {
    for (double& v : shifted) v /= maxv;
  }
  return shifted;
}

double checkerboard_score(const std::vector<double>& spectrum, int h, int w,
                          int rate) {
  if (h < 4 || w < 4 || spectrum.size() != static_cast<std::size_t>(h) * w) {
    throw UsageError("checkerboard_score: spectrum smaller than 4x4");
  }
  if (rate < 2) throw ConfigError("checkerboard_score: rate must be >= 2");

  const int cy = h / 2, cx = w / 2;
  std::vector<bool> line_row(static_cast<std::size_t>(h), false);
  std::vector<bool> line_col(static_cast<std::size_t>(w), false);
  for (int k = 1; k < rate; ++k) {
    const int u = static_cast<int>(std::lround(static_cast<double>(k) * h / rate)) % h;
    const int v = static_cast<int>(std::lround(static_cast<double>(k) * w / rate)) % w;
    line_row[static_cast<std::size_t>((u + cy) % h)] = true;
    line_col[static_cast<std::size_t>((v + cx) % w)] = true;
  }

  const auto near_dc = [cy, cx](int y, int x) {
    return std::abs(y - cy) <= 1 && std::abs(x - cx) <= 1;
  };

  double line_max = 0.0, off_max = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (near_dc(y, x)) continue;
      const double v = spectrum[static_cast<std::size_t>(y) * w + x];
      off_max = std::max(off_max, v);
      if (line_row[static_cast<std::size_t>(y)] || line_col[static_cast<std::size_t>(x)]) {
        line_max = std::max(line_max, v);
      }
    }
  }
  if (off_max <= 0.0) return 0.0;
  return line_max / off_max;
}

SpectrumReport analyze_image(const Image& img, int rate, double peak_threshold) {
  SpectrumReport report;
  report.h = img.h;
  report.w = img.w;
  report.spectrum = log_amplitude_spectrum(luminance(img), img.h, img.w);
  report.checkerboard_score = checkerboard_score(report.spectrum, img.h, img.w, rate);
  const int cy = img.h / 2, cx = img.w / 2;
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      const double v = report.spectrum[static_cast<std::size_t>(y) * img.w + x];
      if (v >= peak_threshold) {
        report.peaks.push_back(SpectrumReport::Peak{y - cy, x - cx, v});
      }
    }
  }
  std::sort(report.peaks.begin(), report.peaks.end(),
            [](const SpectrumReport::Peak& a, const SpectrumReport::Peak& b) {
              if (a.value != b.value) return a.value > b.value;
              if (a.u != b.u) return a.u < b.u;
              return a.v < b.v;
            });
  return report;
}

}  // namespace cbfn
