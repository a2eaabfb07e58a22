#pragma once

#include <vector>

#include "cbfn/image.hpp"
#include "cbfn/network.hpp"

namespace cbfn {

// 10 log10(peak^2 / MSE) over all channels; returns the 100 dB cap when
// the MSE drops below 1e-10.
double psnr(const Image& a, const Image& b, double peak = 1.0);

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

// Mean SSIM over valid window positions. Multi-channel images are reduced
// to luminance (unweighted channel mean) first.
double ssim(const Image& a, const Image& b, const SsimParams& params = {});

// Unweighted channel mean, h*w row-major.
std::vector<double> luminance(const Image& img);

// Eval-mode forward on a constant image of the given level (the global
// input, when the variant needs one, is the same constant).
Image gray_probe(Network& net, int h, int w, float level = 0.5f);

struct SpectrumReport {
  int h = 0, w = 0;
  std::vector<double> spectrum;  // log(1+|F|), DC centered, scaled to [0,1]
  double checkerboard_score = 0.0;
  struct Peak {
    int u, v;  // offsets from the centered DC
    double value;
  };
  std::vector<Peak> peaks;
};

// Normalized log-amplitude spectrum: log(1+|F|), shifted so DC is central,
// divided by its maximum (all zeros for an identically zero image).
std::vector<double> log_amplitude_spectrum(const std::vector<double>& lum, int h, int w);

// Peak spectrum value on the rate-r artifact lines (the Nyquist row and
// column for r=2), rescaled by the DC-excluded spectrum maximum so the
// score ignores the mean level of the probed image. A 3x3 neighborhood of
// DC is excluded throughout.
double checkerboard_score(const std::vector<double>& spectrum, int h, int w,
                          int rate = 2);

SpectrumReport analyze_image(const Image& img, int rate = 2,
                             double peak_threshold = 0.5);

}  // namespace cbfn
