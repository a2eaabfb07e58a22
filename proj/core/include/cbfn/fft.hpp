#pragma once

#include <complex>
#include <vector>

namespace cbfn {

// In-place 2-D DFT, row-column decomposition. Power-of-two axis lengths
// take the radix-2 path; anything else falls back to the O(n^2) direct
// transform. `inverse` applies the conjugate transform scaled by 1/(h*w).
void fft2d(std::vector<std::complex<double>>& data, int h, int w,
           bool inverse = false);

}  // namespace cbfn
