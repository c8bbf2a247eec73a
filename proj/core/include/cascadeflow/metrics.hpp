#pragma once

#include "cascadeflow/tensor.hpp"

namespace cascadeflow {

// Peak signal-to-noise ratio for clips in [-1, 1] (peak-to-peak 2, so
// psnr = 10*log10(4 / mse)). Identical clips return the 99 dB cap; the cap
// also bounds near-zero-error results. Shapes must match exactly.
double psnr(const VideoTensor& a, const VideoTensor& b);

inline constexpr double kPsnrCap = 99.0;

// Fraction of per-frame 2-D spectral energy above a radial frequency cutoff
// (cutoff in units of the Nyquist frequency; the DC bin is excluded from
// both numerator and denominator), averaged over frames and channels.
// A constant clip has no non-DC energy and returns 0.
double hf_energy_ratio(const VideoTensor& v, double cutoff = 0.5);

}  // namespace cascadeflow
