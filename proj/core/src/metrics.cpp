#include "cascadeflow/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace cascadeflow {

double psnr(const VideoTensor& a, const VideoTensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("psnr: clip shapes differ: " + a.shape_str() + " vs " +
                                    b.shape_str());
    if (a.numel() == 0) throw std::invalid_argument("psnr on empty clips");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse <= 0.0) return kPsnrCap;
    double v = 10.0 * std::log10(4.0 / mse);
    return v > kPsnrCap ? kPsnrCap : v;
}

namespace {

// Direct separable 2-D DFT power spectrum of one frame/channel plane.
// Grids here are small (tests cap at 64x64), so the O(n^3) transform is
// plenty and keeps the metric definition self-contained.
struct Spectrum {
    std::int64_t h = 0, w = 0;
    std::vector<double> power;  // |F|^2, row-major [h, w]
};

Spectrum frame_spectrum(const VideoTensor& v, std::int64_t f, std::int64_t ch) {
    const std::int64_t H = v.height, W = v.width;
    // Row transform: for each y, DFT over x.
    std::vector<double> re(static_cast<std::size_t>(H * W)), im(static_cast<std::size_t>(H * W));
    const double tau = 6.283185307179586476925286766559;
    for (std::int64_t y = 0; y < H; ++y)
        for (std::int64_t u = 0; u < W; ++u) {
            double sr = 0.0, si = 0.0;
            for (std::int64_t x = 0; x < W; ++x) {
                double ang = -tau * static_cast<double>(u * x) / static_cast<double>(W);
                double val = v.at(f, y, x, ch);
                sr += val * std::cos(ang);
                si += val * std::sin(ang);
            }
            re[static_cast<std::size_t>(y * W + u)] = sr;
            im[static_cast<std::size_t>(y * W + u)] = si;
        }
    // Column transform: for each u, DFT over y.
    Spectrum s;
    s.h = H;
    s.w = W;
    s.power.assign(static_cast<std::size_t>(H * W), 0.0);
    for (std::int64_t u = 0; u < W; ++u)
        for (std::int64_t vq = 0; vq < H; ++vq) {
            double sr = 0.0, si = 0.0;
            for (std::int64_t y = 0; y < H; ++y) {
                double ang = -tau * static_cast<double>(vq * y) / static_cast<double>(H);
                double c = std::cos(ang), sn = std::sin(ang);
                double rr = re[static_cast<std::size_t>(y * W + u)];
                double ii = im[static_cast<std::size_t>(y * W + u)];
                sr += rr * c - ii * sn;
                si += rr * sn + ii * c;
            }
            s.power[static_cast<std::size_t>(vq * W + u)] = sr * sr + si * si;
        }
    return s;
}

}  // namespace

double hf_energy_ratio(const VideoTensor& v, double cutoff) {
    if (cutoff < 0.0) throw std::invalid_argument("hf cutoff must be non-negative");
    if (v.numel() == 0) throw std::invalid_argument("hf_energy_ratio on empty clip");
    double ratio_sum = 0.0;
    std::int64_t planes = 0;
    for (std::int64_t f = 0; f < v.frames; ++f)
        for (std::int64_t ch = 0; ch < v.channels; ++ch) {
            Spectrum s = frame_spectrum(v, f, ch);
            double total = 0.0, high = 0.0;
            for (std::int64_t fy = 0; fy < s.h; ++fy)
                for (std::int64_t fx = 0; fx < s.w; ++fx) {
                    if (fy == 0 && fx == 0) continue;  // DC excluded
                    // Signed frequency in cycles/sample, as a fraction of
                    // the Nyquist rate 0.5.
                    std::int64_t sy = fy <= s.h / 2 ? fy : fy - s.h;
                    std::int64_t sx = fx <= s.w / 2 ? fx : fx - s.w;
                    double ny = (static_cast<double>(sy) / static_cast<double>(s.h)) / 0.5;
                    double nx = (static_cast<double>(sx) / static_cast<double>(s.w)) / 0.5;
                    double rho = std::sqrt(ny * ny + nx * nx);
                    double p = s.power[static_cast<std::size_t>(fy * s.w + fx)];
                    total += p;
                    if (rho > cutoff) high += p;
                }
            // A constant plane has zero non-DC energy; count its ratio as 0.
            // The direct DFT leaves ~1e-26 relative round-off dust in the
            // non-DC bins, so compare against the DC energy rather than zero.
            double dc = s.power[0];
            ratio_sum += (total > 1e-12 * (dc + total)) ? high / total : 0.0;
            planes += 1;
        }
    return ratio_sum / static_cast<double>(planes);
}

}  // namespace cascadeflow
