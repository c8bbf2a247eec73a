#include <doctest.h>

#include <cascadeflow/metrics.hpp>
#include <cascadeflow/rng.hpp>

#include <cmath>
#include <stdexcept>

using namespace cascadeflow;

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

VideoTensor frame_of(std::int64_t h, std::int64_t w) { return VideoTensor(1, h, w, 1); }

}  // namespace

TEST_SUITE("metrics") {
    TEST_CASE("identical clips hit the cap") {
        VideoTensor a = frame_of(8, 8);
        Rng r(1);
        for (auto& x : a.data) x = r.uniform(-1.0, 1.0);
        CHECK(psnr(a, a) == kPsnrCap);
    }

    TEST_CASE("a constant offset has closed-form psnr") {
        VideoTensor a = frame_of(8, 8);
        Rng r(2);
        for (auto& x : a.data) x = r.uniform(-0.5, 0.5);
        VideoTensor b = a;
        for (auto& x : b.data) x += 0.2;
        // MSE 0.04 against a peak-to-peak range of 2: 10*log10(4/0.04).
        CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
        CHECK(psnr(b, a) == doctest::Approx(20.0).epsilon(1e-12));
    }

    TEST_CASE("psnr matches an elementwise oracle") {
        VideoTensor a = frame_of(4, 4);
        VideoTensor b = a;
        b.data[5] = 0.3;
        double mse = 0.3 * 0.3 / 16.0;
        CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(4.0 / mse)).epsilon(1e-9));
    }

    TEST_CASE("psnr is translation invariant") {
        VideoTensor a = frame_of(6, 6), b = frame_of(6, 6);
        Rng r(3);
        for (auto& x : a.data) x = r.uniform(-0.4, 0.4);
        for (std::size_t i = 0; i < b.data.size(); ++i) b.data[i] = a.data[i] + 0.1 * ((i % 3) - 1);
        double base = psnr(a, b);
        VideoTensor a2 = a, b2 = b;
        for (auto& x : a2.data) x += 0.25;
        for (auto& x : b2.data) x += 0.25;
        CHECK(psnr(a2, b2) == doctest::Approx(base).epsilon(1e-12));
    }

    TEST_CASE("shape mismatches are rejected") {
        CHECK_THROWS_AS(psnr(frame_of(4, 4), frame_of(4, 5)), std::invalid_argument);
    }

    TEST_CASE("constant clips carry no high-frequency energy") {
        VideoTensor v = frame_of(8, 8);
        for (auto& x : v.data) x = 0.3;
        CHECK(hf_energy_ratio(v) == 0.0);
    }

    TEST_CASE("a checkerboard is pure Nyquist energy") {
        VideoTensor v = frame_of(8, 8);
        for (std::int64_t y = 0; y < 8; ++y)
            for (std::int64_t x = 0; x < 8; ++x) v.at(0, y, x, 0) = ((x + y) % 2 == 0) ? 1.0 : -1.0;
        CHECK(hf_energy_ratio(v) == doctest::Approx(1.0).epsilon(1e-12));
    }

    TEST_CASE("gratings fall on the right side of the cutoff") {
        // 2 cycles across 16 samples: |f| = 2/16 = 0.125 cycles/sample,
        // 0.25 of Nyquist -- below the 0.5 default cutoff.
        VideoTensor low = frame_of(16, 16);
        for (std::int64_t y = 0; y < 16; ++y)
            for (std::int64_t x = 0; x < 16; ++x)
                low.at(0, y, x, 0) = std::sin(kTau * 2.0 * static_cast<double>(x) / 16.0);
        CHECK(hf_energy_ratio(low) == doctest::Approx(0.0).epsilon(1e-12));

        // 6 cycles: 0.75 of Nyquist -- above the cutoff.
        VideoTensor high = frame_of(16, 16);
        for (std::int64_t y = 0; y < 16; ++y)
            for (std::int64_t x = 0; x < 16; ++x)
                high.at(0, y, x, 0) = std::sin(kTau * 6.0 * static_cast<double>(x) / 16.0);
        CHECK(hf_energy_ratio(high) == doctest::Approx(1.0).epsilon(1e-12));
    }

    TEST_CASE("mixtures split energy by squared amplitude") {
        const double a = 0.8, b = 0.3;  // low and high amplitudes
        VideoTensor v = frame_of(16, 16);
        for (std::int64_t y = 0; y < 16; ++y)
            for (std::int64_t x = 0; x < 16; ++x)
                v.at(0, y, x, 0) = a * std::sin(kTau * 2.0 * static_cast<double>(x) / 16.0) +
                                   b * std::sin(kTau * 6.0 * static_cast<double>(x) / 16.0);
        CHECK(hf_energy_ratio(v) == doctest::Approx(b * b / (a * a + b * b)).epsilon(1e-9));
    }

    TEST_CASE("a cutoff of zero counts all non-DC energy") {
        VideoTensor v = frame_of(8, 8);
        for (std::int64_t y = 0; y < 8; ++y)
            for (std::int64_t x = 0; x < 8; ++x)
                v.at(0, y, x, 0) = 0.5 + 0.1 * std::sin(kTau * static_cast<double>(x) / 8.0);
        CHECK(hf_energy_ratio(v, 0.0) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK_THROWS_AS(hf_energy_ratio(v, -0.1), std::invalid_argument);
    }

    TEST_CASE("the ratio averages over frames and channels") {
        // Frame 0 all-low, frame 1 all-high: the mean lands at 0.5.
        VideoTensor v(2, 16, 16, 1);
        for (std::int64_t y = 0; y < 16; ++y)
            for (std::int64_t x = 0; x < 16; ++x) {
                v.at(0, y, x, 0) = std::sin(kTau * 2.0 * static_cast<double>(x) / 16.0);
                v.at(1, y, x, 0) = std::sin(kTau * 6.0 * static_cast<double>(x) / 16.0);
            }
        CHECK(hf_energy_ratio(v) == doctest::Approx(0.5).epsilon(1e-9));
    }
}
