#include <doctest.h>

#include <cascadeflow/degrade.hpp>
#include <cascadeflow/metrics.hpp>
#include <cascadeflow/synthdata.hpp>

#include <cmath>
#include <stdexcept>

using namespace cascadeflow;

TEST_SUITE("schedule") {
    TEST_CASE("step 0 is exactly the identity") {
        NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 2e-2);
        CHECK(s.variance[0] == 0.0);
        CHECK(s.alpha(0) == 1.0);
        CHECK(s.beta(0) == 0.0);
    }

    TEST_CASE("variance ramp endpoints and interpolation") {
        NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 2e-2);
        REQUIRE(s.variance.size() == 1000);
        CHECK(s.variance[1] == 1e-4);
        CHECK(s.variance[999] == 2e-2);
        // Linear in the index: recompute independently.
        for (std::int64_t i : {2ll, 313ll, 500ll, 998ll}) {
            double u = static_cast<double>(i - 1) / 998.0;
            CHECK(s.variance[static_cast<std::size_t>(i)] ==
                  doctest::Approx(1e-4 + (2e-2 - 1e-4) * u).epsilon(1e-15));
        }
    }

    TEST_CASE("mixing coefficients satisfy alpha^2 + beta^2 = 1") {
        NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 2e-2);
        for (std::int64_t i : {0ll, 1ll, 100ll, 675ll, 999ll}) {
            double a = s.alpha(i), b = s.beta(i);
            CHECK(a * a + b * b == doctest::Approx(1.0).epsilon(1e-12));
        }
        // alpha_bar is the running product of (1 - variance).
        double prod = 1.0;
        for (std::int64_t i = 0; i < 1000; ++i) {
            prod *= 1.0 - s.variance[static_cast<std::size_t>(i)];
            CHECK(s.alpha_bar[static_cast<std::size_t>(i)] == doctest::Approx(prod).epsilon(1e-12));
        }
    }

    TEST_CASE("alpha decreases monotonically after step 0") {
        NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 2e-2);
        for (std::int64_t i = 1; i < 1000; ++i)
            CHECK(s.alpha(i) < s.alpha(i - 1));
        // By the high end the signal is nearly gone.
        CHECK(s.alpha(999) < 0.15);
    }

    TEST_CASE("step bounds are enforced") {
        NoiseSchedule s = NoiseSchedule::linear(10, 1e-3, 1e-2);
        CHECK_THROWS_AS(s.check_step(-1), std::invalid_argument);
        CHECK_THROWS_AS(s.check_step(10), std::invalid_argument);
        CHECK_THROWS_AS(s.alpha(10), std::invalid_argument);
    }

    TEST_CASE("constructor validates its arguments") {
        CHECK_THROWS_AS(NoiseSchedule::linear(1, 1e-4, 2e-2), std::invalid_argument);
        CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.0, 2e-2), std::invalid_argument);
        CHECK_THROWS_AS(NoiseSchedule::linear(10, 1e-2, 1e-4), std::invalid_argument);
        CHECK_THROWS_AS(NoiseSchedule::linear(10, 1e-4, 1.0), std::invalid_argument);
    }
}

TEST_SUITE("degrade") {
    TEST_CASE("latent degradation at step 0 is bitwise identity, no rng use") {
        NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 2e-2);
        LatentTensor z(2, 4, 4, 8);
        Rng fill(3);
        for (auto& x : z.data) x = fill.normal();
        Rng rng(77);
        std::string before = rng.state_str();
        LatentTensor out = deg_latent(z, 0, s, rng);
        CHECK(out.data == z.data);
        CHECK(rng.state_str() == before);
    }

    TEST_CASE("latent degradation matches the closed form") {
        NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 2e-2);
        LatentTensor z(1, 2, 2, 4);
        Rng fill(5);
        for (auto& x : z.data) x = fill.normal();
        Rng rng(123);
        Rng replay = Rng::from_state_str(rng.state_str());
        LatentTensor out = deg_latent(z, 675, s, rng);
        double a = s.alpha(675), b = s.beta(675);
        for (std::size_t i = 0; i < z.data.size(); ++i)
            CHECK(out.data[i] == doctest::Approx(a * z.data[i] + b * replay.normal()).epsilon(1e-15));
    }

    TEST_CASE("identity pixel config is bitwise identity") {
        VideoTensor v = render_scene(SceneSpec::from_class(13), 3, 16, 16);
        Rng rng(1);
        VideoTensor out = deg_pixel(v, PixelDegradeConfig::identity(), rng);
        CHECK(out.data == v.data);
    }

    TEST_CASE("pixel degradation is deterministic given the rng state") {
        VideoTensor v = render_scene(SceneSpec::from_class(40), 3, 16, 16);
        PixelDegradeConfig cfg;  // defaults: blur 0.2..2, factor 2..4
        Rng a(9), b(9);
        VideoTensor oa = deg_pixel(v, cfg, a);
        VideoTensor ob = deg_pixel(v, cfg, b);
        CHECK(oa.data == ob.data);
    }

    TEST_CASE("pixel degradation keeps shape, stays in range, destroys detail") {
        // A high-texture scene has plenty of high-frequency energy to lose.
        VideoTensor v = render_scene(SceneSpec::from_class(70), 3, 32, 32);
        PixelDegradeConfig cfg;
        Rng rng(4);
        VideoTensor out = deg_pixel(v, cfg, rng);
        REQUIRE(out.same_shape(v));
        for (double x : out.data) {
            CHECK(x >= -1.0);
            CHECK(x <= 1.0);
        }
        CHECK(hf_energy_ratio(out) < hf_energy_ratio(v));
    }

    TEST_CASE("pixel config validation") {
        PixelDegradeConfig bad;
        bad.sigma_lo = -1.0;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        PixelDegradeConfig bad2;
        bad2.factor_lo = 0.5;
        CHECK_THROWS_AS(bad2.validate(), std::invalid_argument);
        PixelDegradeConfig bad3;
        bad3.second_blur_prob = 1.5;
        CHECK_THROWS_AS(bad3.validate(), std::invalid_argument);
    }

    TEST_CASE("train pairs holds the exact target and a step in range") {
        Codec codec(CodecConfig{4, 2, 1, 0xC0DEC});
        NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 2e-2);
        VideoTensor hr = render_scene(SceneSpec::from_class(22), 3, 32, 32);
        Rng rng(31);
        TrainPair p = make_train_pair(hr, 22, StepRange{600, 900}, PixelDegradeConfig{}, codec, s, rng);
        CHECK(p.cond == 22);
        CHECK(p.noise_step >= 600);
        CHECK(p.noise_step <= 900);
        // The destination is the exact encoding of the clean clip.
        LatentTensor z_hr = codec.encode(hr);
        CHECK(p.z_hr.data == z_hr.data);
        CHECK(p.z_lr.same_shape(p.z_hr));
        // The degraded source differs from the destination.
        CHECK(p.z_lr.data != p.z_hr.data);
    }

    TEST_CASE("step range {0,0} with identity pixel config is degradation-free") {
        Codec codec(CodecConfig{4, 2, 1, 0xC0DEC});
        NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 2e-2);
        VideoTensor hr = render_scene(SceneSpec::from_class(7), 3, 16, 16);
        Rng rng(8);
        TrainPair p = make_train_pair(hr, 7, StepRange{0, 0}, PixelDegradeConfig::identity(), codec,
                                      s, rng);
        CHECK(p.noise_step == 0);
        CHECK(p.z_lr.data == p.z_hr.data);
    }

    TEST_CASE("train pair draws are reproducible") {
        Codec codec(CodecConfig{2, 2, 1, 1});
        NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 2e-2);
        VideoTensor hr = render_scene(SceneSpec::from_class(50), 3, 16, 16);
        Rng a(12), b(12);
        TrainPair pa = make_train_pair(hr, 50, StepRange{600, 900}, PixelDegradeConfig{}, codec, s, a);
        TrainPair pb = make_train_pair(hr, 50, StepRange{600, 900}, PixelDegradeConfig{}, codec, s, b);
        CHECK(pa.noise_step == pb.noise_step);
        CHECK(pa.z_lr.data == pb.z_lr.data);
    }

    TEST_CASE("invalid step ranges are rejected") {
        Codec codec(CodecConfig{2, 2, 1, 1});
        NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 2e-2);
        VideoTensor hr = render_scene(SceneSpec::from_class(0), 3, 16, 16);
        Rng rng(1);
        CHECK_THROWS_AS(
            make_train_pair(hr, 0, StepRange{700, 600}, PixelDegradeConfig{}, codec, s, rng),
            std::invalid_argument);
        CHECK_THROWS_AS(
            make_train_pair(hr, 0, StepRange{900, 1000}, PixelDegradeConfig{}, codec, s, rng),
            std::invalid_argument);
    }
}
