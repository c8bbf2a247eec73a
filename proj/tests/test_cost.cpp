#include <doctest.h>

#include <cascadeflow/cost.hpp>

#include <cmath>
#include <stdexcept>

using namespace cascadeflow;

TEST_SUITE("cost") {
    TEST_CASE("token count follows the grid law") {
        CostSpec s;
        s.frames = 49;
        s.height = 1080;
        s.width = 1920;
        s.spatial_ratio = 8;
        s.temporal_ratio = 4;
        CHECK(s.tokens() == doctest::Approx(13.0 * 135.0 * 240.0).epsilon(1e-12));
    }

    TEST_CASE("attention cost scales 16x when both image axes double") {
        CostModel m{1e-12, 1e-12};
        CostSpec a = preset_large_270p();
        CostSpec b = a;
        b.height *= 2;
        b.width *= 2;
        CHECK(attn_cost(b, m).attn == doctest::Approx(16.0 * attn_cost(a, m).attn).epsilon(1e-12));
        // The pointwise term only quadruples.
        CHECK(attn_cost(b, m).linear ==
              doctest::Approx(4.0 * attn_cost(a, m).linear).epsilon(1e-12));
    }

    TEST_CASE("fitting reproduces both anchors exactly") {
        CostModel m = fit_cost_model(preset_large_270p(), kAnchorLowResSeconds,
                                     preset_large_1080p(), kAnchorHighResSeconds);
        CHECK(m.kappa_attn > 0);
        CHECK(m.kappa_linear > 0);
        CHECK(attn_cost(preset_large_270p(), m).total ==
              doctest::Approx(kAnchorLowResSeconds).epsilon(1e-9));
        CHECK(attn_cost(preset_large_1080p(), m).total ==
              doctest::Approx(kAnchorHighResSeconds).epsilon(1e-9));
    }

    TEST_CASE("a singular anchor system is rejected") {
        CostSpec a = preset_large_270p();
        CHECK_THROWS_AS(fit_cost_model(a, 30.0, a, 30.0), std::invalid_argument);
    }

    TEST_CASE("plan totals sum their rows") {
        CostModel m = fitted_reference_model();
        PlanReport r = plan_cost(plan_transport_cascade(), m);
        double sum = 0;
        for (const auto& row : r.rows) sum += row.cost.total;
        CHECK(r.total == doctest::Approx(sum).epsilon(1e-12));
        CHECK(r.rows.size() == 2);  // low-res stage + enhancement stage
    }

    TEST_CASE("the cascade orderings match the published comparison") {
        CostModel m = fitted_reference_model();
        double single = plan_cost(plan_single_stage(), m).total;
        double noise_cascade = plan_cost(plan_noise_cascade(), m).total;
        double transport = plan_cost(plan_transport_cascade(), m).total;
        CHECK(single == doctest::Approx(kAnchorHighResSeconds).epsilon(1e-9));
        // Few-step transport beats both alternatives by a wide margin.
        CHECK(transport < noise_cascade);
        CHECK(transport < single);
        CHECK(single / transport > 16.0);
        // And lands near the published wall-clock comparisons.
        CHECK(std::fabs(noise_cascade - kReferenceNoiseCascadeSeconds) /
                  kReferenceNoiseCascadeSeconds <
              0.05);
        CHECK(std::fabs(transport - kReferenceTransportCascadeSeconds) /
                  kReferenceTransportCascadeSeconds <
              0.05);
    }

    TEST_CASE("spec validation rejects nonsense") {
        CostSpec bad;
        bad.height = 0;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        CostSpec bad2;
        bad2.steps = -1;
        CHECK_THROWS_AS(bad2.validate(), std::invalid_argument);
        CostSpec bad3;
        bad3.spatial_ratio = 0;
        CHECK_THROWS_AS(bad3.validate(), std::invalid_argument);
    }
}
