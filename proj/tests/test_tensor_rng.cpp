#include <doctest.h>

#include <cascadeflow/hashing.hpp>
#include <cascadeflow/rng.hpp>
#include <cascadeflow/tensor.hpp>

#include <cmath>
#include <set>
#include <stdexcept>

using namespace cascadeflow;

TEST_SUITE("tensor") {
    TEST_CASE("shape helpers") {
        CHECK(shape_numel({2, 3, 4}) == 24);
        CHECK(shape_numel({}) == 1);
        CHECK(shape_str({2, 8, 8, 32}) == "[2,8,8,32]");
    }

    TEST_CASE("construction validates data size") {
        CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), std::invalid_argument);
        Tensor t = Tensor::zeros({3, 4});
        CHECK(t.numel() == 12);
        CHECK(t.rows() == 3);
        CHECK(t.cols() == 4);
        Tensor f = Tensor::full({2, 2}, 1.5);
        for (double x : f.data) CHECK(x == 1.5);
    }

    TEST_CASE("video tensor layout is row-major (f, y, x, c)") {
        VideoTensor v(2, 3, 4, 2);
        v.at(1, 2, 3, 1) = 7.0;
        // index = ((f*h + y)*w + x)*c + c_i
        CHECK(v.data[((1 * 3 + 2) * 4 + 3) * 2 + 1] == 7.0);
        CHECK(v.shape_str() == "[2,3,4,2]");
    }

    TEST_CASE("latent tensor layout is row-major (t, h, w, c)") {
        LatentTensor z(2, 2, 3, 4);
        z.at(1, 0, 2, 3) = -2.5;
        CHECK(z.data[((1 * 2 + 0) * 3 + 2) * 4 + 3] == -2.5);
        CHECK(z.tokens() == 12);
        CHECK(z.numel() == 48);
    }

    TEST_CASE("finiteness checks") {
        Tensor t = Tensor::zeros({2});
        CHECK(t.all_finite());
        t.data[1] = std::nan("");
        CHECK_FALSE(t.all_finite());
    }
}

TEST_SUITE("rng") {
    TEST_CASE("same seed, same sequence") {
        Rng a(42), b(42);
        for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    }

    TEST_CASE("uniform01 stays in [0, 1)") {
        Rng r(1);
        for (int i = 0; i < 10000; ++i) {
            double u = r.uniform01();
            CHECK(u >= 0.0);
            CHECK(u < 1.0);
        }
    }

    TEST_CASE("uniform_int is inclusive and covers the range") {
        Rng r(3);
        std::set<std::int64_t> seen;
        for (int i = 0; i < 1000; ++i) {
            std::int64_t v = r.uniform_int(600, 605);
            CHECK(v >= 600);
            CHECK(v <= 605);
            seen.insert(v);
        }
        CHECK(seen.size() == 6);  // all six values hit in 1000 draws
        // Degenerate range is a constant.
        CHECK(r.uniform_int(7, 7) == 7);
    }

    TEST_CASE("normal moments are sane") {
        Rng r(5);
        const int n = 20000;
        double sum = 0, sum2 = 0;
        for (int i = 0; i < n; ++i) {
            double x = r.normal();
            sum += x;
            sum2 += x * x;
        }
        double mean = sum / n, var = sum2 / n - mean * mean;
        CHECK(std::fabs(mean) < 0.03);
        CHECK(std::fabs(var - 1.0) < 0.05);
    }

    TEST_CASE("bernoulli edge probabilities are exact") {
        Rng r(9);
        for (int i = 0; i < 100; ++i) {
            CHECK_FALSE(r.bernoulli(0.0));
            CHECK(r.bernoulli(1.0));
        }
    }

    TEST_CASE("streams are independent of parent and each other") {
        Rng parent(11);
        Rng s1 = parent.stream(1);
        Rng s2 = parent.stream(2);
        // stream() is const: parent state unchanged.
        Rng parent2(11);
        CHECK(parent.next_u64() == parent2.next_u64());
        CHECK(s1.next_u64() != s2.next_u64());
        // Same id, same stream.
        Rng s1b = parent2.stream(1);
        s1 = parent2.stream(1);
        for (int i = 0; i < 10; ++i) CHECK(s1.next_u64() == s1b.next_u64());
    }

    TEST_CASE("state round-trip is bitwise, including a cached normal") {
        Rng r(17);
        r.normal();  // odd number of normals leaves one cached
        Rng copy = Rng::from_state_str(r.state_str());
        for (int i = 0; i < 20; ++i) CHECK(r.normal() == copy.normal());
        for (int i = 0; i < 20; ++i) CHECK(r.next_u64() == copy.next_u64());
    }

    TEST_CASE("state string rejects garbage") {
        CHECK_THROWS_AS(Rng::from_state_str("not-a-state"), std::exception);
    }
}

TEST_SUITE("hashing") {
    TEST_CASE("crc32 matches the standard check value") {
        const char* s = "123456789";
        CHECK(crc32(s, 9) == 0xCBF43926u);
    }

    TEST_CASE("crc32 seed chains incremental updates") {
        const char* s = "123456789";
        std::uint32_t partial = crc32(s, 4);
        CHECK(crc32(s + 4, 5, partial) == crc32(s, 9));
    }

    TEST_CASE("fnv1a64 known vectors") {
        CHECK(fnv1a64(std::string("")) == 0xcbf29ce484222325ull);
        CHECK(fnv1a64(std::string("a")) == 0xaf63dc4c8601ec8cull);
        CHECK(fnv1a64(std::string("foobar")) == 0x85944171f73967e8ull);
    }

    TEST_CASE("hex64 formats fixed width") {
        CHECK(hex64(0) == "0000000000000000");
        CHECK(hex64(0xdeadbeefull) == "00000000deadbeef");
    }
}
