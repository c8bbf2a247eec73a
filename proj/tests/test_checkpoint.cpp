#include <doctest.h>

#include <cascadeflow/checkpoint.hpp>
#include <cascadeflow/rng.hpp>

#include <filesystem>
#include <unistd.h>
#include <fstream>
#include <stdexcept>

using namespace cascadeflow;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("container_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

Container sample_container() {
    Container c;
    c.meta["kind"] = "test";
    c.meta["nested"] = {{"a", 1}, {"b", "two"}};
    NamedTensor t;
    t.name = "weights";
    t.shape = {2, 3};
    t.data = {0.5, -1.25, 2.0, 0.125, -0.375, 3.5};  // exact in f32
    c.tensors.push_back(t);
    NamedTensor u;
    u.name = "bias";
    u.shape = {3};
    u.data = {1.0, 2.0, 3.0};
    c.tensors.push_back(u);
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void spit(const fs::path& p, const std::string& bytes) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    REQUIRE(f);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_SUITE("container") {
    TEST_CASE("f32-exact payloads round-trip bitwise") {
        TempDir tmp;
        fs::path p = tmp.path / "c.tpack";
        Container c = sample_container();
        save_container(p.string(), c);
        Container back = load_container(p.string());
        CHECK(back.meta == c.meta);
        REQUIRE(back.tensors.size() == 2);
        CHECK(back.at("weights").shape == std::vector<std::int64_t>{2, 3});
        CHECK(back.at("weights").data == c.tensors[0].data);
        CHECK(back.at("bias").data == c.tensors[1].data);
        CHECK(back.has("weights"));
        CHECK_FALSE(back.has("missing"));
        CHECK_THROWS_AS(back.at("missing"), std::out_of_range);
    }

    TEST_CASE("general doubles round-trip through f32 precision") {
        TempDir tmp;
        fs::path p = tmp.path / "c.tpack";
        Container c;
        c.meta["kind"] = "test";
        NamedTensor t;
        t.name = "x";
        t.shape = {4};
        Rng r(3);
        for (int i = 0; i < 4; ++i) t.data.push_back(r.normal());
        c.tensors.push_back(t);
        save_container(p.string(), c);
        Container back = load_container(p.string());
        for (int i = 0; i < 4; ++i)
            CHECK(back.at("x").data[static_cast<std::size_t>(i)] == to_f32_precision(t.data[i]));
    }

    TEST_CASE("serialization is byte-deterministic") {
        TempDir tmp;
        fs::path a = tmp.path / "a.tpack", b = tmp.path / "b.tpack";
        save_container(a.string(), sample_container());
        save_container(b.string(), sample_container());
        CHECK(slurp(a) == slurp(b));
    }

    TEST_CASE("a flipped payload byte fails the checksum") {
        TempDir tmp;
        fs::path p = tmp.path / "c.tpack";
        save_container(p.string(), sample_container());
        std::string bytes = slurp(p);
        bytes[bytes.size() - 3] ^= 0x40;  // inside the last tensor payload
        spit(p, bytes);
        CHECK_THROWS_WITH_AS(load_container(p.string()), doctest::Contains("checksum"),
                             std::runtime_error);
    }

    TEST_CASE("bad magic and truncation are rejected") {
        TempDir tmp;
        fs::path p = tmp.path / "c.tpack";
        save_container(p.string(), sample_container());
        std::string bytes = slurp(p);

        std::string wrong = bytes;
        wrong[0] = 'X';
        spit(p, wrong);
        CHECK_THROWS_AS(load_container(p.string()), std::runtime_error);

        spit(p, bytes.substr(0, bytes.size() / 2));
        CHECK_THROWS_AS(load_container(p.string()), std::runtime_error);

        spit(p, bytes.substr(0, 4));
        CHECK_THROWS_AS(load_container(p.string()), std::runtime_error);

        CHECK_THROWS_AS(load_container((tmp.path / "absent.tpack").string()), std::runtime_error);
    }

    TEST_CASE("video and latent entries carry their dimensions") {
        VideoTensor v(2, 4, 6, 1);
        for (std::size_t i = 0; i < v.data.size(); ++i)
            v.data[i] = static_cast<double>(i) * 0.25 - 3.0;
        NamedTensor e = video_tensor_entry("clip", v);
        CHECK(e.shape == std::vector<std::int64_t>{2, 4, 6, 1});
        VideoTensor back = entry_to_video(e);
        CHECK(back.same_shape(v));
        CHECK(back.data == v.data);

        LatentTensor z(2, 3, 3, 4);
        for (std::size_t i = 0; i < z.data.size(); ++i)
            z.data[i] = static_cast<double>(i % 7) * 0.5;
        NamedTensor ze = latent_tensor_entry("lat", z);
        LatentTensor zback = entry_to_latent(ze);
        CHECK(zback.same_shape(z));
        CHECK(zback.data == z.data);

        // A wrongly-ranked entry cannot convert.
        NamedTensor bad;
        bad.name = "nope";
        bad.shape = {2, 2};
        bad.data = {1, 2, 3, 4};
        CHECK_THROWS_AS(entry_to_video(bad), std::invalid_argument);
        CHECK_THROWS_AS(entry_to_latent(bad), std::invalid_argument);
    }

    TEST_CASE("shape/data mismatches refuse to serialize") {
        TempDir tmp;
        Container c;
        c.meta["kind"] = "test";
        NamedTensor t;
        t.name = "broken";
        t.shape = {2, 2};
        t.data = {1.0};  // 1 value for 4 slots
        c.tensors.push_back(t);
        CHECK_THROWS_AS(save_container((tmp.path / "x.tpack").string(), c),
                        std::invalid_argument);
    }
}
