#include "cascadeflow/rng.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace cascadeflow {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
constexpr double kTwoPi = 6.283185307179586476925286766559;
}  // namespace

std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
}

Rng::Rng(std::uint64_t seed) : state_(seed) {}

std::uint64_t Rng::next_u64() {
    state_ += kGolden;
    return mix64(state_);
}

double Rng::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("uniform: lo > hi");
    return lo + (hi - lo) * uniform01();
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw std::invalid_argument("uniform_int: lo > hi");
    std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<std::int64_t>(next_u64());  // full 64-bit range
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return lo + static_cast<std::int64_t>(v % range);
}

double Rng::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    // u1 in (0, 1] so the log is finite.
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    cached_normal_ = r * std::sin(kTwoPi * u2);
    has_cached_normal_ = true;
    return r * std::cos(kTwoPi * u2);
}

bool Rng::bernoulli(double p) { return uniform01() < p; }

Rng Rng::stream(std::uint64_t id) const {
    return Rng(mix64(state_ ^ (kGolden * (id + 1))));
}

std::string Rng::state_str() const {
    char buf[64];
    std::uint64_t cached_bits;
    static_assert(sizeof(double) == sizeof(std::uint64_t));
    __builtin_memcpy(&cached_bits, &cached_normal_, sizeof(double));
    std::snprintf(buf, sizeof(buf), "%016llx:%016llx:%d",
                  static_cast<unsigned long long>(state_),
                  static_cast<unsigned long long>(cached_bits),
                  has_cached_normal_ ? 1 : 0);
    return buf;
}

Rng Rng::from_state_str(const std::string& s) {
    unsigned long long st = 0, cb = 0;
    int flag = 0;
    if (std::sscanf(s.c_str(), "%llx:%llx:%d", &st, &cb, &flag) != 3)
        throw std::invalid_argument("malformed rng state string: " + s);
    Rng r(0);
    r.state_ = st;
    std::uint64_t bits = cb;
    __builtin_memcpy(&r.cached_normal_, &bits, sizeof(double));
    r.has_cached_normal_ = (flag != 0);
    return r;
}

}  // namespace cascadeflow
