#include "amoc/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "amoc/common.hpp"

namespace amoc {

namespace {

uint64_t fnv1a(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

}  // namespace

Rng Rng::substream(uint64_t root_seed, std::string_view name) {
    return Rng(splitmix64(root_seed ^ fnv1a(name)));
}

double Rng::normal() {
    // u1 in (0,1] so the log is finite.
    double u1 = 1.0 - uniform01();
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
    check_arg(lo <= hi, "uniform_int: empty range");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<int64_t>(eng_());  // full 64-bit range
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t x;
    do {
        x = eng_();
    } while (x >= limit);
    return lo + static_cast<int64_t>(x % span);
}

std::string Rng::state() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
}

void Rng::set_state(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
    if (!is) throw FormatError("Rng::set_state: malformed engine state");
}

}  // namespace amoc
