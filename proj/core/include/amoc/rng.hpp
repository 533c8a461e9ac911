#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace amoc {

// Deterministic random stream. All stochastic choices in the project flow
// from one root seed through named substreams, so runs are reproducible and
// individual components (augmentation, attack starts, init) can be replayed
// in isolation.
//
// Distributions are hand-rolled on top of mt19937_64 because the standard
// distribution classes are implementation-defined; this keeps bit-identical
// behaviour across compilers.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    // Derives an independent stream from (seed, name).
    static Rng substream(uint64_t root_seed, std::string_view name);

    uint64_t next_u64() { return eng_(); }

    // Uniform in [0,1) with 53 bits of mantissa.
    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal via Box-Muller. No cached spare: each call consumes two
    // uniforms, which keeps the engine state the full description of the
    // stream (needed for checkpoint resume).
    double normal();

    // Uniform integer in [lo, hi], rejection-sampled to avoid modulo bias.
    int64_t uniform_int(int64_t lo, int64_t hi);

    // Engine state as text, for embedding in checkpoint headers.
    std::string state() const;
    void set_state(const std::string& s);

private:
    std::mt19937_64 eng_;
};

}  // namespace amoc
