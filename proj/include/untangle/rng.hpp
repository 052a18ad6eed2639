#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace untangle {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
//
// Every random draw in the toolkit comes from an Rng constructed as
// Rng(seed, stream): the 64-bit seed is the key, the 64-bit stream id
// occupies the high counter words, and the block counter occupies the low
// words. Disjoint streams are independent by construction, which is what
// makes sampling reproducible from (seed, stream-id) alone. Stream ids used
// by each subsystem are listed in rng_streams below.
class Rng {
public:
    Rng(uint64_t seed, uint64_t stream);

    uint32_t next_u32();
    uint64_t next_u64();

    // Uniform in [0,1) with 53 random bits.
    double next_double();

    // Uniform integer in [0, bound); bound >= 1. Rejection sampling, unbiased.
    uint64_t below(uint64_t bound);

    // Standard normal via Box-Muller (second value cached).
    double normal();

    std::vector<double> normal_vec(size_t n);

    // In-place Fisher-Yates.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    void refill();

    std::array<uint32_t, 2> key_;
    std::array<uint32_t, 4> counter_;
    std::array<uint32_t, 4> block_;
    int block_pos_;
    bool has_spare_normal_ = false;
    double spare_normal_ = 0.0;
};

// Raw Philox4x32-10 block function, exposed for the known-answer tests.
std::array<uint32_t, 4> philox4x32_10(const std::array<uint32_t, 4>& counter,
                                      const std::array<uint32_t, 2>& key);

// Stream-id registry. Streams are plain constants; subsystems that need a
// family of streams add an offset or pack indices into the high bits.
namespace rng_streams {
constexpr uint64_t factor_sample = 1;
constexpr uint64_t factor_fixed = 2;
constexpr uint64_t param_init = 3;
constexpr uint64_t train_batch = 4;
constexpr uint64_t train_noise = 5;
constexpr uint64_t disc_init = 6;
constexpr uint64_t disc_perm = 7;
constexpr uint64_t metric_eval = 8;
constexpr uint64_t forest_base = 1000;     // + factor * 64 + tree
constexpr uint64_t rotation = 20;
constexpr uint64_t toy_decoder = 21;
constexpr uint64_t toy_noise = 22;
constexpr uint64_t transfer_mc = 23;
}  // namespace rng_streams

}  // namespace untangle
