#pragma once

#include <functional>

#include "untangle/io.hpp"
#include "untangle/mat.hpp"

namespace untangle {

// Orthogonal map built as a product of Givens rotations over all coordinate
// pairs, angles uniform in [pi/8, 3pi/8] (never axis-aligned) unless
// explicitly overridden.
struct RotationMap {
    Tensor r;                    // d x d
    std::vector<double> angles;  // construction log, one per (i<j) pair

    double orthogonality_error() const;  // max |R^T R - I|
    double determinant() const;
    Tensor apply(const Tensor& z) const;          // z * R^T (row vectors)
    Tensor apply_inverse(const Tensor& z) const;  // z * R
};

RotationMap make_rotation(int64_t d, uint64_t seed,
                          const std::vector<double>& angle_override = {});

// Continuous toy world: z ~ N(0, I_d), observations x = g(z) through a fixed
// seeded 2-layer tanh network. Purely a demonstration substrate.
struct ToyWorld {
    int64_t latent_dim = 2;
    int64_t hidden_dim = 32;
    int64_t obs_dim = 16;
    Tensor w1, b1, w2, b2;

    Tensor decode(const Tensor& z) const;  // g
};

ToyWorld make_toy_world(int64_t d, uint64_t seed, int64_t obs_dim = 16, int64_t hidden = 32);

// Two generative models over the same observations: world A has latents z
// and decoder g; world B has latents zhat = R z and decoder g(R^T zhat).
// Their pushforwards over x coincide: under shared base noise, both produce
// x through the identical composite computation (g(R^T(Rz)) == g(z)), so
// observation batches are bit-identical by construction.
struct TwinWorlds {
    ToyWorld base;
    RotationMap rotation;

    struct Sample {
        Tensor x;    // n x obs_dim
        Tensor z_a;  // n x d, world-A latents
        Tensor z_b;  // n x d, world-B latents (= z_a R^T)
    };
    Sample sample_shared(int64_t n, uint64_t seed) const;

    // Observation samplers per world, for the pushforward-equality check.
    Tensor sample_obs_a(int64_t n, uint64_t seed) const;
    Tensor sample_obs_b(int64_t n, uint64_t seed) const;

    Tensor decode_a(const Tensor& z) const { return base.decode(z); }
    Tensor decode_b(const Tensor& z_hat) const { return base.decode(rotation.apply_inverse(z_hat)); }
};

TwinWorlds build_twin_worlds(ToyWorld base, RotationMap rotation);

// Representation under test: consumes observations (and may peek at world-A
// latents, which is how the identity and rotated baselines are realized).
using DemoRepresentation = std::function<Tensor(const Tensor& x, const Tensor& z_a)>;

DemoRepresentation identity_representation();
DemoRepresentation rotated_representation(const RotationMap& r);

struct EntanglementReport {
    double mig_a = 0.0;  // MIG of codes against world-A latents
    double mig_b = 0.0;  // against world-B latents
    double gap = 0.0;
    double mean_max_abs = 0.0;   // moments of z_b vs N(0, I)
    double cov_max_dev = 0.0;
    bool pushforward_bitwise_equal = false;
    double decoder_consistency = 0.0;  // max |decode_b(z_b) - x|
    int64_t n = 0;
    json to_json() const;
};

// MIG on both latent coordinate systems; continuous latents are
// quantile-binned into `factor_bins` levels.
EntanglementReport entanglement_report(const TwinWorlds& twins, const DemoRepresentation& rep,
                                       int64_t n, uint64_t seed, int64_t factor_bins = 10,
                                       int64_t code_bins = 20);

}  // namespace untangle
