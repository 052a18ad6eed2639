#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "untangle/io.hpp"
#include "untangle/mat.hpp"

namespace untangle {

struct Factor {
    std::string name;
    int64_t cardinality = 0;
};

// Ordered list of ground-truth factors. Factor j takes integer values in
// [0, cardinality_j); value v maps to the normalized real v/(cardinality-1),
// with cardinality 1 mapping to 0.
class FactorSpace {
public:
    explicit FactorSpace(std::vector<Factor> factors);

    int64_t num_factors() const { return static_cast<int64_t>(factors_.size()); }
    const Factor& factor(int64_t j) const { return factors_[static_cast<size_t>(j)]; }
    const std::vector<Factor>& factors() const { return factors_; }

    double normalized(int64_t j, int64_t value) const {
        int64_t card = factors_[static_cast<size_t>(j)].cardinality;
        return card <= 1 ? 0.0 : static_cast<double>(value) / static_cast<double>(card - 1);
    }

    // Product of cardinalities; throws size_error above `cap`.
    int64_t grid_size(int64_t cap) const;

    void validate_rows(const FactorMatrix& m) const;

private:
    std::vector<Factor> factors_;
};

struct WorldConfig {
    std::string name = "dsprites-lite";  // or "color-dsprites-lite"
    int64_t image_size = 16;             // height = width; 16 or 64

    json to_json() const;
    static WorldConfig from_json(const json& j);
};

enum class RendererKind { dsprites, flat };

// Ground-truth generative world: a uniform factorized prior over the factor
// grid plus a pure deterministic renderer (same factors -> identical pixels).
class FactorWorld {
public:
    FactorWorld(WorldConfig config, FactorSpace space, int64_t height, int64_t width,
                int64_t channels, RendererKind kind = RendererKind::dsprites);

    const FactorSpace& space() const { return space_; }
    const WorldConfig& config() const { return config_; }
    int64_t height() const { return height_; }
    int64_t width() const { return width_; }
    int64_t channels() const { return channels_; }
    int64_t pixels() const { return height_ * width_ * channels_; }
    const std::string& manifest_hash() const { return manifest_hash_; }

    ObservationBatch render(const FactorMatrix& factors) const;

    json manifest() const;

private:
    void render_row(const int64_t* values, double* out) const;
    json manifest_body() const;

    WorldConfig config_;
    FactorSpace space_;
    int64_t height_, width_, channels_;
    RendererKind kind_;
    std::string manifest_hash_;
    // per-(shape, orientation-index) rotation table, precomputed for bit-stable trig
    std::vector<double> cos_table_, sin_table_;
};

FactorWorld make_world(const WorldConfig& config);
FactorWorld world_from_manifest(const json& manifest);

// World over an arbitrary factor space whose "image" is just the row of
// normalized factor values (1 x k x 1). Estimator tests and representation
// baselines use it where the shape geometry is irrelevant.
FactorWorld make_flat_world(FactorSpace space);

FactorMatrix sample_factors(const FactorWorld& world, int64_t n, uint64_t seed);

// One uniformly drawn value for `fixed_index`, shared by all rows; all other
// columns i.i.d. uniform. Returns the matrix and the fixed value.
std::pair<FactorMatrix, int64_t> sample_with_factor_fixed(const FactorWorld& world,
                                                          int64_t fixed_index, int64_t n,
                                                          uint64_t seed);

constexpr int64_t kDefaultGridCap = 1000000;

// Full Cartesian product, row-major in factor order (last factor fastest).
FactorMatrix enumerate_grid(const FactorWorld& world, int64_t cap = kDefaultGridCap);

// Normalized factor values as a Tensor (the "exact factors" representation).
Tensor normalized_factors(const FactorSpace& space, const FactorMatrix& factors);

}  // namespace untangle
