#include "untangle/worlds.hpp"

#include <cmath>
#include <set>

#include "untangle/rng.hpp"

namespace untangle {

namespace {

constexpr double kPi = 3.14159265358979323846;

// dsprites-lite rasterization constants. Shapes are drawn by point-in-shape
// tests on pixel centers after rotation and scaling; binary coverage, no
// anti-aliasing, so images are exactly {0,1}-valued before any tint.
constexpr double kSideMin = 0.3;   // side length at scale 0, fraction of canvas
constexpr double kSideSpan = 0.4;  // side length grows to 0.7 at max scale
constexpr double kCenterLo = 0.28;
constexpr double kCenterSpan = 0.44;
constexpr double kEllipseAspect = 0.55;
constexpr double kHeartScale = 0.55;

enum Shape { kSquare = 0, kEllipse = 1, kHeart = 2 };

// Rotation periods per shape; orientation value v of cardinality c maps to
// angle period*v/c over [0, period), so every factor value renders distinctly.
constexpr double kShapePeriod[3] = {kPi / 2.0, kPi, 2.0 * kPi};

constexpr double kColorTints[5][3] = {
    {1.0, 1.0, 1.0}, {1.0, 0.25, 0.25}, {0.25, 1.0, 0.25}, {0.25, 0.25, 1.0}, {1.0, 1.0, 0.25},
};

bool point_in_shape(int shape, double ur, double vr, double side) {
    switch (shape) {
        case kSquare: {
            double h = side / 2.0;
            return std::abs(ur) <= h && std::abs(vr) <= h;
        }
        case kEllipse: {
            double a = side / 2.0;
            double b = kEllipseAspect * a;
            double t = (ur / a) * (ur / a) + (vr / b) * (vr / b);
            return t <= 1.0;
        }
        case kHeart: {
            double hx = ur / (kHeartScale * side);
            double hy = -vr / (kHeartScale * side);  // image y grows downward
            double q = hx * hx + hy * hy - 1.0;
            return q * q * q - hx * hx * hy * hy * hy <= 0.0;
        }
        default:
            return false;
    }
}

}  // namespace

FactorSpace::FactorSpace(std::vector<Factor> factors) : factors_(std::move(factors)) {
    if (factors_.size() < 2) throw range_error("factor space needs k >= 2 factors");
    std::set<std::string> names;
    for (const auto& f : factors_) {
        if (f.cardinality < 1)
            throw range_error("factor '" + f.name + "' has cardinality " +
                              std::to_string(f.cardinality));
        if (!names.insert(f.name).second)
            throw range_error("duplicate factor name '" + f.name + "'");
    }
}

int64_t FactorSpace::grid_size(int64_t cap) const {
    long double total = 1.0L;
    int64_t product = 1;
    for (const auto& f : factors_) {
        total *= static_cast<long double>(f.cardinality);
        if (total > static_cast<long double>(cap))
            throw size_error("factor grid has " + std::to_string(static_cast<double>(total)) +
                             " combinations, cap is " + std::to_string(cap));
        product *= f.cardinality;
    }
    return product;
}

void FactorSpace::validate_rows(const FactorMatrix& m) const {
    if (m.cols != num_factors())
        throw shape_error("factor matrix has " + std::to_string(m.cols) + " columns, world has " +
                          std::to_string(num_factors()) + " factors");
    for (int64_t i = 0; i < m.rows; ++i)
        for (int64_t j = 0; j < m.cols; ++j) {
            int64_t v = m.at(i, j);
            if (v < 0 || v >= factors_[static_cast<size_t>(j)].cardinality)
                throw range_error("factor index out of range at row " + std::to_string(i) +
                                  " column " + std::to_string(j) + " (value " + std::to_string(v) +
                                  ")");
        }
}

json WorldConfig::to_json() const {
    json j;
    j["name"] = name;
    j["image_size"] = image_size;
    return j;
}

WorldConfig WorldConfig::from_json(const json& j) {
    require_keys_subset(j, {"name", "image_size"}, "world config");
    WorldConfig cfg;
    cfg.name = require_key(j, "name", "world config").get<std::string>();
    if (j.contains("image_size")) cfg.image_size = j["image_size"].get<int64_t>();
    if (cfg.image_size < 8 || cfg.image_size > 128)
        throw schema_error("world config: image_size " + std::to_string(cfg.image_size) +
                           " outside [8,128]");
    return cfg;
}

FactorWorld::FactorWorld(WorldConfig config, FactorSpace space, int64_t height, int64_t width,
                         int64_t channels, RendererKind kind)
    : config_(std::move(config)),
      space_(std::move(space)),
      height_(height),
      width_(width),
      channels_(channels),
      kind_(kind) {
    if (kind_ == RendererKind::dsprites) {
        int64_t orient_card = space_.factor(2).cardinality;
        cos_table_.resize(static_cast<size_t>(3 * orient_card));
        sin_table_.resize(static_cast<size_t>(3 * orient_card));
        for (int s = 0; s < 3; ++s)
            for (int64_t v = 0; v < orient_card; ++v) {
                double theta = kShapePeriod[s] * static_cast<double>(v) /
                               static_cast<double>(orient_card);
                cos_table_[static_cast<size_t>(s * orient_card + v)] = std::cos(theta);
                sin_table_[static_cast<size_t>(s * orient_card + v)] = std::sin(theta);
            }
    }
    json m = manifest_body();
    manifest_hash_ = fnv1a_hex(m.dump());
}

json FactorWorld::manifest_body() const {
    json j;
    j["world"] = config_.to_json();
    json farr = json::array();
    for (const auto& f : space_.factors()) {
        json fj;
        fj["name"] = f.name;
        fj["cardinality"] = f.cardinality;
        farr.push_back(fj);
    }
    j["factors"] = farr;
    j["image"] = {{"height", height_}, {"width", width_}, {"channels", channels_}};
    return j;
}

json FactorWorld::manifest() const {
    json j = manifest_body();
    j["hash"] = manifest_hash_;
    return j;
}

void FactorWorld::render_row(const int64_t* values, double* out) const {
    if (kind_ == RendererKind::flat) {
        for (int64_t j = 0; j < space_.num_factors(); ++j)
            out[j] = space_.normalized(j, values[j]);
        return;
    }
    int shape = static_cast<int>(values[0]);
    double side = kSideMin + kSideSpan * space_.normalized(1, values[1]);
    int64_t orient_card = space_.factor(2).cardinality;
    double c = cos_table_[static_cast<size_t>(shape * orient_card + values[2])];
    double s = sin_table_[static_cast<size_t>(shape * orient_card + values[2])];
    double cx = kCenterLo + kCenterSpan * space_.normalized(3, values[3]);
    double cy = kCenterLo + kCenterSpan * space_.normalized(4, values[4]);
    const double* tint = nullptr;
    if (channels_ == 3) tint = kColorTints[values[5]];

    for (int64_t py = 0; py < height_; ++py) {
        double yc = (static_cast<double>(py) + 0.5) / static_cast<double>(height_);
        for (int64_t px = 0; px < width_; ++px) {
            double xc = (static_cast<double>(px) + 0.5) / static_cast<double>(width_);
            double dx = xc - cx;
            double dy = yc - cy;
            double ur = dx * c + dy * s;
            double vr = -dx * s + dy * c;
            bool inside = point_in_shape(shape, ur, vr, side);
            double* px_out = out + (py * width_ + px) * channels_;
            if (channels_ == 1) {
                px_out[0] = inside ? 1.0 : 0.0;
            } else {
                for (int64_t ch = 0; ch < 3; ++ch) px_out[ch] = inside ? tint[ch] : 0.0;
            }
        }
    }
}

ObservationBatch FactorWorld::render(const FactorMatrix& factors) const {
    space_.validate_rows(factors);
    ObservationBatch batch(factors.rows, pixels());
    for (int64_t i = 0; i < factors.rows; ++i)
        render_row(factors.row(i).data(), batch.row(i).data());
    return batch;
}

FactorWorld make_world(const WorldConfig& config) {
    std::vector<Factor> factors = {
        {"shape", 3}, {"scale", 6}, {"orientation", 8},
        {"posX", 16}, {"posY", 16},
    };
    int64_t channels = 1;
    if (config.name == "color-dsprites-lite") {
        factors.push_back({"color", 5});
        channels = 3;
    } else if (config.name != "dsprites-lite") {
        throw schema_error("unknown world '" + config.name + "'");
    }
    return FactorWorld(config, FactorSpace(std::move(factors)), config.image_size,
                       config.image_size, channels);
}

FactorWorld make_flat_world(FactorSpace space) {
    int64_t k = space.num_factors();
    WorldConfig cfg;
    cfg.name = "flat";
    cfg.image_size = 0;
    return FactorWorld(cfg, std::move(space), 1, k, 1, RendererKind::flat);
}

FactorWorld world_from_manifest(const json& manifest) {
    const json& w = require_key(manifest, "world", "world manifest");
    FactorWorld world = make_world(WorldConfig::from_json(w));
    if (manifest.contains("hash") && manifest["hash"].get<std::string>() != world.manifest_hash())
        throw schema_error("world manifest hash mismatch (file edited or version skew)");
    return world;
}

FactorMatrix sample_factors(const FactorWorld& world, int64_t n, uint64_t seed) {
    if (n < 1) throw range_error("sample_factors: n must be >= 1");
    const FactorSpace& space = world.space();
    Rng rng(seed, rng_streams::factor_sample);
    FactorMatrix m(n, space.num_factors());
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < space.num_factors(); ++j)
            m.at(i, j) = static_cast<int64_t>(
                rng.below(static_cast<uint64_t>(space.factor(j).cardinality)));
    return m;
}

std::pair<FactorMatrix, int64_t> sample_with_factor_fixed(const FactorWorld& world,
                                                          int64_t fixed_index, int64_t n,
                                                          uint64_t seed) {
    const FactorSpace& space = world.space();
    if (fixed_index < 0 || fixed_index >= space.num_factors())
        throw range_error("fixed factor index " + std::to_string(fixed_index) + " out of range");
    if (n < 1) throw range_error("sample_with_factor_fixed: n must be >= 1");
    Rng rng(seed, rng_streams::factor_fixed);
    int64_t value = static_cast<int64_t>(
        rng.below(static_cast<uint64_t>(space.factor(fixed_index).cardinality)));
    FactorMatrix m(n, space.num_factors());
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < space.num_factors(); ++j)
            m.at(i, j) = j == fixed_index
                             ? value
                             : static_cast<int64_t>(rng.below(
                                   static_cast<uint64_t>(space.factor(j).cardinality)));
    return {std::move(m), value};
}

FactorMatrix enumerate_grid(const FactorWorld& world, int64_t cap) {
    const FactorSpace& space = world.space();
    int64_t total = space.grid_size(cap);
    int64_t k = space.num_factors();
    FactorMatrix m(total, k);
    std::vector<int64_t> strides(static_cast<size_t>(k), 1);
    for (int64_t j = k - 2; j >= 0; --j)
        strides[static_cast<size_t>(j)] =
            strides[static_cast<size_t>(j + 1)] * space.factor(j + 1).cardinality;
    for (int64_t idx = 0; idx < total; ++idx)
        for (int64_t j = 0; j < k; ++j)
            m.at(idx, j) = (idx / strides[static_cast<size_t>(j)]) % space.factor(j).cardinality;
    return m;
}

Tensor normalized_factors(const FactorSpace& space, const FactorMatrix& factors) {
    Tensor t(factors.rows, factors.cols);
    for (int64_t i = 0; i < factors.rows; ++i)
        for (int64_t j = 0; j < factors.cols; ++j)
            t.at(i, j) = space.normalized(j, factors.at(i, j));
    return t;
}

}  // namespace untangle
