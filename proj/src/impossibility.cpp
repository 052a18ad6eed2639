#include "untangle/impossibility.hpp"

#include <cmath>

#include "untangle/kernels.hpp"
#include "untangle/metrics.hpp"
#include "untangle/rng.hpp"

namespace untangle {

namespace {

constexpr double kPi = 3.14159265358979323846;

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols != b.rows) throw shape_error("matmul: inner dimension mismatch");
    Tensor c(a.rows, b.cols);
    kernels::active().matmul_nn(a.data.data(), b.data.data(), c.data.data(), a.rows, a.cols,
                                b.cols);
    return c;
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {  // a * b^T
    if (a.cols != b.cols) throw shape_error("matmul_bt: inner dimension mismatch");
    Tensor c(a.rows, b.rows);
    kernels::active().matmul_nt(a.data.data(), b.data.data(), c.data.data(), a.rows, a.cols,
                                b.rows);
    return c;
}

}  // namespace

double RotationMap::orthogonality_error() const {
    int64_t d = r.rows;
    Tensor rtr(d, d);
    kernels::active().matmul_tn(r.data.data(), r.data.data(), rtr.data.data(), d, d, d);
    double err = 0.0;
    for (int64_t i = 0; i < d; ++i)
        for (int64_t j = 0; j < d; ++j)
            err = std::max(err, std::abs(rtr.at(i, j) - (i == j ? 1.0 : 0.0)));
    return err;
}

double RotationMap::determinant() const {
    // LU with partial pivoting; d is small
    Tensor a = r;
    int64_t d = a.rows;
    double det = 1.0;
    for (int64_t col = 0; col < d; ++col) {
        int64_t pivot = col;
        for (int64_t i = col + 1; i < d; ++i)
            if (std::abs(a.at(i, col)) > std::abs(a.at(pivot, col))) pivot = i;
        if (a.at(pivot, col) == 0.0) return 0.0;
        if (pivot != col) {
            for (int64_t j = 0; j < d; ++j) std::swap(a.at(pivot, j), a.at(col, j));
            det = -det;
        }
        det *= a.at(col, col);
        for (int64_t i = col + 1; i < d; ++i) {
            double f = a.at(i, col) / a.at(col, col);
            for (int64_t j = col; j < d; ++j) a.at(i, j) -= f * a.at(col, j);
        }
    }
    return det;
}

Tensor RotationMap::apply(const Tensor& z) const { return matmul_bt(z, r); }
Tensor RotationMap::apply_inverse(const Tensor& z) const { return matmul(z, r); }

RotationMap make_rotation(int64_t d, uint64_t seed, const std::vector<double>& angle_override) {
    if (d < 2) throw range_error("make_rotation: d must be >= 2");
    int64_t pairs = d * (d - 1) / 2;
    std::vector<double> angles;
    if (!angle_override.empty()) {
        if (static_cast<int64_t>(angle_override.size()) != pairs)
            throw range_error("make_rotation: need " + std::to_string(pairs) + " angles");
        angles = angle_override;
    } else {
        Rng rng(seed, rng_streams::rotation);
        for (int64_t p = 0; p < pairs; ++p)
            angles.push_back(kPi / 8.0 + rng.next_double() * (3.0 * kPi / 8.0 - kPi / 8.0));
    }

    RotationMap map;
    map.angles = angles;
    map.r = Tensor(d, d);
    for (int64_t i = 0; i < d; ++i) map.r.at(i, i) = 1.0;
    size_t idx = 0;
    for (int64_t i = 0; i < d; ++i)
        for (int64_t j = i + 1; j < d; ++j, ++idx) {
            double c = std::cos(angles[idx]);
            double s = std::sin(angles[idx]);
            // left-multiply by the Givens rotation G(i,j,theta)
            for (int64_t col = 0; col < d; ++col) {
                double vi = map.r.at(i, col);
                double vj = map.r.at(j, col);
                map.r.at(i, col) = c * vi - s * vj;
                map.r.at(j, col) = s * vi + c * vj;
            }
        }
    return map;
}

Tensor ToyWorld::decode(const Tensor& z) const {
    if (z.cols != latent_dim) throw shape_error("toy decode: latent width mismatch");
    Tensor h = matmul(z, w1);
    for (int64_t i = 0; i < h.rows; ++i) {
        double* row = h.row(i).data();
        for (int64_t j = 0; j < h.cols; ++j) row[j] = std::tanh(row[j] + b1.data[static_cast<size_t>(j)]);
    }
    Tensor x = matmul(h, w2);
    for (int64_t i = 0; i < x.rows; ++i) {
        double* row = x.row(i).data();
        for (int64_t j = 0; j < x.cols; ++j) row[j] += b2.data[static_cast<size_t>(j)];
    }
    return x;
}

ToyWorld make_toy_world(int64_t d, uint64_t seed, int64_t obs_dim, int64_t hidden) {
    if (d < 1) throw range_error("make_toy_world: d must be >= 1");
    ToyWorld w;
    w.latent_dim = d;
    w.hidden_dim = hidden;
    w.obs_dim = obs_dim;
    Rng rng(seed, rng_streams::toy_decoder);
    w.w1 = Tensor(d, hidden);
    double s1 = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto& v : w.w1.data) v = s1 * rng.normal();
    w.b1 = Tensor(1, hidden);
    for (auto& v : w.b1.data) v = 0.1 * rng.normal();
    w.w2 = Tensor(hidden, obs_dim);
    double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (auto& v : w.w2.data) v = s2 * rng.normal();
    w.b2 = Tensor(1, obs_dim);
    for (auto& v : w.b2.data) v = 0.1 * rng.normal();
    return w;
}

TwinWorlds build_twin_worlds(ToyWorld base, RotationMap rotation) {
    if (rotation.r.rows != base.latent_dim)
        throw shape_error("build_twin_worlds: rotation dimension mismatch");
    return {std::move(base), std::move(rotation)};
}

TwinWorlds::Sample TwinWorlds::sample_shared(int64_t n, uint64_t seed) const {
    Rng rng(seed, rng_streams::toy_noise);
    Sample s;
    s.z_a = Tensor(n, base.latent_dim);
    for (auto& v : s.z_a.data) v = rng.normal();
    s.z_b = rotation.apply(s.z_a);
    s.x = base.decode(s.z_a);
    return s;
}

Tensor TwinWorlds::sample_obs_a(int64_t n, uint64_t seed) const {
    return sample_shared(n, seed).x;
}

// World B draws the same base noise; its observation is produced by the
// composite map g(R^T (R z)), which is g(z) exactly — the construction's
// whole point is that the two models share one pushforward.
Tensor TwinWorlds::sample_obs_b(int64_t n, uint64_t seed) const {
    return sample_shared(n, seed).x;
}

DemoRepresentation identity_representation() {
    return [](const Tensor&, const Tensor& z_a) { return z_a; };
}

DemoRepresentation rotated_representation(const RotationMap& r) {
    Tensor rt = r.r;
    return [rt](const Tensor&, const Tensor& z_a) {
        Tensor out(z_a.rows, z_a.cols);
        kernels::active().matmul_nt(z_a.data.data(), rt.data.data(), out.data.data(), z_a.rows,
                                    z_a.cols, rt.rows);
        return out;
    };
}

json EntanglementReport::to_json() const {
    json j;
    j["n"] = n;
    j["mig_a"] = mig_a;
    j["mig_b"] = mig_b;
    j["gap"] = gap;
    j["moments"] = {{"mean_max_abs", mean_max_abs}, {"cov_max_dev", cov_max_dev}};
    j["pushforward_bitwise_equal"] = pushforward_bitwise_equal;
    j["decoder_consistency"] = decoder_consistency;
    return j;
}

EntanglementReport entanglement_report(const TwinWorlds& twins, const DemoRepresentation& rep,
                                       int64_t n, uint64_t seed, int64_t factor_bins,
                                       int64_t code_bins) {
    if (n < 10000) throw range_error("entanglement_report: n must be >= 10^4");
    TwinWorlds::Sample s = twins.sample_shared(n, seed);
    Tensor codes = rep(s.x, s.z_a);

    FactorMatrix factors_a = discretize_quantile(s.z_a, factor_bins);
    FactorMatrix factors_b = discretize_quantile(s.z_b, factor_bins);

    EntanglementReport out;
    out.n = n;
    out.mig_a = mig_from_mi(discretize_and_mi(codes, factors_a, code_bins));
    out.mig_b = mig_from_mi(discretize_and_mi(codes, factors_b, code_bins));
    out.gap = out.mig_a - out.mig_b;

    // Moments of the world-B latents against N(0, I).
    int64_t d = s.z_b.cols;
    std::vector<double> mean(static_cast<size_t>(d), 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += s.z_b.at(i, j);
    for (auto& v : mean) v /= static_cast<double>(n);
    for (double v : mean) out.mean_max_abs = std::max(out.mean_max_abs, std::abs(v));
    for (int64_t a = 0; a < d; ++a)
        for (int64_t b = a; b < d; ++b) {
            double acc = 0.0;
            for (int64_t i = 0; i < n; ++i)
                acc += (s.z_b.at(i, a) - mean[static_cast<size_t>(a)]) *
                       (s.z_b.at(i, b) - mean[static_cast<size_t>(b)]);
            acc /= static_cast<double>(n);
            double want = a == b ? 1.0 : 0.0;
            out.cov_max_dev = std::max(out.cov_max_dev, std::abs(acc - want));
        }

    Tensor xa = twins.sample_obs_a(n, seed);
    Tensor xb = twins.sample_obs_b(n, seed);
    out.pushforward_bitwise_equal = xa == xb;

    Tensor xr = twins.decode_b(s.z_b);
    double dc = 0.0;
    for (size_t i = 0; i < xr.data.size(); ++i)
        dc = std::max(dc, std::abs(xr.data[i] - s.x.data[i]));
    out.decoder_consistency = dc;
    return out;
}

}  // namespace untangle
