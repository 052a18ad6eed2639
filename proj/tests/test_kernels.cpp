#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "untangle/kernels.hpp"
#include "untangle/rng.hpp"

using namespace untangle;
using kernels::Backend;
using kernels::Table;

namespace {

std::vector<double> random_vec(size_t n, Rng& rng, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = scale * rng.normal();
    return v;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

// The AVX2 backend must reproduce the scalar reference bit for bit, over
// shapes that exercise every remainder path.
TEST_CASE("scalar and avx2 backends are bit-identical") {
    if (!kernels::backend_available(Backend::avx2)) {
        MESSAGE("AVX2 not available; equivalence suite skipped");
        return;
    }
    const Table& s = kernels::table(Backend::scalar);
    const Table& v = kernels::table(Backend::avx2);
    Rng rng(2024, 1);

    for (int trial = 0; trial < 60; ++trial) {
        int64_t m = 1 + static_cast<int64_t>(rng.below(13));
        int64_t k = 1 + static_cast<int64_t>(rng.below(67));
        int64_t n = 1 + static_cast<int64_t>(rng.below(67));

        auto a = random_vec(static_cast<size_t>(m * k), rng);
        auto b = random_vec(static_cast<size_t>(k * n), rng);
        std::vector<double> c1(static_cast<size_t>(m * n)), c2(c1);
        s.matmul_nn(a.data(), b.data(), c1.data(), m, k, n);
        v.matmul_nn(a.data(), b.data(), c2.data(), m, k, n);
        REQUIRE(bits_equal(c1, c2));

        auto bt = random_vec(static_cast<size_t>(m * n), rng);
        std::vector<double> t1(static_cast<size_t>(k * n)), t2(t1);
        s.matmul_tn(a.data(), bt.data(), t1.data(), m, k, n);
        v.matmul_tn(a.data(), bt.data(), t2.data(), m, k, n);
        REQUIRE(bits_equal(t1, t2));

        auto a2 = random_vec(static_cast<size_t>(m * n), rng);
        auto b2 = random_vec(static_cast<size_t>(k * n), rng);
        std::vector<double> d1(static_cast<size_t>(m * k)), d2(d1);
        s.matmul_nt(a2.data(), b2.data(), d1.data(), m, n, k);
        v.matmul_nt(a2.data(), b2.data(), d2.data(), m, n, k);
        REQUIRE(bits_equal(d1, d2));
    }

    for (int trial = 0; trial < 40; ++trial) {
        int64_t n = 1 + static_cast<int64_t>(rng.below(130));
        auto x = random_vec(static_cast<size_t>(n), rng);
        auto y = random_vec(static_cast<size_t>(n), rng);
        std::vector<double> o1(static_cast<size_t>(n)), o2(static_cast<size_t>(n));

        s.add(x.data(), y.data(), o1.data(), n);
        v.add(x.data(), y.data(), o2.data(), n);
        REQUIRE(bits_equal(o1, o2));
        s.sub(x.data(), y.data(), o1.data(), n);
        v.sub(x.data(), y.data(), o2.data(), n);
        REQUIRE(bits_equal(o1, o2));
        s.mul(x.data(), y.data(), o1.data(), n);
        v.mul(x.data(), y.data(), o2.data(), n);
        REQUIRE(bits_equal(o1, o2));
        s.scale(1.7, x.data(), o1.data(), n);
        v.scale(1.7, x.data(), o2.data(), n);
        REQUIRE(bits_equal(o1, o2));

        auto y1 = y, y2 = y;
        s.axpy(-0.3, x.data(), y1.data(), n);
        v.axpy(-0.3, x.data(), y2.data(), n);
        REQUIRE(bits_equal(y1, y2));

        s.relu_fwd(x.data(), o1.data(), n);
        v.relu_fwd(x.data(), o2.data(), n);
        REQUIRE(bits_equal(o1, o2));

        auto dx1 = random_vec(static_cast<size_t>(n), rng);
        auto dx2 = dx1;
        s.relu_bwd(x.data(), y.data(), dx1.data(), n);
        v.relu_bwd(x.data(), y.data(), dx2.data(), n);
        REQUIRE(bits_equal(dx1, dx2));

        REQUIRE(s.reduce_sum(x.data(), n) == v.reduce_sum(x.data(), n));

        auto p1 = random_vec(static_cast<size_t>(n), rng);
        auto p2 = p1;
        auto m1 = random_vec(static_cast<size_t>(n), rng, 0.1);
        auto m2 = m1;
        auto v1 = random_vec(static_cast<size_t>(n), rng, 0.1);
        for (auto& e : v1) e = std::abs(e);
        auto v2 = v1;
        auto g = random_vec(static_cast<size_t>(n), rng);
        s.adam_update(p1.data(), m1.data(), v1.data(), g.data(), n, 1e-3, 0.9, 0.999, 1e-8);
        v.adam_update(p2.data(), m2.data(), v2.data(), g.data(), n, 1e-3, 0.9, 0.999, 1e-8);
        REQUIRE(bits_equal(p1, p2));
        REQUIRE(bits_equal(m1, m2));
        REQUIRE(bits_equal(v1, v2));
    }
}

TEST_CASE("matmul variants match a naive triple loop") {
    Rng rng(7, 2);
    const Table& k = kernels::active();
    for (int trial = 0; trial < 20; ++trial) {
        int64_t m = 1 + static_cast<int64_t>(rng.below(9));
        int64_t kk = 1 + static_cast<int64_t>(rng.below(17));
        int64_t n = 1 + static_cast<int64_t>(rng.below(9));
        auto a = random_vec(static_cast<size_t>(m * kk), rng);
        auto b = random_vec(static_cast<size_t>(kk * n), rng);
        std::vector<double> c(static_cast<size_t>(m * n));
        k.matmul_nn(a.data(), b.data(), c.data(), m, kk, n);
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) {
                double want = 0.0;
                for (int64_t p = 0; p < kk; ++p) want += a[static_cast<size_t>(i * kk + p)] *
                                                         b[static_cast<size_t>(p * n + j)];
                REQUIRE(c[static_cast<size_t>(i * n + j)] ==
                        doctest::Approx(want).epsilon(1e-12));
            }

        // C[k x n] = A^T B
        std::vector<double> bt = random_vec(static_cast<size_t>(m * n), rng);
        std::vector<double> t(static_cast<size_t>(kk * n));
        k.matmul_tn(a.data(), bt.data(), t.data(), m, kk, n);
        for (int64_t p = 0; p < kk; ++p)
            for (int64_t j = 0; j < n; ++j) {
                double want = 0.0;
                for (int64_t i = 0; i < m; ++i) want += a[static_cast<size_t>(i * kk + p)] *
                                                        bt[static_cast<size_t>(i * n + j)];
                REQUIRE(t[static_cast<size_t>(p * n + j)] ==
                        doctest::Approx(want).epsilon(1e-12));
            }

        // C[m x k] = A B^T with A [m x n], B [k x n]
        auto a2 = random_vec(static_cast<size_t>(m * n), rng);
        auto b2 = random_vec(static_cast<size_t>(kk * n), rng);
        std::vector<double> d(static_cast<size_t>(m * kk));
        k.matmul_nt(a2.data(), b2.data(), d.data(), m, n, kk);
        for (int64_t i = 0; i < m; ++i)
            for (int64_t p = 0; p < kk; ++p) {
                double want = 0.0;
                for (int64_t j = 0; j < n; ++j) want += a2[static_cast<size_t>(i * n + j)] *
                                                        b2[static_cast<size_t>(p * n + j)];
                REQUIRE(d[static_cast<size_t>(i * kk + p)] ==
                        doctest::Approx(want).epsilon(1e-12));
            }
    }
}

TEST_CASE("adam: zero gradient leaves fresh parameters unchanged") {
    const Table& k = kernels::active();
    std::vector<double> p{1.0, -2.0, 3.0}, m(3, 0.0), v(3, 0.0), g(3, 0.0);
    auto p0 = p;
    k.adam_update(p.data(), m.data(), v.data(), g.data(), 3, 1e-3, 0.9, 0.999, 1e-8);
    CHECK(p == p0);
}

TEST_CASE("adam: constant gradient moves parameter by about lr per step") {
    // scalar simulation oracle: with a constant gradient the bias-corrected
    // step approaches lr * sign(g)
    const Table& k = kernels::active();
    double lr = 1e-2;
    std::vector<double> p{0.0}, m{0.0}, v{0.0}, g{2.5};
    double prev = p[0];
    for (int64_t t = 1; t <= 200; ++t) {
        double corr = std::sqrt(1.0 - std::pow(0.999, t)) / (1.0 - std::pow(0.9, t));
        k.adam_update(p.data(), m.data(), v.data(), g.data(), 1, lr * corr, 0.9, 0.999, 1e-8);
        if (t > 50) {
            double step = prev - p[0];
            CHECK(step > 0.0);  // moves against the gradient sign
            CHECK(std::abs(step - lr) < 0.1 * lr);
        }
        prev = p[0];
    }
}

TEST_CASE("unknown backend requests fail loudly") {
    CHECK_THROWS_AS(kernels::table(static_cast<Backend>(99)), ValidationError);
}
