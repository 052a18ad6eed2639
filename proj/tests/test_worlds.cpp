#include <doctest.h>

#include <cmath>
#include <set>

#include "untangle/worlds.hpp"

using namespace untangle;

namespace {

// Plug-in MI between two integer columns, for the factorized-prior check.
double column_mi(const FactorMatrix& m, int64_t a, int64_t b, int64_t card_a, int64_t card_b) {
    std::vector<int64_t> ca(static_cast<size_t>(card_a), 0), cb(static_cast<size_t>(card_b), 0);
    std::vector<int64_t> joint(static_cast<size_t>(card_a * card_b), 0);
    for (int64_t i = 0; i < m.rows; ++i) {
        ++ca[static_cast<size_t>(m.at(i, a))];
        ++cb[static_cast<size_t>(m.at(i, b))];
        ++joint[static_cast<size_t>(m.at(i, a) * card_b + m.at(i, b))];
    }
    double n = static_cast<double>(m.rows), mi = 0.0;
    for (int64_t x = 0; x < card_a; ++x)
        for (int64_t y = 0; y < card_b; ++y) {
            int64_t c = joint[static_cast<size_t>(x * card_b + y)];
            if (c == 0) continue;
            double pxy = c / n;
            mi += pxy * std::log(pxy / ((ca[static_cast<size_t>(x)] / n) *
                                        (cb[static_cast<size_t>(y)] / n)));
        }
    return mi;
}

}  // namespace

TEST_CASE("factor space invariants") {
    CHECK_THROWS_AS(FactorSpace({{"only", 3}}), ValidationError);            // k >= 2
    CHECK_THROWS_AS(FactorSpace({{"a", 3}, {"b", 0}}), ValidationError);     // cardinality >= 1
    CHECK_THROWS_AS(FactorSpace({{"a", 3}, {"a", 3}}), ValidationError);     // unique names
    FactorSpace s({{"a", 1}, {"b", 5}});
    CHECK(s.normalized(0, 0) == 0.0);  // cardinality 1 maps to 0
    CHECK(s.normalized(1, 4) == 1.0);
    CHECK(s.normalized(1, 2) == 0.5);
}

TEST_CASE("sample_factors: degenerate single-value factors") {
    FactorWorld w = make_flat_world(FactorSpace({{"a", 1}, {"b", 1}, {"c", 1}}));
    FactorMatrix m = sample_factors(w, 5, 123);
    REQUIRE(m.rows == 5);
    for (int64_t v : m.data) CHECK(v == 0);
}

TEST_CASE("sample_factors: deterministic and uniform") {
    FactorWorld w = make_flat_world(FactorSpace({{"a", 3}, {"b", 6}}));
    FactorMatrix m1 = sample_factors(w, 100000, 7);
    FactorMatrix m2 = sample_factors(w, 100000, 7);
    CHECK(m1 == m2);

    // per-column frequencies within 3 sigma of uniform
    for (int64_t j = 0; j < 2; ++j) {
        int64_t card = w.space().factor(j).cardinality;
        std::vector<int64_t> counts(static_cast<size_t>(card), 0);
        for (int64_t i = 0; i < m1.rows; ++i) ++counts[static_cast<size_t>(m1.at(i, j))];
        double p = 1.0 / static_cast<double>(card);
        double expect = p * static_cast<double>(m1.rows);
        double sigma = std::sqrt(static_cast<double>(m1.rows) * p * (1.0 - p));
        for (int64_t c : counts) CHECK(std::abs(static_cast<double>(c) - expect) < 3.0 * sigma);
    }
}

TEST_CASE("factorized prior: near-zero pairwise MI at N=1e5") {
    WorldConfig cfg;
    FactorWorld w = make_world(cfg);  // dsprites-lite defaults
    FactorMatrix m = sample_factors(w, 100000, 11);
    for (int64_t a = 0; a < m.cols; ++a)
        for (int64_t b = a + 1; b < m.cols; ++b) {
            double mi = column_mi(m, a, b, w.space().factor(a).cardinality,
                                  w.space().factor(b).cardinality);
            CHECK(mi < 0.01);
        }
}

TEST_CASE("sample_with_factor_fixed") {
    FactorWorld w = make_flat_world(FactorSpace({{"a", 4}, {"b", 7}}));
    auto [m, value] = sample_with_factor_fixed(w, 0, 50000, 3);
    for (int64_t i = 0; i < m.rows; ++i) CHECK(m.at(i, 0) == value);

    // non-fixed column passes the same uniformity check
    std::vector<int64_t> counts(7, 0);
    for (int64_t i = 0; i < m.rows; ++i) ++counts[static_cast<size_t>(m.at(i, 1))];
    double p = 1.0 / 7.0;
    double expect = p * static_cast<double>(m.rows);
    double sigma = std::sqrt(static_cast<double>(m.rows) * p * (1.0 - p));
    for (int64_t c : counts) CHECK(std::abs(static_cast<double>(c) - expect) < 3.0 * sigma);

    // fixing a cardinality-1 factor is allowed and pins the column to 0
    FactorWorld w1 = make_flat_world(FactorSpace({{"a", 1}, {"b", 3}}));
    auto [m1, v1] = sample_with_factor_fixed(w1, 0, 10, 5);
    CHECK(v1 == 0);
    for (int64_t i = 0; i < 10; ++i) CHECK(m1.at(i, 0) == 0);

    CHECK_THROWS_AS(sample_with_factor_fixed(w, 2, 10, 0), ValidationError);
    CHECK_THROWS_AS(sample_with_factor_fixed(w, -1, 10, 0), ValidationError);
}

TEST_CASE("enumerate_grid: row-major order, exact cover, cap") {
    FactorWorld w = make_flat_world(FactorSpace({{"a", 2}, {"b", 3}}));
    FactorMatrix g = enumerate_grid(w);
    REQUIRE(g.rows == 6);
    std::vector<std::pair<int64_t, int64_t>> want = {{0, 0}, {0, 1}, {0, 2},
                                                     {1, 0}, {1, 1}, {1, 2}};
    for (int64_t i = 0; i < 6; ++i) {
        CHECK(g.at(i, 0) == want[static_cast<size_t>(i)].first);
        CHECK(g.at(i, 1) == want[static_cast<size_t>(i)].second);
    }

    // each combination exactly once on a bigger space
    FactorWorld w2 = make_flat_world(FactorSpace({{"a", 4}, {"b", 5}, {"c", 3}}));
    FactorMatrix g2 = enumerate_grid(w2);
    REQUIRE(g2.rows == 60);
    std::set<std::vector<int64_t>> seen;
    for (int64_t i = 0; i < g2.rows; ++i)
        seen.insert({g2.at(i, 0), g2.at(i, 1), g2.at(i, 2)});
    CHECK(seen.size() == 60);

    FactorWorld big = make_flat_world(FactorSpace(
        {{"a", 10}, {"b", 10}, {"c", 10}, {"d", 10}, {"e", 10}, {"f", 10}, {"g", 10}}));
    CHECK_THROWS_AS(enumerate_grid(big), ValidationError);  // 10^7 > cap
}

TEST_CASE("dsprites-lite render: centered max square is a filled block") {
    WorldConfig cfg;  // 16x16 grayscale
    FactorWorld w = make_world(cfg);
    // shape=square, scale=max, orientation=0, posX=8, posY=8
    FactorMatrix f(1, 5, {0, 5, 0, 8, 8});
    ObservationBatch img = w.render(f);
    REQUIRE(img.cols == 256);

    // independent rasterization straight from the documented geometry
    double side = 0.3 + 0.4 * 1.0;
    double cx = 0.28 + 0.44 * (8.0 / 15.0);
    double cy = cx;
    int64_t fg = 0;
    for (int64_t py = 0; py < 16; ++py)
        for (int64_t px = 0; px < 16; ++px) {
            double xc = (px + 0.5) / 16.0, yc = (py + 0.5) / 16.0;
            bool inside =
                std::abs(xc - cx) <= side / 2.0 && std::abs(yc - cy) <= side / 2.0;
            CHECK(img.at(0, py * 16 + px) == (inside ? 1.0 : 0.0));
            if (inside) ++fg;
        }
    // hand-derived: pixel centers 3..13 fall inside on both axes
    CHECK(fg == 121);
}

TEST_CASE("render: empty batch, purity, range validation") {
    FactorWorld w = make_world(WorldConfig{});
    FactorMatrix empty(0, 5);
    CHECK(w.render(empty).rows == 0);

    FactorMatrix f(2, 5, {1, 3, 5, 2, 9, 2, 0, 7, 15, 0});
    ObservationBatch a = w.render(f);
    ObservationBatch b = w.render(f);
    CHECK(a == b);  // byte-for-byte purity

    FactorMatrix bad(1, 5, {0, 0, 0, 16, 0});
    try {
        w.render(bad);
        FAIL("expected range error");
    } catch (const ValidationError& e) {
        std::string msg = e.what();
        CHECK(msg.find("row 0") != std::string::npos);
        CHECK(msg.find("column 3") != std::string::npos);
    }
}

TEST_CASE("all renders stay in [0,1]; grayscale is binary") {
    FactorWorld w = make_world(WorldConfig{});
    FactorMatrix f = sample_factors(w, 64, 5);
    ObservationBatch img = w.render(f);
    for (double v : img.data) CHECK((v == 0.0 || v == 1.0));

    WorldConfig cc;
    cc.name = "color-dsprites-lite";
    FactorWorld wc = make_world(cc);
    REQUIRE(wc.channels() == 3);
    REQUIRE(wc.space().num_factors() == 6);
    FactorMatrix fc = sample_factors(wc, 32, 6);
    ObservationBatch imgc = wc.render(fc);
    for (double v : imgc.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("distinct orientation values render distinctly") {
    FactorWorld w = make_world(WorldConfig{});
    for (int64_t shape = 0; shape < 3; ++shape) {
        std::set<std::vector<double>> renders;
        for (int64_t o = 0; o < 8; ++o) {
            FactorMatrix f(1, 5, {shape, 3, o, 8, 8});
            renders.insert(w.render(f).data);
        }
        CHECK(renders.size() == 8);
    }
}

TEST_CASE("world manifest round trip") {
    FactorWorld w = make_world(WorldConfig{});
    json m = w.manifest();
    FactorWorld back = world_from_manifest(m);
    CHECK(back.manifest_hash() == w.manifest_hash());

    json tampered = m;
    tampered["hash"] = "0000000000000000";
    CHECK_THROWS_AS(world_from_manifest(tampered), ValidationError);

    CHECK_THROWS_AS(make_world(WorldConfig{"no-such-world", 16}), ValidationError);
}
