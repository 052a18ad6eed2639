#include "untangle/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "untangle/errors.hpp"

namespace untangle {

std::vector<double> average_ranks(const std::vector<double>& xs) {
    size_t n = xs.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
        double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

SpearmanResult spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw shape_error("spearman: length mismatch");
    if (xs.size() < 3) throw range_error("spearman: need at least 3 pairs");
    std::vector<double> rx = average_ranks(xs);
    std::vector<double> ry = average_ranks(ys);
    double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < rx.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (size_t i = 0; i < rx.size(); ++i) {
        double a = rx[i] - mx, b = ry[i] - my;
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
    }
    SpearmanResult r;
    if (sxx <= 0.0 || syy <= 0.0) return r;  // zero rank variance: undefined
    r.rho = sxy / std::sqrt(sxx * syy);
    r.defined = true;
    return r;
}

AnovaResult anova_variance_explained(const std::vector<std::vector<double>>& groups) {
    AnovaResult res;
    size_t total_n = 0;
    size_t nonempty = 0;
    double grand = 0.0;
    for (const auto& g : groups) {
        total_n += g.size();
        if (!g.empty()) ++nonempty;
        for (double v : g) grand += v;
    }
    if (total_n == 0) throw range_error("anova: no observations");
    grand /= static_cast<double>(total_n);

    double ssb = 0.0, sst = 0.0;
    for (const auto& g : groups) {
        if (g.empty()) continue;
        double gm = 0.0;
        for (double v : g) gm += v;
        gm /= static_cast<double>(g.size());
        ssb += static_cast<double>(g.size()) * (gm - grand) * (gm - grand);
        for (double v : g) sst += (v - grand) * (v - grand);
    }
    if (nonempty < 2 || sst <= 0.0) {
        res.degenerate = true;
        return res;
    }
    res.fraction = ssb / sst;
    return res;
}

double quantile_nearest_rank(std::vector<double> values, double p) {
    if (values.empty()) throw range_error("quantile: empty input");
    std::sort(values.begin(), values.end());
    double n = static_cast<double>(values.size());
    int64_t idx = static_cast<int64_t>(std::ceil(p * n)) - 1;
    if (idx < 0) idx = 0;
    if (idx >= static_cast<int64_t>(values.size())) idx = static_cast<int64_t>(values.size()) - 1;
    return values[static_cast<size_t>(idx)];
}

QuantileSummary summarize(std::vector<double> values) {
    if (values.empty()) throw range_error("summarize: empty input");
    std::sort(values.begin(), values.end());
    auto q = [&](double p) {
        int64_t idx = static_cast<int64_t>(std::ceil(p * static_cast<double>(values.size()))) - 1;
        if (idx < 0) idx = 0;
        return values[static_cast<size_t>(idx)];
    };
    QuantileSummary s;
    s.min = values.front();
    s.q10 = q(0.10);
    s.q25 = q(0.25);
    s.median = q(0.50);
    s.q75 = q(0.75);
    s.q90 = q(0.90);
    s.max = values.back();
    s.n = static_cast<int64_t>(values.size());
    return s;
}

}  // namespace untangle
