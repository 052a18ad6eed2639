#pragma once

#include <cstdint>
#include <vector>

namespace untangle {

// Average ranks (1-based), ties get the mean of their rank range.
std::vector<double> average_ranks(const std::vector<double>& xs);

struct SpearmanResult {
    double rho = 0.0;
    bool defined = false;  // false when either rank vector has zero variance
};

// Pearson correlation of average-ranked values; lengths must match and be >= 3.
SpearmanResult spearman(const std::vector<double>& xs, const std::vector<double>& ys);

struct AnovaResult {
    double fraction = 0.0;  // between-group SS / total SS
    bool degenerate = false;
};

// One-way variance explained (eta squared). Fewer than 2 groups or zero
// total variance yields fraction 0 with the degenerate flag set.
AnovaResult anova_variance_explained(const std::vector<std::vector<double>>& groups);

// Nearest-rank quantile: the ceil(p*n)-th smallest value.
double quantile_nearest_rank(std::vector<double> values, double p);

struct QuantileSummary {
    double min = 0.0, q10 = 0.0, q25 = 0.0, median = 0.0, q75 = 0.0, q90 = 0.0, max = 0.0;
    int64_t n = 0;
};

QuantileSummary summarize(std::vector<double> values);

}  // namespace untangle
