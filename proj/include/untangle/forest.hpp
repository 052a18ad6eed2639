#pragma once

#include <cstdint>
#include <vector>

#include "untangle/mat.hpp"
#include "untangle/rng.hpp"

namespace untangle {

struct ForestParams {
    int64_t trees = 10;
    int64_t max_depth = 8;
    // candidate features per node; 0 means ceil(sqrt(d))
    int64_t features_per_node = 0;
};

// Random-forest classifier over real features and integer class labels.
// Gini impurity, midpoint thresholds, per-node random feature subsets; no
// bootstrap, so all randomness (and all determinism) comes from the seeded
// feature subsets. Ties in split choice go to the lowest feature index and
// lowest threshold.
class Forest {
public:
    Forest(const Tensor& features, const std::vector<int64_t>& labels, int64_t num_classes,
           const ForestParams& params, uint64_t seed);

    std::vector<int64_t> predict(const Tensor& features) const;
    double accuracy(const Tensor& features, const std::vector<int64_t>& labels) const;

    // Total impurity decrease attributed to each feature, summed over trees
    // and weighted by node fraction.
    const std::vector<double>& importance() const { return importance_; }

private:
    struct TreeNode {
        int64_t feature = -1;  // -1 for leaf
        double threshold = 0.0;
        int32_t left = -1, right = -1;
        int64_t label = 0;  // majority class at this node
    };

    void build_tree(const Tensor& x, const std::vector<int64_t>& y, uint64_t tree_seed);
    int32_t split_node(const Tensor& x, const std::vector<int64_t>& y,
                       std::vector<int64_t>& indices, int64_t lo, int64_t hi, int64_t depth,
                       Rng& rng, std::vector<TreeNode>& nodes, double n_root);

    int64_t num_classes_;
    ForestParams params_;
    std::vector<std::vector<TreeNode>> trees_;
    std::vector<double> importance_;
};

}  // namespace untangle
