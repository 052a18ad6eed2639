#include "untangle/forest.hpp"

#include <algorithm>
#include <cmath>

namespace untangle {

namespace {

double gini(const std::vector<int64_t>& counts, double n) {
    if (n <= 0.0) return 0.0;
    double s = 0.0;
    for (int64_t c : counts) {
        double p = static_cast<double>(c) / n;
        s += p * p;
    }
    return 1.0 - s;
}

int64_t majority(const std::vector<int64_t>& counts) {
    int64_t best = 0;
    for (size_t c = 1; c < counts.size(); ++c)
        if (counts[c] > counts[static_cast<size_t>(best)]) best = static_cast<int64_t>(c);
    return best;
}

}  // namespace

Forest::Forest(const Tensor& features, const std::vector<int64_t>& labels, int64_t num_classes,
               const ForestParams& params, uint64_t seed)
    : num_classes_(num_classes), params_(params) {
    if (features.rows != static_cast<int64_t>(labels.size()))
        throw shape_error("forest: features/labels length mismatch");
    if (features.rows < 2) throw range_error("forest: need at least 2 samples");
    if (params_.features_per_node == 0)
        params_.features_per_node =
            static_cast<int64_t>(std::ceil(std::sqrt(static_cast<double>(features.cols))));
    params_.features_per_node = std::min(params_.features_per_node, features.cols);
    importance_.assign(static_cast<size_t>(features.cols), 0.0);
    for (int64_t t = 0; t < params_.trees; ++t)
        build_tree(features, labels, seed + static_cast<uint64_t>(t));
}

void Forest::build_tree(const Tensor& x, const std::vector<int64_t>& y, uint64_t tree_seed) {
    Rng rng(tree_seed, rng_streams::forest_base);
    std::vector<int64_t> indices(static_cast<size_t>(x.rows));
    for (size_t i = 0; i < indices.size(); ++i) indices[i] = static_cast<int64_t>(i);
    std::vector<TreeNode> nodes;
    split_node(x, y, indices, 0, x.rows, 0, rng, nodes, static_cast<double>(x.rows));
    trees_.push_back(std::move(nodes));
}

int32_t Forest::split_node(const Tensor& x, const std::vector<int64_t>& y,
                           std::vector<int64_t>& indices, int64_t lo, int64_t hi, int64_t depth,
                           Rng& rng, std::vector<TreeNode>& nodes, double n_root) {
    int64_t n = hi - lo;
    std::vector<int64_t> counts(static_cast<size_t>(num_classes_), 0);
    for (int64_t i = lo; i < hi; ++i)
        ++counts[static_cast<size_t>(y[static_cast<size_t>(indices[static_cast<size_t>(i)])])];
    double node_gini = gini(counts, static_cast<double>(n));

    int32_t id = static_cast<int32_t>(nodes.size());
    nodes.push_back({});
    nodes[static_cast<size_t>(id)].label = majority(counts);

    if (depth >= params_.max_depth || n < 2 || node_gini <= 0.0) return id;

    // Per-node random feature subset, evaluated in ascending feature order
    // so split ties are deterministic.
    std::vector<int64_t> all_feats(static_cast<size_t>(x.cols));
    for (size_t i = 0; i < all_feats.size(); ++i) all_feats[i] = static_cast<int64_t>(i);
    for (int64_t i = 0; i < params_.features_per_node; ++i) {
        int64_t j = i + static_cast<int64_t>(rng.below(static_cast<uint64_t>(x.cols - i)));
        std::swap(all_feats[static_cast<size_t>(i)], all_feats[static_cast<size_t>(j)]);
    }
    std::vector<int64_t> feats(all_feats.begin(),
                               all_feats.begin() + static_cast<long>(params_.features_per_node));
    std::sort(feats.begin(), feats.end());

    double best_decrease = 0.0;
    int64_t best_feature = -1;
    double best_threshold = 0.0;

    std::vector<std::pair<double, int64_t>> order(static_cast<size_t>(n));
    std::vector<int64_t> left_counts(static_cast<size_t>(num_classes_));
    std::vector<int64_t> right_counts(static_cast<size_t>(num_classes_));
    for (int64_t f : feats) {
        for (int64_t i = 0; i < n; ++i) {
            int64_t row = indices[static_cast<size_t>(lo + i)];
            order[static_cast<size_t>(i)] = {x.at(row, f), y[static_cast<size_t>(row)]};
        }
        std::sort(order.begin(), order.end());
        std::fill(left_counts.begin(), left_counts.end(), 0);
        for (int64_t i = 0; i + 1 < n; ++i) {
            ++left_counts[static_cast<size_t>(order[static_cast<size_t>(i)].second)];
            if (order[static_cast<size_t>(i)].first == order[static_cast<size_t>(i + 1)].first)
                continue;  // no class boundary between equal feature values
            double n_left = static_cast<double>(i + 1);
            double n_right = static_cast<double>(n - i - 1);
            for (size_t c = 0; c < right_counts.size(); ++c)
                right_counts[c] = counts[c] - left_counts[c];
            double child =
                (n_left * gini(left_counts, n_left) + n_right * gini(right_counts, n_right)) /
                static_cast<double>(n);
            double decrease = node_gini - child;
            if (decrease > best_decrease) {
                best_decrease = decrease;
                best_feature = f;
                best_threshold = 0.5 * (order[static_cast<size_t>(i)].first +
                                        order[static_cast<size_t>(i + 1)].first);
            }
        }
    }

    if (best_feature < 0) return id;

    importance_[static_cast<size_t>(best_feature)] +=
        (static_cast<double>(n) / n_root) * best_decrease;

    auto mid = std::partition(indices.begin() + lo, indices.begin() + hi, [&](int64_t row) {
        return x.at(row, best_feature) <= best_threshold;
    });
    int64_t split_at = mid - indices.begin();

    nodes[static_cast<size_t>(id)].feature = best_feature;
    nodes[static_cast<size_t>(id)].threshold = best_threshold;
    int32_t l = split_node(x, y, indices, lo, split_at, depth + 1, rng, nodes, n_root);
    nodes[static_cast<size_t>(id)].left = l;
    int32_t r = split_node(x, y, indices, split_at, hi, depth + 1, rng, nodes, n_root);
    nodes[static_cast<size_t>(id)].right = r;
    return id;
}

std::vector<int64_t> Forest::predict(const Tensor& features) const {
    std::vector<int64_t> out(static_cast<size_t>(features.rows));
    std::vector<int64_t> votes(static_cast<size_t>(num_classes_));
    for (int64_t i = 0; i < features.rows; ++i) {
        std::fill(votes.begin(), votes.end(), 0);
        for (const auto& tree : trees_) {
            int32_t node = 0;
            while (tree[static_cast<size_t>(node)].feature >= 0) {
                const TreeNode& tn = tree[static_cast<size_t>(node)];
                node = features.at(i, tn.feature) <= tn.threshold ? tn.left : tn.right;
            }
            ++votes[static_cast<size_t>(tree[static_cast<size_t>(node)].label)];
        }
        out[static_cast<size_t>(i)] = majority(votes);
    }
    return out;
}

double Forest::accuracy(const Tensor& features, const std::vector<int64_t>& labels) const {
    if (features.rows == 0) return 0.0;
    if (features.rows != static_cast<int64_t>(labels.size()))
        throw shape_error("forest accuracy: features/labels length mismatch");
    std::vector<int64_t> pred = predict(features);
    int64_t hits = 0;
    for (size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(features.rows);
}

}  // namespace untangle
