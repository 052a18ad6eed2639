#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "untangle/mat.hpp"

namespace untangle {

// Named parameter tensors with their Adam moment buffers.
struct ParamEntry {
    std::string name;
    Tensor value;
    Tensor m;  // first moment
    Tensor v;  // second moment
};

class ParamSet {
public:
    int64_t step = 0;
    std::vector<ParamEntry> entries;

    ParamEntry& add(const std::string& name, Tensor init);
    int64_t find(const std::string& name) const;  // -1 if absent
    const ParamEntry& at(const std::string& name) const;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One bias-corrected Adam step over all entries; grads[i] may be null
// (treated as zero gradient).
void adam_step(ParamSet& ps, const std::vector<const Tensor*>& grads, const AdamConfig& cfg);

enum class Op {
    constant,
    param,
    affine,
    relu,
    tanh_op,
    sigmoid_op,
    add,
    mul,
    concat_cols,
    reparam,
    bernoulli_recon,
    gaussian_kl,
    sum_all,
    scale_const,
    add_const,
    abs_op,
    mean_col_diff,
    softmax_ce,
    tc_mws,
    dip_penalty_i,
    dip_penalty_ii,
};

struct Node {
    Op op;
    std::array<int, 3> in{-1, -1, -1};
    Tensor value;
    const Tensor* ref = nullptr;  // param nodes alias the ParamSet tensor
    Tensor grad;
    bool has_grad = false;
    double c0 = 0.0, c1 = 0.0;  // op constants
    Tensor aux;                 // cached forward intermediates
};

// Define-by-run reverse-mode tape. Values are computed eagerly at node
// creation; backward() walks the tape in reverse insertion order, which is
// a topological order by construction. Single-owner: one graph per training
// step, never shared across threads.
class Graph {
public:
    int constant(Tensor v);
    int param(ParamSet& ps, const std::string& name);

    int affine(int x, int w, int b);
    int relu(int x);
    int tanh_(int x);
    int sigmoid(int x);
    int add(int a, int b);
    int mul(int a, int b);
    int concat_cols(int a, int b);
    // mu + exp(0.5*log_var) (.) noise, with caller-supplied standard normal noise
    int reparam(int mu, int log_var, int noise);
    // mean over batch of summed-per-sample sigmoid cross-entropy
    int bernoulli_recon(int logits, int targets);
    // mean over batch of 0.5 * sum_i (exp(lv) + mu^2 - 1 - lv)
    int gaussian_kl(int mu, int log_var);
    int sum_all(int x);
    int scale(int x, double c);
    int add_const(int x, double c);
    int abs(int x);
    // [N x 2] -> mean(col0 - col1)
    int mean_col_diff(int x);
    // logits [N x C], labels [N x 1] integer-valued constant
    int softmax_ce(int logits, int labels);
    // minibatch-weighted-sampling total correlation estimate of q(z)
    int tc_mws(int z, int mu, int log_var);
    // sum_{i!=j} Cov[mu]_ij^2 * l_od + sum_i (Cov[mu]_ii - 1)^2 * l_d
    int dip_penalty_i(int mu, double lambda_od, double lambda_d);
    // same penalty on Cov[z] = E[diag(exp(lv))] + Cov[mu]
    int dip_penalty_ii(int mu, int log_var, double lambda_od, double lambda_d);

    const Tensor& value(int id) const {
        const Node& n = nodes_[static_cast<size_t>(id)];
        return n.ref ? *n.ref : n.value;
    }
    double scalar_value(int id) const;

    void backward(int loss);

    // Gradient of `id`; zero-shaped tensor if the node is off the loss path.
    Tensor gradient(int id) const;

    // Gradients aligned with ps.entries (null when a param was unused).
    std::vector<const Tensor*> param_gradients(const ParamSet& ps) const;

    size_t num_nodes() const { return nodes_.size(); }

private:
    int push(Node n);
    Tensor& grad_buffer(int id);
    const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

    std::vector<Node> nodes_;
    struct Binding {
        int node;
        const ParamSet* set;
        size_t entry;
    };
    std::vector<Binding> bindings_;
};

}  // namespace untangle
