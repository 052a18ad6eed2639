#include "untangle/graph.hpp"

#include <cmath>

#include "untangle/kernels.hpp"

namespace untangle {

namespace {

constexpr double kLn2Pi = 1.8378770664093454836;

double pow_int(double base, int64_t e) {
    double r = 1.0;
    while (e > 0) {
        if (e & 1) r *= base;
        base *= base;
        e >>= 1;
    }
    return r;
}

inline double sigmoid_stable(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

// max(l,0) - l*t + log(1+exp(-|l|))
inline double bce_logit(double l, double t) {
    double a = l > 0.0 ? l : 0.0;
    return a - l * t + std::log1p(std::exp(-std::abs(l)));
}

double logsumexp(const double* x, int64_t n) {
    double mx = x[0];
    for (int64_t i = 1; i < n; ++i)
        if (x[i] > mx) mx = x[i];
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += std::exp(x[i] - mx);
    return mx + std::log(s);
}

}  // namespace

ParamEntry& ParamSet::add(const std::string& name, Tensor init) {
    if (find(name) >= 0) throw range_error("duplicate parameter '" + name + "'");
    ParamEntry e;
    e.name = name;
    e.m = Tensor::zeros(init.rows, init.cols);
    e.v = Tensor::zeros(init.rows, init.cols);
    e.value = std::move(init);
    entries.push_back(std::move(e));
    return entries.back();
}

int64_t ParamSet::find(const std::string& name) const {
    for (size_t i = 0; i < entries.size(); ++i)
        if (entries[i].name == name) return static_cast<int64_t>(i);
    return -1;
}

const ParamEntry& ParamSet::at(const std::string& name) const {
    int64_t i = find(name);
    if (i < 0) throw range_error("no parameter '" + name + "'");
    return entries[static_cast<size_t>(i)];
}

void adam_step(ParamSet& ps, const std::vector<const Tensor*>& grads, const AdamConfig& cfg) {
    if (grads.size() != ps.entries.size())
        throw shape_error("adam_step: gradient list does not match parameter set");
    ps.step += 1;
    double corr = std::sqrt(1.0 - pow_int(cfg.beta2, ps.step)) / (1.0 - pow_int(cfg.beta1, ps.step));
    double lr_t = cfg.lr * corr;
    const auto& k = kernels::active();
    for (size_t i = 0; i < ps.entries.size(); ++i) {
        ParamEntry& e = ps.entries[i];
        Tensor zero;
        const Tensor* g = grads[i];
        if (!g) {
            zero = Tensor::zeros(e.value.rows, e.value.cols);
            g = &zero;
        } else if (!g->same_shape(e.value)) {
            throw shape_error("adam_step: gradient shape mismatch for '" + e.name + "'");
        }
        k.adam_update(e.value.data.data(), e.m.data.data(), e.v.data.data(), g->data.data(),
                      static_cast<int64_t>(e.value.size()), lr_t, cfg.beta1, cfg.beta2, cfg.eps);
    }
}

int Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size() - 1);
}

Tensor& Graph::grad_buffer(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.has_grad) {
        const Tensor& v = value(id);
        n.grad = Tensor::zeros(v.rows, v.cols);
        n.has_grad = true;
    }
    return n.grad;
}

int Graph::constant(Tensor v) {
    Node n;
    n.op = Op::constant;
    n.value = std::move(v);
    return push(std::move(n));
}

int Graph::param(ParamSet& ps, const std::string& name) {
    int64_t idx = ps.find(name);
    if (idx < 0) throw range_error("graph: no parameter '" + name + "'");
    Node n;
    n.op = Op::param;
    // Aliased, not copied; the ParamSet must outlive the graph and not grow
    // new entries while the graph is alive.
    n.ref = &ps.entries[static_cast<size_t>(idx)].value;
    int id = push(std::move(n));
    bindings_.push_back({id, &ps, static_cast<size_t>(idx)});
    return id;
}

int Graph::affine(int x, int w, int b) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    const Tensor& bv = value(b);
    if (xv.cols != wv.rows)
        throw shape_error("affine: x cols " + std::to_string(xv.cols) + " != W rows " +
                          std::to_string(wv.rows));
    if (bv.rows != 1 || bv.cols != wv.cols) throw shape_error("affine: bias must be 1 x W.cols");
    Node n;
    n.op = Op::affine;
    n.in = {x, w, b};
    n.value = Tensor(xv.rows, wv.cols);
    kernels::active().matmul_nn(xv.data.data(), wv.data.data(), n.value.data.data(), xv.rows,
                                xv.cols, wv.cols);
    for (int64_t i = 0; i < n.value.rows; ++i) {
        double* row = n.value.row(i).data();
        kernels::active().add(row, bv.data.data(), row, bv.cols);
    }
    return push(std::move(n));
}

int Graph::relu(int x) {
    const Tensor& xv = value(x);
    Node n;
    n.op = Op::relu;
    n.in = {x, -1, -1};
    n.value = Tensor(xv.rows, xv.cols);
    kernels::active().relu_fwd(xv.data.data(), n.value.data.data(),
                               static_cast<int64_t>(xv.size()));
    return push(std::move(n));
}

int Graph::tanh_(int x) {
    const Tensor& xv = value(x);
    Node n;
    n.op = Op::tanh_op;
    n.in = {x, -1, -1};
    n.value = Tensor(xv.rows, xv.cols);
    for (size_t i = 0; i < xv.size(); ++i) n.value.data[i] = std::tanh(xv.data[i]);
    return push(std::move(n));
}

int Graph::sigmoid(int x) {
    const Tensor& xv = value(x);
    Node n;
    n.op = Op::sigmoid_op;
    n.in = {x, -1, -1};
    n.value = Tensor(xv.rows, xv.cols);
    for (size_t i = 0; i < xv.size(); ++i) n.value.data[i] = sigmoid_stable(xv.data[i]);
    return push(std::move(n));
}

int Graph::add(int a, int b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require_same_shape(av, bv, "add");
    Node n;
    n.op = Op::add;
    n.in = {a, b, -1};
    n.value = Tensor(av.rows, av.cols);
    kernels::active().add(av.data.data(), bv.data.data(), n.value.data.data(),
                          static_cast<int64_t>(av.size()));
    return push(std::move(n));
}

int Graph::mul(int a, int b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require_same_shape(av, bv, "mul");
    Node n;
    n.op = Op::mul;
    n.in = {a, b, -1};
    n.value = Tensor(av.rows, av.cols);
    kernels::active().mul(av.data.data(), bv.data.data(), n.value.data.data(),
                          static_cast<int64_t>(av.size()));
    return push(std::move(n));
}

int Graph::concat_cols(int a, int b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (av.rows != bv.rows) throw shape_error("concat_cols: row count mismatch");
    Node n;
    n.op = Op::concat_cols;
    n.in = {a, b, -1};
    n.value = Tensor(av.rows, av.cols + bv.cols);
    for (int64_t i = 0; i < av.rows; ++i) {
        double* out = n.value.row(i).data();
        const double* arow = av.row(i).data();
        const double* brow = bv.row(i).data();
        for (int64_t j = 0; j < av.cols; ++j) out[j] = arow[j];
        for (int64_t j = 0; j < bv.cols; ++j) out[av.cols + j] = brow[j];
    }
    return push(std::move(n));
}

int Graph::reparam(int mu, int log_var, int noise) {
    const Tensor& mv = value(mu);
    const Tensor& lv = value(log_var);
    const Tensor& ev = value(noise);
    require_same_shape(mv, lv, "reparam");
    require_same_shape(mv, ev, "reparam");
    Node n;
    n.op = Op::reparam;
    n.in = {mu, log_var, noise};
    n.value = Tensor(mv.rows, mv.cols);
    n.aux = Tensor(mv.rows, mv.cols);  // std = exp(0.5 * log_var)
    for (size_t i = 0; i < mv.size(); ++i) {
        double s = std::exp(0.5 * lv.data[i]);
        n.aux.data[i] = s;
        n.value.data[i] = mv.data[i] + s * ev.data[i];
    }
    return push(std::move(n));
}

int Graph::bernoulli_recon(int logits, int targets) {
    const Tensor& lv = value(logits);
    const Tensor& tv = value(targets);
    require_same_shape(lv, tv, "bernoulli_recon");
    if (lv.rows < 1) throw shape_error("bernoulli_recon: empty batch");
    for (size_t i = 0; i < tv.size(); ++i) {
        if (!std::isfinite(lv.data[i]) || !std::isfinite(tv.data[i]))
            throw numeric_error("bernoulli_recon: non-finite input");
        if (tv.data[i] < 0.0 || tv.data[i] > 1.0)
            throw range_error("bernoulli_recon: target outside [0,1]");
    }
    double total = 0.0;
    for (size_t i = 0; i < lv.size(); ++i) total += bce_logit(lv.data[i], tv.data[i]);
    Node n;
    n.op = Op::bernoulli_recon;
    n.in = {logits, targets, -1};
    n.value = Tensor(1, 1, {total / static_cast<double>(lv.rows)});
    return push(std::move(n));
}

int Graph::gaussian_kl(int mu, int log_var) {
    const Tensor& mv = value(mu);
    const Tensor& lvv = value(log_var);
    require_same_shape(mv, lvv, "gaussian_kl");
    if (mv.rows < 1) throw shape_error("gaussian_kl: empty batch");
    for (size_t i = 0; i < mv.size(); ++i)
        if (!std::isfinite(mv.data[i]) || !std::isfinite(lvv.data[i]))
            throw numeric_error("gaussian_kl: non-finite input");
    double total = 0.0;
    for (size_t i = 0; i < mv.size(); ++i) {
        double m = mv.data[i], l = lvv.data[i];
        total += 0.5 * (std::exp(l) + m * m - 1.0 - l);
    }
    Node n;
    n.op = Op::gaussian_kl;
    n.in = {mu, log_var, -1};
    n.value = Tensor(1, 1, {total / static_cast<double>(mv.rows)});
    return push(std::move(n));
}

int Graph::sum_all(int x) {
    const Tensor& xv = value(x);
    Node n;
    n.op = Op::sum_all;
    n.in = {x, -1, -1};
    n.value = Tensor(1, 1,
                     {kernels::active().reduce_sum(xv.data.data(),
                                                   static_cast<int64_t>(xv.size()))});
    return push(std::move(n));
}

int Graph::scale(int x, double c) {
    const Tensor& xv = value(x);
    Node n;
    n.op = Op::scale_const;
    n.in = {x, -1, -1};
    n.c0 = c;
    n.value = Tensor(xv.rows, xv.cols);
    kernels::active().scale(c, xv.data.data(), n.value.data.data(),
                            static_cast<int64_t>(xv.size()));
    return push(std::move(n));
}

int Graph::add_const(int x, double c) {
    const Tensor& xv = value(x);
    Node n;
    n.op = Op::add_const;
    n.in = {x, -1, -1};
    n.c0 = c;
    n.value = Tensor(xv.rows, xv.cols);
    for (size_t i = 0; i < xv.size(); ++i) n.value.data[i] = xv.data[i] + c;
    return push(std::move(n));
}

int Graph::abs(int x) {
    const Tensor& xv = value(x);
    Node n;
    n.op = Op::abs_op;
    n.in = {x, -1, -1};
    n.value = Tensor(xv.rows, xv.cols);
    for (size_t i = 0; i < xv.size(); ++i) n.value.data[i] = std::abs(xv.data[i]);
    return push(std::move(n));
}

int Graph::mean_col_diff(int x) {
    const Tensor& xv = value(x);
    if (xv.cols != 2) throw shape_error("mean_col_diff: expected N x 2 logits");
    if (xv.rows < 1) throw shape_error("mean_col_diff: empty batch");
    double total = 0.0;
    for (int64_t i = 0; i < xv.rows; ++i) total += xv.at(i, 0) - xv.at(i, 1);
    Node n;
    n.op = Op::mean_col_diff;
    n.in = {x, -1, -1};
    n.value = Tensor(1, 1, {total / static_cast<double>(xv.rows)});
    return push(std::move(n));
}

int Graph::softmax_ce(int logits, int labels) {
    const Tensor& lv = value(logits);
    const Tensor& yv = value(labels);
    if (yv.cols != 1 || yv.rows != lv.rows)
        throw shape_error("softmax_ce: labels must be N x 1");
    Node n;
    n.op = Op::softmax_ce;
    n.in = {logits, labels, -1};
    n.aux = Tensor(lv.rows, lv.cols);  // probabilities
    double total = 0.0;
    for (int64_t i = 0; i < lv.rows; ++i) {
        const double* row = lv.row(i).data();
        double mx = row[0];
        for (int64_t j = 1; j < lv.cols; ++j)
            if (row[j] > mx) mx = row[j];
        double z = 0.0;
        for (int64_t j = 0; j < lv.cols; ++j) z += std::exp(row[j] - mx);
        double logz = mx + std::log(z);
        int64_t y = static_cast<int64_t>(yv.at(i, 0));
        if (y < 0 || y >= lv.cols) throw range_error("softmax_ce: label out of range");
        for (int64_t j = 0; j < lv.cols; ++j)
            n.aux.at(i, j) = std::exp(row[j] - logz);
        total += logz - row[y];
    }
    n.value = Tensor(1, 1, {total / static_cast<double>(lv.rows)});
    return push(std::move(n));
}

int Graph::tc_mws(int z, int mu, int log_var) {
    const Tensor& zv = value(z);
    const Tensor& mv = value(mu);
    const Tensor& lvv = value(log_var);
    require_same_shape(zv, mv, "tc_mws");
    require_same_shape(zv, lvv, "tc_mws");
    int64_t n_rows = zv.rows, d = zv.cols;
    if (n_rows < 2) throw shape_error("tc_mws: batch size must be >= 2");
    Node n;
    n.op = Op::tc_mws;
    n.in = {z, mu, log_var};
    // aux: pairwise per-dimension Gaussian log densities, laid out [n*n, d]
    n.aux = Tensor(n_rows * n_rows, d);
    for (int64_t a = 0; a < n_rows; ++a)
        for (int64_t b = 0; b < n_rows; ++b) {
            double* out = n.aux.row(a * n_rows + b).data();
            const double* zr = zv.row(a).data();
            const double* mr = mv.row(b).data();
            const double* lr = lvv.row(b).data();
            for (int64_t i = 0; i < d; ++i) {
                double diff = zr[i] - mr[i];
                out[i] = -0.5 * (kLn2Pi + lr[i] + diff * diff * std::exp(-lr[i]));
            }
        }
    double log_n = std::log(static_cast<double>(n_rows));
    std::vector<double> joint(static_cast<size_t>(n_rows));
    std::vector<double> percol(static_cast<size_t>(n_rows));
    double total = 0.0;
    for (int64_t a = 0; a < n_rows; ++a) {
        for (int64_t b = 0; b < n_rows; ++b) {
            const double* lp = n.aux.row(a * n_rows + b).data();
            double s = 0.0;
            for (int64_t i = 0; i < d; ++i) s += lp[i];
            joint[static_cast<size_t>(b)] = s;
        }
        double log_qz = logsumexp(joint.data(), n_rows) - log_n;
        double log_prod = 0.0;
        for (int64_t i = 0; i < d; ++i) {
            for (int64_t b = 0; b < n_rows; ++b)
                percol[static_cast<size_t>(b)] = n.aux.at(a * n_rows + b, i);
            log_prod += logsumexp(percol.data(), n_rows) - log_n;
        }
        total += log_qz - log_prod;
    }
    n.value = Tensor(1, 1, {total / static_cast<double>(n_rows)});
    return push(std::move(n));
}

namespace {

// Shared forward scaffold for the DIP penalties: given centered rows V and
// the covariance C (plus lambda weights), produce the penalty value and the
// gradient seed matrix G with G_ij = dL/dC_ij.
struct DipParts {
    Tensor centered;  // N x d
    Tensor g;         // d x d
    double penalty = 0.0;
};

DipParts dip_parts(const Tensor& mu, const Tensor* diag_add, double l_od, double l_d) {
    int64_t n = mu.rows, d = mu.cols;
    DipParts parts;
    parts.centered = Tensor(n, d);
    std::vector<double> mean(static_cast<size_t>(d), 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += mu.at(i, j);
    for (auto& v : mean) v /= static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j)
            parts.centered.at(i, j) = mu.at(i, j) - mean[static_cast<size_t>(j)];
    Tensor cov(d, d);
    kernels::active().matmul_tn(parts.centered.data.data(), parts.centered.data.data(),
                                cov.data.data(), n, d, d);
    for (auto& v : cov.data) v /= static_cast<double>(n);
    if (diag_add)
        for (int64_t j = 0; j < d; ++j) cov.at(j, j) += diag_add->data[static_cast<size_t>(j)];
    parts.g = Tensor(d, d);
    for (int64_t i = 0; i < d; ++i)
        for (int64_t j = 0; j < d; ++j) {
            double c = cov.at(i, j);
            if (i == j) {
                parts.penalty += l_d * (c - 1.0) * (c - 1.0);
                parts.g.at(i, j) = 2.0 * l_d * (c - 1.0);
            } else {
                parts.penalty += l_od * c * c;
                parts.g.at(i, j) = 2.0 * l_od * c;
            }
        }
    return parts;
}

}  // namespace

int Graph::dip_penalty_i(int mu, double lambda_od, double lambda_d) {
    const Tensor& mv = value(mu);
    if (mv.rows < 2) throw shape_error("dip_penalty: batch size must be >= 2");
    DipParts parts = dip_parts(mv, nullptr, lambda_od, lambda_d);
    Node n;
    n.op = Op::dip_penalty_i;
    n.in = {mu, -1, -1};
    n.c0 = lambda_od;
    n.c1 = lambda_d;
    n.value = Tensor(1, 1, {parts.penalty});
    // aux rows: [centered (N x d); G (d x d)]
    n.aux = Tensor(mv.rows + mv.cols, mv.cols);
    for (int64_t i = 0; i < mv.rows; ++i)
        for (int64_t j = 0; j < mv.cols; ++j) n.aux.at(i, j) = parts.centered.at(i, j);
    for (int64_t i = 0; i < mv.cols; ++i)
        for (int64_t j = 0; j < mv.cols; ++j) n.aux.at(mv.rows + i, j) = parts.g.at(i, j);
    return push(std::move(n));
}

int Graph::dip_penalty_ii(int mu, int log_var, double lambda_od, double lambda_d) {
    const Tensor& mv = value(mu);
    const Tensor& lvv = value(log_var);
    require_same_shape(mv, lvv, "dip_penalty_ii");
    if (mv.rows < 2) throw shape_error("dip_penalty: batch size must be >= 2");
    int64_t n_rows = mv.rows, d = mv.cols;
    Tensor diag_mean(1, d);
    for (int64_t i = 0; i < n_rows; ++i)
        for (int64_t j = 0; j < d; ++j)
            diag_mean.data[static_cast<size_t>(j)] += std::exp(lvv.at(i, j));
    for (auto& v : diag_mean.data) v /= static_cast<double>(n_rows);
    DipParts parts = dip_parts(mv, &diag_mean, lambda_od, lambda_d);
    Node n;
    n.op = Op::dip_penalty_ii;
    n.in = {mu, log_var, -1};
    n.c0 = lambda_od;
    n.c1 = lambda_d;
    n.value = Tensor(1, 1, {parts.penalty});
    n.aux = Tensor(n_rows + d, d);
    for (int64_t i = 0; i < n_rows; ++i)
        for (int64_t j = 0; j < d; ++j) n.aux.at(i, j) = parts.centered.at(i, j);
    for (int64_t i = 0; i < d; ++i)
        for (int64_t j = 0; j < d; ++j) n.aux.at(n_rows + i, j) = parts.g.at(i, j);
    return push(std::move(n));
}

double Graph::scalar_value(int id) const {
    const Tensor& v = value(id);
    if (v.rows != 1 || v.cols != 1) throw shape_error("scalar_value: node is not 1x1");
    return v.data[0];
}

Tensor Graph::gradient(int id) const {
    const Node& n = node(id);
    if (n.has_grad) return n.grad;
    const Tensor& v = value(id);
    return Tensor::zeros(v.rows, v.cols);
}

std::vector<const Tensor*> Graph::param_gradients(const ParamSet& ps) const {
    std::vector<const Tensor*> grads(ps.entries.size(), nullptr);
    for (const auto& b : bindings_) {
        if (b.set != &ps) continue;
        const Node& n = node(b.node);
        if (n.has_grad) grads[b.entry] = &n.grad;
    }
    return grads;
}

void Graph::backward(int loss) {
    const Node& ln = node(loss);
    if (ln.value.rows != 1 || ln.value.cols != 1)
        throw shape_error("backward: loss must be a scalar node");
    grad_buffer(loss).data[0] = 1.0;
    const auto& k = kernels::active();

    for (int id = loss; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.has_grad) continue;
        const Tensor& g = n.grad;
        switch (n.op) {
            case Op::constant:
            case Op::param:
                break;
            case Op::affine: {
                const Tensor& xv = value(n.in[0]);
                const Tensor& wv = value(n.in[1]);
                // dx += dy * W^T
                Tensor dx(xv.rows, xv.cols);
                k.matmul_nt(g.data.data(), wv.data.data(), dx.data.data(), g.rows, g.cols,
                            wv.rows);
                Tensor& gx = grad_buffer(n.in[0]);
                k.add(gx.data.data(), dx.data.data(), gx.data.data(),
                      static_cast<int64_t>(gx.size()));
                // dW += x^T * dy
                Tensor dw(wv.rows, wv.cols);
                k.matmul_tn(xv.data.data(), g.data.data(), dw.data.data(), xv.rows, xv.cols,
                            g.cols);
                Tensor& gw = grad_buffer(n.in[1]);
                k.add(gw.data.data(), dw.data.data(), gw.data.data(),
                      static_cast<int64_t>(gw.size()));
                // db += column sums of dy
                Tensor& gb = grad_buffer(n.in[2]);
                for (int64_t i = 0; i < g.rows; ++i)
                    k.add(gb.data.data(), g.row(i).data(), gb.data.data(), g.cols);
                break;
            }
            case Op::relu: {
                const Tensor& xv = value(n.in[0]);
                Tensor& gx = grad_buffer(n.in[0]);
                k.relu_bwd(xv.data.data(), g.data.data(), gx.data.data(),
                           static_cast<int64_t>(xv.size()));
                break;
            }
            case Op::tanh_op: {
                Tensor& gx = grad_buffer(n.in[0]);
                for (size_t i = 0; i < gx.size(); ++i) {
                    double y = n.value.data[i];
                    gx.data[i] += g.data[i] * (1.0 - y * y);
                }
                break;
            }
            case Op::sigmoid_op: {
                Tensor& gx = grad_buffer(n.in[0]);
                for (size_t i = 0; i < gx.size(); ++i) {
                    double y = n.value.data[i];
                    gx.data[i] += g.data[i] * y * (1.0 - y);
                }
                break;
            }
            case Op::add: {
                Tensor& ga = grad_buffer(n.in[0]);
                k.add(ga.data.data(), g.data.data(), ga.data.data(),
                      static_cast<int64_t>(ga.size()));
                Tensor& gb = grad_buffer(n.in[1]);
                k.add(gb.data.data(), g.data.data(), gb.data.data(),
                      static_cast<int64_t>(gb.size()));
                break;
            }
            case Op::mul: {
                const Tensor& av = value(n.in[0]);
                const Tensor& bv = value(n.in[1]);
                Tensor& ga = grad_buffer(n.in[0]);
                for (size_t i = 0; i < ga.size(); ++i) ga.data[i] += g.data[i] * bv.data[i];
                Tensor& gb = grad_buffer(n.in[1]);
                for (size_t i = 0; i < gb.size(); ++i) gb.data[i] += g.data[i] * av.data[i];
                break;
            }
            case Op::concat_cols: {
                const Tensor& av = value(n.in[0]);
                const Tensor& bv = value(n.in[1]);
                Tensor& ga = grad_buffer(n.in[0]);
                Tensor& gb = grad_buffer(n.in[1]);
                for (int64_t i = 0; i < g.rows; ++i) {
                    const double* grow = g.row(i).data();
                    double* garow = ga.row(i).data();
                    double* gbrow = gb.row(i).data();
                    for (int64_t j = 0; j < av.cols; ++j) garow[j] += grow[j];
                    for (int64_t j = 0; j < bv.cols; ++j) gbrow[j] += grow[av.cols + j];
                }
                break;
            }
            case Op::reparam: {
                const Tensor& ev = value(n.in[2]);
                Tensor& gmu = grad_buffer(n.in[0]);
                k.add(gmu.data.data(), g.data.data(), gmu.data.data(),
                      static_cast<int64_t>(gmu.size()));
                Tensor& glv = grad_buffer(n.in[1]);
                for (size_t i = 0; i < glv.size(); ++i)
                    glv.data[i] += g.data[i] * ev.data[i] * 0.5 * n.aux.data[i];
                break;
            }
            case Op::bernoulli_recon: {
                const Tensor& lv = value(n.in[0]);
                const Tensor& tv = value(n.in[1]);
                Tensor& gl = grad_buffer(n.in[0]);
                double scale = g.data[0] / static_cast<double>(lv.rows);
                for (size_t i = 0; i < gl.size(); ++i)
                    gl.data[i] += scale * (sigmoid_stable(lv.data[i]) - tv.data[i]);
                break;
            }
            case Op::gaussian_kl: {
                const Tensor& mv = value(n.in[0]);
                const Tensor& lvv = value(n.in[1]);
                double scale = g.data[0] / static_cast<double>(mv.rows);
                Tensor& gm = grad_buffer(n.in[0]);
                for (size_t i = 0; i < gm.size(); ++i) gm.data[i] += scale * mv.data[i];
                Tensor& glv = grad_buffer(n.in[1]);
                for (size_t i = 0; i < glv.size(); ++i)
                    glv.data[i] += scale * 0.5 * (std::exp(lvv.data[i]) - 1.0);
                break;
            }
            case Op::sum_all: {
                Tensor& gx = grad_buffer(n.in[0]);
                double gv = g.data[0];
                for (auto& v : gx.data) v += gv;
                break;
            }
            case Op::scale_const: {
                Tensor& gx = grad_buffer(n.in[0]);
                k.axpy(n.c0, g.data.data(), gx.data.data(), static_cast<int64_t>(gx.size()));
                break;
            }
            case Op::add_const: {
                Tensor& gx = grad_buffer(n.in[0]);
                k.add(gx.data.data(), g.data.data(), gx.data.data(),
                      static_cast<int64_t>(gx.size()));
                break;
            }
            case Op::abs_op: {
                const Tensor& xv = value(n.in[0]);
                Tensor& gx = grad_buffer(n.in[0]);
                for (size_t i = 0; i < gx.size(); ++i) {
                    double x = xv.data[i];
                    double s = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
                    gx.data[i] += g.data[i] * s;
                }
                break;
            }
            case Op::mean_col_diff: {
                const Tensor& xv = value(n.in[0]);
                Tensor& gx = grad_buffer(n.in[0]);
                double gv = g.data[0] / static_cast<double>(xv.rows);
                for (int64_t i = 0; i < xv.rows; ++i) {
                    gx.at(i, 0) += gv;
                    gx.at(i, 1) -= gv;
                }
                break;
            }
            case Op::softmax_ce: {
                const Tensor& lv = value(n.in[0]);
                const Tensor& yv = value(n.in[1]);
                Tensor& gl = grad_buffer(n.in[0]);
                double scale = g.data[0] / static_cast<double>(lv.rows);
                for (int64_t i = 0; i < lv.rows; ++i) {
                    int64_t y = static_cast<int64_t>(yv.at(i, 0));
                    for (int64_t j = 0; j < lv.cols; ++j) {
                        double p = n.aux.at(i, j);
                        gl.at(i, j) += scale * (p - (j == y ? 1.0 : 0.0));
                    }
                }
                break;
            }
            case Op::tc_mws: {
                const Tensor& zv = value(n.in[0]);
                const Tensor& mv = value(n.in[1]);
                const Tensor& lvv = value(n.in[2]);
                int64_t rows = zv.rows, d = zv.cols;
                Tensor& gz = grad_buffer(n.in[0]);
                Tensor& gmu = grad_buffer(n.in[1]);
                Tensor& glv = grad_buffer(n.in[2]);
                double gscale = g.data[0] / static_cast<double>(rows);
                std::vector<double> joint(static_cast<size_t>(rows));
                std::vector<double> wbuf(static_cast<size_t>(rows));
                std::vector<double> ubuf(static_cast<size_t>(rows * d));
                std::vector<double> col(static_cast<size_t>(rows));
                for (int64_t a = 0; a < rows; ++a) {
                    for (int64_t b = 0; b < rows; ++b) {
                        const double* lp = n.aux.row(a * rows + b).data();
                        double s = 0.0;
                        for (int64_t i = 0; i < d; ++i) s += lp[i];
                        joint[static_cast<size_t>(b)] = s;
                    }
                    double lse = logsumexp(joint.data(), rows);
                    for (int64_t b = 0; b < rows; ++b)
                        wbuf[static_cast<size_t>(b)] =
                            std::exp(joint[static_cast<size_t>(b)] - lse);
                    for (int64_t i = 0; i < d; ++i) {
                        for (int64_t b = 0; b < rows; ++b)
                            col[static_cast<size_t>(b)] = n.aux.at(a * rows + b, i);
                        double lsei = logsumexp(col.data(), rows);
                        for (int64_t b = 0; b < rows; ++b)
                            ubuf[static_cast<size_t>(b * d + i)] =
                                std::exp(col[static_cast<size_t>(b)] - lsei);
                    }
                    for (int64_t b = 0; b < rows; ++b) {
                        const double* mr = mv.row(b).data();
                        const double* lr = lvv.row(b).data();
                        const double* zr = zv.row(a).data();
                        for (int64_t i = 0; i < d; ++i) {
                            double dlp = gscale * (wbuf[static_cast<size_t>(b)] -
                                                   ubuf[static_cast<size_t>(b * d + i)]);
                            double inv_var = std::exp(-lr[i]);
                            double diff = zr[i] - mr[i];
                            gz.at(a, i) += dlp * (-diff * inv_var);
                            gmu.at(b, i) += dlp * (diff * inv_var);
                            glv.at(b, i) += dlp * (-0.5) * (1.0 - diff * diff * inv_var);
                        }
                    }
                }
                break;
            }
            case Op::dip_penalty_i:
            case Op::dip_penalty_ii: {
                const Tensor& mv = value(n.in[0]);
                int64_t rows = mv.rows, d = mv.cols;
                // aux rows: centered V then G; dL/dmu = (2/N) V G (G symmetric)
                Tensor vmat(rows, d);
                for (int64_t i = 0; i < rows; ++i)
                    for (int64_t j = 0; j < d; ++j) vmat.at(i, j) = n.aux.at(i, j);
                Tensor gmat(d, d);
                for (int64_t i = 0; i < d; ++i)
                    for (int64_t j = 0; j < d; ++j) gmat.at(i, j) = n.aux.at(rows + i, j);
                Tensor dmu(rows, d);
                k.matmul_nn(vmat.data.data(), gmat.data.data(), dmu.data.data(), rows, d, d);
                double gscale = g.data[0] * 2.0 / static_cast<double>(rows);
                Tensor& gm = grad_buffer(n.in[0]);
                k.axpy(gscale, dmu.data.data(), gm.data.data(), static_cast<int64_t>(gm.size()));
                if (n.op == Op::dip_penalty_ii) {
                    const Tensor& lvv = value(n.in[1]);
                    Tensor& glv = grad_buffer(n.in[1]);
                    double s = g.data[0] / static_cast<double>(rows);
                    for (int64_t i = 0; i < rows; ++i)
                        for (int64_t j = 0; j < d; ++j)
                            glv.at(i, j) += s * gmat.at(j, j) * std::exp(lvv.at(i, j));
                }
                break;
            }
        }
    }
}

}  // namespace untangle
