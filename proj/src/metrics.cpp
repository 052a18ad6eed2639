#include "untangle/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace untangle {

namespace {

// Per-metric stream offsets on top of rng_streams::metric_eval, so one
// evaluation seed can drive every estimator without overlapping draws.
constexpr uint64_t kStreamMi = 0;
constexpr uint64_t kStreamBetaVae = 1;
constexpr uint64_t kStreamFactorVae = 2;
constexpr uint64_t kStreamDciSap = 3;
constexpr uint64_t kStreamUnsup = 4;
constexpr uint64_t kStreamSplit = 5;

Rng metric_rng(uint64_t seed, uint64_t which) {
    return Rng(seed, rng_streams::metric_eval * 64 + which);
}

FactorMatrix draw_factors(const FactorSpace& space, int64_t n, Rng& rng) {
    FactorMatrix m(n, space.num_factors());
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < space.num_factors(); ++j)
            m.at(i, j) = static_cast<int64_t>(
                rng.below(static_cast<uint64_t>(space.factor(j).cardinality)));
    return m;
}

std::vector<int64_t> nondegenerate_factors(const FactorSpace& space) {
    std::vector<int64_t> out;
    for (int64_t j = 0; j < space.num_factors(); ++j)
        if (space.factor(j).cardinality >= 2) out.push_back(j);
    return out;
}

double entropy_from_counts(const std::vector<int64_t>& counts, int64_t total) {
    double h = 0.0;
    for (int64_t c : counts) {
        if (c <= 0) continue;
        double p = static_cast<double>(c) / static_cast<double>(total);
        h -= p * std::log(p);
    }
    return h;
}

// top and second-top of a range, ties by lowest index
std::pair<double, double> top_two(const double* v, int64_t n) {
    double top = -1.0, second = -1.0;
    for (int64_t i = 0; i < n; ++i) {
        if (v[i] > top) {
            second = top;
            top = v[i];
        } else if (v[i] > second) {
            second = v[i];
        }
    }
    if (n < 2) second = 0.0;
    return {top, second < 0.0 ? 0.0 : second};
}

std::vector<int64_t> derive_cardinalities(const FactorMatrix& factors,
                                          const std::vector<int64_t>& provided) {
    if (!provided.empty()) {
        if (static_cast<int64_t>(provided.size()) != factors.cols)
            throw shape_error("cardinality list does not match factor columns");
        return provided;
    }
    std::vector<int64_t> cards(static_cast<size_t>(factors.cols), 1);
    for (int64_t i = 0; i < factors.rows; ++i)
        for (int64_t j = 0; j < factors.cols; ++j)
            cards[static_cast<size_t>(j)] =
                std::max(cards[static_cast<size_t>(j)], factors.at(i, j) + 1);
    return cards;
}

// observed-distinct test; a factor column that never varies carries no signal
bool column_varies(const FactorMatrix& factors, int64_t j) {
    for (int64_t i = 1; i < factors.rows; ++i)
        if (factors.at(i, j) != factors.at(0, j)) return true;
    return false;
}

std::vector<int64_t> shuffled_indices(int64_t n, Rng& rng) {
    std::vector<int64_t> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    return idx;
}

}  // namespace

Tensor CheckpointRepresentation::codes(const FactorWorld& world,
                                       const FactorMatrix& factors) const {
    // render+encode in slices to bound the transient observation buffer
    constexpr int64_t kChunk = 2048;
    Tensor out(factors.rows, ckpt_->arch.latent_dim);
    for (int64_t start = 0; start < factors.rows; start += kChunk) {
        int64_t count = std::min(kChunk, factors.rows - start);
        FactorMatrix slice(count, factors.cols);
        for (int64_t i = 0; i < count; ++i)
            for (int64_t j = 0; j < factors.cols; ++j) slice.at(i, j) = factors.at(start + i, j);
        Tensor mu = encode(*ckpt_, world.render(slice));
        for (int64_t i = 0; i < count; ++i)
            for (int64_t j = 0; j < mu.cols; ++j) out.at(start + i, j) = mu.at(i, j);
    }
    return out;
}

FactorMatrix discretize_quantile(const Tensor& reps, int64_t bins) {
    if (bins < 2) throw range_error("discretize: bins must be >= 2");
    if (reps.rows < bins) throw range_error("discretize: need at least `bins` samples");
    FactorMatrix out(reps.rows, reps.cols);
    std::vector<double> sorted(static_cast<size_t>(reps.rows));
    std::vector<double> edges;
    for (int64_t j = 0; j < reps.cols; ++j) {
        for (int64_t i = 0; i < reps.rows; ++i) sorted[static_cast<size_t>(i)] = reps.at(i, j);
        std::sort(sorted.begin(), sorted.end());
        edges.clear();
        for (int64_t b = 1; b < bins; ++b)
            edges.push_back(sorted[static_cast<size_t>((b * reps.rows) / bins)]);
        for (int64_t i = 0; i < reps.rows; ++i) {
            double v = reps.at(i, j);
            // bin = number of edges <= v; exact under monotone transforms
            int64_t bin = std::upper_bound(edges.begin(), edges.end(), v) - edges.begin();
            out.at(i, j) = bin;
        }
    }
    return out;
}

MIMatrix discretize_and_mi(const Tensor& reps, const FactorMatrix& factors, int64_t bins) {
    if (reps.rows != factors.rows)
        throw shape_error("discretize_and_mi: reps and factors row counts differ");
    FactorMatrix binned = discretize_quantile(reps, bins);
    int64_t n = reps.rows, d = reps.cols, k = factors.cols;
    std::vector<int64_t> cards = derive_cardinalities(factors, {});

    MIMatrix out;
    out.mi = Tensor(d, k);
    out.factor_entropy.resize(static_cast<size_t>(k));
    out.code_entropy.resize(static_cast<size_t>(d));

    std::vector<int64_t> code_counts(static_cast<size_t>(bins));
    for (int64_t i = 0; i < d; ++i) {
        std::fill(code_counts.begin(), code_counts.end(), 0);
        for (int64_t r = 0; r < n; ++r) ++code_counts[static_cast<size_t>(binned.at(r, i))];
        out.code_entropy[static_cast<size_t>(i)] = entropy_from_counts(code_counts, n);
    }

    for (int64_t j = 0; j < k; ++j) {
        int64_t card = cards[static_cast<size_t>(j)];
        std::vector<int64_t> factor_counts(static_cast<size_t>(card), 0);
        for (int64_t r = 0; r < n; ++r) ++factor_counts[static_cast<size_t>(factors.at(r, j))];
        out.factor_entropy[static_cast<size_t>(j)] = entropy_from_counts(factor_counts, n);

        for (int64_t i = 0; i < d; ++i) {
            std::vector<int64_t> joint(static_cast<size_t>(bins * card), 0);
            std::fill(code_counts.begin(), code_counts.end(), 0);
            for (int64_t r = 0; r < n; ++r) {
                int64_t b = binned.at(r, i);
                ++joint[static_cast<size_t>(b * card + factors.at(r, j))];
                ++code_counts[static_cast<size_t>(b)];
            }
            double mi = 0.0;
            for (int64_t b = 0; b < bins; ++b)
                for (int64_t f = 0; f < card; ++f) {
                    int64_t c = joint[static_cast<size_t>(b * card + f)];
                    if (c <= 0) continue;
                    double pxy = static_cast<double>(c) / static_cast<double>(n);
                    double px = static_cast<double>(code_counts[static_cast<size_t>(b)]) /
                                static_cast<double>(n);
                    double py = static_cast<double>(factor_counts[static_cast<size_t>(f)]) /
                                static_cast<double>(n);
                    mi += pxy * std::log(pxy / (px * py));
                }
            out.mi.at(i, j) = mi < 0.0 ? 0.0 : mi;  // clip tiny negative rounding
        }
    }
    return out;
}

double mig_from_mi(const MIMatrix& m) {
    int64_t d = m.mi.rows, k = m.mi.cols;
    double total = 0.0;
    int64_t counted = 0;
    std::vector<double> col(static_cast<size_t>(d));
    for (int64_t j = 0; j < k; ++j) {
        double h = m.factor_entropy[static_cast<size_t>(j)];
        if (h <= 0.0) continue;
        for (int64_t i = 0; i < d; ++i) col[static_cast<size_t>(i)] = m.mi.at(i, j);
        auto [top, second] = top_two(col.data(), d);
        total += (top - second) / h;
        ++counted;
    }
    if (counted == 0) throw metric_undefined("mig: all factors constant");
    return total / static_cast<double>(counted);
}

MetricReport mig(const Tensor& reps, const FactorMatrix& factors, int64_t bins, uint64_t seed) {
    MIMatrix m = discretize_and_mi(reps, factors, bins);
    MetricReport r;
    r.name = "mig";
    r.seed = seed;
    r.n_train = reps.rows;
    r.score = mig_from_mi(m);
    r.aux = m.mi;
    return r;
}

double modularity_from_mi(const MIMatrix& m) {
    int64_t d = m.mi.rows, k = m.mi.cols;
    if (k < 2) throw range_error("modularity: needs k >= 2 factors");
    if (d < 1) throw range_error("modularity: needs d >= 1 code dims");
    double total = 0.0;
    for (int64_t i = 0; i < d; ++i) {
        double theta = 0.0;
        int64_t arg = 0;
        for (int64_t j = 0; j < k; ++j)
            if (m.mi.at(i, j) > theta) {
                theta = m.mi.at(i, j);
                arg = j;
            }
        if (theta <= 0.0) continue;  // contributes 0
        double off = 0.0;
        for (int64_t j = 0; j < k; ++j) {
            if (j == arg) continue;
            off += m.mi.at(i, j) * m.mi.at(i, j);
        }
        total += 1.0 - off / (theta * theta * static_cast<double>(k - 1));
    }
    return total / static_cast<double>(d);
}

MetricReport modularity(const Tensor& reps, const FactorMatrix& factors, int64_t bins,
                        uint64_t seed) {
    MIMatrix m = discretize_and_mi(reps, factors, bins);
    MetricReport r;
    r.name = "modularity";
    r.seed = seed;
    r.n_train = reps.rows;
    r.score = modularity_from_mi(m);
    r.aux = m.mi;
    return r;
}

// ---- BetaVAE score ---------------------------------------------------------

MetricReport beta_vae_score(const FactorWorld& world, const Representation& rep,
                            const EvalParams& params, uint64_t seed) {
    const FactorSpace& space = world.space();
    std::vector<int64_t> active = nondegenerate_factors(space);
    if (active.empty()) throw metric_undefined("beta_vae_score: no non-degenerate factor");
    int64_t k = space.num_factors();
    int64_t d = rep.dim();
    int64_t n_total = params.train_points + params.test_points;
    Rng rng = metric_rng(seed, kStreamBetaVae);

    Tensor features(n_total, d);
    Tensor labels(n_total, 1);

    // Chunk several training points per representation call.
    int64_t rows_per_point = 2 * params.pair_batch;
    int64_t points_per_chunk = std::max<int64_t>(1, 4096 / rows_per_point);
    for (int64_t start = 0; start < n_total; start += points_per_chunk) {
        int64_t count = std::min(points_per_chunk, n_total - start);
        FactorMatrix rows(count * rows_per_point, k);
        for (int64_t p = 0; p < count; ++p) {
            int64_t fixed = active[rng.below(active.size())];
            labels.at(start + p, 0) = static_cast<double>(fixed);
            for (int64_t pair = 0; pair < params.pair_batch; ++pair) {
                int64_t r0 = p * rows_per_point + 2 * pair;
                for (int64_t j = 0; j < k; ++j) {
                    rows.at(r0, j) = static_cast<int64_t>(
                        rng.below(static_cast<uint64_t>(space.factor(j).cardinality)));
                    rows.at(r0 + 1, j) = static_cast<int64_t>(
                        rng.below(static_cast<uint64_t>(space.factor(j).cardinality)));
                }
                rows.at(r0 + 1, fixed) = rows.at(r0, fixed);
            }
        }
        Tensor c = rep.codes(world, rows);
        for (int64_t p = 0; p < count; ++p) {
            for (int64_t j = 0; j < d; ++j) {
                double acc = 0.0;
                for (int64_t pair = 0; pair < params.pair_batch; ++pair) {
                    int64_t r0 = p * rows_per_point + 2 * pair;
                    acc += std::abs(c.at(r0, j) - c.at(r0 + 1, j));
                }
                features.at(start + p, j) = acc / static_cast<double>(params.pair_batch);
            }
        }
    }

    // Multinomial logistic regression, zero-init (keeps the whole pipeline
    // exactly equivariant under permutations of code dimensions).
    ParamSet clf;
    clf.add("W", Tensor::zeros(d, k));
    clf.add("b", Tensor::zeros(1, k));
    Tensor train_x(params.train_points, d), train_y(params.train_points, 1);
    for (int64_t i = 0; i < params.train_points; ++i) {
        for (int64_t j = 0; j < d; ++j) train_x.at(i, j) = features.at(i, j);
        train_y.at(i, 0) = labels.at(i, 0);
    }
    AdamConfig adam;
    adam.lr = params.logreg_lr;
    for (int64_t step = 0; step < params.logreg_steps; ++step) {
        Graph g;
        int logits = g.affine(g.constant(train_x), g.param(clf, "W"), g.param(clf, "b"));
        int loss = g.softmax_ce(logits, g.constant(train_y));
        g.backward(loss);
        adam_step(clf, g.param_gradients(clf), adam);
    }

    // Test accuracy.
    int64_t hits = 0;
    {
        Tensor test_x(params.test_points, d);
        for (int64_t i = 0; i < params.test_points; ++i)
            for (int64_t j = 0; j < d; ++j)
                test_x.at(i, j) = features.at(params.train_points + i, j);
        Graph g;
        int logits = g.affine(g.constant(std::move(test_x)), g.param(clf, "W"), g.param(clf, "b"));
        const Tensor& lv = g.value(logits);
        for (int64_t i = 0; i < params.test_points; ++i) {
            int64_t best = 0;
            for (int64_t j = 1; j < k; ++j)
                if (lv.at(i, j) > lv.at(i, best)) best = j;
            if (best == static_cast<int64_t>(labels.at(params.train_points + i, 0))) ++hits;
        }
    }

    MetricReport r;
    r.name = "beta_vae_score";
    r.seed = seed;
    r.n_train = params.train_points;
    r.n_test = params.test_points;
    r.score = static_cast<double>(hits) / static_cast<double>(params.test_points);
    r.extra["chance"] = 1.0 / static_cast<double>(active.size());
    return r;
}

// ---- FactorVAE score -------------------------------------------------------

MetricReport factor_vae_score(const FactorWorld& world, const Representation& rep,
                              const EvalParams& params, uint64_t seed) {
    const FactorSpace& space = world.space();
    std::vector<int64_t> active = nondegenerate_factors(space);
    if (active.empty()) throw metric_undefined("factor_vae_score: no non-degenerate factor");
    int64_t k = space.num_factors();
    int64_t d = rep.dim();
    Rng rng = metric_rng(seed, kStreamFactorVae);

    // Global per-dimension std over a fresh sample.
    FactorMatrix std_sample = draw_factors(space, params.std_samples, rng);
    Tensor std_codes = rep.codes(world, std_sample);
    std::vector<double> sigma(static_cast<size_t>(d), 0.0);
    for (int64_t j = 0; j < d; ++j) {
        double mean = 0.0, sq = 0.0;
        for (int64_t i = 0; i < std_codes.rows; ++i) mean += std_codes.at(i, j);
        mean /= static_cast<double>(std_codes.rows);
        for (int64_t i = 0; i < std_codes.rows; ++i) {
            double v = std_codes.at(i, j) - mean;
            sq += v * v;
        }
        sigma[static_cast<size_t>(j)] = std::sqrt(sq / static_cast<double>(std_codes.rows));
    }
    // Prune dimensions whose normalized variance falls below the threshold
    // (a dim with sigma == 0 cannot be normalized and has variance 0).
    std::vector<int64_t> kept;
    for (int64_t j = 0; j < d; ++j) {
        double nv = sigma[static_cast<size_t>(j)] > 0.0 ? 1.0 : 0.0;
        if (nv >= params.prune_threshold) kept.push_back(j);
    }

    MetricReport r;
    r.name = "factor_vae_score";
    r.seed = seed;
    r.n_train = params.train_points;
    r.n_test = params.test_points;
    if (kept.empty()) {
        r.score = 0.0;
        r.collapsed = true;
        return r;
    }

    int64_t n_votes = params.train_points + params.test_points;
    std::vector<int64_t> vote_dim(static_cast<size_t>(n_votes));
    std::vector<int64_t> vote_factor(static_cast<size_t>(n_votes));

    int64_t votes_per_chunk = std::max<int64_t>(1, 4096 / params.pair_batch);
    for (int64_t start = 0; start < n_votes; start += votes_per_chunk) {
        int64_t count = std::min(votes_per_chunk, n_votes - start);
        FactorMatrix rows(count * params.pair_batch, k);
        for (int64_t vtx = 0; vtx < count; ++vtx) {
            int64_t fixed = active[rng.below(active.size())];
            vote_factor[static_cast<size_t>(start + vtx)] = fixed;
            int64_t value = static_cast<int64_t>(
                rng.below(static_cast<uint64_t>(space.factor(fixed).cardinality)));
            for (int64_t b = 0; b < params.pair_batch; ++b) {
                int64_t row = vtx * params.pair_batch + b;
                for (int64_t j = 0; j < k; ++j)
                    rows.at(row, j) =
                        j == fixed ? value
                                   : static_cast<int64_t>(rng.below(static_cast<uint64_t>(
                                         space.factor(j).cardinality)));
            }
        }
        Tensor c = rep.codes(world, rows);
        for (int64_t vtx = 0; vtx < count; ++vtx) {
            int64_t best_dim = -1;
            double best_var = 0.0;
            for (int64_t kj : kept) {
                double mean = 0.0, sq = 0.0;
                for (int64_t b = 0; b < params.pair_batch; ++b) {
                    double v = c.at(vtx * params.pair_batch + b, kj) / sigma[static_cast<size_t>(kj)];
                    mean += v;
                    sq += v * v;
                }
                mean /= static_cast<double>(params.pair_batch);
                double var = sq / static_cast<double>(params.pair_batch) - mean * mean;
                if (best_dim < 0 || var < best_var) {
                    best_dim = kj;
                    best_var = var;
                }
            }
            vote_dim[static_cast<size_t>(start + vtx)] = best_dim;
        }
    }

    // Majority-vote table dim -> factor from the training votes.
    Tensor table(d, k);
    for (int64_t i = 0; i < params.train_points; ++i)
        table.at(vote_dim[static_cast<size_t>(i)], vote_factor[static_cast<size_t>(i)]) += 1.0;
    std::vector<int64_t> assignment(static_cast<size_t>(d), -1);
    for (int64_t dim = 0; dim < d; ++dim) {
        double best = 0.0;
        for (int64_t j = 0; j < k; ++j)
            if (table.at(dim, j) > best) {
                best = table.at(dim, j);
                assignment[static_cast<size_t>(dim)] = j;
            }
    }

    int64_t hits = 0;
    for (int64_t i = params.train_points; i < n_votes; ++i)
        if (assignment[static_cast<size_t>(vote_dim[static_cast<size_t>(i)])] ==
            vote_factor[static_cast<size_t>(i)])
            ++hits;
    r.score = static_cast<double>(hits) / static_cast<double>(params.test_points);
    r.aux = table;
    r.extra["chance"] = 1.0 / static_cast<double>(active.size());
    r.extra["kept_dims"] = kept.size();
    return r;
}

// ---- DCI disentanglement ---------------------------------------------------

namespace {

double entropy_base(const double* p, int64_t n, double base) {
    double h = 0.0;
    for (int64_t i = 0; i < n; ++i)
        if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
    return h / std::log(base);
}

}  // namespace

double dci_from_importance(const Tensor& importance) {
    int64_t d = importance.rows, m = importance.cols;
    if (m < 1) throw range_error("dci: no factors");
    double total_importance = 0.0;
    for (double v : importance.data) total_importance += v;
    if (total_importance <= 0.0) return 0.0;
    double score = 0.0;
    std::vector<double> p(static_cast<size_t>(m));
    for (int64_t i = 0; i < d; ++i) {
        double row_sum = 0.0;
        for (int64_t j = 0; j < m; ++j) row_sum += importance.at(i, j);
        double rho = row_sum / total_importance;
        if (row_sum <= 0.0) continue;  // weight zero, D_i irrelevant
        for (int64_t j = 0; j < m; ++j) p[static_cast<size_t>(j)] = importance.at(i, j) / row_sum;
        double disent =
            m == 1 ? 1.0 : 1.0 - entropy_base(p.data(), m, static_cast<double>(m));
        score += rho * disent;
    }
    return score;
}

MetricReport dci_disentanglement(const Tensor& reps, const FactorMatrix& factors,
                                 const ForestParams& forest, int64_t train_n, int64_t test_n,
                                 uint64_t seed, const std::vector<int64_t>& cardinalities) {
    if (reps.rows != factors.rows) throw shape_error("dci: reps/factors row mismatch");
    if (reps.rows < train_n + test_n)
        throw range_error("dci: need " + std::to_string(train_n + test_n) + " rows, have " +
                          std::to_string(reps.rows));
    std::vector<int64_t> cards = derive_cardinalities(factors, cardinalities);

    std::vector<int64_t> included;
    for (int64_t j = 0; j < factors.cols; ++j)
        if (cards[static_cast<size_t>(j)] >= 2 && column_varies(factors, j)) included.push_back(j);
    if (included.empty()) throw metric_undefined("dci: all factors degenerate");

    Rng split_rng = metric_rng(seed, kStreamSplit);
    std::vector<int64_t> idx = shuffled_indices(reps.rows, split_rng);

    int64_t d = reps.cols;
    Tensor train_x(train_n, d), test_x(test_n, d);
    for (int64_t i = 0; i < train_n; ++i)
        for (int64_t j = 0; j < d; ++j) train_x.at(i, j) = reps.at(idx[static_cast<size_t>(i)], j);
    for (int64_t i = 0; i < test_n; ++i)
        for (int64_t j = 0; j < d; ++j)
            test_x.at(i, j) = reps.at(idx[static_cast<size_t>(train_n + i)], j);

    int64_t m = static_cast<int64_t>(included.size());
    Tensor importance(d, m);  // per-factor normalized
    double informativeness_sum = 0.0;
    double completeness_sum = 0.0;

    for (int64_t jj = 0; jj < m; ++jj) {
        int64_t j = included[static_cast<size_t>(jj)];
        std::vector<int64_t> train_y(static_cast<size_t>(train_n));
        std::vector<int64_t> test_y(static_cast<size_t>(test_n));
        for (int64_t i = 0; i < train_n; ++i)
            train_y[static_cast<size_t>(i)] = factors.at(idx[static_cast<size_t>(i)], j);
        for (int64_t i = 0; i < test_n; ++i)
            test_y[static_cast<size_t>(i)] = factors.at(idx[static_cast<size_t>(train_n + i)], j);

        Forest f(train_x, train_y, cards[static_cast<size_t>(j)], forest,
                 seed + 7919 * static_cast<uint64_t>(j));
        const std::vector<double>& imp = f.importance();
        double col_sum = 0.0;
        for (double v : imp) col_sum += v;
        for (int64_t i = 0; i < d; ++i)
            importance.at(i, jj) = col_sum > 0.0 ? imp[static_cast<size_t>(i)] / col_sum : 0.0;
        informativeness_sum += f.accuracy(test_x, test_y);

        std::vector<double> colp(static_cast<size_t>(d));
        for (int64_t i = 0; i < d; ++i) colp[static_cast<size_t>(i)] = importance.at(i, jj);
        completeness_sum +=
            d == 1 ? 1.0 : 1.0 - entropy_base(colp.data(), d, static_cast<double>(d));
    }

    MetricReport r;
    r.name = "dci_disentanglement";
    r.seed = seed;
    r.n_train = train_n;
    r.n_test = test_n;
    r.score = dci_from_importance(importance);
    r.aux = importance;
    r.extra["completeness"] = completeness_sum / static_cast<double>(m);
    r.extra["informativeness"] = informativeness_sum / static_cast<double>(m);
    return r;
}

// ---- SAP score --------------------------------------------------------------

MetricReport sap_score(const Tensor& reps, const FactorMatrix& factors, int64_t train_n,
                       int64_t test_n, uint64_t seed, const std::vector<int64_t>& cardinalities) {
    if (reps.rows != factors.rows) throw shape_error("sap: reps/factors row mismatch");
    if (reps.rows < train_n + test_n)
        throw range_error("sap: need " + std::to_string(train_n + test_n) + " rows, have " +
                          std::to_string(reps.rows));
    std::vector<int64_t> cards = derive_cardinalities(factors, cardinalities);

    std::vector<int64_t> included;
    for (int64_t j = 0; j < factors.cols; ++j)
        if (cards[static_cast<size_t>(j)] >= 2 && column_varies(factors, j)) included.push_back(j);
    if (included.empty()) throw metric_undefined("sap: all factors degenerate");

    Rng split_rng = metric_rng(seed, kStreamSplit);
    std::vector<int64_t> idx = shuffled_indices(reps.rows, split_rng);
    int64_t d = reps.cols;
    int64_t k = factors.cols;

    Tensor s(d, k);  // held-out R^2, clamped at 0
    for (int64_t j : included) {
        double card1 = static_cast<double>(cards[static_cast<size_t>(j)] - 1);
        auto norm = [&](int64_t raw) {
            return card1 > 0.0 ? static_cast<double>(raw) / card1 : 0.0;
        };
        // test-set moments for SS_tot
        double ymean_test = 0.0;
        for (int64_t i = 0; i < test_n; ++i)
            ymean_test += norm(factors.at(idx[static_cast<size_t>(train_n + i)], j));
        ymean_test /= static_cast<double>(test_n);
        double ss_tot = 0.0;
        for (int64_t i = 0; i < test_n; ++i) {
            double y = norm(factors.at(idx[static_cast<size_t>(train_n + i)], j)) - ymean_test;
            ss_tot += y * y;
        }

        for (int64_t dim = 0; dim < d; ++dim) {
            // univariate OLS on the training split
            double xm = 0.0, ym = 0.0;
            for (int64_t i = 0; i < train_n; ++i) {
                xm += reps.at(idx[static_cast<size_t>(i)], dim);
                ym += norm(factors.at(idx[static_cast<size_t>(i)], j));
            }
            xm /= static_cast<double>(train_n);
            ym /= static_cast<double>(train_n);
            double sxx = 0.0, sxy = 0.0;
            for (int64_t i = 0; i < train_n; ++i) {
                double xv = reps.at(idx[static_cast<size_t>(i)], dim) - xm;
                double yv = norm(factors.at(idx[static_cast<size_t>(i)], j)) - ym;
                sxx += xv * xv;
                sxy += xv * yv;
            }
            double slope = sxx > 0.0 ? sxy / sxx : 0.0;
            double intercept = ym - slope * xm;
            double ss_res = 0.0;
            for (int64_t i = 0; i < test_n; ++i) {
                double pred =
                    slope * reps.at(idx[static_cast<size_t>(train_n + i)], dim) + intercept;
                double err = pred - norm(factors.at(idx[static_cast<size_t>(train_n + i)], j));
                ss_res += err * err;
            }
            double r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
            s.at(dim, j) = r2 > 0.0 ? r2 : 0.0;
        }
    }

    double total = 0.0;
    std::vector<double> col(static_cast<size_t>(d));
    for (int64_t j : included) {
        for (int64_t i = 0; i < d; ++i) col[static_cast<size_t>(i)] = s.at(i, j);
        auto [top, second] = top_two(col.data(), d);
        total += top - second;
    }

    MetricReport r;
    r.name = "sap";
    r.seed = seed;
    r.n_train = train_n;
    r.n_test = test_n;
    r.score = total / static_cast<double>(included.size());
    r.aux = s;
    return r;
}

// ---- unsupervised scores -----------------------------------------------------

double gaussian_total_correlation(const Tensor& codes, double ridge) {
    int64_t n = codes.rows, d = codes.cols;
    if (n < 2) throw range_error("gaussian_tc: need at least 2 samples");
    std::vector<double> mean(static_cast<size_t>(d), 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += codes.at(i, j);
    for (auto& v : mean) v /= static_cast<double>(n);
    Tensor cov(d, d);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t a = 0; a < d; ++a) {
            double va = codes.at(i, a) - mean[static_cast<size_t>(a)];
            for (int64_t b = a; b < d; ++b)
                cov.at(a, b) += va * (codes.at(i, b) - mean[static_cast<size_t>(b)]);
        }
    for (int64_t a = 0; a < d; ++a)
        for (int64_t b = a; b < d; ++b) {
            cov.at(a, b) /= static_cast<double>(n);
            cov.at(b, a) = cov.at(a, b);
        }
    for (int64_t a = 0; a < d; ++a) cov.at(a, a) += ridge;

    // Cholesky; ln det = 2 sum ln L_ii
    Tensor l(d, d);
    for (int64_t i = 0; i < d; ++i) {
        for (int64_t j = 0; j <= i; ++j) {
            double s = cov.at(i, j);
            for (int64_t p = 0; p < j; ++p) s -= l.at(i, p) * l.at(j, p);
            if (i == j) {
                if (s <= 0.0)
                    throw numeric_error("gaussian_tc: covariance singular after ridge");
                l.at(i, i) = std::sqrt(s);
            } else {
                l.at(i, j) = s / l.at(j, j);
            }
        }
    }
    double log_det = 0.0, log_diag = 0.0;
    for (int64_t i = 0; i < d; ++i) {
        log_det += 2.0 * std::log(l.at(i, i));
        log_diag += std::log(cov.at(i, i));
    }
    return 0.5 * (log_diag - log_det);
}

UnsupervisedScores unsupervised_scores(const Checkpoint& ckpt, const FactorWorld& world,
                                       int64_t n, uint64_t seed) {
    if (n < 1000) throw range_error("unsupervised_scores: n must be >= 1000");
    Rng rng = metric_rng(seed, kStreamUnsup);
    const FactorSpace& space = world.space();

    Tensor mu_all(n, ckpt.arch.latent_dim);
    double recon_sum = 0.0, kl_sum = 0.0;
    constexpr int64_t kChunk = 2048;
    for (int64_t start = 0; start < n; start += kChunk) {
        int64_t count = std::min(kChunk, n - start);
        FactorMatrix factors = draw_factors(space, count, rng);
        ObservationBatch x = world.render(factors);
        auto [mu, lv] = encode_full(ckpt, x);
        Tensor z(count, ckpt.arch.latent_dim);
        for (int64_t i = 0; i < count; ++i)
            for (int64_t j = 0; j < z.cols; ++j)
                z.at(i, j) = mu.at(i, j) + std::exp(0.5 * lv.at(i, j)) * rng.normal();
        Tensor logits = decode_logits(ckpt, z);
        for (int64_t i = 0; i < count; ++i) {
            for (int64_t p = 0; p < x.cols; ++p) {
                double lgt = logits.at(i, p), t = x.at(i, p);
                double a = lgt > 0.0 ? lgt : 0.0;
                recon_sum += a - lgt * t + std::log1p(std::exp(-std::abs(lgt)));
            }
            for (int64_t j = 0; j < mu.cols; ++j) {
                double mval = mu.at(i, j), lval = lv.at(i, j);
                kl_sum += 0.5 * (std::exp(lval) + mval * mval - 1.0 - lval);
            }
            for (int64_t j = 0; j < mu.cols; ++j) mu_all.at(start + i, j) = mu.at(i, j);
        }
    }

    UnsupervisedScores s;
    s.recon = recon_sum / static_cast<double>(n);
    s.kl = kl_sum / static_cast<double>(n);
    s.elbo = -(s.recon + s.kl);
    s.gaussian_tc = gaussian_total_correlation(mu_all);
    return s;
}

// ---- bundled evaluation -------------------------------------------------------

json EvalParams::to_json() const {
    json j;
    j["bins"] = bins;
    j["mi_samples"] = mi_samples;
    j["train_points"] = train_points;
    j["test_points"] = test_points;
    j["pair_batch"] = pair_batch;
    j["std_samples"] = std_samples;
    j["prune_threshold"] = prune_threshold;
    j["logreg_steps"] = logreg_steps;
    j["logreg_lr"] = logreg_lr;
    j["forest_trees"] = forest.trees;
    j["forest_depth"] = forest.max_depth;
    j["unsup_samples"] = unsup_samples;
    return j;
}

EvalParams EvalParams::from_json(const json& j) {
    require_keys_subset(j,
                        {"bins", "mi_samples", "train_points", "test_points", "pair_batch",
                         "std_samples", "prune_threshold", "logreg_steps", "logreg_lr",
                         "forest_trees", "forest_depth", "unsup_samples"},
                        "eval params");
    EvalParams p;
    if (j.contains("bins")) p.bins = j["bins"].get<int64_t>();
    if (j.contains("mi_samples")) p.mi_samples = j["mi_samples"].get<int64_t>();
    if (j.contains("train_points")) p.train_points = j["train_points"].get<int64_t>();
    if (j.contains("test_points")) p.test_points = j["test_points"].get<int64_t>();
    if (j.contains("pair_batch")) p.pair_batch = j["pair_batch"].get<int64_t>();
    if (j.contains("std_samples")) p.std_samples = j["std_samples"].get<int64_t>();
    if (j.contains("prune_threshold")) p.prune_threshold = j["prune_threshold"].get<double>();
    if (j.contains("logreg_steps")) p.logreg_steps = j["logreg_steps"].get<int64_t>();
    if (j.contains("logreg_lr")) p.logreg_lr = j["logreg_lr"].get<double>();
    if (j.contains("forest_trees")) p.forest.trees = j["forest_trees"].get<int64_t>();
    if (j.contains("forest_depth")) p.forest.max_depth = j["forest_depth"].get<int64_t>();
    if (j.contains("unsup_samples")) p.unsup_samples = j["unsup_samples"].get<int64_t>();
    return p;
}

std::vector<std::pair<std::string, double>> EvaluationResult::rows() const {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& m : metrics) {
        out.emplace_back(m.name, m.score);
        if (m.extra.contains("completeness"))
            out.emplace_back(m.name + "_completeness", m.extra["completeness"].get<double>());
        if (m.extra.contains("informativeness"))
            out.emplace_back(m.name + "_informativeness",
                             m.extra["informativeness"].get<double>());
    }
    if (has_unsup) {
        out.emplace_back("recon", unsup.recon);
        out.emplace_back("elbo", unsup.elbo);
        out.emplace_back("kl", unsup.kl);
        out.emplace_back("gaussian_tc", unsup.gaussian_tc);
    }
    return out;
}

EvaluationResult evaluate_representation(const FactorWorld& world, const Representation& rep,
                                         const EvalParams& params, uint64_t seed) {
    EvaluationResult res;
    const FactorSpace& space = world.space();

    std::vector<int64_t> cards;
    for (const auto& f : space.factors()) cards.push_back(f.cardinality);

    {
        Rng rng = metric_rng(seed, kStreamMi);
        FactorMatrix factors = draw_factors(space, params.mi_samples, rng);
        Tensor codes = rep.codes(world, factors);
        MIMatrix m = discretize_and_mi(codes, factors, params.bins);
        MetricReport migr;
        migr.name = "mig";
        migr.seed = seed;
        migr.n_train = params.mi_samples;
        migr.score = mig_from_mi(m);
        migr.aux = m.mi;
        res.metrics.push_back(std::move(migr));
        MetricReport modr;
        modr.name = "modularity";
        modr.seed = seed;
        modr.n_train = params.mi_samples;
        modr.score = modularity_from_mi(m);
        modr.aux = m.mi;
        res.metrics.push_back(std::move(modr));
    }

    res.metrics.push_back(beta_vae_score(world, rep, params, seed));
    res.metrics.push_back(factor_vae_score(world, rep, params, seed));

    {
        Rng rng = metric_rng(seed, kStreamDciSap);
        int64_t n = params.train_points + params.test_points;
        FactorMatrix factors = draw_factors(space, n, rng);
        Tensor codes = rep.codes(world, factors);
        res.metrics.push_back(dci_disentanglement(codes, factors, params.forest,
                                                  params.train_points, params.test_points, seed,
                                                  cards));
        res.metrics.push_back(
            sap_score(codes, factors, params.train_points, params.test_points, seed, cards));
    }
    return res;
}

EvaluationResult evaluate_checkpoint(const Checkpoint& ckpt, const FactorWorld& world,
                                     const EvalParams& params, uint64_t seed) {
    CheckpointRepresentation rep(ckpt);
    EvaluationResult res = evaluate_representation(world, rep, params, seed);
    res.unsup = unsupervised_scores(ckpt, world, params.unsup_samples, seed);
    res.has_unsup = true;
    return res;
}

}  // namespace untangle
