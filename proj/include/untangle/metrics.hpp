#pragma once

#include <functional>
#include <memory>

#include "untangle/forest.hpp"
#include "untangle/train.hpp"

namespace untangle {

// A representation under evaluation: maps factor configurations to codes.
// Checkpoint-backed representations render observations and encode them;
// synthetic ones (ground truth, rotations, constants) map factors directly,
// which is how "representation = exact factors" style baselines are run.
class Representation {
public:
    virtual ~Representation() = default;
    virtual int64_t dim() const = 0;
    virtual Tensor codes(const FactorWorld& world, const FactorMatrix& factors) const = 0;
};

class CheckpointRepresentation : public Representation {
public:
    explicit CheckpointRepresentation(const Checkpoint& ckpt) : ckpt_(&ckpt) {}
    int64_t dim() const override { return ckpt_->arch.latent_dim; }
    Tensor codes(const FactorWorld& world, const FactorMatrix& factors) const override;

private:
    const Checkpoint* ckpt_;
};

class GroundTruthRepresentation : public Representation {
public:
    explicit GroundTruthRepresentation(int64_t k) : k_(k) {}
    int64_t dim() const override { return k_; }
    Tensor codes(const FactorWorld& world, const FactorMatrix& factors) const override {
        return normalized_factors(world.space(), factors);
    }

private:
    int64_t k_;
};

class LambdaRepresentation : public Representation {
public:
    using Fn = std::function<Tensor(const FactorWorld&, const FactorMatrix&)>;
    LambdaRepresentation(int64_t d, Fn fn) : d_(d), fn_(std::move(fn)) {}
    int64_t dim() const override { return d_; }
    Tensor codes(const FactorWorld& world, const FactorMatrix& factors) const override {
        return fn_(world, factors);
    }

private:
    int64_t d_;
    Fn fn_;
};

// ---- pairwise mutual information ----------------------------------------

struct MIMatrix {
    Tensor mi;                           // d x k, nats
    std::vector<double> factor_entropy;  // H(z_j)
    std::vector<double> code_entropy;    // H(discretized r_i)
};

// Equal-mass quantile bins per code dimension (nearest-rank edges, so the
// binning is exactly invariant under strictly increasing per-dim transforms);
// constant dims land in a single bin.
FactorMatrix discretize_quantile(const Tensor& reps, int64_t bins);

// Plug-in MI between quantile-binned codes and discrete factors, 0*log0 = 0.
MIMatrix discretize_and_mi(const Tensor& reps, const FactorMatrix& factors, int64_t bins);

struct MetricReport {
    std::string name;
    double score = 0.0;
    uint64_t seed = 0;
    int64_t n_train = 0;
    int64_t n_test = 0;
    bool collapsed = false;
    Tensor aux;  // MI matrix / importance matrix / vote table
    json extra;
};

// ---- estimator knobs ------------------------------------------------------

struct EvalParams {
    int64_t bins = 20;
    int64_t mi_samples = 10000;    // sample for MIG / Modularity
    int64_t train_points = 10000;  // classifier training points / votes, DCI+SAP train rows
    int64_t test_points = 5000;
    int64_t pair_batch = 64;  // pairs per BetaVAE point, batch per FactorVAE vote
    int64_t std_samples = 10000;
    double prune_threshold = 0.05;  // on normalized variance
    int64_t logreg_steps = 400;
    double logreg_lr = 0.05;
    ForestParams forest;
    int64_t unsup_samples = 10000;

    json to_json() const;
    static EvalParams from_json(const json& j);  // partial override, strict keys
};

// ---- the six metrics ------------------------------------------------------

// Mean over factors of (top MI - second MI) / H(z_j); zero-entropy factors
// are excluded; throws E_METRIC_UNDEFINED if all factors are constant.
MetricReport mig(const Tensor& reps, const FactorMatrix& factors, int64_t bins, uint64_t seed);
double mig_from_mi(const MIMatrix& mi);

MetricReport modularity(const Tensor& reps, const FactorMatrix& factors, int64_t bins,
                        uint64_t seed);
double modularity_from_mi(const MIMatrix& mi);

MetricReport beta_vae_score(const FactorWorld& world, const Representation& rep,
                            const EvalParams& params, uint64_t seed);

MetricReport factor_vae_score(const FactorWorld& world, const Representation& rep,
                              const EvalParams& params, uint64_t seed);

// cardinalities: optional per-factor cardinality list; empty = derive from
// the data as max+1 (the tensor-file evaluation path).
MetricReport dci_disentanglement(const Tensor& reps, const FactorMatrix& factors,
                                 const ForestParams& forest, int64_t train_n, int64_t test_n,
                                 uint64_t seed,
                                 const std::vector<int64_t>& cardinalities = {});
// The aggregation stage alone, on a per-factor-normalized importance matrix.
double dci_from_importance(const Tensor& importance);

MetricReport sap_score(const Tensor& reps, const FactorMatrix& factors, int64_t train_n,
                       int64_t test_n, uint64_t seed,
                       const std::vector<int64_t>& cardinalities = {});

// ---- unsupervised training scores ----------------------------------------

struct UnsupervisedScores {
    double recon = 0.0;
    double elbo = 0.0;
    double kl = 0.0;
    double gaussian_tc = 0.0;
};

UnsupervisedScores unsupervised_scores(const Checkpoint& ckpt, const FactorWorld& world,
                                       int64_t n, uint64_t seed);

// TC of a Gaussian fit: 0.5*(sum ln diag(S) - ln det S), S ridge-regularized.
double gaussian_total_correlation(const Tensor& codes, double ridge = 1e-6);

// ---- bundled evaluation (what the study and `evaluate` run) ---------------

struct EvaluationResult {
    std::vector<MetricReport> metrics;
    UnsupervisedScores unsup;
    bool has_unsup = false;
    // flat (name, value) rows, e.g. for the score CSV
    std::vector<std::pair<std::string, double>> rows() const;
};

EvaluationResult evaluate_representation(const FactorWorld& world, const Representation& rep,
                                         const EvalParams& params, uint64_t seed);
EvaluationResult evaluate_checkpoint(const Checkpoint& ckpt, const FactorWorld& world,
                                     const EvalParams& params, uint64_t seed);

}  // namespace untangle
