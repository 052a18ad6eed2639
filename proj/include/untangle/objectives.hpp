#pragma once

#include <cstdint>
#include <string>

#include "untangle/graph.hpp"
#include "untangle/io.hpp"
#include "untangle/rng.hpp"

namespace untangle {

enum class Method {
    beta_vae,
    annealed_vae,
    factor_vae,
    beta_tcvae,
    dip_vae_i,
    dip_vae_ii,
};

Method method_from_name(const std::string& name);
std::string method_name(Method m);

// Method identifier plus exactly the hyperparameters that method reads.
struct ObjectiveConfig {
    Method method = Method::beta_vae;
    double beta = 1.0;          // beta_vae, beta_tcvae
    double gamma = 1000.0;      // annealed_vae
    double c_max = 0.0;         // annealed_vae
    int64_t anneal_steps = 0;   // annealed_vae
    double gamma_tc = 0.0;      // factor_vae
    double lambda_od = 0.0;     // dip_vae_i / dip_vae_ii
    double lambda_d = 0.0;      // dip_vae_i / dip_vae_ii

    static ObjectiveConfig make_beta_vae(double beta);
    static ObjectiveConfig make_annealed_vae(double gamma, double c_max, int64_t anneal_steps);
    static ObjectiveConfig make_factor_vae(double gamma_tc);
    static ObjectiveConfig make_beta_tcvae(double beta);
    static ObjectiveConfig make_dip_vae_i(double lambda_od, double lambda_d);
    static ObjectiveConfig make_dip_vae_ii(double lambda_od, double lambda_d);

    void validate() const;

    // The hyperparameter axis swept in studies.
    std::string sweep_name() const;
    double sweep_value() const;

    json to_json() const;
    static ObjectiveConfig from_json(const json& j);
};

// Capacity schedule of the annealed objective: linear 0 -> c_max over
// anneal_steps, constant afterwards (anneal_steps <= 0 means c_max from step 0).
double anneal_capacity(const ObjectiveConfig& cfg, int64_t step);

struct BatchNodes {
    int recon;    // scalar node
    int kl;       // scalar node
    int mu;       // N x d
    int log_var;  // N x d
    int z;        // N x d sampled codes
};

struct LossDiagnostics {
    double recon = 0.0;
    double kl = 0.0;
    double regularizer = 0.0;  // value of the non-ELBO term
};

struct ObjectiveLossResult {
    int loss;  // scalar node
    LossDiagnostics diag;
};

// Assembles the method's loss on top of batch statistics already in the
// graph. factor_vae requires disc_params (the total-correlation logit term
// runs the discriminator forward inside the same graph).
ObjectiveLossResult objective_loss(Graph& g, const ObjectiveConfig& cfg, const BatchNodes& batch,
                                   int64_t step, ParamSet* disc_params = nullptr);

// FactorVAE density-ratio discriminator: MLP d -> 256 -> 256 -> 2 (relu),
// logit 0 = "real joint sample", logit 1 = "column-shuffled sample".
ParamSet make_discriminator(int64_t latent_dim, uint64_t seed);

// Builds the discriminator forward pass; returns the logits node.
int discriminator_forward(Graph& g, ParamSet& disc, int codes);

struct DiscStepResult {
    double tc_disc;  // mean(logit_real - logit_shuffled) on the real half
    double ce;       // training cross-entropy of this step
};

// One adversarial update: first half of `codes` is the real sample, second
// half has every column independently permuted; the discriminator takes one
// cross-entropy Adam step. N must be even and >= 4.
DiscStepResult discriminator_step(ParamSet& disc, const Tensor& codes, uint64_t seed,
                                  const AdamConfig& adam);
DiscStepResult discriminator_step(ParamSet& disc, const Tensor& codes, Rng& perm_rng,
                                  const AdamConfig& adam);

// Pure evaluation of the density-ratio TC estimate on a batch of codes.
double tc_disc_estimate(ParamSet& disc, const Tensor& codes);

// Gaussian-layer initialization shared by all MLPs: W ~ N(0, 1/sqrt(fan_in)),
// b = 0. Appends "<prefix>.W<i>" / "<prefix>.b<i>" entries.
void add_mlp_layer(ParamSet& ps, const std::string& prefix, int layer_index, int64_t fan_in,
                   int64_t fan_out, Rng& rng);

}  // namespace untangle
