#include "untangle/objectives.hpp"

#include <cmath>

namespace untangle {

Method method_from_name(const std::string& name) {
    if (name == "beta_vae") return Method::beta_vae;
    if (name == "annealed_vae") return Method::annealed_vae;
    if (name == "factor_vae") return Method::factor_vae;
    if (name == "beta_tcvae") return Method::beta_tcvae;
    if (name == "dip_vae_i") return Method::dip_vae_i;
    if (name == "dip_vae_ii") return Method::dip_vae_ii;
    throw schema_error("unknown method '" + name + "'");
}

std::string method_name(Method m) {
    switch (m) {
        case Method::beta_vae: return "beta_vae";
        case Method::annealed_vae: return "annealed_vae";
        case Method::factor_vae: return "factor_vae";
        case Method::beta_tcvae: return "beta_tcvae";
        case Method::dip_vae_i: return "dip_vae_i";
        case Method::dip_vae_ii: return "dip_vae_ii";
    }
    throw range_error("bad method enum");
}

ObjectiveConfig ObjectiveConfig::make_beta_vae(double beta) {
    ObjectiveConfig c;
    c.method = Method::beta_vae;
    c.beta = beta;
    c.validate();
    return c;
}

ObjectiveConfig ObjectiveConfig::make_annealed_vae(double gamma, double c_max,
                                                   int64_t anneal_steps) {
    ObjectiveConfig c;
    c.method = Method::annealed_vae;
    c.gamma = gamma;
    c.c_max = c_max;
    c.anneal_steps = anneal_steps;
    c.validate();
    return c;
}

ObjectiveConfig ObjectiveConfig::make_factor_vae(double gamma_tc) {
    ObjectiveConfig c;
    c.method = Method::factor_vae;
    c.gamma_tc = gamma_tc;
    c.validate();
    return c;
}

ObjectiveConfig ObjectiveConfig::make_beta_tcvae(double beta) {
    ObjectiveConfig c;
    c.method = Method::beta_tcvae;
    c.beta = beta;
    c.validate();
    return c;
}

ObjectiveConfig ObjectiveConfig::make_dip_vae_i(double lambda_od, double lambda_d) {
    ObjectiveConfig c;
    c.method = Method::dip_vae_i;
    c.lambda_od = lambda_od;
    c.lambda_d = lambda_d;
    c.validate();
    return c;
}

ObjectiveConfig ObjectiveConfig::make_dip_vae_ii(double lambda_od, double lambda_d) {
    ObjectiveConfig c;
    c.method = Method::dip_vae_ii;
    c.lambda_od = lambda_od;
    c.lambda_d = lambda_d;
    c.validate();
    return c;
}

void ObjectiveConfig::validate() const {
    auto check = [](double v, const char* name) {
        if (!std::isfinite(v) || v < 0.0)
            throw schema_error(std::string("objective: ") + name + " must be finite and >= 0");
    };
    switch (method) {
        case Method::beta_vae:
        case Method::beta_tcvae:
            check(beta, "beta");
            break;
        case Method::annealed_vae:
            check(gamma, "gamma");
            check(c_max, "c_max");
            if (anneal_steps < 0) throw schema_error("objective: anneal_steps must be >= 0");
            break;
        case Method::factor_vae:
            check(gamma_tc, "gamma_tc");
            break;
        case Method::dip_vae_i:
        case Method::dip_vae_ii:
            check(lambda_od, "lambda_od");
            check(lambda_d, "lambda_d");
            break;
    }
}

std::string ObjectiveConfig::sweep_name() const {
    switch (method) {
        case Method::beta_vae:
        case Method::beta_tcvae:
            return "beta";
        case Method::annealed_vae:
            return "c_max";
        case Method::factor_vae:
            return "gamma_tc";
        case Method::dip_vae_i:
        case Method::dip_vae_ii:
            return "lambda_od";
    }
    throw range_error("bad method enum");
}

double ObjectiveConfig::sweep_value() const {
    switch (method) {
        case Method::beta_vae:
        case Method::beta_tcvae:
            return beta;
        case Method::annealed_vae:
            return c_max;
        case Method::factor_vae:
            return gamma_tc;
        case Method::dip_vae_i:
        case Method::dip_vae_ii:
            return lambda_od;
    }
    throw range_error("bad method enum");
}

json ObjectiveConfig::to_json() const {
    json j;
    j["method"] = method_name(method);
    switch (method) {
        case Method::beta_vae:
        case Method::beta_tcvae:
            j["beta"] = beta;
            break;
        case Method::annealed_vae:
            j["gamma"] = gamma;
            j["c_max"] = c_max;
            j["anneal_steps"] = anneal_steps;
            break;
        case Method::factor_vae:
            j["gamma_tc"] = gamma_tc;
            break;
        case Method::dip_vae_i:
        case Method::dip_vae_ii:
            j["lambda_od"] = lambda_od;
            j["lambda_d"] = lambda_d;
            break;
    }
    return j;
}

ObjectiveConfig ObjectiveConfig::from_json(const json& j) {
    std::string name = require_key(j, "method", "objective config").get<std::string>();
    Method m = method_from_name(name);
    ObjectiveConfig c;
    c.method = m;
    switch (m) {
        case Method::beta_vae:
        case Method::beta_tcvae:
            require_keys_subset(j, {"method", "beta"}, "objective config (" + name + ")");
            c.beta = require_key(j, "beta", "objective config").get<double>();
            break;
        case Method::annealed_vae:
            require_keys_subset(j, {"method", "gamma", "c_max", "anneal_steps"},
                                "objective config (" + name + ")");
            c.gamma = require_key(j, "gamma", "objective config").get<double>();
            c.c_max = require_key(j, "c_max", "objective config").get<double>();
            c.anneal_steps = require_key(j, "anneal_steps", "objective config").get<int64_t>();
            break;
        case Method::factor_vae:
            require_keys_subset(j, {"method", "gamma_tc"}, "objective config (" + name + ")");
            c.gamma_tc = require_key(j, "gamma_tc", "objective config").get<double>();
            break;
        case Method::dip_vae_i:
        case Method::dip_vae_ii:
            require_keys_subset(j, {"method", "lambda_od", "lambda_d"},
                                "objective config (" + name + ")");
            c.lambda_od = require_key(j, "lambda_od", "objective config").get<double>();
            c.lambda_d = require_key(j, "lambda_d", "objective config").get<double>();
            break;
    }
    c.validate();
    return c;
}

double anneal_capacity(const ObjectiveConfig& cfg, int64_t step) {
    if (cfg.anneal_steps <= 0) return cfg.c_max;
    double frac = static_cast<double>(step) / static_cast<double>(cfg.anneal_steps);
    return cfg.c_max * (frac < 1.0 ? frac : 1.0);
}

ObjectiveLossResult objective_loss(Graph& g, const ObjectiveConfig& cfg, const BatchNodes& batch,
                                   int64_t step, ParamSet* disc_params) {
    cfg.validate();
    const Tensor& mu_val = g.value(batch.mu);
    if (mu_val.rows < 2) throw shape_error("objective_loss: batch size must be >= 2");

    ObjectiveLossResult out{};
    out.diag.recon = g.scalar_value(batch.recon);
    out.diag.kl = g.scalar_value(batch.kl);

    switch (cfg.method) {
        case Method::beta_vae: {
            int loss = g.add(batch.recon, g.scale(batch.kl, cfg.beta));
            out.loss = loss;
            out.diag.regularizer = cfg.beta * out.diag.kl;
            break;
        }
        case Method::annealed_vae: {
            double cap = anneal_capacity(cfg, step);
            int gap = g.abs(g.add_const(batch.kl, -cap));
            int loss = g.add(batch.recon, g.scale(gap, cfg.gamma));
            out.loss = loss;
            out.diag.regularizer = cfg.gamma * g.scalar_value(gap);
            break;
        }
        case Method::factor_vae: {
            if (!disc_params)
                throw range_error("factor_vae objective needs a discriminator");
            int logits = discriminator_forward(g, *disc_params, batch.z);
            int tc = g.mean_col_diff(logits);
            int loss = g.add(g.add(batch.recon, batch.kl), g.scale(tc, cfg.gamma_tc));
            out.loss = loss;
            out.diag.regularizer = cfg.gamma_tc * g.scalar_value(tc);
            break;
        }
        case Method::beta_tcvae: {
            int tc = g.tc_mws(batch.z, batch.mu, batch.log_var);
            int loss = g.add(g.add(batch.recon, batch.kl), g.scale(tc, cfg.beta - 1.0));
            out.loss = loss;
            out.diag.regularizer = (cfg.beta - 1.0) * g.scalar_value(tc);
            break;
        }
        case Method::dip_vae_i: {
            int pen = g.dip_penalty_i(batch.mu, cfg.lambda_od, cfg.lambda_d);
            int loss = g.add(g.add(batch.recon, batch.kl), pen);
            out.loss = loss;
            out.diag.regularizer = g.scalar_value(pen);
            break;
        }
        case Method::dip_vae_ii: {
            int pen = g.dip_penalty_ii(batch.mu, batch.log_var, cfg.lambda_od, cfg.lambda_d);
            int loss = g.add(g.add(batch.recon, batch.kl), pen);
            out.loss = loss;
            out.diag.regularizer = g.scalar_value(pen);
            break;
        }
        default:
            throw range_error("bad method enum");
    }
    return out;
}

void add_mlp_layer(ParamSet& ps, const std::string& prefix, int layer_index, int64_t fan_in,
                   int64_t fan_out, Rng& rng) {
    Tensor w(fan_in, fan_out);
    double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : w.data) v = scale * rng.normal();
    ps.add(prefix + ".W" + std::to_string(layer_index), std::move(w));
    ps.add(prefix + ".b" + std::to_string(layer_index), Tensor::zeros(1, fan_out));
}

ParamSet make_discriminator(int64_t latent_dim, uint64_t seed) {
    ParamSet ps;
    Rng rng(seed, rng_streams::disc_init);
    add_mlp_layer(ps, "disc", 0, latent_dim, 256, rng);
    add_mlp_layer(ps, "disc", 1, 256, 256, rng);
    add_mlp_layer(ps, "disc", 2, 256, 2, rng);
    return ps;
}

int discriminator_forward(Graph& g, ParamSet& disc, int codes) {
    int h = g.relu(g.affine(codes, g.param(disc, "disc.W0"), g.param(disc, "disc.b0")));
    h = g.relu(g.affine(h, g.param(disc, "disc.W1"), g.param(disc, "disc.b1")));
    return g.affine(h, g.param(disc, "disc.W2"), g.param(disc, "disc.b2"));
}

DiscStepResult discriminator_step(ParamSet& disc, const Tensor& codes, uint64_t seed,
                                  const AdamConfig& adam) {
    Rng rng(seed, rng_streams::disc_perm);
    return discriminator_step(disc, codes, rng, adam);
}

DiscStepResult discriminator_step(ParamSet& disc, const Tensor& codes, Rng& perm_rng,
                                  const AdamConfig& adam) {
    int64_t n = codes.rows, d = codes.cols;
    if (n < 4) throw range_error("discriminator_step: batch size must be >= 4");
    if (n % 2 != 0) throw range_error("discriminator_step: batch size must be even");
    int64_t half = n / 2;

    // Second half becomes the factorized surrogate: every column permuted
    // independently across the second-half rows.
    Tensor input = codes;
    std::vector<size_t> perm(static_cast<size_t>(half));
    for (int64_t j = 0; j < d; ++j) {
        for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        perm_rng.shuffle(perm);
        for (int64_t i = 0; i < half; ++i)
            input.at(half + i, j) = codes.at(half + static_cast<int64_t>(perm[static_cast<size_t>(i)]), j);
    }

    Tensor labels(n, 1);
    for (int64_t i = half; i < n; ++i) labels.at(i, 0) = 1.0;

    Graph g;
    int x = g.constant(std::move(input));
    int logits = discriminator_forward(g, disc, x);
    int ce = g.softmax_ce(logits, g.constant(std::move(labels)));
    g.backward(ce);
    adam_step(disc, g.param_gradients(disc), adam);

    const Tensor& lv = g.value(logits);
    double tc = 0.0;
    for (int64_t i = 0; i < half; ++i) tc += lv.at(i, 0) - lv.at(i, 1);
    return {tc / static_cast<double>(half), g.scalar_value(ce)};
}

double tc_disc_estimate(ParamSet& disc, const Tensor& codes) {
    Graph g;
    int logits = discriminator_forward(g, disc, g.constant(codes));
    return g.scalar_value(g.mean_col_diff(logits));
}

}  // namespace untangle
