#include "untangle/train.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace untangle {

json Architecture::to_json() const {
    json j;
    j["input_dim"] = input_dim;
    j["latent_dim"] = latent_dim;
    j["enc_hidden"] = enc_hidden;
    return j;
}

Architecture Architecture::from_json(const json& j) {
    require_keys_subset(j, {"input_dim", "latent_dim", "enc_hidden"}, "architecture");
    Architecture a;
    a.input_dim = require_key(j, "input_dim", "architecture").get<int64_t>();
    a.latent_dim = require_key(j, "latent_dim", "architecture").get<int64_t>();
    a.enc_hidden = require_key(j, "enc_hidden", "architecture").get<std::vector<int64_t>>();
    if (a.input_dim < 1 || a.latent_dim < 1 || a.enc_hidden.empty())
        throw schema_error("architecture: dimensions must be positive");
    return a;
}

ParamSet init_encoder(const Architecture& arch, uint64_t seed) {
    ParamSet ps;
    Rng rng(seed, rng_streams::param_init);
    int64_t in = arch.input_dim;
    int idx = 0;
    for (int64_t h : arch.enc_hidden) {
        add_mlp_layer(ps, "enc", idx++, in, h, rng);
        in = h;
    }
    add_mlp_layer(ps, "enc", idx++, in, arch.latent_dim, rng);      // mu head
    add_mlp_layer(ps, "enc", idx, in, arch.latent_dim, rng);        // log_var head
    return ps;
}

ParamSet init_decoder(const Architecture& arch, uint64_t seed) {
    ParamSet ps;
    // Offset stream so the decoder never shares draws with the encoder.
    Rng rng(seed, rng_streams::param_init + 100);
    int64_t in = arch.latent_dim;
    int idx = 0;
    for (auto it = arch.enc_hidden.rbegin(); it != arch.enc_hidden.rend(); ++it) {
        add_mlp_layer(ps, "dec", idx++, in, *it, rng);
        in = *it;
    }
    add_mlp_layer(ps, "dec", idx, in, arch.input_dim, rng);  // Bernoulli logits
    return ps;
}

EncoderHeads encoder_forward(Graph& g, ParamSet& encoder, int x, const Architecture& arch) {
    int h = x;
    int idx = 0;
    for (size_t i = 0; i < arch.enc_hidden.size(); ++i) {
        h = g.tanh_(g.affine(h, g.param(encoder, "enc.W" + std::to_string(idx)),
                             g.param(encoder, "enc.b" + std::to_string(idx))));
        ++idx;
    }
    int mu = g.affine(h, g.param(encoder, "enc.W" + std::to_string(idx)),
                      g.param(encoder, "enc.b" + std::to_string(idx)));
    ++idx;
    int log_var = g.affine(h, g.param(encoder, "enc.W" + std::to_string(idx)),
                           g.param(encoder, "enc.b" + std::to_string(idx)));
    return {mu, log_var};
}

int decoder_forward(Graph& g, ParamSet& decoder, int z, const Architecture& arch) {
    int h = z;
    int idx = 0;
    for (size_t i = 0; i < arch.enc_hidden.size(); ++i) {
        h = g.tanh_(g.affine(h, g.param(decoder, "dec.W" + std::to_string(idx)),
                             g.param(decoder, "dec.b" + std::to_string(idx))));
        ++idx;
    }
    return g.affine(h, g.param(decoder, "dec.W" + std::to_string(idx)),
                    g.param(decoder, "dec.b" + std::to_string(idx)));
}

Checkpoint train(const FactorWorld& world, const ObjectiveConfig& objective, int64_t steps,
                 uint64_t seed, const TrainOptions& opts) {
    if (steps < 1) throw range_error("train: steps must be >= 1");
    if (opts.batch < 2) throw range_error("train: batch must be >= 2");
    objective.validate();

    Checkpoint ckpt;
    ckpt.arch.input_dim = world.pixels();
    ckpt.arch.latent_dim = opts.latent_dim;
    ckpt.arch.enc_hidden = opts.enc_hidden;
    ckpt.objective = objective;
    ckpt.world_hash = world.manifest_hash();
    ckpt.seed = seed;
    ckpt.steps = steps;
    ckpt.encoder = init_encoder(ckpt.arch, seed);
    ckpt.decoder = init_decoder(ckpt.arch, seed);

    ParamSet disc;
    bool use_disc = objective.method == Method::factor_vae;
    if (use_disc) disc = make_discriminator(ckpt.arch.latent_dim, seed);

    Rng batch_rng(seed, rng_streams::train_batch);
    Rng noise_rng(seed, rng_streams::train_noise);
    Rng perm_rng(seed, rng_streams::disc_perm);

    const FactorSpace& space = world.space();
    int64_t k = space.num_factors();
    ckpt.history.reserve(static_cast<size_t>(steps));

    for (int64_t step = 0; step < steps; ++step) {
        FactorMatrix factors(opts.batch, k);
        for (int64_t i = 0; i < opts.batch; ++i)
            for (int64_t j = 0; j < k; ++j)
                factors.at(i, j) = static_cast<int64_t>(
                    batch_rng.below(static_cast<uint64_t>(space.factor(j).cardinality)));
        ObservationBatch x = world.render(factors);

        Tensor noise(opts.batch, ckpt.arch.latent_dim);
        for (auto& v : noise.data) v = noise_rng.normal();

        Graph g;
        int xn = g.constant(std::move(x));
        EncoderHeads heads = encoder_forward(g, ckpt.encoder, xn, ckpt.arch);
        int z = g.reparam(heads.mu, heads.log_var, g.constant(std::move(noise)));
        int logits = decoder_forward(g, ckpt.decoder, z, ckpt.arch);
        int recon = g.bernoulli_recon(logits, xn);
        int kl = g.gaussian_kl(heads.mu, heads.log_var);

        BatchNodes batch{recon, kl, heads.mu, heads.log_var, z};
        ObjectiveLossResult res =
            objective_loss(g, objective, batch, step, use_disc ? &disc : nullptr);

        double loss_val = g.scalar_value(res.loss);
        if (!std::isfinite(loss_val) || std::abs(loss_val) > opts.divergence_cap) {
            std::ostringstream diag;
            diag << "loss=" << loss_val << " recon=" << res.diag.recon << " kl=" << res.diag.kl
                 << " reg=" << res.diag.regularizer;
            throw TrainDivergence(step, diag.str());
        }

        g.backward(res.loss);
        adam_step(ckpt.encoder, g.param_gradients(ckpt.encoder), opts.adam);
        adam_step(ckpt.decoder, g.param_gradients(ckpt.decoder), opts.adam);

        ckpt.history.push_back({res.diag.recon, res.diag.kl, res.diag.regularizer});

        if (use_disc) {
            // 1:1 alternation: the discriminator trains on this step's codes.
            discriminator_step(disc, g.value(z), perm_rng, opts.disc_adam);
        }

        if (opts.log_every > 0 && (step + 1) % opts.log_every == 0)
            std::cerr << "step " << (step + 1) << "/" << steps << " recon=" << res.diag.recon
                      << " kl=" << res.diag.kl << " reg=" << res.diag.regularizer << "\n";
    }
    return ckpt;
}

namespace {

Tensor forward_chunked(const ParamSet& params, const Architecture& arch,
                       const ObservationBatch& obs, bool want_log_var, Tensor* log_var_out) {
    if (obs.cols != arch.input_dim)
        throw shape_error("encode: observation width " + std::to_string(obs.cols) +
                          " != architecture input " + std::to_string(arch.input_dim));
    Tensor mu(obs.rows, arch.latent_dim);
    if (want_log_var) *log_var_out = Tensor(obs.rows, arch.latent_dim);
    constexpr int64_t kChunk = 4096;
    // Graph construction mutates nothing in the param set; the const_cast is
    // contained here to keep the public encode() signature const.
    ParamSet& ps = const_cast<ParamSet&>(params);
    for (int64_t start = 0; start < obs.rows; start += kChunk) {
        int64_t count = std::min(kChunk, obs.rows - start);
        Tensor slice(count, obs.cols);
        for (int64_t i = 0; i < count; ++i)
            for (int64_t j = 0; j < obs.cols; ++j) slice.at(i, j) = obs.at(start + i, j);
        Graph g;
        EncoderHeads heads = encoder_forward(g, ps, g.constant(std::move(slice)), arch);
        const Tensor& mval = g.value(heads.mu);
        for (int64_t i = 0; i < count; ++i)
            for (int64_t j = 0; j < arch.latent_dim; ++j) mu.at(start + i, j) = mval.at(i, j);
        if (want_log_var) {
            const Tensor& lval = g.value(heads.log_var);
            for (int64_t i = 0; i < count; ++i)
                for (int64_t j = 0; j < arch.latent_dim; ++j)
                    log_var_out->at(start + i, j) = lval.at(i, j);
        }
    }
    return mu;
}

}  // namespace

Tensor encode(const Checkpoint& ckpt, const ObservationBatch& observations) {
    if (observations.rows == 0) return Tensor(0, ckpt.arch.latent_dim);
    return forward_chunked(ckpt.encoder, ckpt.arch, observations, false, nullptr);
}

std::pair<Tensor, Tensor> encode_full(const Checkpoint& ckpt,
                                      const ObservationBatch& observations) {
    if (observations.rows == 0)
        return {Tensor(0, ckpt.arch.latent_dim), Tensor(0, ckpt.arch.latent_dim)};
    Tensor log_var;
    Tensor mu = forward_chunked(ckpt.encoder, ckpt.arch, observations, true, &log_var);
    return {std::move(mu), std::move(log_var)};
}

Tensor decode_logits(const Checkpoint& ckpt, const Tensor& codes) {
    if (codes.cols != ckpt.arch.latent_dim) throw shape_error("decode: code width mismatch");
    ParamSet& ps = const_cast<ParamSet&>(ckpt.decoder);
    Graph g;
    int logits = decoder_forward(g, ps, g.constant(codes), ckpt.arch);
    return g.value(logits);
}

// ---- checkpoint serialization -------------------------------------------
//
// Layout: u32 header length, JSON header, then one DTNS blob per tensor in
// header order. Parameter values and Adam moments are all stored (float32).

namespace {

void append_paramset_tensors(const ParamSet& ps, std::vector<std::string>& names,
                             std::vector<const Tensor*>& tensors, const std::string& prefix) {
    for (const auto& e : ps.entries) {
        names.push_back(prefix + e.name);
        tensors.push_back(&e.value);
        names.push_back(prefix + e.name + ".m");
        tensors.push_back(&e.m);
        names.push_back(prefix + e.name + ".v");
        tensors.push_back(&e.v);
    }
}

Tensor f32_round_trip(const Tensor& t) {
    Tensor out(t.rows, t.cols);
    for (size_t i = 0; i < t.data.size(); ++i)
        out.data[i] = static_cast<double>(static_cast<float>(t.data[i]));
    return out;
}

ParamSet quantize_params(const ParamSet& ps) {
    ParamSet out;
    out.step = ps.step;
    for (const auto& e : ps.entries) {
        ParamEntry q;
        q.name = e.name;
        q.value = f32_round_trip(e.value);
        q.m = f32_round_trip(e.m);
        q.v = f32_round_trip(e.v);
        out.entries.push_back(std::move(q));
    }
    return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    json header;
    header["schema_version"] = 1;
    header["arch"] = ckpt.arch.to_json();
    header["objective"] = ckpt.objective.to_json();
    header["world_hash"] = ckpt.world_hash;
    header["seed"] = ckpt.seed;
    header["steps"] = ckpt.steps;
    header["encoder_step"] = ckpt.encoder.step;
    header["decoder_step"] = ckpt.decoder.step;

    std::vector<std::string> names;
    std::vector<const Tensor*> tensors;
    append_paramset_tensors(ckpt.encoder, names, tensors, "encoder/");
    append_paramset_tensors(ckpt.decoder, names, tensors, "decoder/");

    Tensor history(static_cast<int64_t>(ckpt.history.size()), 3);
    for (size_t i = 0; i < ckpt.history.size(); ++i) {
        history.at(static_cast<int64_t>(i), 0) = ckpt.history[i].recon;
        history.at(static_cast<int64_t>(i), 1) = ckpt.history[i].kl;
        history.at(static_cast<int64_t>(i), 2) = ckpt.history[i].regularizer;
    }
    names.push_back("history");
    tensors.push_back(&history);

    header["tensors"] = names;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    std::string hs = header.dump();
    uint32_t len = static_cast<uint32_t>(hs.size());
    unsigned char lb[4] = {static_cast<unsigned char>(len), static_cast<unsigned char>(len >> 8),
                           static_cast<unsigned char>(len >> 16),
                           static_cast<unsigned char>(len >> 24)};
    out.write(reinterpret_cast<const char*>(lb), 4);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const Tensor* t : tensors) write_dtns(out, *t);
    if (!out) throw io_error("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path.string());
    unsigned char lb[4];
    in.read(reinterpret_cast<char*>(lb), 4);
    if (!in) throw io_error("truncated checkpoint header");
    uint32_t len = static_cast<uint32_t>(lb[0]) | static_cast<uint32_t>(lb[1]) << 8 |
                   static_cast<uint32_t>(lb[2]) << 16 | static_cast<uint32_t>(lb[3]) << 24;
    std::string hs(len, '\0');
    in.read(hs.data(), len);
    if (!in) throw io_error("truncated checkpoint header");
    json header;
    try {
        header = json::parse(hs);
    } catch (const nlohmann::json::parse_error& e) {
        throw io_error(std::string("bad checkpoint header: ") + e.what());
    }
    if (require_key(header, "schema_version", "checkpoint").get<int64_t>() != 1)
        throw io_error("unsupported checkpoint schema version");

    Checkpoint ckpt;
    ckpt.arch = Architecture::from_json(header["arch"]);
    ckpt.objective = ObjectiveConfig::from_json(header["objective"]);
    ckpt.world_hash = header["world_hash"].get<std::string>();
    ckpt.seed = header["seed"].get<uint64_t>();
    ckpt.steps = header["steps"].get<int64_t>();
    ckpt.encoder.step = header["encoder_step"].get<int64_t>();
    ckpt.decoder.step = header["decoder_step"].get<int64_t>();

    std::vector<std::string> names = header["tensors"].get<std::vector<std::string>>();
    ParamEntry* pending = nullptr;
    for (const auto& name : names) {
        Tensor t = read_dtns_f32(in);
        if (name == "history") {
            for (int64_t i = 0; i < t.rows; ++i)
                ckpt.history.push_back({t.at(i, 0), t.at(i, 1), t.at(i, 2)});
            continue;
        }
        bool is_m = name.size() > 2 && name.ends_with(".m");
        bool is_v = name.size() > 2 && name.ends_with(".v");
        if (is_m || is_v) {
            if (!pending) throw io_error("checkpoint: moment tensor before its parameter");
            (is_m ? pending->m : pending->v) = std::move(t);
            continue;
        }
        ParamSet* target = nullptr;
        std::string local;
        if (name.starts_with("encoder/")) {
            target = &ckpt.encoder;
            local = name.substr(8);
        } else if (name.starts_with("decoder/")) {
            target = &ckpt.decoder;
            local = name.substr(8);
        } else {
            throw io_error("checkpoint: unknown tensor '" + name + "'");
        }
        pending = &target->add(local, std::move(t));
        // add() zero-initializes moments; the .m/.v blobs that follow overwrite them
    }
    return ckpt;
}

Checkpoint quantize_like_saved(const Checkpoint& ckpt) {
    Checkpoint out;
    out.arch = ckpt.arch;
    out.objective = ckpt.objective;
    out.world_hash = ckpt.world_hash;
    out.seed = ckpt.seed;
    out.steps = ckpt.steps;
    out.history = ckpt.history;
    out.encoder = quantize_params(ckpt.encoder);
    out.decoder = quantize_params(ckpt.decoder);
    return out;
}

}  // namespace untangle
