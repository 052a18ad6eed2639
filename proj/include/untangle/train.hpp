#pragma once

#include <filesystem>
#include <vector>

#include "untangle/objectives.hpp"
#include "untangle/worlds.hpp"

namespace untangle {

struct Architecture {
    int64_t input_dim = 0;
    int64_t latent_dim = 10;
    std::vector<int64_t> enc_hidden = {256, 128};  // decoder mirrors this

    json to_json() const;
    static Architecture from_json(const json& j);
};

struct TrainOptions {
    int64_t batch = 64;
    AdamConfig adam{1e-4, 0.9, 0.999, 1e-8};
    AdamConfig disc_adam{1e-4, 0.9, 0.999, 1e-8};
    int64_t latent_dim = 10;
    std::vector<int64_t> enc_hidden = {256, 128};
    double divergence_cap = 1e8;
    int64_t log_every = 0;  // 0 = silent; otherwise progress line every k steps
};

struct HistoryRow {
    double recon;
    double kl;
    double regularizer;
};

struct Checkpoint {
    Architecture arch;
    ObjectiveConfig objective;
    ParamSet encoder;
    ParamSet decoder;
    std::string world_hash;
    uint64_t seed = 0;
    int64_t steps = 0;
    std::vector<HistoryRow> history;  // one row per training step
};

// Deterministic single-run trainer. Throws TrainDivergence when the loss
// goes non-finite or beyond divergence_cap.
Checkpoint train(const FactorWorld& world, const ObjectiveConfig& objective, int64_t steps,
                 uint64_t seed, const TrainOptions& opts = {});

struct EncoderHeads {
    int mu;
    int log_var;
};
EncoderHeads encoder_forward(Graph& g, ParamSet& encoder, int x, const Architecture& arch);
int decoder_forward(Graph& g, ParamSet& decoder, int z, const Architecture& arch);

ParamSet init_encoder(const Architecture& arch, uint64_t seed);
ParamSet init_decoder(const Architecture& arch, uint64_t seed);

// Representation r(x): the encoder mean. Deterministic, no sampling.
Tensor encode(const Checkpoint& ckpt, const ObservationBatch& observations);
// Both encoder heads, for evaluation code that needs log-variances.
std::pair<Tensor, Tensor> encode_full(const Checkpoint& ckpt,
                                      const ObservationBatch& observations);
// Decoder logits for given codes.
Tensor decode_logits(const Checkpoint& ckpt, const Tensor& codes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Serialization round-trip (doubles stored as float32): applied before
// evaluation so scores do not depend on whether a checkpoint was reloaded.
Checkpoint quantize_like_saved(const Checkpoint& ckpt);

}  // namespace untangle
