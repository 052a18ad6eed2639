// untangle: train and score regularized-VAE disentanglement methods on
// procedurally generated worlds, demonstrate the rotated-latents
// identifiability construction, and run the desk-scale study statistics.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "untangle/impossibility.hpp"
#include "untangle/kernels.hpp"
#include "untangle/metrics.hpp"
#include "untangle/study.hpp"
#include "untangle/version.hpp"

namespace fs = std::filesystem;
using namespace untangle;

namespace {

// "a.b.c=value" overrides applied to a loaded JSON config; the value is
// parsed as JSON when possible, otherwise taken as a string.
void apply_override(json& config, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw schema_error("override must look like key=value: '" + assignment + "'");
    std::string path = assignment.substr(0, eq);
    std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const nlohmann::json::parse_error&) {
        value = raw;
    }
    json* node = &config;
    size_t start = 0;
    while (true) {
        size_t dot = path.find('.', start);
        std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty()) throw schema_error("bad override path '" + path + "'");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

struct CommonArgs {
    std::string out;
    uint64_t seed = 0;
    bool seed_given = false;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--out", args.out, "output directory (all artifacts land here)")->required();
    auto* seed_opt = cmd->add_option("--seed", args.seed, "random seed");
    cmd->add_option("--set", args.overrides, "config override key=value (repeatable)");
    cmd->parse_complete_callback([&args, seed_opt]() {
        args.seed_given = seed_opt->count() > 0;
    });
}

fs::path prepare_out(const CommonArgs& args) {
    fs::path out(args.out);
    fs::create_directories(out);
    return out;
}

void write_run_manifest(const fs::path& out, const std::string& command, const json& config,
                        uint64_t seed) {
    json m;
    m["version"] = kVersion;
    m["command"] = command;
    m["seed"] = seed;
    m["kernels"] = kernels::active_name();
    m["config"] = config;
    save_json_file(out / "run_manifest.json", m);
}

json load_config(const std::string& path, const CommonArgs& args) {
    json cfg = load_json_file(path);
    for (const auto& o : args.overrides) apply_override(cfg, o);
    return cfg;
}

int64_t resolve_workers(int64_t flag_value) {
    if (const char* env = std::getenv("UNTANGLE_WORKERS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1)
            throw schema_error("UNTANGLE_WORKERS must be a positive integer");
        return v;
    }
    return flag_value;
}

// ---- subcommand bodies -----------------------------------------------------

int cmd_generate(const CommonArgs& args, const std::string& config_path) {
    json cfg = load_config(config_path, args);
    WorldConfig wc = WorldConfig::from_json(cfg);
    FactorWorld world = make_world(wc);
    fs::path out = prepare_out(args);

    FactorMatrix grid = enumerate_grid(world);
    ObservationBatch images = world.render(grid);
    save_dtns(out / "images.dtns", images);
    save_dtns(out / "factors.dtns", grid);
    save_json_file(out / "manifest.json", world.manifest());
    write_run_manifest(out, "generate", cfg, args.seed);
    std::cout << "generated " << grid.rows << " observations (" << world.height() << "x"
              << world.width() << "x" << world.channels() << ") for " << wc.name << "\n";
    return 0;
}

struct TrainSpec {
    WorldConfig world;
    ObjectiveConfig objective;
    int64_t steps = 1000;
    uint64_t seed = 0;
    TrainOptions opts;
};

TrainSpec parse_train_config(const json& cfg) {
    require_keys_subset(cfg, {"world", "objective", "steps", "seed", "train"}, "train config");
    TrainSpec spec;
    spec.world = WorldConfig::from_json(require_key(cfg, "world", "train config"));
    spec.objective = ObjectiveConfig::from_json(require_key(cfg, "objective", "train config"));
    spec.steps = require_key(cfg, "steps", "train config").get<int64_t>();
    if (cfg.contains("seed")) spec.seed = cfg["seed"].get<uint64_t>();
    if (cfg.contains("train")) {
        const json& t = cfg["train"];
        require_keys_subset(t, {"batch", "lr", "latent_dim", "log_every"}, "train options");
        if (t.contains("batch")) spec.opts.batch = t["batch"].get<int64_t>();
        if (t.contains("lr")) spec.opts.adam.lr = t["lr"].get<double>();
        if (t.contains("latent_dim")) spec.opts.latent_dim = t["latent_dim"].get<int64_t>();
        if (t.contains("log_every")) spec.opts.log_every = t["log_every"].get<int64_t>();
    }
    return spec;
}

int cmd_train(const CommonArgs& args, const std::string& config_path) {
    json cfg = load_config(config_path, args);
    TrainSpec spec = parse_train_config(cfg);
    if (args.seed_given) spec.seed = args.seed;
    FactorWorld world = make_world(spec.world);
    fs::path out = prepare_out(args);
    write_run_manifest(out, "train", cfg, spec.seed);

    Checkpoint ckpt = train(world, spec.objective, spec.steps, spec.seed, spec.opts);
    save_checkpoint(out / "checkpoint.bin", ckpt);
    std::cout << "trained " << method_name(spec.objective.method) << " for " << spec.steps
              << " steps; final recon=" << format_double(ckpt.history.back().recon)
              << " kl=" << format_double(ckpt.history.back().kl) << "\n";
    return 0;
}

int cmd_encode(const CommonArgs& args, const std::string& ckpt_path,
               const std::string& data_dir) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    fs::path data(data_dir);
    json manifest = load_json_file(data / "manifest.json");
    FactorWorld world = world_from_manifest(manifest);
    if (world.manifest_hash() != ckpt.world_hash)
        std::cerr << "warning: checkpoint was trained on a different world (hash mismatch)\n";
    ObservationBatch images = load_dtns_f32(data / "images.dtns");
    fs::path out = prepare_out(args);
    Tensor reps = encode(ckpt, images);
    save_dtns(out / "reps.dtns", reps);
    write_run_manifest(out, "encode", json{{"ckpt", ckpt_path}, {"data", data_dir}}, args.seed);
    std::cout << "encoded " << reps.rows << " observations to " << reps.cols << " dims\n";
    return 0;
}

std::vector<ScoreRecord> records_from_eval(const EvaluationResult& eval, const std::string& run_id,
                                           const std::string& world_name,
                                           const std::string& method,
                                           const std::string& hparam_name, double hparam_value,
                                           int64_t seed) {
    std::vector<ScoreRecord> rows;
    for (const auto& [name, value] : eval.rows()) {
        ScoreRecord r;
        r.run_id = run_id;
        r.world = world_name;
        r.method = method;
        r.hparam_name = hparam_name;
        r.hparam_value = hparam_value;
        r.seed = seed;
        r.metric = name;
        r.value = value;
        rows.push_back(std::move(r));
    }
    return rows;
}

int cmd_evaluate(const CommonArgs& args, const std::string& ckpt_path,
                 const std::string& world_path, const std::string& reps_path,
                 const std::string& factors_path, const std::string& metrics_arg,
                 const std::string& eval_config) {
    if (metrics_arg != "all")
        throw schema_error("--metrics currently supports only 'all'");
    EvalParams params;
    json eval_cfg = json::object();
    if (!eval_config.empty()) {
        eval_cfg = load_config(eval_config, args);
        params = EvalParams::from_json(eval_cfg);
    }
    fs::path out = prepare_out(args);
    RecordStore store;

    if (!ckpt_path.empty()) {
        if (world_path.empty())
            throw schema_error("evaluate --ckpt requires --world <manifest.json>");
        Checkpoint ckpt = load_checkpoint(ckpt_path);
        FactorWorld world = world_from_manifest(load_json_file(world_path));
        if (world.manifest_hash() != ckpt.world_hash)
            std::cerr << "warning: checkpoint world hash differs from --world manifest\n";
        EvaluationResult eval = evaluate_checkpoint(ckpt, world, params, args.seed);
        std::string run_id = run_id_for(world.config().name, ckpt.objective.method,
                                        ckpt.objective.sweep_value(),
                                        static_cast<int64_t>(args.seed));
        store.append_all(records_from_eval(eval, run_id, world.config().name,
                                           method_name(ckpt.objective.method),
                                           ckpt.objective.sweep_name(),
                                           ckpt.objective.sweep_value(),
                                           static_cast<int64_t>(args.seed)));
        json aux;
        for (const auto& m : eval.metrics) {
            aux[m.name] = {{"score", m.score}, {"collapsed", m.collapsed}};
            if (!m.extra.is_null()) aux[m.name]["extra"] = m.extra;
        }
        save_json_file(out / "metrics.json", aux);
    } else {
        // method-agnostic evaluation of pre-encoded (reps, factors) tensors
        if (reps_path.empty() || factors_path.empty())
            throw schema_error("evaluate needs either --ckpt/--world or --reps/--factors");
        Tensor reps = load_dtns_f32(reps_path);
        FactorMatrix factors = load_dtns_i64(factors_path);
        if (reps.rows != factors.rows)
            throw shape_error("reps and factors row counts differ");
        int64_t test_n = std::min(params.test_points, std::max<int64_t>(1, reps.rows / 3));
        int64_t train_n = std::min(params.train_points, reps.rows - test_n);
        MetricReport migr = mig(reps, factors, params.bins, args.seed);
        MetricReport modr = modularity(reps, factors, params.bins, args.seed);
        MetricReport dcir = dci_disentanglement(reps, factors, params.forest, train_n, test_n,
                                                args.seed);
        MetricReport sapr = sap_score(reps, factors, train_n, test_n, args.seed);
        std::string run_id = "external-s" + std::to_string(args.seed);
        json aux;
        for (const MetricReport* m : {&migr, &modr, &dcir, &sapr}) {
            ScoreRecord r;
            r.run_id = run_id;
            r.world = "external";
            r.method = "external";
            r.hparam_name = "none";
            r.hparam_value = 0.0;
            r.seed = static_cast<int64_t>(args.seed);
            r.metric = m->name;
            r.value = m->score;
            store.append(std::move(r));
            aux[m->name] = {{"score", m->score}};
        }
        save_json_file(out / "metrics.json", aux);
    }

    store.save_csv(out / "scores.csv");
    write_run_manifest(out, "evaluate",
                       json{{"ckpt", ckpt_path},
                            {"world", world_path},
                            {"reps", reps_path},
                            {"factors", factors_path},
                            {"eval", eval_cfg}},
                       args.seed);
    for (const auto& r : store.canonical())
        std::cout << r.metric << " = " << format_double(r.value) << "\n";
    return 0;
}

int cmd_study(const CommonArgs& args, const std::string& config_path, int64_t workers,
              bool force) {
    json cfg = load_config(config_path, args);
    StudyConfig config = StudyConfig::from_json(cfg);
    workers = resolve_workers(workers);
    fs::path out = prepare_out(args);
    write_run_manifest(out, "study", cfg, args.seed);

    // Append-only ledger semantics: re-running an existing run_id is an
    // error unless --force removes the stale rows first.
    fs::path csv = out / "scores.csv";
    RecordStore existing;
    if (fs::exists(csv)) existing = RecordStore::load_csv(csv);
    for (const auto& wc : config.worlds)
        for (const auto& ms : config.methods)
            for (double v : ms.values)
                for (int64_t s : config.seeds) {
                    std::string rid = run_id_for(wc.name, ms.method, v, s);
                    if (existing.has_run(rid)) {
                        if (!force)
                            throw range_error("run_id already in store (use --force): " + rid);
                        existing.remove_run(rid);
                    }
                }

    size_t done = 0;
    size_t total = config.worlds.size();
    total = 0;
    for (const auto& ms : config.methods) total += ms.values.size();
    total *= config.worlds.size() * config.seeds.size();
    RecordStore fresh = run_study(config, workers, [&](const std::string& rid) {
        ++done;
        std::cerr << "[" << done << "/" << total << "] " << rid << "\n";
    });
    for (const auto& r : fresh.records()) existing.append(r);
    existing.save_csv(csv);
    std::cout << "study complete: " << fresh.records().size() << " records -> "
              << csv.string() << "\n";
    return 0;
}

int cmd_analyze(const CommonArgs& args, const std::string& store_path, const std::string& metric,
                int64_t trials, const std::string& source, const std::string& target) {
    RecordStore store = RecordStore::load_csv(store_path);
    fs::path out = prepare_out(args);

    const std::vector<std::string> disent = {"beta_vae_score", "factor_vae_score",      "mig",
                                             "dci_disentanglement", "modularity", "sap"};
    // ANOVA table over all disentanglement metrics and groupings.
    {
        std::ofstream tsv(out / "anova.tsv", std::ios::binary);
        if (!tsv) throw io_error("cannot open anova.tsv");
        tsv << "metric\tgrouping\tfraction\tdegenerate\n";
        for (const auto& m : disent)
            for (const std::string grouping : {"method", "hyperparameter", "seed"}) {
                AnovaResult a = anova_for(store, m, grouping);
                tsv << m << "\t" << grouping << "\t" << format_double(a.fraction) << "\t"
                    << (a.degenerate ? 1 : 0) << "\n";
            }
    }

    LabeledMatrix across = rank_correlation_across_worlds(store, metric);
    export_heatmap(across, "rank_corr_across_worlds_" + metric, out);
    for (const auto& w : store.worlds()) {
        LabeledMatrix unsup = rank_correlation_unsup_vs_disent(store, w);
        export_heatmap(unsup, "rank_corr_unsup_" + w, out);
    }

    export_score_distribution(store, metric, out);
    export_score_vs_strength(store, metric, out);

    // Transfer: explicit worlds, or the first pair, or within-world.
    std::string src = source, tgt = target;
    std::vector<std::string> worlds = store.worlds();
    if (src.empty()) src = worlds.front();
    if (tgt.empty()) tgt = worlds.size() > 1 ? worlds[1] : worlds.front();
    json transfer_json;
    try {
        TransferResult tr = transfer_vs_random(store, src, tgt, metric, trials, args.seed);
        transfer_json = {{"source", src},
                         {"target", tgt},
                         {"metric", metric},
                         {"trials", tr.trials},
                         {"methods", tr.methods},
                         {"fraction_improved", tr.fraction}};
        std::cout << "transfer_vs_random(" << src << " -> " << tgt
                  << "): " << format_double(tr.fraction) << "\n";
    } catch (const Error& e) {
        transfer_json = {{"source", src}, {"target", tgt}, {"error", e.what()}};
        std::cerr << "transfer skipped: " << e.what() << "\n";
    }
    save_json_file(out / "transfer.json", transfer_json);

    write_run_manifest(out, "analyze",
                       json{{"store", store_path},
                            {"metric", metric},
                            {"trials", trials},
                            {"source", src},
                            {"target", tgt}},
                       args.seed);
    std::cout << "analysis artifacts in " << out.string() << "\n";
    return 0;
}

int cmd_impossibility(const CommonArgs& args, int64_t d, int64_t n, double theta,
                      bool theta_given) {
    fs::path out = prepare_out(args);
    std::vector<double> angles;
    if (theta_given) angles.assign(static_cast<size_t>(d * (d - 1) / 2), theta);
    RotationMap rot = make_rotation(d, args.seed, angles);
    ToyWorld base = make_toy_world(d, args.seed);
    TwinWorlds twins = build_twin_worlds(base, rot);

    EntanglementReport identity =
        entanglement_report(twins, identity_representation(), n, args.seed);
    EntanglementReport rotated =
        entanglement_report(twins, rotated_representation(rot), n, args.seed);

    json report;
    report["version"] = kVersion;
    report["d"] = d;
    report["seed"] = args.seed;
    report["angles"] = rot.angles;
    report["rotation"] = {{"orthogonality_error", rot.orthogonality_error()},
                          {"determinant", rot.determinant()}};
    report["identity_representation"] = identity.to_json();
    report["rotated_representation"] = rotated.to_json();

    // scatter of z vs zhat for plotting (first 500 points)
    TwinWorlds::Sample s = twins.sample_shared(std::min<int64_t>(n, 500), args.seed);
    json scatter = json::array();
    for (int64_t i = 0; i < s.z_a.rows; ++i) {
        json row;
        row["z"] = std::vector<double>(s.z_a.row(i).begin(), s.z_a.row(i).end());
        row["z_hat"] = std::vector<double>(s.z_b.row(i).begin(), s.z_b.row(i).end());
        scatter.push_back(row);
    }
    report["scatter"] = scatter;
    save_json_file(out / "report.json", report);
    write_run_manifest(out, "impossibility", json{{"d", d}, {"n", n}}, args.seed);

    std::cout << "identity : MIG_A=" << format_double(identity.mig_a)
              << " MIG_B=" << format_double(identity.mig_b) << "\n";
    std::cout << "rotated  : MIG_A=" << format_double(rotated.mig_a)
              << " MIG_B=" << format_double(rotated.mig_b) << "\n";
    std::cout << "pushforward bitwise equal: " << (identity.pushforward_bitwise_equal ? "yes" : "no")
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"untangle: disentanglement methods, metrics and study statistics"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    CommonArgs gen_args, train_args, enc_args, eval_args, study_args, ana_args, imp_args;
    std::string gen_config, train_config, enc_ckpt, enc_data;
    std::string eval_ckpt, eval_world, eval_reps, eval_factors, eval_metrics = "all",
                eval_params_path;
    std::string study_config;
    int64_t study_workers = 1;
    bool study_force = false;
    std::string ana_store, ana_metric = "factor_vae_score", ana_source, ana_target;
    int64_t ana_trials = 10000;
    int64_t imp_d = 2, imp_n = 100000;
    double imp_theta = 0.0;

    auto* gen = app.add_subcommand("generate", "render a world's full factor grid to disk");
    gen->add_option("--config", gen_config, "world config JSON")->required();
    add_common(gen, gen_args);

    auto* tr = app.add_subcommand("train", "train one model and write a checkpoint");
    tr->add_option("--config", train_config, "run config JSON")->required();
    add_common(tr, train_args);

    auto* enc = app.add_subcommand("encode", "encode a generated dataset with a checkpoint");
    enc->add_option("--ckpt", enc_ckpt, "checkpoint file")->required();
    enc->add_option("--data", enc_data, "dataset directory from `generate`")->required();
    add_common(enc, enc_args);

    auto* ev = app.add_subcommand("evaluate", "score a checkpoint or pre-encoded tensors");
    ev->add_option("--ckpt", eval_ckpt, "checkpoint file");
    ev->add_option("--world", eval_world, "world manifest JSON");
    ev->add_option("--reps", eval_reps, "pre-encoded representations (DTNS)");
    ev->add_option("--factors", eval_factors, "factor matrix (DTNS)");
    ev->add_option("--metrics", eval_metrics, "metric selection (all)");
    ev->add_option("--eval", eval_params_path, "eval params JSON");
    add_common(ev, eval_args);

    auto* st = app.add_subcommand("study", "sweep methods x strengths x seeds and score all runs");
    st->add_option("--config", study_config, "study config JSON")->required();
    st->add_option("--workers", study_workers, "parallel training workers");
    st->add_flag("--force", study_force, "re-run run_ids already present in the store");
    add_common(st, study_args);

    auto* an = app.add_subcommand("analyze", "ANOVA, rank correlations, transfer, plots");
    an->add_option("--store", ana_store, "scores.csv from a study")->required();
    an->add_option("--metric", ana_metric, "metric for plots/transfer");
    an->add_option("--trials", ana_trials, "Monte Carlo trials for transfer");
    an->add_option("--source", ana_source, "transfer source world");
    an->add_option("--target", ana_target, "transfer target world");
    an->add_option("--report", ana_args.out, "report output directory");
    auto* imp = app.add_subcommand("impossibility",
                                   "rotated-latents construction: same observations, "
                                   "incompatible disentanglement");
    imp->add_option("--d", imp_d, "latent dimension");
    imp->add_option("--n", imp_n, "sample size");
    auto* theta_opt = imp->add_option("--theta", imp_theta, "explicit rotation angle override");
    add_common(imp, imp_args);

    // analyze uses --report as its output alias; wire the rest of the common args
    an->add_option("--out", ana_args.out, "alias of --report");
    an->add_option("--seed", ana_args.seed, "random seed");

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_generate(gen_args, gen_config);
        if (tr->parsed()) return cmd_train(train_args, train_config);
        if (enc->parsed()) return cmd_encode(enc_args, enc_ckpt, enc_data);
        if (ev->parsed())
            return cmd_evaluate(eval_args, eval_ckpt, eval_world, eval_reps, eval_factors,
                                eval_metrics, eval_params_path);
        if (st->parsed()) return cmd_study(study_args, study_config, study_workers, study_force);
        if (an->parsed()) {
            if (ana_args.out.empty()) throw schema_error("analyze: --report (or --out) required");
            return cmd_analyze(ana_args, ana_store, ana_metric, ana_trials, ana_source,
                               ana_target);
        }
        if (imp->parsed())
            return cmd_impossibility(imp_args, imp_d, imp_n, imp_theta, theta_opt->count() > 0);
        return 0;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const ValidationError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "E_INTERNAL: " << e.what() << "\n";
        return 2;
    }
}
