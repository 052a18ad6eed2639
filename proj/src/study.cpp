#include "untangle/study.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "untangle/svg.hpp"

namespace untangle {

// ---- RecordStore ---------------------------------------------------------

void RecordStore::append(ScoreRecord r) {
    for (const auto& e : records_)
        if (e.run_id == r.run_id && e.metric == r.metric)
            throw range_error("duplicate record (" + r.run_id + ", " + r.metric + ")");
    if (r.status == "ok" && !std::isfinite(r.value))
        throw range_error("record (" + r.run_id + ", " + r.metric + ") has non-finite ok value");
    records_.push_back(std::move(r));
}

void RecordStore::append_all(std::vector<ScoreRecord> rs) {
    for (auto& r : rs) append(std::move(r));
}

bool RecordStore::has_run(const std::string& run_id) const {
    for (const auto& e : records_)
        if (e.run_id == run_id) return true;
    return false;
}

void RecordStore::remove_run(const std::string& run_id) {
    records_.erase(std::remove_if(records_.begin(), records_.end(),
                                  [&](const ScoreRecord& r) { return r.run_id == run_id; }),
                   records_.end());
}

std::vector<ScoreRecord> RecordStore::canonical() const {
    std::vector<ScoreRecord> out = records_;
    std::sort(out.begin(), out.end(), [](const ScoreRecord& a, const ScoreRecord& b) {
        if (a.run_id != b.run_id) return a.run_id < b.run_id;
        return a.metric < b.metric;
    });
    return out;
}

std::vector<std::string> RecordStore::worlds() const {
    std::set<std::string> s;
    for (const auto& r : records_) s.insert(r.world);
    return {s.begin(), s.end()};
}

std::vector<std::string> RecordStore::methods(const std::string& world) const {
    std::set<std::string> s;
    for (const auto& r : records_)
        if (world.empty() || r.world == world) s.insert(r.method);
    return {s.begin(), s.end()};
}

const char* RecordStore::csv_header() {
    return "run_id,world,method,hparam_name,hparam_value,seed,metric,value,status";
}

void RecordStore::save_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);  // binary: byte-identical newlines
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    out << csv_header() << "\n";
    for (const auto& r : canonical()) {
        for (const std::string* s : {&r.run_id, &r.world, &r.method, &r.hparam_name, &r.metric})
            if (s->find(',') != std::string::npos || s->find('\n') != std::string::npos)
                throw range_error("record field contains a separator: '" + *s + "'");
        out << r.run_id << ',' << r.world << ',' << r.method << ',' << r.hparam_name << ','
            << format_double(r.hparam_value) << ',' << r.seed << ',' << r.metric << ','
            << format_double(r.value) << ',' << r.status << "\n";
    }
    if (!out) throw io_error("write failed: " + path.string());
}

RecordStore RecordStore::load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw io_error("empty score CSV: " + path.string());
    if (line != csv_header())
        throw schema_error("score CSV header mismatch in " + path.string());
    RecordStore store;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (fields.size() != 9)
            throw schema_error("score CSV line " + std::to_string(line_no) + ": expected 9 fields");
        ScoreRecord r;
        r.run_id = fields[0];
        r.world = fields[1];
        r.method = fields[2];
        r.hparam_name = fields[3];
        r.hparam_value = std::strtod(fields[4].c_str(), nullptr);
        r.seed = std::strtoll(fields[5].c_str(), nullptr, 10);
        r.metric = fields[6];
        r.value = std::strtod(fields[7].c_str(), nullptr);
        r.status = fields[8];
        if (r.status != "ok" && r.status != "failed")
            throw schema_error("score CSV line " + std::to_string(line_no) + ": bad status '" +
                               r.status + "'");
        store.append(std::move(r));
    }
    return store;
}

// ---- configuration ---------------------------------------------------------

std::vector<double> default_sweep(Method m) {
    switch (m) {
        case Method::beta_vae: return {1, 2, 4, 6, 8, 16};
        case Method::factor_vae: return {10, 20, 30, 40, 50, 100};
        case Method::beta_tcvae: return {1, 2, 4, 6, 8, 10};
        case Method::dip_vae_i: return {1, 2, 5, 10, 20, 50};
        case Method::dip_vae_ii: return {1, 2, 5, 10, 20, 50};
        case Method::annealed_vae: return {5, 10, 25, 50, 75, 100};
    }
    throw range_error("bad method enum");
}

ObjectiveConfig objective_for(Method m, double sweep_value, int64_t steps) {
    switch (m) {
        case Method::beta_vae: return ObjectiveConfig::make_beta_vae(sweep_value);
        case Method::beta_tcvae: return ObjectiveConfig::make_beta_tcvae(sweep_value);
        case Method::factor_vae: return ObjectiveConfig::make_factor_vae(sweep_value);
        case Method::dip_vae_i:
            return ObjectiveConfig::make_dip_vae_i(sweep_value, 10.0 * sweep_value);
        case Method::dip_vae_ii:
            return ObjectiveConfig::make_dip_vae_ii(sweep_value, sweep_value);
        case Method::annealed_vae:
            return ObjectiveConfig::make_annealed_vae(
                1000.0, sweep_value, static_cast<int64_t>(0.9 * static_cast<double>(steps)));
    }
    throw range_error("bad method enum");
}

json StudyConfig::to_json() const {
    json j;
    j["schema_version"] = 1;
    json ws = json::array();
    for (const auto& w : worlds) ws.push_back(w.to_json());
    j["worlds"] = ws;
    json ms = json::array();
    for (const auto& m : methods) {
        json mj;
        mj["method"] = method_name(m.method);
        mj["sweep"] = m.values;
        ms.push_back(mj);
    }
    j["methods"] = ms;
    j["seeds"] = seeds;
    j["steps"] = steps;
    j["batch"] = batch;
    j["lr"] = lr;
    j["latent_dim"] = latent_dim;
    j["eval"] = eval.to_json();
    return j;
}

StudyConfig StudyConfig::from_json(const json& j) {
    require_keys_subset(j,
                        {"schema_version", "worlds", "methods", "seeds", "steps", "batch", "lr",
                         "latent_dim", "eval"},
                        "study config");
    if (require_key(j, "schema_version", "study config").get<int64_t>() != 1)
        throw schema_error("study config: unsupported schema_version");
    StudyConfig c;
    for (const auto& w : require_key(j, "worlds", "study config"))
        c.worlds.push_back(WorldConfig::from_json(w));
    for (const auto& m : require_key(j, "methods", "study config")) {
        require_keys_subset(m, {"method", "sweep"}, "study config method");
        MethodSweep ms;
        ms.method = method_from_name(require_key(m, "method", "study method").get<std::string>());
        if (m.contains("sweep"))
            ms.values = m["sweep"].get<std::vector<double>>();
        else
            ms.values = default_sweep(ms.method);
        if (ms.values.empty()) throw schema_error("study config: empty sweep");
        c.methods.push_back(std::move(ms));
    }
    c.seeds = require_key(j, "seeds", "study config").get<std::vector<int64_t>>();
    c.steps = require_key(j, "steps", "study config").get<int64_t>();
    if (j.contains("batch")) c.batch = j["batch"].get<int64_t>();
    if (j.contains("lr")) c.lr = j["lr"].get<double>();
    if (j.contains("latent_dim")) c.latent_dim = j["latent_dim"].get<int64_t>();
    if (j.contains("eval")) c.eval = EvalParams::from_json(j["eval"]);
    if (c.worlds.empty() || c.methods.empty() || c.seeds.empty())
        throw schema_error("study config: grid is empty");
    if (c.steps < 1) throw schema_error("study config: steps must be >= 1");
    return c;
}

std::string run_id_for(const std::string& world, Method method, double sweep_value,
                       int64_t seed) {
    ObjectiveConfig probe = objective_for(method, sweep_value, 1);
    return world + "-" + method_name(method) + "-" + probe.sweep_name() +
           format_double(sweep_value) + "-s" + std::to_string(seed);
}

// ---- runner ------------------------------------------------------------------

namespace {

// Metric names in the exact order evaluate_checkpoint emits them; failed
// runs get the same rows with status "failed".
const std::vector<std::string>& standard_metric_names() {
    static const std::vector<std::string> names = {
        "mig",
        "modularity",
        "beta_vae_score",
        "factor_vae_score",
        "dci_disentanglement",
        "dci_disentanglement_completeness",
        "dci_disentanglement_informativeness",
        "sap",
        "recon",
        "elbo",
        "kl",
        "gaussian_tc",
    };
    return names;
}

struct StudyCell {
    size_t world_index;
    Method method;
    double sweep_value;
    int64_t seed;
};

}  // namespace

RecordStore run_study(const StudyConfig& config, int64_t workers,
                      const std::function<void(const std::string&)>& progress) {
    std::vector<FactorWorld> worlds;
    for (const auto& wc : config.worlds) worlds.push_back(make_world(wc));

    std::vector<StudyCell> cells;
    for (size_t w = 0; w < worlds.size(); ++w)
        for (const auto& ms : config.methods)
            for (double v : ms.values)
                for (int64_t seed : config.seeds) cells.push_back({w, ms.method, v, seed});
    if (cells.empty()) throw range_error("run_study: empty grid");

    RecordStore store;
    std::mutex store_mutex;
    std::atomic<size_t> next{0};

    auto run_cell = [&](const StudyCell& cell) {
        const FactorWorld& world = worlds[cell.world_index];
        const std::string& world_name = config.worlds[cell.world_index].name;
        ObjectiveConfig objective = objective_for(cell.method, cell.sweep_value, config.steps);
        std::string run_id = run_id_for(world_name, cell.method, cell.sweep_value, cell.seed);

        std::vector<ScoreRecord> rows;
        auto base_record = [&]() {
            ScoreRecord r;
            r.run_id = run_id;
            r.world = world_name;
            r.method = method_name(cell.method);
            r.hparam_name = objective.sweep_name();
            r.hparam_value = cell.sweep_value;
            r.seed = cell.seed;
            return r;
        };
        try {
            TrainOptions opts;
            opts.batch = config.batch;
            opts.adam.lr = config.lr;
            opts.latent_dim = config.latent_dim;
            Checkpoint ckpt =
                train(world, objective, config.steps, static_cast<uint64_t>(cell.seed), opts);
            // Evaluate what a reloaded checkpoint would produce.
            Checkpoint q = quantize_like_saved(ckpt);
            EvaluationResult eval = evaluate_checkpoint(q, world, config.eval,
                                                        static_cast<uint64_t>(cell.seed));
            for (const auto& [name, value] : eval.rows()) {
                ScoreRecord r = base_record();
                r.metric = name;
                r.value = value;
                rows.push_back(std::move(r));
            }
        } catch (const TrainDivergence& e) {
            for (const auto& name : standard_metric_names()) {
                ScoreRecord r = base_record();
                r.metric = name;
                r.value = std::nan("");
                r.status = "failed";
                rows.push_back(std::move(r));
            }
        }
        {
            std::lock_guard<std::mutex> lock(store_mutex);
            store.append_all(std::move(rows));
        }
        if (progress) progress(run_id);
    };

    int64_t n_workers = std::max<int64_t>(1, std::min<int64_t>(workers,
                                                               static_cast<int64_t>(cells.size())));
    if (n_workers == 1) {
        for (const auto& cell : cells) run_cell(cell);
    } else {
        std::vector<std::thread> pool;
        for (int64_t t = 0; t < n_workers; ++t)
            pool.emplace_back([&]() {
                while (true) {
                    size_t i = next.fetch_add(1);
                    if (i >= cells.size()) break;
                    run_cell(cells[i]);
                }
            });
        for (auto& th : pool) th.join();
    }
    return store;
}

// ---- analyses -------------------------------------------------------------------

AnovaResult anova_for(const RecordStore& store, const std::string& metric,
                      const std::string& grouping) {
    std::map<std::string, std::vector<double>> groups;
    for (const auto& r : store.records()) {
        if (r.metric != metric || r.status != "ok") continue;
        std::string key;
        if (grouping == "method")
            key = r.method;
        else if (grouping == "hyperparameter")
            key = r.hparam_name + "=" + format_double(r.hparam_value);
        else if (grouping == "seed")
            key = std::to_string(r.seed);
        else
            throw range_error("anova grouping must be method|hyperparameter|seed");
        groups[key].push_back(r.value);
    }
    if (groups.empty()) throw range_error("anova: no ok records for metric '" + metric + "'");
    std::vector<std::vector<double>> gs;
    for (auto& [k, v] : groups) gs.push_back(std::move(v));
    return anova_variance_explained(gs);
}

namespace {

// value lookup keyed by (method, hparam_value, seed) within one world
struct GridValues {
    std::vector<double> hps;    // sorted distinct hyperparameter values
    std::vector<int64_t> seeds; // sorted distinct seeds
    std::map<std::pair<double, int64_t>, double> value;
};

std::map<std::string, GridValues> collect_grid(const RecordStore& store,
                                               const std::string& world,
                                               const std::string& metric) {
    std::map<std::string, GridValues> out;
    for (const auto& r : store.records()) {
        if (r.world != world || r.metric != metric || r.status != "ok") continue;
        GridValues& g = out[r.method];
        g.value[{r.hparam_value, r.seed}] = r.value;
    }
    for (auto& [m, g] : out) {
        std::set<double> hps;
        std::set<int64_t> seeds;
        for (const auto& [k, v] : g.value) {
            hps.insert(k.first);
            seeds.insert(k.second);
        }
        g.hps.assign(hps.begin(), hps.end());
        g.seeds.assign(seeds.begin(), seeds.end());
    }
    return out;
}

}  // namespace

TransferResult transfer_vs_random(const RecordStore& store, const std::string& source_world,
                                  const std::string& target_world, const std::string& metric,
                                  int64_t trials, uint64_t seed) {
    if (trials < 1) throw range_error("transfer_vs_random: trials must be >= 1");
    auto source = collect_grid(store, source_world, metric);
    auto target = collect_grid(store, target_world, metric);
    if (source.empty() || target.empty())
        throw coverage_error("transfer_vs_random: no ok records for metric '" + metric + "'");

    // Coverage: identical method sets and full shared (hp, seed) grids.
    std::vector<std::string> gaps;
    for (const auto& [m, g] : source)
        if (!target.count(m)) gaps.push_back("method " + m + " missing in target");
    for (const auto& [m, g] : target)
        if (!source.count(m)) gaps.push_back("method " + m + " missing in source");
    for (const auto& [m, gs] : source) {
        if (!target.count(m)) continue;
        const GridValues& gt = target.at(m);
        if (gs.hps != gt.hps) gaps.push_back("method " + m + ": hyperparameter grids differ");
        if (gs.seeds != gt.seeds) gaps.push_back("method " + m + ": seed grids differ");
        for (double h : gs.hps)
            for (int64_t s : gs.seeds) {
                if (!gs.value.count({h, s}))
                    gaps.push_back("source " + m + " hp=" + format_double(h) + " seed=" +
                                   std::to_string(s));
                if (!gt.value.count({h, s}))
                    gaps.push_back("target " + m + " hp=" + format_double(h) + " seed=" +
                                   std::to_string(s));
            }
    }
    if (!gaps.empty()) {
        std::string msg = "transfer_vs_random: grid gaps:";
        for (size_t i = 0; i < gaps.size() && i < 8; ++i) msg += " [" + gaps[i] + "]";
        if (gaps.size() > 8) msg += " (+" + std::to_string(gaps.size() - 8) + " more)";
        throw coverage_error(msg);
    }

    // Best hyperparameter per method on the source (nearest-rank median over
    // seeds, ties to the lower hyperparameter value).
    std::map<std::string, double> best_hp;
    for (const auto& [m, gs] : source) {
        double best_value = 0.0, best = 0.0;
        bool first = true;
        for (double h : gs.hps) {
            std::vector<double> vals;
            for (int64_t s : gs.seeds) vals.push_back(gs.value.at({h, s}));
            double med = quantile_nearest_rank(vals, 0.5);
            if (first || med > best_value) {
                best_value = med;
                best = h;
                first = false;
            }
        }
        best_hp[m] = best;
    }

    Rng rng(seed, rng_streams::transfer_mc);
    int64_t wins = 0;
    int64_t comparisons = 0;
    for (int64_t t = 0; t < trials; ++t) {
        for (const auto& [m, gt0] : target) {
            const GridValues& gt = target.at(m);
            int64_t s_transfer = gt.seeds[rng.below(gt.seeds.size())];
            double v_transfer = gt.value.at({best_hp.at(m), s_transfer});
            double h_rand = gt.hps[rng.below(gt.hps.size())];
            int64_t s_rand = gt.seeds[rng.below(gt.seeds.size())];
            double v_rand = gt.value.at({h_rand, s_rand});
            if (v_transfer > v_rand) ++wins;
            ++comparisons;
        }
    }
    TransferResult res;
    res.fraction = static_cast<double>(wins) / static_cast<double>(comparisons);
    res.trials = trials;
    res.methods = static_cast<int64_t>(target.size());
    return res;
}

LabeledMatrix rank_correlation_across_worlds(const RecordStore& store,
                                             const std::string& metric) {
    std::vector<std::string> worlds = store.worlds();
    // matched model key: (method, hparam_value, seed)
    using Key = std::tuple<std::string, double, int64_t>;
    std::map<std::string, std::map<Key, double>> by_world;
    for (const auto& r : store.records()) {
        if (r.metric != metric || r.status != "ok") continue;
        by_world[r.world][{r.method, r.hparam_value, r.seed}] = r.value;
    }
    LabeledMatrix m;
    m.row_labels = worlds;
    m.col_labels = worlds;
    int64_t n = static_cast<int64_t>(worlds.size());
    m.values = Tensor(n, n);
    m.defined.assign(static_cast<size_t>(n * n), 0);
    for (int64_t a = 0; a < n; ++a)
        for (int64_t b = 0; b < n; ++b) {
            const auto& ma = by_world[worlds[static_cast<size_t>(a)]];
            const auto& mb = by_world[worlds[static_cast<size_t>(b)]];
            std::vector<double> xs, ys;
            for (const auto& [k, v] : ma) {
                auto it = mb.find(k);
                if (it != mb.end()) {
                    xs.push_back(v);
                    ys.push_back(it->second);
                }
            }
            if (xs.size() < 3) continue;
            SpearmanResult sr = spearman(xs, ys);
            if (!sr.defined) continue;
            m.values.at(a, b) = sr.rho;
            m.defined[static_cast<size_t>(a * n + b)] = 1;
        }
    return m;
}

LabeledMatrix rank_correlation_unsup_vs_disent(const RecordStore& store,
                                               const std::string& world) {
    const std::vector<std::string> unsup = {"recon", "elbo", "kl", "gaussian_tc"};
    const std::vector<std::string> disent = {"beta_vae_score", "factor_vae_score",      "mig",
                                             "dci_disentanglement", "modularity", "sap"};
    std::map<std::string, std::map<std::string, double>> by_metric;  // metric -> run_id -> value
    for (const auto& r : store.records()) {
        if (r.world != world || r.status != "ok") continue;
        by_metric[r.metric][r.run_id] = r.value;
    }
    LabeledMatrix m;
    m.row_labels = unsup;
    m.col_labels = disent;
    m.values = Tensor(static_cast<int64_t>(unsup.size()), static_cast<int64_t>(disent.size()));
    m.defined.assign(unsup.size() * disent.size(), 0);
    for (size_t a = 0; a < unsup.size(); ++a)
        for (size_t b = 0; b < disent.size(); ++b) {
            const auto& ma = by_metric[unsup[a]];
            const auto& mb = by_metric[disent[b]];
            std::vector<double> xs, ys;
            for (const auto& [run, v] : ma) {
                auto it = mb.find(run);
                if (it != mb.end()) {
                    xs.push_back(v);
                    ys.push_back(it->second);
                }
            }
            if (xs.size() < 3) continue;
            SpearmanResult sr = spearman(xs, ys);
            if (!sr.defined) continue;
            m.values.at(static_cast<int64_t>(a), static_cast<int64_t>(b)) = sr.rho;
            m.defined[a * disent.size() + b] = 1;
        }
    return m;
}

void save_matrix_tsv(const std::filesystem::path& path, const LabeledMatrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    out << "";
    for (const auto& c : m.col_labels) out << "\t" << c;
    out << "\n";
    for (size_t i = 0; i < m.row_labels.size(); ++i) {
        out << m.row_labels[i];
        for (size_t j = 0; j < m.col_labels.size(); ++j) {
            out << "\t";
            if (m.defined[i * m.col_labels.size() + j])
                out << format_double(m.values.at(static_cast<int64_t>(i), static_cast<int64_t>(j)));
        }
        out << "\n";
    }
    if (!out) throw io_error("write failed: " + path.string());
}

// ---- plots ------------------------------------------------------------------------

namespace {

std::map<std::string, std::vector<double>> ok_values_by_method(const RecordStore& store,
                                                               const std::string& metric) {
    std::map<std::string, std::vector<double>> out;
    for (const auto& r : store.records())
        if (r.metric == metric && r.status == "ok") out[r.method].push_back(r.value);
    return out;
}

}  // namespace

void export_score_distribution(const RecordStore& store, const std::string& metric,
                               const std::filesystem::path& dir) {
    auto groups = ok_values_by_method(store, metric);
    std::filesystem::path tsv = dir / ("score_distribution_" + metric + ".tsv");
    std::ofstream out(tsv, std::ios::binary);
    if (!out) throw io_error("cannot open " + tsv.string() + " for writing");
    out << "method\tmin\tq10\tq25\tmedian\tq75\tq90\tmax\tn\n";
    std::vector<std::pair<std::string, QuantileSummary>> summaries;
    for (const auto& [method, values] : groups) {
        if (values.empty()) continue;  // empty groups never reach the output
        QuantileSummary s = summarize(values);
        summaries.push_back({method, s});
        out << method << "\t" << format_double(s.min) << "\t" << format_double(s.q10) << "\t"
            << format_double(s.q25) << "\t" << format_double(s.median) << "\t"
            << format_double(s.q75) << "\t" << format_double(s.q90) << "\t"
            << format_double(s.max) << "\t" << s.n << "\n";
    }
    if (!out) throw io_error("write failed: " + tsv.string());
    out.close();

    // Simple box glyphs on a [0,1]-ish vertical axis.
    double lo = 0.0, hi = 1.0;
    for (const auto& [_, s] : summaries) {
        lo = std::min(lo, s.min);
        hi = std::max(hi, s.max);
    }
    if (hi <= lo) hi = lo + 1.0;
    double width = 80.0 + 70.0 * static_cast<double>(summaries.size());
    SvgCanvas svg(width, 260.0);
    auto ymap = [&](double v) { return 230.0 - (v - lo) / (hi - lo) * 200.0; };
    svg.line(40, 30, 40, 230, "black");
    svg.text(8, ymap(lo) + 4, format_double(lo), 9);
    svg.text(8, ymap(hi) + 4, format_double(hi), 9);
    double x = 80.0;
    for (const auto& [method, s] : summaries) {
        svg.line(x, ymap(s.min), x, ymap(s.max), "#888", 1.0);
        svg.rect(x - 14, ymap(s.q75), 28, ymap(s.q25) - ymap(s.q75), heat_color(0.35), "#346");
        svg.line(x - 14, ymap(s.median), x + 14, ymap(s.median), "#113", 2.0);
        svg.line(x - 8, ymap(s.q10), x + 8, ymap(s.q10), "#888", 1.0);
        svg.line(x - 8, ymap(s.q90), x + 8, ymap(s.q90), "#888", 1.0);
        svg.text(x, 248, method, 9, "middle");
        x += 70.0;
    }
    svg.text(width / 2, 16, metric + " by method", 11, "middle");
    svg.save(dir / ("score_distribution_" + metric + ".svg"));
}

void export_score_vs_strength(const RecordStore& store, const std::string& metric,
                              const std::filesystem::path& dir) {
    // method -> hparam value -> values
    std::map<std::string, std::map<double, std::vector<double>>> series;
    for (const auto& r : store.records())
        if (r.metric == metric && r.status == "ok")
            series[r.method][r.hparam_value].push_back(r.value);

    std::filesystem::path tsv = dir / ("score_vs_strength_" + metric + ".tsv");
    std::ofstream out(tsv, std::ios::binary);
    if (!out) throw io_error("cannot open " + tsv.string() + " for writing");
    out << "method\thparam_value\tmedian\tn\n";
    double lo = 0.0, hi = 1.0, xmin = 1e300, xmax = -1e300;
    for (const auto& [method, pts] : series)
        for (const auto& [h, vals] : pts) {
            double med = quantile_nearest_rank(vals, 0.5);
            out << method << "\t" << format_double(h) << "\t" << format_double(med) << "\t"
                << vals.size() << "\n";
            lo = std::min(lo, med);
            hi = std::max(hi, med);
            xmin = std::min(xmin, h);
            xmax = std::max(xmax, h);
        }
    if (!out) throw io_error("write failed: " + tsv.string());
    out.close();

    if (series.empty()) return;
    if (xmax <= xmin) xmax = xmin + 1.0;
    if (hi <= lo) hi = lo + 1.0;
    SvgCanvas svg(420, 280);
    auto xmap = [&](double v) { return 50.0 + (v - xmin) / (xmax - xmin) * 340.0; };
    auto ymap = [&](double v) { return 230.0 - (v - lo) / (hi - lo) * 190.0; };
    svg.line(50, 230, 390, 230, "black");
    svg.line(50, 40, 50, 230, "black");
    const char* palette[] = {"#36c", "#c63", "#393", "#939", "#096", "#c33"};
    int pi = 0;
    double legend_y = 48.0;
    for (const auto& [method, pts] : series) {
        std::vector<std::pair<double, double>> poly;
        for (const auto& [h, vals] : pts)
            poly.push_back({xmap(h), ymap(quantile_nearest_rank(vals, 0.5))});
        const char* color = palette[pi % 6];
        svg.polyline(poly, color);
        for (const auto& [px, py] : poly) svg.circle(px, py, 2.5, color);
        svg.text(300, legend_y, method, 9);
        svg.line(280, legend_y - 3, 295, legend_y - 3, color, 2.0);
        legend_y += 12.0;
        ++pi;
    }
    svg.text(210, 16, metric + " vs regularization strength (median)", 11, "middle");
    svg.text(210, 252, "strength", 9, "middle");
    svg.save(dir / ("score_vs_strength_" + metric + ".svg"));
}

void export_heatmap(const LabeledMatrix& m, const std::string& stem,
                    const std::filesystem::path& dir) {
    save_matrix_tsv(dir / (stem + ".tsv"), m);
    size_t rows = m.row_labels.size(), cols = m.col_labels.size();
    double cell = 46.0;
    double left = 130.0, top = 60.0;
    SvgCanvas svg(left + cell * static_cast<double>(cols) + 20,
                  top + cell * static_cast<double>(rows) + 20);
    for (size_t j = 0; j < cols; ++j)
        svg.text(left + cell * (static_cast<double>(j) + 0.5), top - 8, m.col_labels[j], 8,
                 "middle");
    for (size_t i = 0; i < rows; ++i) {
        svg.text(left - 6, top + cell * (static_cast<double>(i) + 0.62), m.row_labels[i], 8,
                 "end");
        for (size_t j = 0; j < cols; ++j) {
            double x = left + cell * static_cast<double>(j);
            double y = top + cell * static_cast<double>(i);
            if (m.defined[i * cols + j]) {
                double v = m.values.at(static_cast<int64_t>(i), static_cast<int64_t>(j));
                svg.rect(x, y, cell, cell, heat_color(std::abs(v)), "#999");
                char buf[16];
                std::snprintf(buf, sizeof(buf), "%.2f", v);
                svg.text(x + cell / 2, y + cell / 2 + 3, buf, 9, "middle");
            } else {
                svg.rect(x, y, cell, cell, "#f4f4f4", "#999");
            }
        }
    }
    svg.text(left + cell * static_cast<double>(cols) / 2, 24, stem, 11, "middle");
    svg.save(dir / (stem + ".svg"));
}

}  // namespace untangle
