#pragma once

#include <functional>

#include "untangle/metrics.hpp"
#include "untangle/stats.hpp"

namespace untangle {

// One (run x metric) measurement in the study ledger.
struct ScoreRecord {
    std::string run_id;
    std::string world;
    std::string method;
    std::string hparam_name;
    double hparam_value = 0.0;
    int64_t seed = 0;
    std::string metric;
    double value = 0.0;
    std::string status = "ok";  // or "failed"
};

// Append-only, CSV-backed. Canonical order is (run_id, metric); duplicate
// (run_id, metric) pairs are rejected.
class RecordStore {
public:
    void append(ScoreRecord r);
    void append_all(std::vector<ScoreRecord> rs);
    bool has_run(const std::string& run_id) const;
    void remove_run(const std::string& run_id);  // supports --force re-runs

    const std::vector<ScoreRecord>& records() const { return records_; }
    std::vector<ScoreRecord> canonical() const;

    std::vector<std::string> worlds() const;
    std::vector<std::string> methods(const std::string& world = "") const;

    void save_csv(const std::filesystem::path& path) const;
    static RecordStore load_csv(const std::filesystem::path& path);

    static const char* csv_header();  // exact schema line

private:
    std::vector<ScoreRecord> records_;
};

// ---- study configuration ----------------------------------------------------

struct MethodSweep {
    Method method;
    std::vector<double> values;  // swept regularization strengths
};

std::vector<double> default_sweep(Method m);
// Full objective for one sweep point (fills the method's fixed hyperparameters).
ObjectiveConfig objective_for(Method m, double sweep_value, int64_t steps);

struct StudyConfig {
    std::vector<WorldConfig> worlds;
    std::vector<MethodSweep> methods;
    std::vector<int64_t> seeds;
    int64_t steps = 5000;
    int64_t batch = 64;
    double lr = 1e-4;
    int64_t latent_dim = 10;
    EvalParams eval;

    json to_json() const;
    static StudyConfig from_json(const json& j);  // strict schema, versioned
};

std::string run_id_for(const std::string& world, Method method, double sweep_value,
                       int64_t seed);

// Trains and evaluates every cell of the grid. Failed (diverged) runs are
// recorded with status "failed" and never abort the study. Cells are
// deterministic given their seed, so results do not depend on `workers`.
RecordStore run_study(const StudyConfig& config, int64_t workers,
                      const std::function<void(const std::string&)>& progress = {});

// ---- analyses over a store ---------------------------------------------------

// grouping: "method" | "hyperparameter" | "seed"
AnovaResult anova_for(const RecordStore& store, const std::string& metric,
                      const std::string& grouping);

struct TransferResult {
    double fraction = 0.0;  // share of trials where transfer strictly beats random
    int64_t trials = 0;
    int64_t methods = 0;
};

// Model-selection transfer: per method, take the hyperparameter with the best
// median `metric` on the source world, draw a random target seed under it and
// compare against a uniformly random (hyperparameter, seed) target run
// (with replacement). Requires the shared grid to be fully covered.
TransferResult transfer_vs_random(const RecordStore& store, const std::string& source_world,
                                  const std::string& target_world, const std::string& metric,
                                  int64_t trials, uint64_t seed);

struct LabeledMatrix {
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    Tensor values;
    std::vector<uint8_t> defined;  // row-major mask; undefined cells render empty
};

LabeledMatrix rank_correlation_across_worlds(const RecordStore& store,
                                             const std::string& metric);
LabeledMatrix rank_correlation_unsup_vs_disent(const RecordStore& store,
                                               const std::string& world);

void save_matrix_tsv(const std::filesystem::path& path, const LabeledMatrix& m);

// ---- plot exports --------------------------------------------------------------

// Violin-style quantile summaries per method; writes <stem>.tsv and <stem>.svg.
void export_score_distribution(const RecordStore& store, const std::string& metric,
                               const std::filesystem::path& dir);
// Median score vs regularization strength, one series per method.
void export_score_vs_strength(const RecordStore& store, const std::string& metric,
                              const std::filesystem::path& dir);
void export_heatmap(const LabeledMatrix& m, const std::string& stem,
                    const std::filesystem::path& dir);

}  // namespace untangle
