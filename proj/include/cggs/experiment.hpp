#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cggs/analysis.hpp"
#include "cggs/seir.hpp"
#include "cggs/trainer.hpp"

namespace cggs {

struct DatasetSpec {
    std::size_t n_points = 20;
    double noise_sigma = 0.05;
    std::uint64_t seed = 7;
    // When set, observations are read from this CSV instead of generated.
    std::optional<std::filesystem::path> path;
};

/// One JSON document describing a full experiment.
struct ExperimentSpec {
    std::string name = "seir";
    SeirParams seir;
    SeirState initial;
    double horizon = 100.0;
    double trajectory_dt = 0.1;
    DatasetSpec dataset;
    std::vector<Strategy> strategies{Strategy::fixed, Strategy::lra, Strategy::cggs};
    std::map<Strategy, TrainConfig> train;
    std::vector<std::uint64_t> seeds{0};
    std::filesystem::path output_dir = "runs";
    // Theory-mode learning rate: a number, or empty for c / (4 L-hat).
    std::optional<double> theory_eta;
    std::size_t curvature_pairs = 100;
    int jobs = 0; // 0: hardware concurrency

    void validate() const;
    /// The strategy's training configuration with the seed filled in.
    TrainConfig config_for(Strategy strategy, std::uint64_t seed) const;
};

/// Defaults reproduce the synthetic outbreak setup; every field may be
/// overridden. `strategy_overrides` patches the shared `train` block.
ExperimentSpec spec_from_json(const nlohmann::json& j);
ExperimentSpec load_spec(const std::filesystem::path& path);

/// CONFLICT_GATE_SEED, when set, replaces the seed list by that single seed.
void apply_seed_override(ExperimentSpec& spec);

Trajectory simulate_truth(const ExperimentSpec& spec);
Dataset make_dataset(const ExperimentSpec& spec, const Trajectory& truth);

/// Writes truth.csv and dataset.csv under the output directory.
void cmd_simulate(const ExperimentSpec& spec);

/// Provenance written next to each trace; verify reads it back.
struct RunInfo {
    Strategy strategy = Strategy::cggs;
    std::uint64_t seed = 0;
    bool theory_mode = false;
    bool gradient_descent = false;
    double eta = 0.0;
    double alpha = 0.0;
    double kappa = 0.0;
    double epsilon = 0.0;
    int steps = 0;
    std::optional<double> curvature;
};

nlohmann::json to_json(const RunInfo& info);
RunInfo run_info_from_json(const nlohmann::json& j);

struct CellResult {
    RunInfo info;
    ExperimentMetrics metrics;
    double final_l_ode = 0.0;
    std::optional<SeirParams> recovered_rates;
    std::filesystem::path directory;
};

nlohmann::json to_json(const CellResult& cell);
CellResult cell_from_json(const nlohmann::json& j);

/// Trains one strategy/seed cell and writes trace.csv, params.json,
/// metrics.json and run.json under output_dir/strategy/seed/.
CellResult cmd_train(const ExperimentSpec& spec, Strategy strategy, std::uint64_t seed, bool theory_mode = false);

struct Comparison {
    std::string name;
    std::vector<Strategy> strategies;
    std::vector<std::uint64_t> seeds;
    std::vector<CellResult> cells;
};

nlohmann::json to_json(const Comparison& comparison);
Comparison comparison_from_json(const nlohmann::json& j);

/// Every strategy x seed cell on a worker pool, then comparison.json and
/// combined.csv at the output root.
Comparison cmd_ablation(const ExperimentSpec& spec, bool theory_mode = false);

// combined.csv: strategy,seed,step,l_data,l_ode,l_logic,lambda_hat,s_cos,norm_data,norm_phy,descent_inner,d_norm
struct CombinedRow {
    Strategy strategy = Strategy::cggs;
    std::uint64_t seed = 0;
    TrainRecord record;
};
void save_combined(const std::vector<CombinedRow>& rows, const std::filesystem::path& path);
std::vector<CombinedRow> load_combined(const std::filesystem::path& path);

nlohmann::json to_json(const ExperimentMetrics& m);
ExperimentMetrics metrics_from_json(const nlohmann::json& j);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const nlohmann::json& j, const std::filesystem::path& path);

/// Exit codes shared by every subcommand.
enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitInputError = 2 };

/// Entry point of the command-line tool; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace cggs
