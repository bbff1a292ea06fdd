#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cggs/error.hpp"
#include "cggs/experiment.hpp"

namespace cggs {

using nlohmann::json;

namespace {

ExperimentSpec resolve_spec(const std::string& spec_path, const std::string& out_dir)
{
    ExperimentSpec spec = spec_path.empty() ? spec_from_json(json::object()) : load_spec(spec_path);
    apply_seed_override(spec);
    if (!out_dir.empty()) {
        spec.output_dir = out_dir;
    }
    return spec;
}

json verdict_json(const Verdict& v, const std::optional<ExperimentMetrics>& metrics)
{
    auto opt = [](const std::optional<double>& x) { return x ? json(*x) : json(nullptr); };
    json j;
    j["mode"] = std::string(to_string(v.mode));
    j["m_kappa"] = v.m_kappa;
    j["descent_pass_rate"] = v.descent_pass_rate;
    j["descent_checked"] = v.descent_checked;
    j["descent_skipped"] = v.descent_skipped;
    j["descent_violations"] = v.descent_violations.size();
    j["violating_steps"] = std::vector<int>(
        v.descent_violations.begin(),
        v.descent_violations.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(v.descent_violations.size(), 20)));
    j["theorem_lhs"] = opt(v.theorem_lhs);
    j["theorem_bound"] = opt(v.theorem_bound);
    j["theorem_pass"] = v.theorem_pass;
    j["observed_max_grad"] = v.observed_max_grad;
    if (metrics) {
        const auto m = to_json(*metrics);
        j["peak_value_error"] = m.at("peak_value_error");
        j["peak_time_error"] = m.at("peak_time_error");
        j["phase_medians"] = m.at("phase_medians");
    } else {
        j["peak_value_error"] = nullptr;
        j["peak_time_error"] = nullptr;
        j["phase_medians"] = nullptr;
    }
    j["passed"] = v.passed();
    return j;
}

json deadlock_json(const DeadlockReport& r)
{
    return json{{"c", r.c},
                {"kappa", r.kappa},
                {"dimension", r.dimension},
                {"g_data_norm", r.g_data_norm},
                {"lambda_std", r.lambda_std},
                {"fixed_update_norm", r.fixed_update_norm},
                {"pareto_alpha", r.pareto_alpha},
                {"pareto_residual_norm", r.pareto_residual_norm},
                {"cggs_lambda", r.cggs_lambda},
                {"cggs_update_norm", r.cggs_update_norm},
                {"cggs_update_ratio", r.cggs_update_norm / r.g_data_norm},
                {"cggs_deviation", r.cggs_deviation},
                {"fixed_deadlocked", r.fixed_deadlocked},
                {"pareto_stationary", r.pareto_stationary},
                {"cggs_escapes", r.cggs_escapes},
                {"passed", r.passed()}};
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Conflict-gated gradient scaling for SEIR physics-informed networks"};
    app.require_subcommand(1);

    std::string spec_path;
    std::string out_dir;
    std::string strategy_name;
    std::optional<std::uint64_t> seed;
    bool theory = false;
    int jobs = 0;

    auto* simulate = app.add_subcommand("simulate", "Write truth.csv and dataset.csv");
    simulate->add_option("--spec", spec_path, "Experiment spec (JSON)");
    simulate->add_option("--out", out_dir, "Output directory");

    auto* train = app.add_subcommand("train", "Train one strategy");
    train->add_option("--spec", spec_path, "Experiment spec (JSON)");
    train->add_option("--strategy", strategy_name, "fixed | lra | cggs")->required();
    train->add_option("--seed", seed, "Network seed (overrides the spec)");
    train->add_option("--out", out_dir, "Output directory");
    train->add_flag("--theory-mode", theory, "alpha = 0 and plain gradient descent");

    auto* ablation = app.add_subcommand("ablation", "Run every strategy x seed and compare");
    ablation->add_option("--spec", spec_path, "Experiment spec (JSON)");
    ablation->add_option("--out", out_dir, "Output directory");
    ablation->add_option("--jobs", jobs, "Worker threads (0: all cores)");
    ablation->add_flag("--theory-mode", theory, "alpha = 0 and plain gradient descent");

    std::string trace_path;
    std::string mode_name = "all";
    std::optional<double> eta;
    std::optional<double> kappa;
    std::optional<double> alpha;
    std::string optimizer;
    auto* verify = app.add_subcommand("verify", "Check a trace against the descent and rate guarantees");
    verify->add_option("trace", trace_path, "trace.csv")->required();
    verify->add_option("--mode", mode_name, "descent | theorem | all");
    verify->add_option("--eta", eta, "Learning rate (default: from run.json)");
    verify->add_option("--kappa", kappa, "Gate sharpness (default: from run.json, else 5)");
    verify->add_option("--alpha", alpha, "EMA momentum of the run (default: from run.json, else 0)");
    verify->add_option("--optimizer", optimizer, "gd | adam (default: from run.json, else gd)");

    double c = 2.0;
    double deadlock_kappa = 5.0;
    long dim = 64;
    std::uint64_t deadlock_seed = 0;
    auto* deadlock = app.add_subcommand("deadlock", "Demonstrate the fixed-weight deadlock and the CGGS escape");
    deadlock->add_option("--c", c, "Conflict ratio, g_data = -c g_phy");
    deadlock->add_option("--kappa", deadlock_kappa, "Gate sharpness");
    deadlock->add_option("--dim", dim, "Gradient dimension");
    deadlock->add_option("--seed", deadlock_seed, "Random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n" << app.help();
        return kExitInputError;
    }

    try {
        if (*simulate) {
            const auto spec = resolve_spec(spec_path, out_dir);
            cmd_simulate(spec);
            out << json{{"truth", (spec.output_dir / "truth.csv").generic_string()},
                        {"dataset", (spec.output_dir / "dataset.csv").generic_string()}}
                       .dump(2)
                << '\n';
            return kExitOk;
        }
        if (*train) {
            Strategy strategy;
            try {
                strategy = parse_strategy(strategy_name);
            } catch (const ConfigError& e) {
                err << e.what() << "\n" << train->help();
                return kExitInputError;
            }
            const auto spec = resolve_spec(spec_path, out_dir);
            const auto cell = cmd_train(spec, strategy, seed.value_or(spec.seeds.front()), theory);
            out << to_json(cell).dump(2) << '\n';
            return kExitOk;
        }
        if (*ablation) {
            auto spec = resolve_spec(spec_path, out_dir);
            if (jobs > 0) {
                spec.jobs = jobs;
            }
            if (spec.strategies.size() < 2) {
                throw ConfigError("ablation needs at least two strategies");
            }
            const auto cmp = cmd_ablation(spec, theory);
            out << to_json(cmp).at("wins").dump(2) << '\n';
            return kExitOk;
        }
        if (*verify) {
            const std::filesystem::path trace(trace_path);
            const auto records = load_trace(trace);
            TraceContext context;
            double k = 5.0;
            const auto run_json = trace.parent_path() / "run.json";
            if (std::filesystem::exists(run_json)) {
                const auto info = run_info_from_json(read_json(run_json));
                context.gradient_descent = info.gradient_descent;
                context.alpha = info.alpha;
                context.eta = info.eta;
                k = info.kappa;
            }
            if (eta) {
                context.eta = *eta;
            }
            if (alpha) {
                context.alpha = *alpha;
            }
            if (kappa) {
                k = *kappa;
            }
            if (!optimizer.empty()) {
                if (optimizer != "gd" && optimizer != "adam") {
                    throw ConfigError("--optimizer must be gd or adam");
                }
                context.gradient_descent = optimizer == "gd";
            }
            std::optional<ExperimentMetrics> metrics;
            const auto metrics_json = trace.parent_path() / "metrics.json";
            if (std::filesystem::exists(metrics_json)) {
                metrics = metrics_from_json(read_json(metrics_json));
            }
            const auto verdict = verify_trace(records, compute_m_kappa(k), parse_verify_mode(mode_name), context);
            out << verdict_json(verdict, metrics).dump(2) << '\n';
            return verdict.passed() ? kExitOk : kExitCheckFailed;
        }
        if (*deadlock) {
            const auto report = deadlock_demo(c, deadlock_kappa, dim, deadlock_seed);
            out << deadlock_json(report).dump(2) << '\n';
            return report.passed() ? kExitOk : kExitCheckFailed;
        }
    } catch (const NumericalError& e) {
        err << e.what() << '\n';
        return kExitCheckFailed;
    } catch (const Error& e) {
        err << e.what() << '\n';
        return kExitInputError;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "IoError: " << e.what() << '\n';
        return kExitInputError;
    }
    return kExitInputError;
}

} // namespace cggs
