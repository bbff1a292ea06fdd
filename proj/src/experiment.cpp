#include "cggs/experiment.hpp"

#include <array>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "cggs/csv.hpp"
#include "cggs/error.hpp"

namespace cggs {

using nlohmann::json;

namespace {

template <class T>
T get_or(const json& j, const char* key, T fallback)
{
    const auto it = j.find(key);
    return it == j.end() ? fallback : it->get<T>();
}

OptimizerConfig optimizer_from_json(const json& j, OptimizerConfig o)
{
    if (j.contains("kind")) {
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "gd") {
            o.kind = OptimizerConfig::Kind::gd;
        } else if (kind == "adam") {
            o.kind = OptimizerConfig::Kind::adam;
        } else {
            throw ConfigError("unknown optimizer `" + kind + "` (expected gd or adam)");
        }
    }
    o.eta = get_or(j, "eta", o.eta);
    o.beta1 = get_or(j, "beta1", o.beta1);
    o.beta2 = get_or(j, "beta2", o.beta2);
    o.eps = get_or(j, "eps", o.eps);
    return o;
}

TrainConfig train_from_json(const json& j)
{
    TrainConfig c;
    c.steps = get_or(j, "steps", c.steps);
    c.lambda_phy = get_or(j, "lambda_phy", c.lambda_phy);
    c.lambda_hat0 = get_or(j, "lambda_hat0", c.lambda_hat0);
    c.layer_sizes = get_or(j, "layers", c.layer_sizes);
    c.grid_points = get_or(j, "grid_points", c.grid_points);
    c.inverse_mode = get_or(j, "inverse_mode", c.inverse_mode);
    if (j.contains("optimizer")) {
        c.optimizer = optimizer_from_json(j.at("optimizer"), c.optimizer);
    }
    if (j.contains("gate")) {
        const auto& g = j.at("gate");
        c.gate.alpha = get_or(g, "alpha", c.gate.alpha);
        c.gate.kappa = get_or(g, "kappa", c.gate.kappa);
        c.gate.epsilon = get_or(g, "epsilon", c.gate.epsilon);
        c.gate.lambda_logic = get_or(g, "lambda_logic", c.gate.lambda_logic);
        if (g.contains("forced_gate") && !g.at("forced_gate").is_null()) {
            c.gate.forced_gate = g.at("forced_gate").get<double>();
        }
    }
    return c;
}

std::string strategy_name(Strategy s) { return std::string(to_string(s)); }

} // namespace

void ExperimentSpec::validate() const
{
    seir.validate();
    if (strategies.empty()) {
        throw ConfigError("experiment needs at least one strategy");
    }
    if (seeds.empty()) {
        throw ConfigError("experiment needs at least one seed");
    }
    if (!(horizon > 0.0) || !(trajectory_dt > 0.0)) {
        throw ConfigError("horizon and trajectory_dt must be positive");
    }
    if (theory_eta && !(*theory_eta > 0.0)) {
        throw ConfigError("theory eta must be positive");
    }
    for (Strategy s : strategies) {
        config_for(s, seeds.front()).validate();
    }
}

TrainConfig ExperimentSpec::config_for(Strategy strategy, std::uint64_t seed) const
{
    const auto it = train.find(strategy);
    TrainConfig c = it == train.end() ? TrainConfig{} : it->second;
    c.strategy = strategy;
    c.seed = seed;
    return c;
}

ExperimentSpec spec_from_json(const json& j)
{
    ExperimentSpec s;
    try {
        s.name = get_or(j, "name", s.name);
        if (j.contains("seir")) {
            const auto& p = j.at("seir");
            s.seir.population = get_or(p, "N", s.seir.population);
            s.seir.beta = get_or(p, "beta", s.seir.beta);
            s.seir.sigma = get_or(p, "sigma", s.seir.sigma);
            s.seir.gamma = get_or(p, "gamma", s.seir.gamma);
            if (p.contains("initial")) {
                const auto u = p.at("initial").get<std::vector<double>>();
                if (u.size() != 4) {
                    throw ConfigError("seir.initial must list (s, e, i, r)");
                }
                s.initial = {0.0, u[0], u[1], u[2], u[3]};
            }
        }
        s.horizon = get_or(j, "horizon", s.horizon);
        s.trajectory_dt = get_or(j, "trajectory_dt", s.trajectory_dt);
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            s.dataset.n_points = get_or(d, "n_points", s.dataset.n_points);
            s.dataset.noise_sigma = get_or(d, "noise_sigma", s.dataset.noise_sigma);
            s.dataset.seed = get_or(d, "seed", s.dataset.seed);
            if (d.contains("path")) {
                s.dataset.path = d.at("path").get<std::string>();
            }
        }
        if (j.contains("strategies")) {
            s.strategies.clear();
            for (const auto& name : j.at("strategies")) {
                s.strategies.push_back(parse_strategy(name.get<std::string>()));
            }
        }
        const json base = j.value("train", json::object());
        const json overrides = j.value("strategy_overrides", json::object());
        for (Strategy st : {Strategy::fixed, Strategy::lra, Strategy::cggs}) {
            json merged = base;
            if (overrides.contains(strategy_name(st))) {
                merged.merge_patch(overrides.at(strategy_name(st)));
            }
            s.train[st] = train_from_json(merged);
        }
        s.seeds = get_or(j, "seeds", s.seeds);
        s.output_dir = get_or<std::string>(j, "output_dir", s.output_dir.string());
        if (j.contains("theory")) {
            const auto& t = j.at("theory");
            if (t.contains("eta") && t.at("eta").is_number()) {
                s.theory_eta = t.at("eta").get<double>();
            }
            s.curvature_pairs = get_or(t, "curvature_pairs", s.curvature_pairs);
        }
        s.jobs = get_or(j, "jobs", s.jobs);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed experiment spec: ") + e.what());
    }
    s.validate();
    return s;
}

json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_json(const json& j, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << j.dump(2) << '\n';
}

ExperimentSpec load_spec(const std::filesystem::path& path)
{
    auto spec = spec_from_json(read_json(path));
    if (spec.dataset.path && spec.dataset.path->is_relative()) {
        spec.dataset.path = path.parent_path() / *spec.dataset.path;
    }
    return spec;
}

void apply_seed_override(ExperimentSpec& spec)
{
    const char* env = std::getenv("CONFLICT_GATE_SEED");
    if (!env || !*env) {
        return;
    }
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') {
        throw ConfigError(std::string("CONFLICT_GATE_SEED is not an integer: ") + env);
    }
    spec.seeds = {static_cast<std::uint64_t>(v)};
}

Trajectory simulate_truth(const ExperimentSpec& spec)
{
    return rk4_simulate(spec.seir, spec.initial, spec.horizon, spec.trajectory_dt);
}

Dataset make_dataset(const ExperimentSpec& spec, const Trajectory& truth)
{
    if (spec.dataset.path) {
        return load_dataset(*spec.dataset.path, spec.horizon);
    }
    return generate_dataset(truth, spec.dataset.n_points, spec.dataset.noise_sigma, spec.dataset.seed);
}

void cmd_simulate(const ExperimentSpec& spec)
{
    const auto truth = simulate_truth(spec);
    const auto data = make_dataset(spec, truth);
    std::filesystem::create_directories(spec.output_dir);
    save_trajectory(truth, spec.output_dir / "truth.csv");
    save_dataset(data, spec.output_dir / "dataset.csv");
}

json to_json(const RunInfo& info)
{
    json j{{"strategy", strategy_name(info.strategy)},
           {"seed", info.seed},
           {"theory_mode", info.theory_mode},
           {"optimizer", info.gradient_descent ? "gd" : "adam"},
           {"eta", info.eta},
           {"alpha", info.alpha},
           {"kappa", info.kappa},
           {"epsilon", info.epsilon},
           {"steps", info.steps}};
    j["curvature"] = info.curvature ? json(*info.curvature) : json(nullptr);
    return j;
}

RunInfo run_info_from_json(const json& j)
{
    RunInfo info;
    try {
        info.strategy = parse_strategy(j.at("strategy").get<std::string>());
        info.seed = j.at("seed").get<std::uint64_t>();
        info.theory_mode = j.at("theory_mode").get<bool>();
        info.gradient_descent = j.at("optimizer").get<std::string>() == "gd";
        info.eta = j.at("eta").get<double>();
        info.alpha = j.at("alpha").get<double>();
        info.kappa = j.at("kappa").get<double>();
        info.epsilon = j.at("epsilon").get<double>();
        info.steps = j.at("steps").get<int>();
        if (j.contains("curvature") && !j.at("curvature").is_null()) {
            info.curvature = j.at("curvature").get<double>();
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed run info: ") + e.what());
    }
    return info;
}

namespace {

json nullable(double v)
{
    return std::isfinite(v) ? json(v) : json(nullptr);
}

double number_or_nan(const json& j)
{
    return j.is_null() ? std::nan("") : j.get<double>();
}

} // namespace

json to_json(const ExperimentMetrics& m)
{
    return json{{"peak_value_error", nullable(m.peak_value_error)},
                {"peak_time_error", nullable(m.peak_time_error)},
                {"peak_value_pred", nullable(m.peak_value_pred)},
                {"peak_time_pred", nullable(m.peak_time_pred)},
                {"peak_value_true", nullable(m.peak_value_true)},
                {"peak_time_true", nullable(m.peak_time_true)},
                {"final_l_data", nullable(m.final_l_data)},
                {"phase_medians", {{"early", nullable(m.early_lambda_median)}, {"late", nullable(m.late_lambda_median)}}},
                {"negative_cos_steps", m.negative_cos_steps}};
}

ExperimentMetrics metrics_from_json(const json& j)
{
    ExperimentMetrics m;
    try {
        m.peak_value_error = number_or_nan(j.at("peak_value_error"));
        m.peak_time_error = number_or_nan(j.at("peak_time_error"));
        m.peak_value_pred = number_or_nan(j.at("peak_value_pred"));
        m.peak_time_pred = number_or_nan(j.at("peak_time_pred"));
        m.peak_value_true = number_or_nan(j.at("peak_value_true"));
        m.peak_time_true = number_or_nan(j.at("peak_time_true"));
        m.final_l_data = number_or_nan(j.at("final_l_data"));
        m.early_lambda_median = number_or_nan(j.at("phase_medians").at("early"));
        m.late_lambda_median = number_or_nan(j.at("phase_medians").at("late"));
        m.negative_cos_steps = j.at("negative_cos_steps").get<std::size_t>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed metrics: ") + e.what());
    }
    return m;
}

json to_json(const CellResult& cell)
{
    json j = to_json(cell.metrics);
    j["run"] = to_json(cell.info);
    j["final_l_ode"] = nullable(cell.final_l_ode);
    if (cell.recovered_rates) {
        j["recovered_rates"] = {{"beta", cell.recovered_rates->beta},
                                {"sigma", cell.recovered_rates->sigma},
                                {"gamma", cell.recovered_rates->gamma}};
    } else {
        j["recovered_rates"] = nullptr;
    }
    j["directory"] = cell.directory.generic_string();
    return j;
}

CellResult cell_from_json(const json& j)
{
    CellResult c;
    c.metrics = metrics_from_json(j);
    try {
        c.info = run_info_from_json(j.at("run"));
        c.final_l_ode = number_or_nan(j.at("final_l_ode"));
        if (!j.at("recovered_rates").is_null()) {
            const auto& r = j.at("recovered_rates");
            SeirParams p;
            p.beta = r.at("beta").get<double>();
            p.sigma = r.at("sigma").get<double>();
            p.gamma = r.at("gamma").get<double>();
            c.recovered_rates = p;
        }
        c.directory = j.at("directory").get<std::string>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed cell result: ") + e.what());
    }
    return c;
}

namespace {

std::filesystem::path cell_directory(const ExperimentSpec& spec, Strategy strategy, std::uint64_t seed,
                                     bool theory_mode)
{
    auto root = theory_mode ? spec.output_dir / "theory" : spec.output_dir;
    return root / strategy_name(strategy) / std::to_string(seed);
}

struct CellOutput {
    CellResult result;
    std::vector<TrainRecord> records;
};

CellOutput train_cell(const ExperimentSpec& spec, const Trajectory& truth, const Dataset& data, Strategy strategy,
                      std::uint64_t seed, bool theory_mode)
{
    TrainConfig config = spec.config_for(strategy, seed);
    if (theory_mode) {
        config = cggs::theory_mode(config);
    }
    config.validate();

    SeirObjective objective(config.layer_sizes, spec.horizon, data,
                            CollocationGrid::uniform(spec.horizon, config.grid_points), spec.seir,
                            config.inverse_mode);
    Eigen::VectorXd theta0 = objective.initial_theta(config.seed);

    RunInfo info;
    info.strategy = strategy;
    info.seed = seed;
    info.theory_mode = theory_mode;
    if (theory_mode) {
        if (spec.theory_eta) {
            config.optimizer.eta = *spec.theory_eta;
        } else {
            const double curvature = estimate_curvature(objective, theta0, spec.curvature_pairs, 1e-2, 1e-3, seed);
            info.curvature = curvature;
            config.optimizer.eta = compute_m_kappa(config.gate.kappa).c / (4.0 * curvature);
        }
    }
    info.gradient_descent = config.optimizer.kind == OptimizerConfig::Kind::gd;
    info.eta = config.optimizer.eta;
    info.alpha = config.gate.alpha;
    info.kappa = config.gate.kappa;
    info.epsilon = config.gate.epsilon;
    info.steps = config.steps;

    Eigen::VectorXd theta;
    CellOutput out;
    out.records = run_objective(config, objective, std::move(theta0), &theta);
    const NetworkParams net = objective.network(theta);

    auto& r = out.result;
    r.info = info;
    r.metrics = experiment_metrics(out.records, net, truth);
    r.final_l_ode = out.records.back().l_ode;
    if (config.inverse_mode) {
        r.recovered_rates = objective.rates(theta);
    }
    r.directory = cell_directory(spec, strategy, seed, theory_mode);

    std::filesystem::create_directories(r.directory);
    save_trace(out.records, r.directory / "trace.csv");
    save_params(net, r.directory / "params.json");
    write_json(to_json(r.metrics), r.directory / "metrics.json");
    write_json(to_json(info), r.directory / "run.json");
    return out;
}

} // namespace

CellResult cmd_train(const ExperimentSpec& spec, Strategy strategy, std::uint64_t seed, bool theory_mode)
{
    const auto truth = simulate_truth(spec);
    const auto data = make_dataset(spec, truth);
    return train_cell(spec, truth, data, strategy, seed, theory_mode).result;
}

json to_json(const Comparison& c)
{
    json j;
    j["name"] = c.name;
    j["strategies"] = json::array();
    for (Strategy s : c.strategies) {
        j["strategies"].push_back(strategy_name(s));
    }
    j["seeds"] = c.seeds;
    j["cells"] = json::array();
    for (const auto& cell : c.cells) {
        j["cells"].push_back(to_json(cell));
    }

    // Per-seed table and win counts (lower is better for both metrics).
    json per_seed = json::array();
    std::map<std::string, int> wins_data;
    std::map<std::string, int> wins_peak;
    for (Strategy s : c.strategies) {
        wins_data[strategy_name(s)] = 0;
        wins_peak[strategy_name(s)] = 0;
    }
    for (std::uint64_t seed : c.seeds) {
        json row{{"seed", seed}, {"final_l_data", json::object()}, {"peak_value_error", json::object()}};
        const CellResult* best_data = nullptr;
        const CellResult* best_peak = nullptr;
        for (const auto& cell : c.cells) {
            if (cell.info.seed != seed) {
                continue;
            }
            const auto name = strategy_name(cell.info.strategy);
            row["final_l_data"][name] = nullable(cell.metrics.final_l_data);
            row["peak_value_error"][name] = nullable(cell.metrics.peak_value_error);
            if (!best_data || cell.metrics.final_l_data < best_data->metrics.final_l_data) {
                best_data = &cell;
            }
            if (!best_peak || cell.metrics.peak_value_error < best_peak->metrics.peak_value_error) {
                best_peak = &cell;
            }
        }
        if (best_data) {
            row["winner_final_l_data"] = strategy_name(best_data->info.strategy);
            ++wins_data[strategy_name(best_data->info.strategy)];
        }
        if (best_peak) {
            row["winner_peak_value_error"] = strategy_name(best_peak->info.strategy);
            ++wins_peak[strategy_name(best_peak->info.strategy)];
        }
        per_seed.push_back(row);
    }
    j["per_seed"] = per_seed;
    j["wins"] = {{"final_l_data", wins_data}, {"peak_value_error", wins_peak}};
    return j;
}

Comparison comparison_from_json(const json& j)
{
    Comparison c;
    try {
        c.name = j.at("name").get<std::string>();
        for (const auto& s : j.at("strategies")) {
            c.strategies.push_back(parse_strategy(s.get<std::string>()));
        }
        c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        for (const auto& cell : j.at("cells")) {
            c.cells.push_back(cell_from_json(cell));
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed comparison: ") + e.what());
    }
    return c;
}

namespace {

const std::vector<std::string> kCombinedHeader{"strategy", "seed",     "step",     "l_data",        "l_ode",
                                               "l_logic",  "lambda_hat", "s_cos",  "norm_data",     "norm_phy",
                                               "descent_inner", "d_norm"};

} // namespace

void save_combined(const std::vector<CombinedRow>& rows, const std::filesystem::path& path)
{
    std::ostringstream os;
    for (std::size_t k = 0; k < kCombinedHeader.size(); ++k) {
        os << (k ? "," : "") << kCombinedHeader[k];
    }
    os << '\n';
    for (const auto& row : rows) {
        const auto& r = row.record;
        os << to_string(row.strategy) << ',' << row.seed << ',' << r.step;
        for (double v : {r.l_data, r.l_ode, r.l_logic, r.lambda_hat, r.s_cos, r.norm_data, r.norm_phy,
                         r.descent_inner, r.d_norm}) {
            os << ',' << csv::format(v);
        }
        os << '\n';
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << os.str();
}

std::vector<CombinedRow> load_combined(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError(path.string() + ": empty file");
    }
    std::string want;
    for (const auto& h : kCombinedHeader) {
        want += (want.empty() ? "" : ",") + h;
    }
    if (line != want) {
        throw ParseError(path.string() + ": expected header `" + want + "`");
    }
    std::vector<CombinedRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (cells.size() != kCombinedHeader.size()) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": wrong cell count");
        }
        CombinedRow row;
        try {
            row.strategy = parse_strategy(cells[0]);
            std::size_t used = 0;
            row.seed = std::stoull(cells[1], &used);
            row.record.step = std::stoi(cells[2]);
            std::array<double*, 9> fields{&row.record.l_data,    &row.record.l_ode,     &row.record.l_logic,
                                          &row.record.lambda_hat, &row.record.s_cos,    &row.record.norm_data,
                                          &row.record.norm_phy,  &row.record.descent_inner, &row.record.d_norm};
            for (std::size_t k = 0; k < fields.size(); ++k) {
                *fields[k] = std::stod(cells[k + 3], &used);
                if (used != cells[k + 3].size()) {
                    throw ParseError("trailing characters");
                }
            }
        } catch (const std::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        row.record.norm_logic = std::nan("");
        rows.push_back(row);
    }
    return rows;
}

Comparison cmd_ablation(const ExperimentSpec& spec, bool theory_mode)
{
    spec.validate();
    const auto truth = simulate_truth(spec);
    const auto data = make_dataset(spec, truth);
    std::filesystem::create_directories(spec.output_dir);
    save_trajectory(truth, spec.output_dir / "truth.csv");
    save_dataset(data, spec.output_dir / "dataset.csv");

    struct Cell {
        Strategy strategy;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (Strategy s : spec.strategies) {
        for (std::uint64_t seed : spec.seeds) {
            cells.push_back({s, seed});
        }
    }

    std::vector<std::optional<CellOutput>> outputs(cells.size());
    std::vector<std::exception_ptr> failures(cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < cells.size(); k = next++) {
            try {
                outputs[k] = train_cell(spec, truth, data, cells[k].strategy, cells[k].seed, theory_mode);
            } catch (...) {
                failures[k] = std::current_exception();
            }
        }
    };
    unsigned jobs = spec.jobs > 0 ? static_cast<unsigned>(spec.jobs) : std::max(1u, std::thread::hardware_concurrency());
    jobs = std::min<unsigned>(jobs, static_cast<unsigned>(cells.size()));
    std::vector<std::thread> pool;
    for (unsigned k = 1; k < jobs; ++k) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }
    for (const auto& f : failures) {
        if (f) {
            std::rethrow_exception(f);
        }
    }

    Comparison c;
    c.name = spec.name;
    c.strategies = spec.strategies;
    c.seeds = spec.seeds;
    std::vector<CombinedRow> combined;
    for (std::size_t k = 0; k < cells.size(); ++k) {
        c.cells.push_back(outputs[k]->result);
        for (const auto& r : outputs[k]->records) {
            combined.push_back({cells[k].strategy, cells[k].seed, r});
        }
    }
    const auto root = theory_mode ? spec.output_dir / "theory" : spec.output_dir;
    std::filesystem::create_directories(root);
    write_json(to_json(c), root / "comparison.json");
    save_combined(combined, root / "combined.csv");
    return c;
}

} // namespace cggs
