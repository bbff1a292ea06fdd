#include "cggs/trainer.hpp"

#include <cmath>
#include <sstream>

#include "cggs/csv.hpp"
#include "cggs/error.hpp"
#include "cggs/losses.hpp"

namespace cggs {

std::pair<double, Eigen::VectorXd> Objective::evaluate_data(const Eigen::VectorXd& theta)
{
    auto e = evaluate(theta);
    return {e.l_data, std::move(e.g_data)};
}

SeirObjective::SeirObjective(std::vector<int> layer_sizes, double horizon, Dataset data, CollocationGrid grid,
                             SeirParams seir, bool inverse_mode)
    : layer_sizes_(std::move(layer_sizes)),
      horizon_(horizon),
      data_(std::move(data)),
      grid_(std::move(grid)),
      seir_(seir),
      inverse_mode_(inverse_mode)
{
    validate_layer_sizes(layer_sizes_);
    seir_.validate();
    if (data_.observations.empty()) {
        throw EmptyDataset("training needs at least one observation");
    }
    if (grid_.points.size() < 2) {
        throw ConfigError("training needs at least two collocation points");
    }
    net_size_ = parameter_count(layer_sizes_);
    dimension_ = net_size_ + (inverse_mode_ ? 3 : 0);
}

Eigen::VectorXd SeirObjective::initial_theta(std::uint64_t seed) const
{
    const auto net = init_network(layer_sizes_, seed, horizon_);
    Eigen::VectorXd theta(dimension_);
    theta.head(net_size_) = net.theta;
    if (inverse_mode_) {
        theta[net_size_] = softplus_inverse(seir_.beta);
        theta[net_size_ + 1] = softplus_inverse(seir_.sigma);
        theta[net_size_ + 2] = softplus_inverse(seir_.gamma);
    }
    return theta;
}

NetworkParams SeirObjective::network(const Eigen::VectorXd& theta) const
{
    NetworkParams p;
    p.layer_sizes = layer_sizes_;
    p.horizon = horizon_;
    p.theta = theta.head(net_size_);
    return p;
}

SeirParams SeirObjective::rates(const Eigen::VectorXd& theta) const
{
    SeirParams p = seir_;
    if (inverse_mode_) {
        p.beta = softplus(theta[net_size_]);
        p.sigma = softplus(theta[net_size_ + 1]);
        p.gamma = softplus(theta[net_size_ + 2]);
    }
    return p;
}

std::vector<Var> SeirObjective::bind(Tape& tape, const Eigen::VectorXd& theta, NetworkParams& net) const
{
    if (theta.size() != dimension_) {
        throw DimensionMismatch("theta has " + std::to_string(theta.size()) + " entries, objective expects " +
                                std::to_string(dimension_));
    }
    tape.clear();
    net = network(theta);
    std::vector<Var> leaves;
    leaves.reserve(static_cast<std::size_t>(dimension_));
    for (Eigen::Index k = 0; k < dimension_; ++k) {
        leaves.push_back(tape.var(theta[k]));
    }
    return leaves;
}

double SeirObjective::sweep(Tape& tape, Var root, Eigen::VectorXd& gradient)
{
    tape.backward(root, gradient, adjoint_);
    return root.value();
}

LossEvaluation SeirObjective::evaluate(const Eigen::VectorXd& theta)
{
    LossEvaluation out;
    NetworkParams net;

    {
        auto leaves = bind(data_tape_, theta, net);
        leaves.resize(static_cast<std::size_t>(net_size_));
        const BoundNetwork bound(net, std::move(leaves));
        out.l_data = sweep(data_tape_, data_loss(bound, data_), out.g_data);
    }
    {
        auto leaves = bind(ode_tape_, theta, net);
        Var root;
        if (inverse_mode_) {
            const auto n = static_cast<std::size_t>(net_size_);
            const SeirRates<Var> k{softplus(leaves[n]), softplus(leaves[n + 1]), softplus(leaves[n + 2])};
            leaves.resize(n);
            const BoundNetwork bound(net, std::move(leaves));
            root = ode_loss(bound, grid_, k);
        } else {
            const BoundNetwork bound(net, std::move(leaves));
            root = ode_loss(bound, grid_, rates_of(seir_));
        }
        out.l_ode = sweep(ode_tape_, root, out.g_phy);
    }
    {
        auto leaves = bind(logic_tape_, theta, net);
        leaves.resize(static_cast<std::size_t>(net_size_));
        const BoundNetwork bound(net, std::move(leaves));
        out.l_logic = sweep(logic_tape_, logic_loss(bound, grid_), out.g_logic);
    }
    return out;
}

std::pair<double, Eigen::VectorXd> SeirObjective::evaluate_data(const Eigen::VectorXd& theta)
{
    NetworkParams net;
    auto leaves = bind(data_tape_, theta, net);
    leaves.resize(static_cast<std::size_t>(net_size_));
    const BoundNetwork bound(net, std::move(leaves));
    Eigen::VectorXd g;
    const double l = sweep(data_tape_, data_loss(bound, data_), g);
    return {l, std::move(g)};
}

StepEvaluation compute_gradients(Objective& objective, const Eigen::VectorXd& theta, double epsilon)
{
    auto e = objective.evaluate(theta);
    StepEvaluation s;
    s.l_data = e.l_data;
    s.l_ode = e.l_ode;
    s.l_logic = e.l_logic;
    s.diag = diagnose(std::move(e.g_data), std::move(e.g_phy), std::move(e.g_logic), epsilon);
    return s;
}

void OptimizerConfig::validate() const
{
    if (!(eta > 0.0)) {
        throw ConfigError("learning rate eta must be positive");
    }
    if (kind == Kind::adam) {
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0)) {
            throw ConfigError("adam needs beta1, beta2 in [0, 1) and eps > 0");
        }
    }
}

void TrainConfig::validate() const
{
    optimizer.validate();
    gate.validate();
    if (steps < 1) {
        throw ConfigError("steps must be at least 1");
    }
    validate_layer_sizes(layer_sizes);
    if (grid_points < 2) {
        throw ConfigError("grid_points must be at least 2");
    }
    if (!(lambda_hat0 > 0.0)) {
        throw ConfigError("initial lambda_hat must be positive");
    }
    if (strategy == Strategy::fixed && !(lambda_phy >= 0.0)) {
        throw ConfigError("fixed lambda_phy must be non-negative");
    }
}

TrainConfig theory_mode(TrainConfig config)
{
    config.gate.alpha = 0.0;
    config.optimizer.kind = OptimizerConfig::Kind::gd;
    return config;
}

TrainerState initial_state(const TrainConfig& config, Eigen::VectorXd theta0)
{
    TrainerState s;
    s.theta = std::move(theta0);
    s.gate.params = config.gate;
    s.gate.lambda_hat = config.strategy == Strategy::fixed ? config.lambda_phy : config.lambda_hat0;
    s.optimizer.m.setZero(s.theta.size());
    s.optimizer.v.setZero(s.theta.size());
    return s;
}

void optimizer_step(Eigen::VectorXd& theta, OptimizerState& state, const OptimizerConfig& config,
                    const Eigen::VectorXd& direction)
{
    if (config.kind == OptimizerConfig::Kind::gd) {
        theta -= config.eta * direction;
        return;
    }
    if (state.m.size() != theta.size()) {
        state.m.setZero(theta.size());
        state.v.setZero(theta.size());
    }
    ++state.t;
    state.m = config.beta1 * state.m + (1.0 - config.beta1) * direction;
    state.v = config.beta2 * state.v + (1.0 - config.beta2) * direction.cwiseProduct(direction);
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
    theta.array() -= config.eta * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + config.eps);
}

namespace {

std::string describe(const TrainRecord& r)
{
    std::ostringstream os;
    os << "step=" << r.step << " l_data=" << r.l_data << " l_ode=" << r.l_ode << " l_logic=" << r.l_logic
       << " lambda_hat=" << r.lambda_hat << " s_cos=" << r.s_cos << " norm_data=" << r.norm_data
       << " norm_phy=" << r.norm_phy << " norm_logic=" << r.norm_logic;
    return os.str();
}

} // namespace

TrainRecord apply_step(TrainerState& state, const TrainConfig& config, const StepEvaluation& eval)
{
    const auto& diag = eval.diag;
    switch (config.strategy) {
    case Strategy::fixed: state.gate.lambda_hat = config.lambda_phy; break;
    case Strategy::lra: state.gate = lra_update(state.gate, diag); break;
    case Strategy::cggs: state.gate = cggs_update(state.gate, diag); break;
    }
    const Eigen::VectorXd d = combine(diag, state.gate);

    TrainRecord r;
    r.step = state.step;
    r.l_data = eval.l_data;
    r.l_ode = eval.l_ode;
    r.l_logic = eval.l_logic;
    r.lambda_hat = state.gate.lambda_hat;
    r.s_cos = diag.s_cos;
    r.norm_data = diag.norm_data;
    r.norm_phy = diag.norm_phy;
    r.norm_logic = diag.norm_logic;
    r.descent_inner = d.dot(diag.g_data);
    r.d_norm = d.norm();

    if (!d.allFinite()) {
        throw NumericalError("non-finite update direction: " + describe(r));
    }
    optimizer_step(state.theta, state.optimizer, config.optimizer, d);
    ++state.step;
    return r;
}

TrainRecord train_step(TrainerState& state, const TrainConfig& config, Objective& objective)
{
    return apply_step(state, config, compute_gradients(objective, state.theta, config.gate.epsilon));
}

std::vector<TrainRecord> run_objective(const TrainConfig& config, Objective& objective, Eigen::VectorXd theta0,
                                       Eigen::VectorXd* final_theta)
{
    config.optimizer.validate();
    config.gate.validate();
    if (config.steps < 1) {
        throw ConfigError("steps must be at least 1");
    }
    auto state = initial_state(config, std::move(theta0));
    std::vector<TrainRecord> records;
    records.reserve(static_cast<std::size_t>(config.steps));
    for (int k = 0; k < config.steps; ++k) {
        records.push_back(train_step(state, config, objective));
    }
    if (final_theta) {
        *final_theta = std::move(state.theta);
    }
    return records;
}

TrainTrace run(const TrainConfig& config, const ExperimentInputs& inputs)
{
    config.validate();
    SeirObjective objective(config.layer_sizes, inputs.horizon, inputs.data,
                            CollocationGrid::uniform(inputs.horizon, config.grid_points), inputs.seir,
                            config.inverse_mode);
    TrainTrace trace;
    trace.records = run_objective(config, objective, objective.initial_theta(config.seed), &trace.final_theta);
    trace.final_network = objective.network(trace.final_theta);
    if (config.inverse_mode) {
        trace.recovered_rates = objective.rates(trace.final_theta);
    }
    return trace;
}

namespace {

const std::vector<std::string> kTraceHeader{"step",      "l_data",    "l_ode",         "l_logic", "lambda_hat",
                                            "s_cos",     "norm_data", "norm_phy",      "descent_inner",
                                            "d_norm"};

} // namespace

void save_trace(std::span<const TrainRecord> records, const std::filesystem::path& path)
{
    csv::Table table{kTraceHeader, {}};
    table.rows.reserve(records.size());
    for (const auto& r : records) {
        table.rows.push_back({static_cast<double>(r.step), r.l_data, r.l_ode, r.l_logic, r.lambda_hat, r.s_cos,
                              r.norm_data, r.norm_phy, r.descent_inner, r.d_norm});
    }
    csv::write(path, table);
}

std::vector<TrainRecord> load_trace(const std::filesystem::path& path)
{
    const auto table = csv::read(path, kTraceHeader);
    std::vector<TrainRecord> records;
    records.reserve(table.rows.size());
    for (std::size_t k = 0; k < table.rows.size(); ++k) {
        const auto& row = table.rows[k];
        TrainRecord r;
        r.step = static_cast<int>(row[0]);
        if (static_cast<double>(r.step) != row[0] || r.step != static_cast<int>(k)) {
            throw ParseError(path.string() + ": step column must count 0, 1, 2, ... (row " + std::to_string(k + 2) +
                             ")");
        }
        r.l_data = row[1];
        r.l_ode = row[2];
        r.l_logic = row[3];
        r.lambda_hat = row[4];
        r.s_cos = row[5];
        r.norm_data = row[6];
        r.norm_phy = row[7];
        r.descent_inner = row[8];
        r.d_norm = row[9];
        r.norm_logic = std::nan("");
        records.push_back(r);
    }
    return records;
}

} // namespace cggs
