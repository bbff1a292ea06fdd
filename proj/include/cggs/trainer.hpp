#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "cggs/net.hpp"
#include "cggs/seir.hpp"
#include "cggs/tape.hpp"
#include "cggs/weighting.hpp"

namespace cggs {

/// Loss values and their separate gradients at one parameter vector.
struct LossEvaluation {
    double l_data = 0.0;
    double l_ode = 0.0;
    double l_logic = 0.0;
    Eigen::VectorXd g_data;
    Eigen::VectorXd g_phy;
    Eigen::VectorXd g_logic;
};

/// Anything the training loop can optimise: three losses over one vector.
class Objective {
public:
    virtual ~Objective() = default;
    virtual Eigen::Index dimension() const = 0;
    virtual LossEvaluation evaluate(const Eigen::VectorXd& theta) = 0;
    /// Data loss and its gradient alone. The default evaluates everything.
    virtual std::pair<double, Eigen::VectorXd> evaluate_data(const Eigen::VectorXd& theta);
};

/// The SEIR PINN problem. theta holds the network parameters, followed by
/// three unconstrained rate parameters when rates are estimated
/// (beta, sigma, gamma) = softplus(raw).
///
/// Each loss is built on its own tape and swept separately; the tapes are
/// cleared and rebuilt on every call.
class SeirObjective final : public Objective {
public:
    SeirObjective(std::vector<int> layer_sizes, double horizon, Dataset data, CollocationGrid grid,
                  SeirParams seir, bool inverse_mode = false);

    Eigen::Index dimension() const override { return dimension_; }
    LossEvaluation evaluate(const Eigen::VectorXd& theta) override;
    std::pair<double, Eigen::VectorXd> evaluate_data(const Eigen::VectorXd& theta) override;

    /// Network weights for a seed, with raw rates appended in inverse mode.
    Eigen::VectorXd initial_theta(std::uint64_t seed) const;
    NetworkParams network(const Eigen::VectorXd& theta) const;
    /// Rates encoded in theta (inverse mode) or the fixed ones.
    SeirParams rates(const Eigen::VectorXd& theta) const;

    bool inverse_mode() const { return inverse_mode_; }
    const Dataset& data() const { return data_; }
    const CollocationGrid& grid() const { return grid_; }

private:
    std::vector<Var> bind(Tape& tape, const Eigen::VectorXd& theta, NetworkParams& net) const;
    double sweep(Tape& tape, Var root, Eigen::VectorXd& gradient);

    std::vector<int> layer_sizes_;
    double horizon_;
    Dataset data_;
    CollocationGrid grid_;
    SeirParams seir_;
    bool inverse_mode_;
    Eigen::Index net_size_;
    Eigen::Index dimension_;
    Tape data_tape_;
    Tape ode_tape_;
    Tape logic_tape_;
    std::vector<double> adjoint_;
};

struct StepEvaluation {
    double l_data = 0.0;
    double l_ode = 0.0;
    double l_logic = 0.0;
    GradientDiagnostics diag;
};

/// Gradients first, then geometry: the result depends on theta only.
StepEvaluation compute_gradients(Objective& objective, const Eigen::VectorXd& theta, double epsilon);

struct OptimizerConfig {
    enum class Kind { gd, adam };
    Kind kind = Kind::adam;
    double eta = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

struct TrainConfig {
    Strategy strategy = Strategy::cggs;
    double lambda_phy = 1.0; // used by Strategy::fixed
    OptimizerConfig optimizer;
    int steps = 2000;
    std::uint64_t seed = 0;
    std::vector<int> layer_sizes{1, 32, 32, 4};
    std::size_t grid_points = 200;
    GateParams gate;
    double lambda_hat0 = 1.0;
    bool inverse_mode = false;

    void validate() const;
};

/// alpha = 0 and plain gradient descent: the setting the descent and rate
/// guarantees are stated for.
TrainConfig theory_mode(TrainConfig config);

struct TrainRecord {
    int step = 0;
    double l_data = 0.0;
    double l_ode = 0.0;
    double l_logic = 0.0;
    double lambda_hat = 0.0;
    double s_cos = 0.0;
    double norm_data = 0.0;
    double norm_phy = 0.0;
    double descent_inner = 0.0; // <d, g_data>
    double d_norm = 0.0;
    // Not part of the CSV export; NaN on records loaded from disk.
    double norm_logic = 0.0;
};

struct OptimizerState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    long t = 0;
};

struct TrainerState {
    Eigen::VectorXd theta;
    GateState gate;
    OptimizerState optimizer;
    int step = 0;
};

TrainerState initial_state(const TrainConfig& config, Eigen::VectorXd theta0);

/// Weight update, combination and parameter step for already computed
/// gradients. Throws NumericalError (with the offending record) if the
/// direction is not finite.
TrainRecord apply_step(TrainerState& state, const TrainConfig& config, const StepEvaluation& eval);

/// One full iteration: compute_gradients followed by apply_step.
TrainRecord train_step(TrainerState& state, const TrainConfig& config, Objective& objective);

/// Moves theta along -d with the configured optimiser.
void optimizer_step(Eigen::VectorXd& theta, OptimizerState& state, const OptimizerConfig& config,
                    const Eigen::VectorXd& direction);

struct ExperimentInputs {
    SeirParams seir;
    Dataset data;
    double horizon = 100.0;
};

struct TrainTrace {
    std::vector<TrainRecord> records;
    Eigen::VectorXd final_theta;
    NetworkParams final_network;
    std::optional<SeirParams> recovered_rates;
};

/// Runs config.steps iterations on an arbitrary objective from theta0.
std::vector<TrainRecord> run_objective(const TrainConfig& config, Objective& objective, Eigen::VectorXd theta0,
                                       Eigen::VectorXd* final_theta = nullptr);

/// The SEIR experiment: network initialised from config.seed, trained for
/// config.steps. Deterministic for a given config and inputs.
TrainTrace run(const TrainConfig& config, const ExperimentInputs& inputs);

/// Trace CSV: step,l_data,l_ode,l_logic,lambda_hat,s_cos,norm_data,norm_phy,descent_inner,d_norm
void save_trace(std::span<const TrainRecord> records, const std::filesystem::path& path);
std::vector<TrainRecord> load_trace(const std::filesystem::path& path);

} // namespace cggs
