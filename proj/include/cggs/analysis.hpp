#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "cggs/net.hpp"
#include "cggs/seir.hpp"
#include "cggs/trainer.hpp"

namespace cggs {

/// Worst-case interference of the gate: M = max_{s in [0,1]} s / (1 + e^{kappa s}),
/// and the resulting descent constant c = 1 - M.
struct DescentConstants {
    double kappa = 0.0;
    double m_kappa = 0.0;
    double s_star = 0.0;
    double c = 0.0;
};

/// Golden-section maximisation; f is unimodal on [0, 1] for kappa >= 0.
DescentConstants compute_m_kappa(double kappa);
/// Brute-force scan on a uniform grid; the cross-check for compute_m_kappa.
DescentConstants m_kappa_grid_scan(double kappa, std::size_t points = 1'000'001);

struct DeadlockReport {
    double c = 0.0;
    double kappa = 0.0;
    Eigen::Index dimension = 0;
    double g_data_norm = 0.0;
    double lambda_std = 0.0;
    double fixed_update_norm = 0.0;
    double pareto_alpha = 0.0;
    double pareto_residual_norm = 0.0;
    double cggs_lambda = 0.0;
    double cggs_update_norm = 0.0;
    double cggs_deviation = 0.0; // |d - g_data|
    bool fixed_deadlocked = false;
    bool pareto_stationary = false;
    bool cggs_escapes = false;

    bool passed() const { return fixed_deadlocked && pareto_stationary && cggs_escapes; }
};

/// Builds g_data = -c g_phy for a random g_phy and checks that the
/// magnitude-balanced weight cancels the update, that alpha = 1/(1+c) is a
/// Pareto-stationary combination, and that the instantaneous CGGS direction
/// stays within sigma(-kappa) |g_data| of g_data.
DeadlockReport deadlock_demo(double c, double kappa = 5.0, Eigen::Index dimension = 64, std::uint64_t seed = 0,
                             double epsilon = 1e-8);

enum class VerifyMode { descent, theorem, all };

std::string_view to_string(VerifyMode mode);
VerifyMode parse_verify_mode(std::string_view name);

/// How the trace was produced; the rate check needs eta and the optimiser.
struct TraceContext {
    bool gradient_descent = true;
    double alpha = 0.0;
    double eta = 0.0;
};

struct Verdict {
    VerifyMode mode = VerifyMode::all;
    double m_kappa = 0.0;
    // Per-step sufficient-descent check.
    std::size_t descent_checked = 0;
    std::size_t descent_skipped = 0; // steps with an active logic gradient
    std::vector<int> descent_violations;
    double descent_pass_rate = 1.0;
    // End-of-run rate envelope.
    std::optional<double> theorem_lhs;
    std::optional<double> theorem_bound;
    bool theorem_pass = true;
    double observed_max_grad = 0.0; // G-hat

    bool descent_pass() const { return descent_violations.empty(); }
    bool passed() const { return descent_pass() && theorem_pass; }
};

/// Whether the logic gradient vanished on this step: its norm when known,
/// otherwise (records read back from CSV) a zero logic loss, which with the
/// zero subgradient at the kink implies a zero gradient.
bool logic_inactive(const TrainRecord& r);

/// Descent: <d, g_data> >= (1 - M) |g_data|^2 and |d| <= 2 |g_data| on every
/// step without a logic gradient. Rate: min |g_data|^2 <= 2 (l_data(0) - min
/// l_data) / (c eta T). Throws ModeError when the rate check is requested on
/// a trace not produced by plain GD with alpha = 0, or the descent check on
/// a trace with EMA smoothing.
Verdict verify_trace(std::span<const TrainRecord> records, const DescentConstants& constants, VerifyMode mode,
                     const TraceContext& context);

struct ExperimentMetrics {
    double peak_value_error = 0.0; // relative
    double peak_time_error = 0.0;  // days
    double peak_value_pred = 0.0;
    double peak_time_pred = 0.0;
    double peak_value_true = 0.0;
    double peak_time_true = 0.0;
    double final_l_data = 0.0;
    double early_lambda_median = 0.0; // steps [0, 250)
    double late_lambda_median = 0.0;  // steps [400, 600]
    std::size_t negative_cos_steps = 0;
};

double median(std::vector<double> values);

/// Peak errors from the predicted I curve on the truth time grid, and the
/// lambda-hat medians over the two phase windows (NaN when a window is empty).
ExperimentMetrics experiment_metrics(std::span<const TrainRecord> records, const NetworkParams& params,
                                     const Trajectory& truth);

/// Same peak comparison for an already evaluated prediction.
ExperimentMetrics peak_metrics(std::span<const double> times, std::span<const double> predicted,
                               std::span<const double> truth);

/// L-hat = max over nearby pairs of |grad(a) - grad(b)| / |a - b| for the
/// data loss around theta. Base points are random; each pair's offset is the
/// previous gradient difference, so the ratio climbs towards the top curvature.
double estimate_curvature(Objective& objective, const Eigen::VectorXd& theta, std::size_t pairs = 100,
                          double radius = 1e-2, double separation = 1e-3, std::uint64_t seed = 0);

} // namespace cggs
