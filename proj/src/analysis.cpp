#include "cggs/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "cggs/error.hpp"
#include "cggs/weighting.hpp"

namespace cggs {

namespace {

double gate_interference(double s, double kappa)
{
    return s / (1.0 + std::exp(kappa * s));
}

DescentConstants make_constants(double kappa, double s_star)
{
    DescentConstants d;
    d.kappa = kappa;
    d.s_star = s_star;
    d.m_kappa = gate_interference(s_star, kappa);
    d.c = 1.0 - d.m_kappa;
    return d;
}

// Rounding slack for the descent inequalities, relative to |g_data|^2.
constexpr double kRelativeSlack = 1e-12;

} // namespace

DescentConstants compute_m_kappa(double kappa)
{
    if (!(kappa >= 0.0)) {
        throw ConfigError("kappa must be non-negative");
    }
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = 0.0;
    double b = 1.0;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = gate_interference(x1, kappa);
    double f2 = gate_interference(x2, kappa);
    while (b - a > 1e-10) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = gate_interference(x2, kappa);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = gate_interference(x1, kappa);
        }
    }
    double s = 0.5 * (a + b);
    // A monotone f (kappa = 0) pushes the bracket against an end point.
    for (double end : {0.0, 1.0}) {
        if (gate_interference(end, kappa) > gate_interference(s, kappa)) {
            s = end;
        }
    }
    return make_constants(kappa, s);
}

DescentConstants m_kappa_grid_scan(double kappa, std::size_t points)
{
    if (points < 2) {
        throw ConfigError("grid scan needs at least two points");
    }
    double best_s = 0.0;
    double best_f = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < points; ++k) {
        const double s = static_cast<double>(k) / static_cast<double>(points - 1);
        const double f = gate_interference(s, kappa);
        if (f > best_f) {
            best_f = f;
            best_s = s;
        }
    }
    return make_constants(kappa, best_s);
}

DeadlockReport deadlock_demo(double c, double kappa, Eigen::Index dimension, std::uint64_t seed, double epsilon)
{
    if (!(c > 0.0)) {
        throw ConfigError("deadlock ratio c must be positive");
    }
    if (dimension < 1) {
        throw ConfigError("deadlock dimension must be positive");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd g_phy(dimension);
    for (Eigen::Index k = 0; k < dimension; ++k) {
        g_phy[k] = normal(rng);
    }
    const Eigen::VectorXd g_data = -c * g_phy;
    const Eigen::VectorXd g_logic = Eigen::VectorXd::Zero(dimension);

    DeadlockReport rep;
    rep.c = c;
    rep.kappa = kappa;
    rep.dimension = dimension;
    rep.g_data_norm = g_data.norm();

    rep.lambda_std = g_data.norm() / g_phy.norm();
    rep.fixed_update_norm = (g_data + rep.lambda_std * g_phy).norm();
    rep.fixed_deadlocked = rep.fixed_update_norm <= 1e-12 * rep.g_data_norm;

    rep.pareto_alpha = 1.0 / (1.0 + c);
    rep.pareto_residual_norm = (rep.pareto_alpha * g_data + (1.0 - rep.pareto_alpha) * g_phy).norm();
    rep.pareto_stationary = rep.pareto_residual_norm <= 1e-12 * (rep.g_data_norm + g_phy.norm());

    // Instantaneous CGGS through the production weighting path.
    GateState gate;
    gate.params.alpha = 0.0;
    gate.params.kappa = kappa;
    gate.params.epsilon = epsilon;
    gate.params.lambda_logic = 0.0;
    const auto diag = diagnose(g_data, g_phy, g_logic, epsilon);
    gate = cggs_update(gate, diag);
    const Eigen::VectorXd d = combine(diag, gate);
    rep.cggs_lambda = gate.lambda_hat;
    rep.cggs_update_norm = d.norm();
    rep.cggs_deviation = (d - g_data).norm();
    const double suppression = sigmoid(-kappa);
    rep.cggs_escapes = rep.cggs_deviation <= suppression * rep.g_data_norm * (1.0 + kRelativeSlack) &&
                       rep.cggs_update_norm >= (1.0 - suppression) * rep.g_data_norm * (1.0 - kRelativeSlack);
    return rep;
}

std::string_view to_string(VerifyMode mode)
{
    switch (mode) {
    case VerifyMode::descent: return "descent";
    case VerifyMode::theorem: return "theorem";
    case VerifyMode::all: return "all";
    }
    return "?";
}

VerifyMode parse_verify_mode(std::string_view name)
{
    if (name == "descent") {
        return VerifyMode::descent;
    }
    if (name == "theorem") {
        return VerifyMode::theorem;
    }
    if (name == "all") {
        return VerifyMode::all;
    }
    throw ConfigError("unknown verify mode `" + std::string(name) + "` (expected descent, theorem or all)");
}

bool logic_inactive(const TrainRecord& r)
{
    if (std::isnan(r.norm_logic)) {
        return r.l_logic == 0.0;
    }
    return r.norm_logic < 1e-12;
}

Verdict verify_trace(std::span<const TrainRecord> records, const DescentConstants& constants, VerifyMode mode,
                     const TraceContext& context)
{
    const bool want_descent = mode != VerifyMode::theorem;
    const bool want_theorem = mode != VerifyMode::descent;
    if (context.alpha != 0.0) {
        throw ModeError("descent and rate checks apply to the instantaneous weight (alpha = 0), trace has alpha = " +
                        std::to_string(context.alpha));
    }
    if (want_theorem && !context.gradient_descent) {
        throw ModeError("the rate envelope assumes plain gradient descent; trace was produced with Adam");
    }
    if (want_theorem && !(context.eta > 0.0)) {
        throw ModeError("the rate envelope needs the learning rate eta of the run");
    }
    if (records.empty()) {
        throw ValidationError("cannot verify an empty trace");
    }

    Verdict v;
    v.mode = mode;
    v.m_kappa = constants.m_kappa;
    for (const auto& r : records) {
        v.observed_max_grad = std::max({v.observed_max_grad, r.norm_data, r.norm_phy});
    }

    if (want_descent) {
        for (const auto& r : records) {
            if (!logic_inactive(r)) {
                ++v.descent_skipped;
                continue;
            }
            ++v.descent_checked;
            const double g2 = r.norm_data * r.norm_data;
            const bool inner_ok = r.descent_inner >= constants.c * g2 - kRelativeSlack * g2;
            const bool size_ok = r.d_norm <= 2.0 * r.norm_data * (1.0 + kRelativeSlack);
            if (!inner_ok || !size_ok) {
                v.descent_violations.push_back(r.step);
            }
        }
        v.descent_pass_rate =
            v.descent_checked == 0
                ? 1.0
                : 1.0 - static_cast<double>(v.descent_violations.size()) / static_cast<double>(v.descent_checked);
    }

    if (want_theorem) {
        double min_g2 = std::numeric_limits<double>::infinity();
        double min_l = std::numeric_limits<double>::infinity();
        for (const auto& r : records) {
            min_g2 = std::min(min_g2, r.norm_data * r.norm_data);
            min_l = std::min(min_l, r.l_data);
        }
        const double T = static_cast<double>(records.size());
        v.theorem_lhs = min_g2;
        v.theorem_bound = 2.0 * (records.front().l_data - min_l) / (constants.c * context.eta * T);
        v.theorem_pass = *v.theorem_lhs <= *v.theorem_bound;
    }
    return v;
}

double median(std::vector<double> values)
{
    if (values.empty()) {
        return std::nan("");
    }
    const auto mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (values.size() % 2 == 1) {
        return upper;
    }
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

ExperimentMetrics peak_metrics(std::span<const double> times, std::span<const double> predicted,
                               std::span<const double> truth)
{
    if (times.empty() || times.size() != predicted.size() || times.size() != truth.size()) {
        throw DimensionMismatch("peak metrics need equally long, non-empty series");
    }
    const auto ip = static_cast<std::size_t>(std::max_element(predicted.begin(), predicted.end()) - predicted.begin());
    const auto it = static_cast<std::size_t>(std::max_element(truth.begin(), truth.end()) - truth.begin());
    ExperimentMetrics m;
    m.peak_value_pred = predicted[ip];
    m.peak_time_pred = times[ip];
    m.peak_value_true = truth[it];
    m.peak_time_true = times[it];
    m.peak_value_error = std::abs(m.peak_value_pred - m.peak_value_true) / std::abs(m.peak_value_true);
    m.peak_time_error = std::abs(m.peak_time_pred - m.peak_time_true);
    return m;
}

ExperimentMetrics experiment_metrics(std::span<const TrainRecord> records, const NetworkParams& params,
                                     const Trajectory& truth)
{
    std::vector<double> times;
    std::vector<double> pred;
    std::vector<double> real;
    times.reserve(truth.size());
    pred.reserve(truth.size());
    real.reserve(truth.size());
    for (const auto& x : truth) {
        times.push_back(x.t);
        pred.push_back(evaluate(params, x.t)[2]);
        real.push_back(x.i);
    }
    ExperimentMetrics m = peak_metrics(times, pred, real);

    std::vector<double> early;
    std::vector<double> late;
    for (const auto& r : records) {
        if (r.step < 250) {
            early.push_back(r.lambda_hat);
        } else if (r.step >= 400 && r.step <= 600) {
            late.push_back(r.lambda_hat);
        }
        if (r.s_cos < 0.0) {
            ++m.negative_cos_steps;
        }
    }
    m.early_lambda_median = median(std::move(early));
    m.late_lambda_median = median(std::move(late));
    m.final_l_data = records.empty() ? std::nan("") : records.back().l_data;
    return m;
}

double estimate_curvature(Objective& objective, const Eigen::VectorXd& theta, std::size_t pairs, double radius,
                          double separation, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto direction = [&] {
        Eigen::VectorXd u(theta.size());
        for (Eigen::Index k = 0; k < u.size(); ++k) {
            u[k] = normal(rng);
        }
        return Eigen::VectorXd(u / u.norm());
    };
    // Random base points; each offset follows the previous gradient
    // difference, a power iteration towards the largest curvature direction.
    Eigen::VectorXd offset = direction();
    double best = 0.0;
    for (std::size_t p = 0; p < pairs; ++p) {
        const Eigen::VectorXd a = theta + radius * direction();
        const Eigen::VectorXd b = a + separation * offset;
        const Eigen::VectorXd diff = objective.evaluate_data(b).second - objective.evaluate_data(a).second;
        const double norm = diff.norm();
        best = std::max(best, norm / (a - b).norm());
        offset = norm > 0.0 ? Eigen::VectorXd(diff / norm) : direction();
    }
    return best;
}

} // namespace cggs
