#include "cggs/weighting.hpp"

#include <cmath>
#include <vector>

namespace cggs {

double alignment_score(std::span<const Eigen::VectorXd> gradients)
{
    if (gradients.empty()) {
        throw DimensionMismatch("alignment score of an empty set");
    }
    const Eigen::Index dim = gradients.front().size();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
    for (const auto& g : gradients) {
        if (g.size() != dim) {
            throw DimensionMismatch("alignment score over vectors of differing length");
        }
        const double n = g.norm();
        if (!(n > 0.0)) {
            throw ZeroVector("alignment score needs non-zero gradients");
        }
        mean += g / n;
    }
    mean /= static_cast<double>(gradients.size());
    return 2.0 * mean.squaredNorm() - 1.0;
}

GradientDiagnostics diagnose(Eigen::VectorXd g_data, Eigen::VectorXd g_phy, Eigen::VectorXd g_logic,
                             double epsilon)
{
    if (g_data.size() != g_phy.size() || g_data.size() != g_logic.size()) {
        throw DimensionMismatch("loss gradients have differing lengths");
    }
    GradientDiagnostics d;
    d.norm_data = g_data.norm();
    d.norm_phy = g_phy.norm();
    d.norm_logic = g_logic.norm();
    d.s_cos = cosine(g_data, g_phy, epsilon);

    std::vector<Eigen::VectorXd> nonzero;
    for (const auto* g : {&g_data, &g_phy, &g_logic}) {
        if (g->norm() > 0.0) {
            nonzero.push_back(*g);
        }
    }
    d.alignment = nonzero.size() >= 2 ? alignment_score(nonzero) : 1.0;

    d.g_data = std::move(g_data);
    d.g_phy = std::move(g_phy);
    d.g_logic = std::move(g_logic);
    return d;
}

void GateParams::validate() const
{
    if (!(alpha >= 0.0 && alpha < 1.0)) {
        throw ConfigError("gate alpha must lie in [0, 1)");
    }
    if (!(kappa > 0.0)) {
        throw ConfigError("gate kappa must be positive");
    }
    if (!(epsilon > 0.0)) {
        throw ConfigError("gate epsilon must be positive");
    }
    if (!(lambda_logic >= 0.0)) {
        throw ConfigError("lambda_logic must be non-negative");
    }
}

std::string_view to_string(Strategy s)
{
    switch (s) {
    case Strategy::fixed: return "fixed";
    case Strategy::lra: return "lra";
    case Strategy::cggs: return "cggs";
    }
    return "?";
}

Strategy parse_strategy(std::string_view name)
{
    if (name == "fixed") {
        return Strategy::fixed;
    }
    if (name == "lra") {
        return Strategy::lra;
    }
    if (name == "cggs") {
        return Strategy::cggs;
    }
    throw ConfigError("unknown strategy `" + std::string(name) + "` (expected one of: fixed, lra, cggs)");
}

double conflict_gate(double s_cos, const GateParams& params)
{
    return params.forced_gate ? *params.forced_gate : sigmoid(params.kappa * s_cos);
}

double instantaneous_weight(const GradientDiagnostics& diag, const GateParams& params)
{
    return diag.norm_data / (diag.norm_phy + params.epsilon) * conflict_gate(diag.s_cos, params);
}

GateState cggs_update(GateState state, const GradientDiagnostics& diag)
{
    const double a = state.params.alpha;
    state.lambda_hat = a * state.lambda_hat + (1.0 - a) * instantaneous_weight(diag, state.params);
    return state;
}

GateState lra_update(GateState state, const GradientDiagnostics& diag)
{
    const double a = state.params.alpha;
    state.lambda_hat = a * state.lambda_hat + (1.0 - a) * (diag.norm_data / (diag.norm_phy + state.params.epsilon));
    return state;
}

Eigen::VectorXd combine(const GradientDiagnostics& diag, const GateState& state)
{
    if (diag.g_phy.size() != diag.g_data.size() || diag.g_logic.size() != diag.g_data.size()) {
        throw DimensionMismatch("cannot combine gradients of differing lengths");
    }
    return diag.g_data + state.lambda_hat * diag.g_phy + state.params.lambda_logic * diag.g_logic;
}

} // namespace cggs
