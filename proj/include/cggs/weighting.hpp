#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "cggs/error.hpp"
#include "cggs/tape.hpp"

namespace cggs {

/// Per-step gradient geometry. Gradients are over the full parameter vector.
struct GradientDiagnostics {
    Eigen::VectorXd g_data;
    Eigen::VectorXd g_phy;
    Eigen::VectorXd g_logic;
    double norm_data = 0.0;
    double norm_phy = 0.0;
    double norm_logic = 0.0;
    double s_cos = 0.0;
    double alignment = 0.0;
};

/// g1 . g2 / max(|g1| |g2|, epsilon), clamped to [-1, 1].
template <class DerivedA, class DerivedB>
typename DerivedA::Scalar cosine(const Eigen::MatrixBase<DerivedA>& g1, const Eigen::MatrixBase<DerivedB>& g2,
                                 typename DerivedA::Scalar epsilon)
{
    using Scalar = typename DerivedA::Scalar;
    if (g1.size() != g2.size()) {
        throw DimensionMismatch("cosine of vectors of length " + std::to_string(g1.size()) + " and " +
                                std::to_string(g2.size()));
    }
    const Scalar denom = std::max(g1.norm() * g2.norm(), epsilon);
    return std::clamp(g1.dot(g2) / denom, Scalar(-1), Scalar(1));
}

/// 2 |mean of unit vectors|^2 - 1. Reduces to the cosine for two vectors.
/// Throws ZeroVector for a zero input and DimensionMismatch for ragged input.
double alignment_score(std::span<const Eigen::VectorXd> gradients);

/// Packs the three loss gradients with their norms, cosine and alignment.
/// `alignment` is taken over the non-zero gradients (1 when fewer than two).
GradientDiagnostics diagnose(Eigen::VectorXd g_data, Eigen::VectorXd g_phy, Eigen::VectorXd g_logic,
                             double epsilon);

struct GateParams {
    double alpha = 0.9;        // EMA momentum in [0, 1)
    double kappa = 5.0;        // gate sharpness
    double epsilon = 1e-8;     // norm-ratio and cosine regulariser
    double lambda_logic = 1.0; // fixed logic weight
    // Replaces sigma(kappa * s_cos) by a constant; 1.0 turns CGGS into LRA.
    std::optional<double> forced_gate;

    void validate() const;
};

/// Adaptive physics weight. The data weight is fixed at 1.
struct GateState {
    double lambda_hat = 1.0;
    GateParams params;
};

enum class Strategy { fixed, lra, cggs };

std::string_view to_string(Strategy s);
/// Throws ConfigError naming the accepted values.
Strategy parse_strategy(std::string_view name);

/// sigma(kappa * s), or the forced constant when set.
double conflict_gate(double s_cos, const GateParams& params);

/// |g_data| / (|g_phy| + epsilon) * gate: the weight before smoothing.
double instantaneous_weight(const GradientDiagnostics& diag, const GateParams& params);

/// lambda_hat <- alpha lambda_hat + (1 - alpha) |g_data| / (|g_phy| + eps) sigma(kappa S_cos)
GateState cggs_update(GateState state, const GradientDiagnostics& diag);

/// The same EMA with the gate removed: pure magnitude balancing.
GateState lra_update(GateState state, const GradientDiagnostics& diag);

/// d = g_data + lambda_hat g_phy + lambda_logic g_logic.
Eigen::VectorXd combine(const GradientDiagnostics& diag, const GateState& state);

} // namespace cggs
