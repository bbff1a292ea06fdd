#pragma once

#include <concepts>
#include <vector>

#include "cggs/error.hpp"
#include "cggs/net.hpp"
#include "cggs/seir.hpp"
#include "cggs/tape.hpp"

namespace cggs {

/// Anything that maps a time in days to compartments on a tape. BoundNetwork
/// is the production model; tests substitute exact trajectories.
template <class M>
concept CompartmentModel = requires(const M& m, double t) {
    { m.forward(t) } -> std::convertible_to<Compartments>;
    { m.forward_with_tangent(t) } -> std::convertible_to<TangentOutput>;
};

struct LossBundle {
    Var l_data;
    Var l_ode;
    Var l_logic;
};

/// Mean squared error of the infected output against the observations.
/// Only the I compartment is observed. Throws EmptyDataset.
template <CompartmentModel Model>
Var data_loss(const Model& model, const Dataset& data)
{
    if (data.observations.empty()) {
        throw EmptyDataset("data loss needs at least one observation");
    }
    Var sum;
    bool first = true;
    for (const auto& obs : data.observations) {
        const Var sq = square(model.forward(obs.t)[2] - obs.i_obs);
        sum = first ? sq : sum + sq;
        first = false;
    }
    return sum / static_cast<double>(data.observations.size());
}

/// Mean over the grid of the squared Euclidean norm of the SEIR residual.
template <CompartmentModel Model, class R>
Var ode_loss(const Model& model, const CollocationGrid& grid, const SeirRates<R>& rates)
{
    if (grid.points.empty()) {
        throw ConfigError("ode loss needs a non-empty collocation grid");
    }
    Var sum;
    bool first = true;
    for (double t : grid.points) {
        const TangentOutput out = model.forward_with_tangent(t);
        const auto f = residual(out.u, out.du_dt, rates);
        const Var norm_sq = square(f[0]) + square(f[1]) + square(f[2]) + square(f[3]);
        sum = first ? norm_sq : sum + norm_sq;
        first = false;
    }
    return sum / static_cast<double>(grid.points.size());
}

/// Mean over the grid of  sum_k relu(-u_k(t)) + relu(r(t) - r(t + dt)),
/// where t + dt is the next grid point; the last point only carries the
/// non-negativity terms.
template <CompartmentModel Model>
Var logic_loss(const Model& model, const CollocationGrid& grid)
{
    if (grid.points.size() < 2) {
        throw ConfigError("logic loss needs at least two collocation points");
    }
    std::vector<Compartments> u;
    u.reserve(grid.points.size());
    for (double t : grid.points) {
        u.push_back(model.forward(t));
    }
    Var sum;
    bool first = true;
    for (std::size_t k = 0; k < u.size(); ++k) {
        Var term = relu(-u[k][0]) + relu(-u[k][1]) + relu(-u[k][2]) + relu(-u[k][3]);
        if (k + 1 < u.size()) {
            term = term + relu(u[k][3] - u[k + 1][3]);
        }
        sum = first ? term : sum + term;
        first = false;
    }
    return sum / static_cast<double>(u.size());
}

/// All three losses of one model, each on the model's tape.
template <CompartmentModel Model, class R>
LossBundle all_losses(const Model& model, const Dataset& data, const CollocationGrid& grid,
                      const SeirRates<R>& rates)
{
    return {data_loss(model, data), ode_loss(model, grid, rates), logic_loss(model, grid)};
}

} // namespace cggs
