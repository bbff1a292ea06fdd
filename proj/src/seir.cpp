#include "cggs/seir.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "cggs/csv.hpp"
#include "cggs/error.hpp"

namespace cggs {

void SeirParams::validate() const
{
    if (!(population > 0.0)) {
        throw ConfigError("population N must be positive");
    }
    if (!(beta >= 0.0) || !(sigma >= 0.0) || !(gamma >= 0.0)) {
        throw ConfigError("rates beta, sigma, gamma must be non-negative");
    }
}

Trajectory rk4_simulate(const SeirParams& params, const SeirState& init, double t_end, double dt)
{
    params.validate();
    if (!(dt > 0.0)) {
        throw ConfigError("rk4 step dt must be positive");
    }
    if (!(t_end >= 0.0)) {
        throw ConfigError("rk4 end time must be non-negative");
    }
    const std::array<double, 4> u0{init.s, init.e, init.i, init.r};
    if (std::any_of(u0.begin(), u0.end(), [](double x) { return x < 0.0; }) ||
        std::abs(u0[0] + u0[1] + u0[2] + u0[3] - 1.0) > 1e-12) {
        throw ConfigError("initial compartments must be non-negative and sum to 1");
    }

    const auto rates = rates_of(params);
    const auto steps = static_cast<std::size_t>(std::llround(t_end / dt));
    Trajectory out;
    out.reserve(steps + 1);

    std::array<double, 4> u = u0;
    auto axpy = [](const std::array<double, 4>& x, double a, const std::array<double, 4>& y) {
        return std::array<double, 4>{x[0] + a * y[0], x[1] + a * y[1], x[2] + a * y[2], x[3] + a * y[3]};
    };
    for (std::size_t n = 0; n <= steps; ++n) {
        const double t = static_cast<double>(n) * dt;
        for (double x : u) {
            if (!(x >= -1e-9 && x <= 1.0 + 1e-9)) {
                throw NumericalError("rk4 state left [0, 1] at t = " + std::to_string(t));
            }
        }
        out.push_back({t, u[0], u[1], u[2], u[3]});
        if (n == steps) {
            break;
        }
        const auto k1 = seir_rhs(u, rates);
        const auto k2 = seir_rhs(axpy(u, 0.5 * dt, k1), rates);
        const auto k3 = seir_rhs(axpy(u, 0.5 * dt, k2), rates);
        const auto k4 = seir_rhs(axpy(u, dt, k3), rates);
        for (std::size_t c = 0; c < 4; ++c) {
            u[c] += dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
    }
    return out;
}

void Dataset::validate(double horizon) const
{
    for (std::size_t k = 0; k < observations.size(); ++k) {
        const double t = observations[k].t;
        if (!(t >= 0.0 && t <= horizon)) {
            throw ValidationError("observation time " + std::to_string(t) + " outside [0, " +
                                  std::to_string(horizon) + "]");
        }
        if (k > 0 && !(t > observations[k - 1].t)) {
            throw ValidationError("observation times must be strictly increasing (row " + std::to_string(k + 1) +
                                  ")");
        }
        if (!std::isfinite(observations[k].i_obs)) {
            throw ValidationError("non-finite observation at row " + std::to_string(k + 1));
        }
    }
}

CollocationGrid CollocationGrid::uniform(double horizon, std::size_t n_points)
{
    if (n_points < 2) {
        throw ConfigError("collocation grid needs at least 2 points");
    }
    if (!(horizon > 0.0)) {
        throw ConfigError("collocation horizon must be positive");
    }
    CollocationGrid g;
    g.spacing = horizon / static_cast<double>(n_points - 1);
    g.points.resize(n_points);
    for (std::size_t k = 0; k < n_points; ++k) {
        g.points[k] = static_cast<double>(k) * g.spacing;
    }
    g.points.back() = horizon;
    return g;
}

Dataset generate_dataset(const Trajectory& truth, std::size_t n_points, double noise_sigma, std::uint64_t seed)
{
    if (n_points > truth.size()) {
        throw ConfigError("cannot draw " + std::to_string(n_points) + " points from a trajectory of " +
                          std::to_string(truth.size()));
    }
    if (!(noise_sigma >= 0.0)) {
        throw ConfigError("noise sigma must be non-negative");
    }
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> all(truth.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::size_t> picked;
    picked.reserve(n_points);
    std::sample(all.begin(), all.end(), std::back_inserter(picked), n_points, rng);
    std::sort(picked.begin(), picked.end());

    std::normal_distribution<double> noise(0.0, 1.0);
    Dataset d;
    d.noise_sigma = noise_sigma;
    d.seed = seed;
    d.observations.reserve(n_points);
    for (std::size_t idx : picked) {
        const double eps = noise_sigma > 0.0 ? noise_sigma * noise(rng) : 0.0;
        d.observations.push_back({truth[idx].t, truth[idx].i + eps});
    }
    return d;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path)
{
    csv::Table table{{"t", "i_obs"}, {}};
    for (const auto& o : data.observations) {
        table.rows.push_back({o.t, o.i_obs});
    }
    csv::write(path, table);
}

Dataset load_dataset(const std::filesystem::path& path, double horizon)
{
    const auto table = csv::read(path, {"t", "i_obs"});
    Dataset d;
    for (const auto& row : table.rows) {
        d.observations.push_back({row[0], row[1]});
    }
    d.validate(horizon);
    return d;
}

void save_trajectory(const Trajectory& trajectory, const std::filesystem::path& path)
{
    csv::Table table{{"t", "s", "e", "i", "r"}, {}};
    for (const auto& x : trajectory) {
        table.rows.push_back({x.t, x.s, x.e, x.i, x.r});
    }
    csv::write(path, table);
}

Trajectory load_trajectory(const std::filesystem::path& path)
{
    const auto table = csv::read(path, {"t", "s", "e", "i", "r"});
    Trajectory out;
    for (const auto& row : table.rows) {
        out.push_back({row[0], row[1], row[2], row[3], row[4]});
    }
    return out;
}

} // namespace cggs
