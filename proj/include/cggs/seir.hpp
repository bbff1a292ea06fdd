#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "cggs/tape.hpp"

namespace cggs {

/// Epidemiological rates. N is a head count; beta, sigma and gamma are per day.
struct SeirParams {
    double population = 1000.0;
    double beta = 1.0;
    double sigma = 0.2;
    double gamma = 0.14;

    void validate() const;
};

/// Normalised state: every compartment is a fraction of the population.
struct SeirState {
    double t = 0.0;
    double s = 0.999;
    double e = 0.0;
    double i = 0.001;
    double r = 0.0;
};

using Trajectory = std::vector<SeirState>;

/// Rates in a form the residual can consume: plain doubles, or tape nodes
/// when the rates are being estimated.
template <class Scalar>
struct SeirRates {
    Scalar beta;
    Scalar sigma;
    Scalar gamma;
};

inline SeirRates<double> rates_of(const SeirParams& p) { return {p.beta, p.sigma, p.gamma}; }

/// Right-hand side of the normalised SEIR system, d(s, e, i, r)/dt.
/// Because s = S/N and i = I/N, the incidence beta*S*I/N becomes beta*s*i.
template <class T, class R>
std::array<T, 4> seir_rhs(const std::array<T, 4>& u, const SeirRates<R>& k)
{
    const T infection = k.beta * u[0] * u[2];
    const T onset = k.sigma * u[1];
    const T removal = k.gamma * u[2];
    return {-infection, infection - onset, onset - removal, removal};
}

/// Classical fourth-order Runge-Kutta on t = 0, dt, 2dt, ..., t_end.
/// Throws NumericalError if any compartment leaves [-1e-9, 1 + 1e-9].
Trajectory rk4_simulate(const SeirParams& params, const SeirState& init, double t_end, double dt);

/// Residual du/dt - f(u), component-wise:
///   (s' + b s i,  e' - b s i + sig e,  i' - sig e + g i,  r' - g i).
template <class R>
std::array<Var, 4> residual(const std::array<Var, 4>& u, const std::array<Var, 4>& du_dt, const SeirRates<R>& k)
{
    const Var infection = k.beta * (u[0] * u[2]);
    const Var onset = k.sigma * u[1];
    const Var removal = k.gamma * u[2];
    return {
        du_dt[0] + infection,
        du_dt[1] - infection + onset,
        du_dt[2] - onset + removal,
        du_dt[3] - removal,
    };
}

struct Observation {
    double t = 0.0;
    double i_obs = 0.0;

    friend bool operator==(const Observation&, const Observation&) = default;
};

struct Dataset {
    std::vector<Observation> observations;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    /// Throws ValidationError unless times strictly increase within [0, horizon].
    void validate(double horizon) const;
};

/// Uniform collocation times covering [0, horizon].
struct CollocationGrid {
    std::vector<double> points;
    double spacing = 0.0;

    static CollocationGrid uniform(double horizon, std::size_t n_points);
};

/// Draws n_points distinct grid times without replacement, sorts them and
/// adds N(0, noise_sigma) noise to the true infected fraction.
Dataset generate_dataset(const Trajectory& truth, std::size_t n_points, double noise_sigma, std::uint64_t seed);

// CSV interfaces. Datasets use header `t,i_obs`; trajectories `t,s,e,i,r`.
// Values are written with 17 significant digits so they reload bit-exactly.
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path, double horizon = 100.0);
void save_trajectory(const Trajectory& trajectory, const std::filesystem::path& path);
Trajectory load_trajectory(const std::filesystem::path& path);

} // namespace cggs
