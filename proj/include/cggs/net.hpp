#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "cggs/tape.hpp"

namespace cggs {

/// Fully connected tanh network u(t) -> (s, e, i, r).
///
/// `theta` is laid out layer by layer: the weight matrix in row-major order
/// (out x in) followed by the bias vector. The time input is fed as
/// t / horizon, so every derivative with respect to t picks up 1 / horizon.
struct NetworkParams {
    std::vector<int> layer_sizes;
    Eigen::VectorXd theta;
    double horizon = 100.0;

    Eigen::Index size() const { return theta.size(); }
};

inline constexpr int kCompartments = 4;

Eigen::Index parameter_count(std::span<const int> layer_sizes);

/// Throws ConfigError unless sizes start at 1, end at 4 and are all positive.
void validate_layer_sizes(std::span<const int> layer_sizes);

/// Glorot-uniform weights and zero biases, reproducible for a given seed.
NetworkParams init_network(std::vector<int> layer_sizes, std::uint64_t seed, double horizon = 100.0);

using Compartments = std::array<Var, kCompartments>;

struct TangentOutput {
    Compartments u;
    Compartments du_dt;
};

/// A network whose parameters live on a tape as leaves.
///
/// Construction records one leaf per entry of theta (in theta order) unless
/// the caller supplies its own leaves.
class BoundNetwork {
public:
    BoundNetwork(const NetworkParams& params, Tape& tape);
    BoundNetwork(const NetworkParams& params, std::vector<Var> theta);

    Compartments forward(double t) const;

    /// Pushes (z, dz/dt) through every layer: affine maps send (x, x') to
    /// (Wx + b, Wx'), tanh sends (z, z') to (tanh z, (1 - tanh^2 z) z').
    TangentOutput forward_with_tangent(double t) const;

    std::span<const Var> parameters() const { return theta_; }
    const NetworkParams& params() const { return *params_; }

private:
    const NetworkParams* params_;
    std::vector<Var> theta_;
};

/// Tape-free evaluation, used for reporting and dense prediction.
std::array<double, kCompartments> evaluate(const NetworkParams& params, double t);

// Snapshots: a JSON document {"layer_sizes": [...], "horizon": h, "theta": [...]}
// with theta in flat order, written with round-trip precision.
void save_params(const NetworkParams& params, const std::filesystem::path& path);
NetworkParams load_params(const std::filesystem::path& path);

} // namespace cggs
