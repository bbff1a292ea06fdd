#include "cggs/net.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <string>

#include <json.hpp>

#include "cggs/error.hpp"

namespace cggs {

Eigen::Index parameter_count(std::span<const int> layer_sizes)
{
    Eigen::Index n = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        n += static_cast<Eigen::Index>(layer_sizes[l] + 1) * layer_sizes[l + 1];
    }
    return n;
}

void validate_layer_sizes(std::span<const int> layer_sizes)
{
    if (layer_sizes.size() < 2) {
        throw ConfigError("network needs at least an input and an output layer");
    }
    if (layer_sizes.front() != 1) {
        throw ConfigError("network input width must be 1 (time), got " + std::to_string(layer_sizes.front()));
    }
    if (layer_sizes.back() != kCompartments) {
        throw ConfigError("network output width must be 4 (s, e, i, r), got " +
                          std::to_string(layer_sizes.back()));
    }
    for (int w : layer_sizes) {
        if (w <= 0) {
            throw ConfigError("layer widths must be positive");
        }
    }
}

NetworkParams init_network(std::vector<int> layer_sizes, std::uint64_t seed, double horizon)
{
    validate_layer_sizes(layer_sizes);
    if (!(horizon > 0.0)) {
        throw ConfigError("time horizon must be positive");
    }
    NetworkParams p;
    p.horizon = horizon;
    p.theta.setZero(parameter_count(layer_sizes));

    std::mt19937_64 rng(seed);
    Eigen::Index offset = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const int in = layer_sizes[l];
        const int out = layer_sizes[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (int k = 0; k < in * out; ++k) {
            p.theta[offset++] = dist(rng);
        }
        offset += out; // biases stay zero
    }
    p.layer_sizes = std::move(layer_sizes);
    return p;
}

BoundNetwork::BoundNetwork(const NetworkParams& params, Tape& tape) : params_(&params)
{
    theta_.reserve(static_cast<std::size_t>(params.size()));
    for (Eigen::Index k = 0; k < params.size(); ++k) {
        theta_.push_back(tape.var(params.theta[k]));
    }
}

BoundNetwork::BoundNetwork(const NetworkParams& params, std::vector<Var> theta)
    : params_(&params), theta_(std::move(theta))
{
    if (static_cast<Eigen::Index>(theta_.size()) != params.size()) {
        throw DimensionMismatch("bound parameter count " + std::to_string(theta_.size()) +
                                " != network size " + std::to_string(params.size()));
    }
}

namespace {

// Shared layer walk for the tape forward passes. `with_tangent` selects
// whether the time-derivative stream is carried alongside the values.
template <bool with_tangent>
TangentOutput propagate(const NetworkParams& params, std::span<const Var> theta, double t)
{
    const auto& sizes = params.layer_sizes;
    const double x0 = t / params.horizon;
    const double dx0 = 1.0 / params.horizon;

    std::vector<Var> h;
    std::vector<Var> dh;
    std::vector<Var> z;
    std::vector<Var> dz;
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const auto in = static_cast<std::size_t>(sizes[l]);
        const auto out = static_cast<std::size_t>(sizes[l + 1]);
        const std::size_t bias = offset + in * out;
        z.clear();
        dz.clear();
        for (std::size_t j = 0; j < out; ++j) {
            const Var* w = theta.data() + offset + j * in;
            if (l == 0) {
                // Single scalar input: z = w * x0 + b, dz/dt = w / horizon.
                z.push_back(w[0] * x0 + theta[bias + j]);
                if constexpr (with_tangent) {
                    dz.push_back(w[0] * dx0);
                }
                continue;
            }
            Var acc = theta[bias + j];
            for (std::size_t k = 0; k < in; ++k) {
                acc = acc + w[k] * h[k];
            }
            z.push_back(acc);
            if constexpr (with_tangent) {
                Var dacc = w[0] * dh[0];
                for (std::size_t k = 1; k < in; ++k) {
                    dacc = dacc + w[k] * dh[k];
                }
                dz.push_back(dacc);
            }
        }
        offset = bias + out;

        const bool hidden = l + 2 < sizes.size();
        if (!hidden) {
            break;
        }
        h.clear();
        dh.clear();
        for (std::size_t j = 0; j < out; ++j) {
            const Var a = tanh(z[j]);
            h.push_back(a);
            if constexpr (with_tangent) {
                dh.push_back((1.0 - square(a)) * dz[j]);
            }
        }
    }

    TangentOutput result;
    for (int k = 0; k < kCompartments; ++k) {
        result.u[static_cast<std::size_t>(k)] = z[static_cast<std::size_t>(k)];
        if constexpr (with_tangent) {
            result.du_dt[static_cast<std::size_t>(k)] = dz[static_cast<std::size_t>(k)];
        }
    }
    return result;
}

} // namespace

Compartments BoundNetwork::forward(double t) const
{
    return propagate<false>(*params_, theta_, t).u;
}

TangentOutput BoundNetwork::forward_with_tangent(double t) const
{
    return propagate<true>(*params_, theta_, t);
}

std::array<double, kCompartments> evaluate(const NetworkParams& params, double t)
{
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const auto& sizes = params.layer_sizes;
    Eigen::VectorXd x(1);
    x[0] = t / params.horizon;
    Eigen::Index offset = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const Eigen::Index in = sizes[l];
        const Eigen::Index out = sizes[l + 1];
        Eigen::Map<const RowMajor> w(params.theta.data() + offset, out, in);
        Eigen::Map<const Eigen::VectorXd> b(params.theta.data() + offset + in * out, out);
        Eigen::VectorXd z = w * x + b;
        offset += in * out + out;
        x = (l + 2 < sizes.size()) ? Eigen::VectorXd(z.array().tanh()) : z;
    }
    return {x[0], x[1], x[2], x[3]};
}

void save_params(const NetworkParams& params, const std::filesystem::path& path)
{
    nlohmann::json j;
    j["layer_sizes"] = params.layer_sizes;
    j["horizon"] = params.horizon;
    j["theta"] = std::vector<double>(params.theta.data(), params.theta.data() + params.theta.size());
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << j.dump(1) << '\n';
}

NetworkParams load_params(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    NetworkParams p;
    try {
        p.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
        p.horizon = j.at("horizon").get<double>();
        const auto theta = j.at("theta").get<std::vector<double>>();
        p.theta = Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    validate_layer_sizes(p.layer_sizes);
    if (p.theta.size() != parameter_count(p.layer_sizes)) {
        throw ValidationError(path.string() + ": theta length does not match layer sizes");
    }
    return p;
}

} // namespace cggs
