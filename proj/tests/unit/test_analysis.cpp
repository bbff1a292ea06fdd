#include <cmath>
#include <random>
#include <vector>

#include <doctest.h>

#include "cggs/analysis.hpp"
#include "cggs/error.hpp"

using namespace cggs;
using Eigen::VectorXd;

namespace {

TrainRecord cooperative(int step, double g, double l)
{
    TrainRecord r;
    r.step = step;
    r.l_data = l;
    r.norm_data = g;
    r.norm_phy = g;
    r.s_cos = 0.5;
    r.descent_inner = 1.2 * g * g;
    r.d_norm = 1.5 * g;
    r.norm_logic = 0.0;
    return r;
}

// l(x) = sum_k w_k (1 - cos x_k): smooth, non-convex, L = max w.
class Cosines final : public Objective {
public:
    explicit Cosines(VectorXd w) : w_(std::move(w)) {}
    Eigen::Index dimension() const override { return w_.size(); }
    LossEvaluation evaluate(const VectorXd& x) override
    {
        LossEvaluation e;
        e.l_data = (w_.array() * (1.0 - x.array().cos())).sum();
        e.g_data = w_.array() * x.array().sin();
        e.l_ode = 0.5 * x.squaredNorm();
        e.g_phy = x;
        e.g_logic = VectorXd::Zero(x.size());
        return e;
    }

private:
    VectorXd w_;
};

// l(x) = x' H x / 2 with H = diag(h): L = max h exactly.
class Diagonal final : public Objective {
public:
    explicit Diagonal(VectorXd h) : h_(std::move(h)) {}
    Eigen::Index dimension() const override { return h_.size(); }
    LossEvaluation evaluate(const VectorXd& x) override
    {
        LossEvaluation e;
        e.l_data = 0.5 * x.dot(h_.cwiseProduct(x));
        e.g_data = h_.cwiseProduct(x);
        e.g_phy = VectorXd::Zero(x.size());
        e.g_logic = VectorXd::Zero(x.size());
        return e;
    }

private:
    VectorXd h_;
};

} // namespace

TEST_SUITE("analysis")
{
    TEST_CASE("interference constant examples")
    {
        const auto k5 = compute_m_kappa(5.0);
        CHECK(k5.m_kappa == doctest::Approx(0.056).epsilon(0.005 / 0.056));
        CHECK(k5.s_star == doctest::Approx(0.26).epsilon(0.02 / 0.26));
        CHECK(k5.c == 1.0 - k5.m_kappa);

        const auto k0 = compute_m_kappa(0.0);
        CHECK(k0.m_kappa == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(k0.s_star == doctest::Approx(1.0).epsilon(1e-9));
        CHECK_THROWS_AS(compute_m_kappa(-1.0), ConfigError);
    }

    TEST_CASE("golden section agrees with a brute-force scan")
    {
        for (double kappa : {0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 40.0}) {
            const auto a = compute_m_kappa(kappa);
            const auto b = m_kappa_grid_scan(kappa);
            CHECK(std::abs(a.m_kappa - b.m_kappa) <= 1e-8);
            CHECK(std::abs(a.s_star - b.s_star) <= 2e-6);
        }
    }

    TEST_CASE("interference shrinks as the gate sharpens")
    {
        double prev = 1.0;
        for (double kappa : {0.0, 1.0, 2.0, 5.0, 10.0}) {
            const auto k = compute_m_kappa(kappa);
            CHECK(k.m_kappa < prev);
            CHECK(k.m_kappa > 0.0);
            CHECK(k.c >= 0.5);
            prev = k.m_kappa;
        }
    }

    TEST_CASE("deadlock examples")
    {
        const auto one = deadlock_demo(1.0);
        CHECK(one.lambda_std == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(one.fixed_update_norm <= 1e-12 * one.g_data_norm);
        CHECK(one.pareto_alpha == 0.5);
        CHECK(one.passed());

        CHECK(deadlock_demo(3.0).pareto_alpha == 0.25);

        const auto two = deadlock_demo(2.0, 5.0);
        const double ratio = two.cggs_update_norm / two.g_data_norm;
        CHECK(ratio >= 1.0 - sigmoid(-5.0));
        CHECK(ratio <= 1.0);
        CHECK(two.passed());

        CHECK_THROWS_AS(deadlock_demo(0.0), ConfigError);
    }

    TEST_CASE("deadlock holds on random cases")
    {
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int trial = 0; trial < 100; ++trial) {
            const double c = std::pow(10.0, 2.0 * u(rng) - 1.0);
            const auto dim = static_cast<Eigen::Index>(std::pow(10.0, 1.0 + 2.0 * u(rng)));
            const auto r = deadlock_demo(c, 5.0, dim, rng());
            CHECK(r.passed());
            CHECK(r.fixed_update_norm <= 1e-12 * r.g_data_norm);
            CHECK(r.cggs_update_norm >= 0.99 * r.g_data_norm);
        }
    }

    TEST_CASE("verify accepts a cooperative trace and flags an injected violation")
    {
        const auto k = compute_m_kappa(5.0);
        std::vector<TrainRecord> records;
        for (int s = 0; s < 50; ++s) {
            records.push_back(cooperative(s, 1.0 / (1 + s), 1.0 / (1 + s)));
            CHECK(records.back().descent_inner >= records.back().norm_data * records.back().norm_data);
        }
        const TraceContext ctx{true, 0.0, 0.1};
        auto v = verify_trace(records, k, VerifyMode::descent, ctx);
        CHECK(v.descent_checked == 50);
        CHECK(v.descent_pass_rate == 1.0);
        CHECK(v.passed());

        records[17].descent_inner = 0.5 * records[17].norm_data * records[17].norm_data;
        records[30].d_norm = 2.5 * records[30].norm_data;
        v = verify_trace(records, k, VerifyMode::descent, ctx);
        CHECK(v.descent_violations == std::vector<int>{17, 30});
        CHECK_FALSE(v.passed());

        // An active logic gradient exempts the step.
        records[17].norm_logic = 1.0;
        v = verify_trace(records, k, VerifyMode::descent, ctx);
        CHECK(v.descent_skipped == 1);
        CHECK(v.descent_violations == std::vector<int>{30});
    }

    TEST_CASE("logic activity falls back to the loss for reloaded records")
    {
        TrainRecord r;
        r.norm_logic = std::nan("");
        r.l_logic = 0.0;
        CHECK(logic_inactive(r));
        r.l_logic = 1e-9;
        CHECK_FALSE(logic_inactive(r));
        r.norm_logic = 0.0;
        CHECK(logic_inactive(r));
    }

    TEST_CASE("verify refuses unsupported traces")
    {
        const auto k = compute_m_kappa(5.0);
        const std::vector<TrainRecord> records{cooperative(0, 1.0, 1.0)};
        CHECK_THROWS_AS(verify_trace(records, k, VerifyMode::all, {false, 0.0, 0.1}), ModeError);
        CHECK_THROWS_AS(verify_trace(records, k, VerifyMode::descent, {true, 0.9, 0.1}), ModeError);
        CHECK_THROWS_AS(verify_trace(records, k, VerifyMode::theorem, {true, 0.0, 0.0}), ModeError);
        CHECK_NOTHROW(verify_trace(records, k, VerifyMode::descent, {false, 0.0, 0.0}));
        CHECK_THROWS_AS(verify_trace({}, k, VerifyMode::descent, {true, 0.0, 0.1}), ValidationError);
        CHECK_THROWS_AS(parse_verify_mode("everything"), ConfigError);
    }

    TEST_CASE("curvature estimate finds a single stiff direction")
    {
        // Random offsets would see ~100 / sqrt(500) along one stiff axis.
        VectorXd h = VectorXd::Ones(500);
        h[137] = 100.0;
        Diagonal obj(h);
        const double l_hat = estimate_curvature(obj, VectorXd::Zero(500), 100, 1e-2, 1e-3, 3);
        CHECK(l_hat <= 100.0 * (1.0 + 1e-9));
        CHECK(l_hat >= 99.0);
    }

    TEST_CASE("rate envelope on a smooth non-convex toy")
    {
        VectorXd w(2);
        w << 1.0, 0.25;
        Cosines obj(w);
        const auto k = compute_m_kappa(5.0);
        VectorXd x0(2);
        x0 << 2.5, -3.0;
        // The data loss has L = max w = 1; the estimate must not exceed it.
        const double l_hat = estimate_curvature(obj, x0, 200, 1e-2, 1e-3, 1);
        CHECK(l_hat <= 1.0 + 1e-9);
        CHECK(l_hat > 0.2);

        auto config = theory_mode(TrainConfig{});
        config.optimizer.eta = k.c / 4.0;
        config.steps = 300;
        const auto records = run_objective(config, obj, x0);
        const auto v = verify_trace(records, k, VerifyMode::all, {true, 0.0, config.optimizer.eta});
        CHECK(v.descent_pass_rate == 1.0);
        CHECK(v.theorem_pass);
        REQUIRE(v.theorem_lhs);
        CHECK(*v.theorem_lhs <= *v.theorem_bound);
    }

    TEST_CASE("rate envelope fails when the step is far too large")
    {
        VectorXd a(1);
        a << 0.0;
        std::vector<TrainRecord> records;
        // l = x^2 / 2 with eta = 2.5 oscillates and diverges: |x| grows by 1.5 each step.
        double x = 1.0;
        for (int s = 0; s < 20; ++s) {
            TrainRecord r;
            r.step = s;
            r.l_data = 0.5 * x * x;
            r.norm_data = std::abs(x);
            r.descent_inner = x * x;
            r.d_norm = std::abs(x);
            records.push_back(r);
            x -= 2.5 * x;
        }
        const auto v = verify_trace(records, compute_m_kappa(5.0), VerifyMode::theorem, {true, 0.0, 2.5});
        CHECK_FALSE(v.theorem_pass);
    }

    TEST_CASE("peak metrics")
    {
        std::vector<double> t, truth, scaled;
        for (int k = 0; k <= 100; ++k) {
            t.push_back(k);
            truth.push_back(std::exp(-0.01 * (k - 40) * (k - 40)));
            scaled.push_back(0.85 * truth.back());
        }
        const auto same = peak_metrics(t, truth, truth);
        CHECK(same.peak_value_error == 0.0);
        CHECK(same.peak_time_error == 0.0);
        const auto low = peak_metrics(t, scaled, truth);
        CHECK(low.peak_value_error == doctest::Approx(0.15).epsilon(1e-12));
        CHECK(low.peak_time_error == 0.0);
        CHECK_THROWS_AS(peak_metrics(t, scaled, std::vector<double>{1.0}), DimensionMismatch);
    }

    TEST_CASE("phase medians")
    {
        CHECK(median({3.0, 1.0, 2.0}) == 2.0);
        CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
        CHECK(std::isnan(median({})));

        const auto params = init_network({1, 4, 4}, 0);
        const auto truth = rk4_simulate(SeirParams{}, SeirState{}, 100.0, 1.0);
        std::vector<TrainRecord> records;
        for (int s = 0; s < 700; ++s) {
            TrainRecord r;
            r.step = s;
            r.lambda_hat = s < 250 ? 0.1 : 2.0;
            r.s_cos = s % 4 == 0 ? -0.3 : 0.3;
            r.l_data = 1.0 / (1 + s);
            records.push_back(r);
        }
        const auto m = experiment_metrics(records, params, truth);
        CHECK(m.early_lambda_median == 0.1);
        CHECK(m.late_lambda_median == 2.0);
        CHECK(m.negative_cos_steps == 175);
        CHECK(m.final_l_data == records.back().l_data);
        CHECK(m.peak_value_error >= 0.0);
    }
}
