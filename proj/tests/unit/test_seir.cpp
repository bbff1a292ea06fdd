#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <doctest.h>

#include "cggs/error.hpp"
#include "cggs/seir.hpp"

using namespace cggs;

namespace {

const SeirParams kOutbreak{1000.0, 1.0, 0.2, 0.14};

std::filesystem::path temp_file(const char* name)
{
    return std::filesystem::temp_directory_path() / name;
}

void write_text(const std::filesystem::path& path, const char* text)
{
    std::ofstream(path) << text;
}

// Largest state difference between a run and a finer reference sampled on the
// coarse run's times.
double max_error(const Trajectory& coarse, const Trajectory& fine, std::size_t stride)
{
    double err = 0.0;
    for (std::size_t k = 0; k < coarse.size(); ++k) {
        const auto& a = coarse[k];
        const auto& b = fine[k * stride];
        err = std::max({err, std::abs(a.s - b.s), std::abs(a.e - b.e), std::abs(a.i - b.i), std::abs(a.r - b.r)});
    }
    return err;
}

} // namespace

TEST_SUITE("seir")
{
    TEST_CASE("trajectory grid and initial state")
    {
        const auto traj = rk4_simulate(kOutbreak, SeirState{}, 100.0, 0.1);
        REQUIRE(traj.size() == 1001);
        CHECK(traj.front().t == 0.0);
        CHECK(traj.front().s == 0.999);
        CHECK(traj.back().t == doctest::Approx(100.0).epsilon(1e-14));
    }

    TEST_CASE("no transmission leaves s constant")
    {
        SeirParams p = kOutbreak;
        p.beta = 0.0;
        for (const auto& st : rk4_simulate(p, SeirState{}, 100.0, 0.1)) {
            CHECK(st.s == 0.999);
        }
    }

    TEST_CASE("conservation, positivity and monotone r")
    {
        const auto traj = rk4_simulate(kOutbreak, SeirState{}, 100.0, 0.01);
        for (std::size_t k = 0; k < traj.size(); ++k) {
            const auto& st = traj[k];
            CHECK(std::abs(st.s + st.e + st.i + st.r - 1.0) <= 1e-10);
            CHECK(std::min({st.s, st.e, st.i, st.r}) >= -1e-12);
            if (k > 0) {
                CHECK(st.r >= traj[k - 1].r);
            }
        }
    }

    TEST_CASE("infected curve has a single interior peak")
    {
        // i first dips slightly while e fills from zero, then rises once and
        // decays: exactly one interior local maximum.
        const auto traj = rk4_simulate(kOutbreak, SeirState{}, 100.0, 0.01);
        std::vector<std::size_t> maxima;
        for (std::size_t k = 1; k + 1 < traj.size(); ++k) {
            if (traj[k].i > traj[k - 1].i && traj[k].i >= traj[k + 1].i) {
                maxima.push_back(k);
            }
        }
        REQUIRE(maxima.size() == 1);
        const std::size_t peak = maxima.front();
        CHECK(traj[peak].i > 10.0 * traj.front().i);
        CHECK(traj[peak].t > 10.0);
        CHECK(traj[peak].t < 90.0);
        for (std::size_t k = peak + 1; k < traj.size(); ++k) {
            CHECK(traj[k].i <= traj[k - 1].i);
        }
    }

    TEST_CASE("fourth-order convergence against a finer reference")
    {
        const double dt = 0.5;
        const auto reference = rk4_simulate(kOutbreak, SeirState{}, 100.0, dt / 40.0);
        const auto coarse = rk4_simulate(kOutbreak, SeirState{}, 100.0, dt);
        const auto half = rk4_simulate(kOutbreak, SeirState{}, 100.0, dt / 2.0);
        const double e1 = max_error(coarse, reference, 40);
        const double e2 = max_error(half, reference, 20);
        const double order = std::log2(e1 / e2);
        CHECK(order == doctest::Approx(4.0).epsilon(0.1));
        // Fitted constant: halving dt changes states by at most C dt^4.
        const double c = max_error(coarse, half, 2) / std::pow(dt, 4);
        CHECK(max_error(half, rk4_simulate(kOutbreak, SeirState{}, 100.0, dt / 4.0), 2) <= 1.25 * c * std::pow(dt / 2.0, 4));
    }

    TEST_CASE("invalid inputs")
    {
        CHECK_THROWS_AS(rk4_simulate(kOutbreak, SeirState{}, 10.0, 0.0), ConfigError);
        CHECK_THROWS_AS(rk4_simulate(kOutbreak, SeirState{0.0, 0.5, 0.0, 0.0, 0.0}, 10.0, 0.1), ConfigError);
        CHECK_THROWS_AS(rk4_simulate(SeirParams{0.0, 1.0, 0.2, 0.14}, SeirState{}, 10.0, 0.1), ConfigError);
        CHECK_THROWS_AS(rk4_simulate(SeirParams{1000.0, -1.0, 0.2, 0.14}, SeirState{}, 10.0, 0.1), ConfigError);
        // A step far beyond the stability limit drives the state out of range.
        CHECK_THROWS_AS(rk4_simulate(SeirParams{1000.0, 1.0, 50.0, 0.14}, SeirState{}, 10.0, 1.0), NumericalError);
    }

    TEST_CASE("residual examples")
    {
        Tape t;
        const std::array<Var, 4> u{t.var(0.5), t.var(0.2), t.var(0.2), t.var(0.1)};
        const std::array<Var, 4> zero{t.var(0.0), t.var(0.0), t.var(0.0), t.var(0.0)};
        const auto f = residual(u, zero, rates_of(kOutbreak));
        CHECK(f[0].value() == doctest::Approx(0.1).epsilon(1e-14));
        CHECK(f[1].value() == doctest::Approx(-0.06).epsilon(1e-14));
        CHECK(f[2].value() == doctest::Approx(-0.012).epsilon(1e-14));
        CHECK(f[3].value() == doctest::Approx(-0.028).epsilon(1e-14));

        for (const auto& v : residual(zero, zero, rates_of(kOutbreak))) {
            CHECK(v.value() == 0.0);
        }
    }

    TEST_CASE("residual vanishes on the ground truth")
    {
        const auto traj = rk4_simulate(kOutbreak, SeirState{}, 100.0, 0.1);
        double worst = 0.0;
        for (const auto& st : traj) {
            Tape t;
            const std::array<double, 4> x{st.s, st.e, st.i, st.r};
            const auto dx = seir_rhs(x, rates_of(kOutbreak));
            std::array<Var, 4> u;
            std::array<Var, 4> du;
            for (std::size_t k = 0; k < 4; ++k) {
                u[k] = t.var(x[k]);
                du[k] = t.var(dx[k]);
            }
            for (const auto& v : residual(u, du, rates_of(kOutbreak))) {
                worst = std::max(worst, std::abs(v.value()));
            }
        }
        CHECK(worst <= 1e-10);
    }

    TEST_CASE("collocation grid")
    {
        const auto g = CollocationGrid::uniform(100.0, 200);
        REQUIRE(g.points.size() == 200);
        CHECK(g.points.front() == 0.0);
        CHECK(g.points.back() == 100.0);
        CHECK(g.spacing == doctest::Approx(100.0 / 199.0));
        for (std::size_t k = 1; k < g.points.size(); ++k) {
            CHECK(g.points[k] - g.points[k - 1] == doctest::Approx(g.spacing).epsilon(1e-12));
        }
        CHECK_THROWS_AS(CollocationGrid::uniform(100.0, 1), ConfigError);
    }

    TEST_CASE("dataset generation")
    {
        const auto traj = rk4_simulate(kOutbreak, SeirState{}, 100.0, 0.1);
        const auto a = generate_dataset(traj, 20, 0.05, 7);
        const auto b = generate_dataset(traj, 20, 0.05, 7);
        const auto c = generate_dataset(traj, 20, 0.05, 8);
        REQUIRE(a.observations.size() == 20);
        CHECK(a.observations == b.observations);
        CHECK(a.observations != c.observations);
        CHECK_NOTHROW(a.validate(100.0));

        const auto clean = generate_dataset(traj, 20, 0.0, 7);
        for (const auto& obs : clean.observations) {
            const auto it = std::find_if(traj.begin(), traj.end(), [&](const auto& st) { return st.t == obs.t; });
            REQUIRE(it != traj.end());
            CHECK(obs.i_obs == it->i);
        }
        CHECK_THROWS_AS(generate_dataset(traj, traj.size() + 1, 0.05, 0), ConfigError);
    }

    TEST_CASE("noise has zero mean")
    {
        const auto traj = rk4_simulate(kOutbreak, SeirState{}, 100.0, 0.01);
        const double sigma = 0.05;
        const auto data = generate_dataset(traj, 10000, sigma, 3);
        double sum = 0.0;
        std::size_t k = 0;
        for (const auto& obs : data.observations) {
            while (traj[k].t != obs.t) {
                ++k;
            }
            sum += obs.i_obs - traj[k].i;
        }
        CHECK(std::abs(sum / 10000.0) <= 3.0 * sigma / 100.0);
    }

    TEST_CASE("dataset and trajectory CSV round trips")
    {
        const auto traj = rk4_simulate(kOutbreak, SeirState{}, 100.0, 0.1);
        const auto data = generate_dataset(traj, 20, 0.05, 7);
        const auto dpath = temp_file("cggs_dataset.csv");
        save_dataset(data, dpath);
        CHECK(load_dataset(dpath).observations == data.observations);

        const auto tpath = temp_file("cggs_truth.csv");
        save_trajectory(traj, tpath);
        const auto back = load_trajectory(tpath);
        REQUIRE(back.size() == traj.size());
        for (std::size_t k = 0; k < traj.size(); ++k) {
            CHECK(back[k].t == traj[k].t);
            CHECK(back[k].i == traj[k].i);
            CHECK(back[k].r == traj[k].r);
        }
        std::filesystem::remove(dpath);
        std::filesystem::remove(tpath);
    }

    TEST_CASE("dataset CSV errors")
    {
        const auto path = temp_file("cggs_bad_dataset.csv");
        write_text(path, "");
        CHECK_THROWS_AS(load_dataset(path), ParseError);
        write_text(path, "time,value\n1,0.1\n");
        CHECK_THROWS_AS(load_dataset(path), ParseError);
        write_text(path, "t,i_obs\n1,abc\n");
        CHECK_THROWS_AS(load_dataset(path), ParseError);
        write_text(path, "t,i_obs\n1,0.1,3\n");
        CHECK_THROWS_AS(load_dataset(path), ParseError);
        write_text(path, "t,i_obs\n5,0.1\n2,0.2\n");
        CHECK_THROWS_AS(load_dataset(path), ValidationError);
        write_text(path, "t,i_obs\n5,0.1\n5,0.2\n");
        CHECK_THROWS_AS(load_dataset(path), ValidationError);
        write_text(path, "t,i_obs\n5,0.1\n101,0.2\n");
        CHECK_THROWS_AS(load_dataset(path), ValidationError);
        write_text(path, "t,i_obs\n5,0.1\n50,0.2\n");
        CHECK(load_dataset(path).observations.size() == 2);
        std::filesystem::remove(path);
        CHECK_THROWS_AS(load_dataset(path), IoError);
    }
}
