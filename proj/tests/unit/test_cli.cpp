#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>
#include <json.hpp>

#include "cggs/experiment.hpp"

using namespace cggs;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult cli(std::initializer_list<std::string> args)
{
    std::vector<std::string> storage{"cggs"};
    storage.insert(storage.end(), args);
    std::vector<const char*> argv;
    for (const auto& a : storage) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out;
    std::ostringstream err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Fresh scratch directory holding a tiny, fast experiment spec.
struct Scratch {
    fs::path root;
    fs::path spec;

    explicit Scratch(const std::string& name, json overrides = json::object())
    {
        root = fs::temp_directory_path() / ("cggs_cli_" + name);
        fs::remove_all(root);
        fs::create_directories(root);
        json j{{"name", name},
               {"train", {{"steps", 8}, {"layers", {1, 6, 6, 4}}, {"grid_points", 20}}},
               {"seeds", {0}},
               {"output_dir", (root / "out").string()},
               {"jobs", 2}};
        j.merge_patch(overrides);
        spec = root / "spec.json";
        std::ofstream(spec) << j.dump(2);
    }
    ~Scratch() { fs::remove_all(root); }
};

std::size_t count_lines(const std::string& text)
{
    std::size_t n = 0;
    for (char c : text) {
        n += c == '\n';
    }
    return n;
}

} // namespace

TEST_SUITE("cli")
{
    TEST_CASE("usage errors exit with 2")
    {
        CHECK(cli({}).code == 2);
        CHECK(cli({"frobnicate"}).code == 2);
        CHECK(cli({"train"}).code == 2);
        const auto r = cli({"train", "--strategy", "pcgrad"});
        CHECK(r.code == 2);
        CHECK(r.err.find("ConfigError") != std::string::npos);
        CHECK(r.err.find("--strategy") != std::string::npos);
        CHECK(cli({"--help"}).code == 0);
    }

    TEST_CASE("missing or malformed spec exits with 2")
    {
        Scratch s("badspec");
        CHECK(cli({"simulate", "--spec", (s.root / "none.json").string()}).code == 2);
        std::ofstream(s.spec) << "{ not json";
        CHECK(cli({"simulate", "--spec", s.spec.string()}).code == 2);
        std::ofstream(s.spec) << R"({"strategies": []})";
        CHECK(cli({"simulate", "--spec", s.spec.string()}).code == 2);
    }

    TEST_CASE("simulate writes reproducible truth and dataset files")
    {
        Scratch s("simulate");
        const auto out = s.root / "out";
        REQUIRE(cli({"simulate", "--spec", s.spec.string()}).code == 0);
        const auto dataset = slurp(out / "dataset.csv");
        CHECK(count_lines(dataset) == 21);
        CHECK(dataset.rfind("t,i_obs\n", 0) == 0);
        CHECK(load_trajectory(out / "truth.csv").size() == 1001);

        const auto first_truth = slurp(out / "truth.csv");
        REQUIRE(cli({"simulate", "--spec", s.spec.string()}).code == 0);
        CHECK(slurp(out / "dataset.csv") == dataset);
        CHECK(slurp(out / "truth.csv") == first_truth);

        // Reloading and rewriting yields the same bytes.
        save_dataset(load_dataset(out / "dataset.csv"), s.root / "again.csv");
        CHECK(slurp(s.root / "again.csv") == dataset);
    }

    TEST_CASE("noise-free dataset rows lie on the truth")
    {
        Scratch s("clean", {{"dataset", {{"noise_sigma", 0.0}}}});
        REQUIRE(cli({"simulate", "--spec", s.spec.string()}).code == 0);
        const auto truth = load_trajectory(s.root / "out" / "truth.csv");
        for (const auto& obs : load_dataset(s.root / "out" / "dataset.csv").observations) {
            const auto k = static_cast<std::size_t>(std::lround(obs.t / 0.1));
            CHECK(truth[k].i == obs.i_obs);
        }
    }

    TEST_CASE("train writes the cell directory and verify reads it")
    {
        Scratch s("train");
        const auto r = cli({"train", "--spec", s.spec.string(), "--strategy", "cggs", "--seed", "3", "--theory-mode"});
        REQUIRE(r.code == 0);
        const auto dir = s.root / "out" / "theory" / "cggs" / "3";
        for (const char* f : {"trace.csv", "params.json", "metrics.json", "run.json"}) {
            CHECK(fs::exists(dir / f));
        }
        const auto summary = json::parse(r.out);
        CHECK(summary.at("run").at("optimizer") == "gd");
        CHECK(summary.at("run").at("alpha") == 0.0);

        // Every written file reloads bit-identically.
        save_trace(load_trace(dir / "trace.csv"), s.root / "trace_again.csv");
        CHECK(slurp(s.root / "trace_again.csv") == slurp(dir / "trace.csv"));
        save_params(load_params(dir / "params.json"), s.root / "params_again.json");
        CHECK(slurp(s.root / "params_again.json") == slurp(dir / "params.json"));
        write_json(to_json(metrics_from_json(read_json(dir / "metrics.json"))), s.root / "m.json");
        CHECK(slurp(s.root / "m.json") == slurp(dir / "metrics.json"));
        write_json(to_json(run_info_from_json(read_json(dir / "run.json"))), s.root / "r.json");
        CHECK(slurp(s.root / "r.json") == slurp(dir / "run.json"));

        const auto v = cli({"verify", (dir / "trace.csv").string()});
        CHECK(v.code == 0);
        const auto verdict = json::parse(v.out);
        for (const char* key : {"descent_pass_rate", "theorem_bound", "theorem_lhs", "m_kappa", "peak_value_error",
                                "peak_time_error", "phase_medians"}) {
            CHECK(verdict.contains(key));
        }
        CHECK(verdict.at("descent_pass_rate") == 1.0);

        // Same trace, absurd learning rate: the rate envelope fails.
        const auto big = cli({"verify", (dir / "trace.csv").string(), "--mode", "theorem", "--eta", "1e6"});
        CHECK(big.code == 1);
    }

    TEST_CASE("verify rejects Adam traces for the rate check and corrupt files")
    {
        Scratch s("verify");
        REQUIRE(cli({"train", "--spec", s.spec.string(), "--strategy", "lra"}).code == 0);
        const auto trace = s.root / "out" / "lra" / "0" / "trace.csv";
        CHECK(cli({"verify", trace.string()}).code == 2);

        std::ofstream(s.root / "bad.csv") << "step,l_data\n0,x\n";
        CHECK(cli({"verify", (s.root / "bad.csv").string()}).code == 2);
        CHECK(cli({"verify", (s.root / "missing.csv").string()}).code == 2);
    }

    TEST_CASE("a divergent run exits with 1")
    {
        Scratch s("diverge", {{"train", {{"optimizer", {{"kind", "gd"}, {"eta", 1e200}}}, {"steps", 20}}}});
        const auto r = cli({"train", "--spec", s.spec.string(), "--strategy", "fixed"});
        CHECK(r.code == 1);
        CHECK(r.err.find("NumericalError") != std::string::npos);
    }

    TEST_CASE("seed override from the environment")
    {
        Scratch s("envseed", {{"seeds", {0, 1}}});
        ::setenv("CONFLICT_GATE_SEED", "5", 1);
        const auto r = cli({"train", "--spec", s.spec.string(), "--strategy", "fixed"});
        ::unsetenv("CONFLICT_GATE_SEED");
        REQUIRE(r.code == 0);
        CHECK(fs::exists(s.root / "out" / "fixed" / "5" / "trace.csv"));

        ::setenv("CONFLICT_GATE_SEED", "abc", 1);
        CHECK(cli({"train", "--spec", s.spec.string(), "--strategy", "fixed"}).code == 2);
        ::unsetenv("CONFLICT_GATE_SEED");
    }

    TEST_CASE("ablation runs every cell and aggregates")
    {
        Scratch s("ablation", {{"strategies", {"cggs", "lra"}}, {"seeds", {0, 1, 2, 3, 4}}});
        const auto r = cli({"ablation", "--spec", s.spec.string()});
        REQUIRE(r.code == 0);
        const auto out = s.root / "out";
        int traces = 0;
        for (const auto& e : fs::recursive_directory_iterator(out)) {
            traces += e.path().filename() == "trace.csv";
        }
        CHECK(traces == 10);
        const auto cmp = read_json(out / "comparison.json");
        CHECK(cmp.at("cells").size() == 10);
        REQUIRE(cmp.at("per_seed").size() == 5);
        for (const auto& row : cmp.at("per_seed")) {
            CHECK(row.at("peak_value_error").contains("cggs"));
            CHECK(row.at("peak_value_error").contains("lra"));
        }
        const auto rows = load_combined(out / "combined.csv");
        CHECK(rows.size() == 10 * 8);
        save_combined(rows, s.root / "combined_again.csv");
        CHECK(slurp(s.root / "combined_again.csv") == slurp(out / "combined.csv"));
        const auto back = comparison_from_json(cmp);
        CHECK(to_json(back) == cmp);

        // Parallel and serial runs agree byte for byte.
        const auto serial = s.root / "serial";
        REQUIRE(cli({"ablation", "--spec", s.spec.string(), "--out", serial.string(), "--jobs", "1"}).code == 0);
        CHECK(slurp(serial / "combined.csv") == slurp(out / "combined.csv"));

        Scratch one("ablation_one", {{"strategies", {"cggs"}}});
        CHECK(cli({"ablation", "--spec", one.spec.string()}).code == 2);
    }

    TEST_CASE("deadlock subcommand")
    {
        const auto r = cli({"deadlock", "--c", "2", "--kappa", "5"});
        REQUIRE(r.code == 0);
        const auto j = json::parse(r.out);
        CHECK(j.at("passed") == true);
        CHECK(j.at("cggs_update_ratio").get<double>() >= 0.9933);
        CHECK(cli({"deadlock", "--c", "-1"}).code == 2);
    }
}
