#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "driftlab/config.hpp"
#include "driftlab/error.hpp"
#include "driftlab/experiments.hpp"
#include "driftlab/ledger.hpp"

using namespace driftlab;
namespace fs = std::filesystem;

namespace {

std::string env_or(const char* name, const char* fallback)
{
    const char* v = std::getenv(name);
    return v ? v : fallback;
}

const std::string kBin = env_or("DRIFTLAB_BIN", "./driftlab");
const std::string kConfigs = env_or("DRIFTLAB_CONFIGS", "../configs");

struct Run {
    int code = -1;
    std::string out;
};

Run sh(const std::string& args)
{
    Run r;
    std::string cmd = kBin + " " + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::array<char, 4096> buf;
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), p)) > 0)
        r.out.append(buf.data(), n);
    int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& s)
{
    std::ofstream out(p, std::ios::binary);
    out << s;
}

// Fresh scratch directory per test case.
struct Scratch {
    fs::path dir;
    explicit Scratch(const std::string& tag)
        : dir(fs::temp_directory_path() / ("driftlab_cli_" + tag + "_" + std::to_string(getpid())))
    {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }
};

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

} // namespace

TEST_CASE("registry lists the thirteen experiments in order")
{
    const std::vector<std::string> expected = {
        "pde_effective_sigma", "pde_steady_state",       "pde_fdt",          "pde_einstein",
        "mc_vs_pde_drift",     "mc_nu_consistency",      "mc_einstein_trend", "mc_variance_continuity",
        "mc_amax_scaling",     "mc_doob_bound",          "mc_lebowitz_rost", "mc_regen_diagnostics",
        "mc_gamma_bar"};
    const auto& reg = experiment_registry();
    REQUIRE(reg.size() == expected.size());
    for (std::size_t i = 0; i < reg.size(); ++i) {
        CHECK(reg[i].name == expected[i]);
        CHECK(reg[i].runtime_limit_s > 0.0);
        CHECK(ExperimentConfig::parse(reg[i].default_config).experiment() == expected[i]);
    }
}

TEST_CASE("shipped configs equal the registry defaults and round-trip byte for byte")
{
    for (const auto& e : experiment_registry()) {
        CAPTURE(e.name);
        fs::path p = fs::path(kConfigs) / (e.name + ".cfg");
        REQUIRE(fs::exists(p));
        std::string text = slurp(p);
        CHECK(text == e.default_config);
        ExperimentConfig c = ExperimentConfig::parse(text);
        CHECK(c.format() == text);
        ExperimentConfig j = ExperimentConfig::parse_json(c.to_json());
        CHECK(j == c);
        CHECK(j.format() == text);
        CHECK(j.hash() == c.hash());
    }
}

TEST_CASE("config hash is deterministic and sensitive to values")
{
    const std::string text = find_experiment("pde_einstein").default_config;
    ExperimentConfig a = ExperimentConfig::parse(text), b = ExperimentConfig::parse(text);
    CHECK(a.hash() == b.hash());
    CHECK(a.hash().size() == 16);
    b.set_text("run", "lambda", "0.02");
    CHECK(a.hash() != b.hash());
    // Comments and spacing do not matter once canonicalized.
    ExperimentConfig c = ExperimentConfig::parse("# note\n" + text + "\n\n");
    CHECK(c.hash() == a.hash());
}

TEST_CASE("malformed configs are rejected")
{
    CHECK_THROWS_AS(ExperimentConfig::parse("[run]\nbogus = 1\n"), Error);
    CHECK_THROWS_AS(ExperimentConfig::parse("[nowhere]\nx = 1\n"), Error);
    CHECK_THROWS_AS(ExperimentConfig::parse("lambda = 1\n"), Error);
    CHECK_THROWS_AS(ExperimentConfig::parse("[run]\nlambda = 1\nlambda = 2\n"), Error);
    CHECK_THROWS_AS(ExperimentConfig::parse("[run]\nn_paths = many\n"), Error);
    CHECK_THROWS_AS(ExperimentConfig::parse_json("{\"run\": {\"n_paths\": 1.5}}"), Error);
    CHECK_THROWS_AS(find_experiment("no_such_experiment"), Error);
}

TEST_CASE("cli: list and describe")
{
    Run l = sh("list");
    CHECK(l.code == 0);
    CHECK(std::count(l.out.begin(), l.out.end(), '\n') == 13);
    Run d = sh("describe pde_einstein");
    CHECK(d.code == 0);
    CHECK(d.out.find(find_experiment("pde_einstein").default_config) != std::string::npos);
    CHECK(sh("describe nothing").code == 2);
    CHECK(sh("frobnicate").code == 2);
}

TEST_CASE("cli: pde_einstein passes with mobility sqrt 3 and appends ledger rows")
{
    Scratch s("einstein");
    fs::path out = s.dir / "out";
    std::string cfg = (fs::path(kConfigs) / "pde_einstein.cfg").string();
    Run r = sh("run " + q(cfg) + " --output-dir " + q(out));
    CHECK(r.code == 0);
    auto j = nlohmann::json::parse(slurp(out / "results.json"));
    CHECK(j["experiment"] == "pde_einstein");
    CHECK(j["passed"] == true);
    CHECK(j["config_hash"].get<std::string>().size() == 16);
    bool found = false;
    for (const auto& m : j["metrics"])
        if (m["name"] == "mobility") {
            found = true;
            CHECK(std::fabs(m["value"].get<double>() - std::sqrt(3.0)) < 1e-3);
            CHECK(m["pass"] == true);
            for (const char* k : {"params", "value", "se", "n", "seed", "runtime_s"})
                CHECK(m.contains(k));
        }
    CHECK(found);

    REQUIRE(sh("run " + q(cfg) + " --output-dir " + q(out)).code == 0);
    std::string ledger = slurp(out / "ledger.csv");
    CHECK(ledger.rfind(kLedgerHeader, 0) == 0);
    std::istringstream lines(ledger);
    std::string line;
    std::vector<std::string> rows;
    while (std::getline(lines, line))
        if (line.find(",mobility,") != std::string::npos)
            rows.push_back(line.substr(line.find(',') + 1)); // drop the timestamp
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == rows[1]);

    std::string script = slurp(out / "plots" / "pde_einstein.script");
    CHECK(script.find("drift_vs_lambda.csv") != std::string::npos);
    CHECK(fs::exists(out / "drift_vs_lambda.csv"));
}

TEST_CASE("cli: unknown key exits 2 and writes nothing")
{
    Scratch s("badkey");
    fs::path out = s.dir / "out";
    fs::path cfg = s.dir / "bad.cfg";
    spit(cfg, find_experiment("pde_fdt").default_config + "bogus_key = 3\n");
    Run r = sh("run " + q(cfg) + " --output-dir " + q(out));
    CHECK(r.code == 2);
    CHECK_FALSE(fs::exists(out));
    CHECK(sh("run " + q(s.dir / "missing.cfg")).code == 2);
}

TEST_CASE("cli: degenerate coefficients exit 2")
{
    Scratch s("elliptic");
    fs::path out = s.dir / "out";
    std::string cfg = (fs::path(kConfigs) / "pde_effective_sigma.cfg").string();
    Run r = sh("run " + q(cfg) + " --set 'environment.a11=0.5 + 1*sin(1)' --output-dir " + q(out));
    CHECK(r.code == 2);
    CHECK_FALSE(fs::exists(out));
}

TEST_CASE("cli: a failed criterion exits 1 and still records the run")
{
    Scratch s("coarse");
    fs::path out = s.dir / "out";
    std::string cfg = (fs::path(kConfigs) / "pde_fdt.cfg").string();
    // Far outside the quadratic regime the difference-quotient error no longer shrinks x4.
    Run r = sh("run " + q(cfg) + " --set run.lambda_fd=3 --output-dir " + q(out));
    CHECK(r.code == 1);
    auto j = nlohmann::json::parse(slurp(out / "results.json"));
    CHECK(j["passed"] == false);
    CHECK(slurp(out / "ledger.csv").find(",fail") != std::string::npos);
}

TEST_CASE("cli: exhausted step budget exits 3")
{
    Scratch s("budget");
    std::string cfg = (fs::path(kConfigs) / "mc_regen_diagnostics.cfg").string();
    Run r = sh("run " + q(cfg) + " --set run.max_steps_per_path=1000 --output-dir " + q(s.dir / "out"));
    CHECK(r.code == 3);
}

TEST_CASE("cli: JSON configs are accepted")
{
    Scratch s("json");
    fs::path cfg = s.dir / "c.json";
    spit(cfg, ExperimentConfig::parse(find_experiment("pde_steady_state").default_config).to_json());
    CHECK(sh("run " + q(cfg) + " --output-dir " + q(s.dir / "out")).code == 0);
    CHECK(fs::exists(s.dir / "out" / "convergence.csv"));
}

TEST_CASE("cli: identical values across worker counts")
{
    Scratch s("workers");
    std::string cfg = (fs::path(kConfigs) / "mc_doob_bound.cfg").string();
    std::string common = " --set run.n_paths=40 --set run.step=0.01 ";
    sh("--workers 1 run " + q(cfg) + common + "--output-dir " + q(s.dir / "one"));
    sh("--workers 3 run " + q(cfg) + common + "--output-dir " + q(s.dir / "three"));
    setenv("DRIFTLAB_WORKERS", "2", 1);
    sh("run " + q(cfg) + common + "--output-dir " + q(s.dir / "two"));
    unsetenv("DRIFTLAB_WORKERS");
    auto metrics = [&](const char* d) {
        auto j = nlohmann::json::parse(slurp(s.dir / d / "results.json"));
        std::vector<double> v;
        for (const auto& m : j["metrics"])
            v.push_back(m["value"].get<double>());
        return v;
    };
    auto one = metrics("one");
    CHECK(!one.empty());
    CHECK(one == metrics("three"));
    CHECK(one == metrics("two"));
}

TEST_CASE("results.json maps a missing reference to null")
{
    ExperimentConfig cfg = ExperimentConfig::parse(find_experiment("pde_fdt").default_config);
    ExperimentResult r;
    r.experiment = "pde_fdt";
    r.metrics.push_back({"x", 1.0, 0.0, 3, std::nan(""), true, "reported"});
    auto j = nlohmann::json::parse(results_json(cfg, r));
    CHECK(j["metrics"][0]["reference"].is_null());
    CHECK(ledger_rows(cfg, r, "T") == "T,pde_fdt," + cfg.hash() + ",x,1,0,pass\n");
}
