#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "driftlab/environment.hpp"
#include "driftlab/error.hpp"
#include "driftlab/functional.hpp"
#include "driftlab/regeneration.hpp"
#include "driftlab/sde.hpp"
#include "driftlab/stats.hpp"

using namespace driftlab;

namespace {

Environment unit_medium() { return Environment::constant(1, Mat2::identity()); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

struct Harvested {
    RegenConfig cfg;
    HarvestResult result;
};

// Shared by several cases; about 500 pooled cycles in the unit medium at lambda = 0.5.
const Harvested& unit_medium_cycles()
{
    static const Harvested h = [] {
        Environment env = unit_medium();
        FunctionalSpec f = make_functional(env, FunctionalKind::Zero);
        RegenConfig cfg = RegenConfig::for_environment(env, f, 0.5);
        HarvestOptions ho;
        ho.step = 0.02;
        ho.n_paths = 4;
        return Harvested{cfg, harvest(env, f, cfg, 500, 21, ho)};
    }();
    return h;
}

} // namespace

TEST_CASE("R(lambda) is at least 1/lambda")
{
    Environment env = unit_medium();
    FunctionalSpec f = make_functional(env, FunctionalKind::Zero);
    for (double l : {1.0, 0.5, 0.1}) {
        RegenConfig c = RegenConfig::for_environment(env, f, l);
        CHECK(c.R_lambda() >= 1.0 / l - 1e-12);
    }
    PeriodicParams p;
    p.a11 = TrigSeries::parse("2 + 1*sin(1)");
    Environment per = Environment::periodic(1, p);
    RegenConfig c = RegenConfig::for_environment(per, make_functional(per, FunctionalKind::DriftComponent), 1.0);
    CHECK(c.R_lambda() >= 1.0);
}

TEST_CASE("invalid regeneration settings")
{
    RegenConfig c;
    c.lambda = 0.0;
    CHECK_THROWS_AS(validate(c), Error);
    c = RegenConfig{};
    c.coupling_scale = 0.1;
    CHECK_THROWS_AS(validate(c), Error);
    c = RegenConfig{};
    c.censor_blocks = 0.5;
    CHECK_THROWS_AS(validate(c), Error);
    c = RegenConfig{};
    c.mode = RegenMode::Bernoulli;
    c.delta = 1.0;
    CHECK_THROWS_AS(validate(c), Error);
}

TEST_CASE("block-aligned step divides lambda^-2")
{
    for (double l : {0.1, 0.2, 0.3, 0.7})
        for (double h : {0.03, 0.02, 0.011}) {
            double s = block_aligned_step(l, h);
            CHECK(s <= h);
            double m = 1.0 / (l * l * s);
            CHECK(std::fabs(m - std::round(m)) < 1e-9 * m);
        }
}

TEST_CASE("PathBuffer keeps absolute indices across drops")
{
    PathBuffer b;
    for (int i = 0; i < 10; ++i)
        b.push({{double(i), 0.0}, 0.0, 0.0});
    b.drop_before(4);
    CHECK(b.begin() == 4);
    CHECK(b.end() == 10);
    CHECK(b.at(7).x[0] == 7.0);
    b.push({{10.0, 0.0}, 0.0, 0.0});
    CHECK(b.at(10).x[0] == 10.0);
}

TEST_CASE("first_backtrack finds the first index at or below the drop level")
{
    PathBuffer b;
    for (double x : {0.0, 0.5, -0.5, -1.2, -2.0, 1.0})
        b.push({{x, 0.0}, 0.0, 0.0});
    CHECK(first_backtrack(b, 0, 5, 1.0, {1.0, 0.0}) == 3);
    CHECK(first_backtrack(b, 0, 2, 1.0, {1.0, 0.0}) == -1);
    CHECK(first_backtrack(b, 1, 4, 2.5, {1.0, 0.0}) == 4);
}

TEST_CASE("Bernoulli stream is a pure function of the block index")
{
    BernoulliStream ys{99, 0.3};
    int hits = 0;
    for (int m = 0; m < 20000; ++m) {
        CHECK(ys.at(m) == ys.at(m));
        hits += ys.at(m);
    }
    double p = hits / 20000.0;
    CHECK(std::fabs(p - 0.3) < 4 * std::sqrt(0.3 * 0.7 / 20000));
}

TEST_CASE("unit medium, lambda = 1: first regeneration time is at least 2")
{
    Environment env = unit_medium();
    FunctionalSpec f = make_functional(env, FunctionalKind::Zero);
    RegenConfig cfg = RegenConfig::for_environment(env, f, 1.0);
    CHECK(cfg.R_lambda() == doctest::Approx(1.0));
    HarvestOptions ho;
    ho.step = 0.01;
    ho.n_paths = 40;
    HarvestResult h = harvest(env, f, cfg, 40, 5, ho);
    std::size_t firsts = 0;
    for (const auto& r : h.records)
        if (r.is_first) {
            ++firsts;
            CHECK(r.tau >= 2.0 - 1e-9);
        }
    CHECK(firsts > 0);
}

TEST_CASE("skeleton ordering, lattice and halfspace invariants on every cycle")
{
    const auto& [cfg, h] = unit_medium_cycles();
    const double block = 1.0 / (cfg.lambda * cfg.lambda);
    const double R = cfg.R_lambda();
    REQUIRE(h.records.size() >= 500);
    for (const auto& r : h.records) {
        CHECK(ordering_holds(r, cfg.lambda));
        CHECK(r.dt >= 2.0 * block - 1e-9);
        double q = r.tau / block;
        CHECK(std::fabs(q - std::round(q)) * block <= h.step * (1 + 1e-9));
        for (const auto& e : r.trace) {
            for (double t : {e.N, e.S, e.R})
                if (std::isfinite(t))
                    CHECK(std::fabs(t / block - std::round(t / block)) < 1e-6);
        }
        if (!r.censored) {
            CHECK(r.pre_gap <= -cfg.halfspace_margin() + 1e-9 * R);
            CHECK(r.post_min >= -R);
        }
    }
}

TEST_CASE("unit medium, lambda = 0.5: drift and variance of the ratio estimators")
{
    const auto& [cfg, h] = unit_medium_cycles();
    EstimateWithCI ell = ratio_estimate(h.records, RatioTarget::Ell);
    CHECK(ell.covers(0.5));
    // Heavy-tailed cycle lengths: at 500 cycles the SE is near 0.1, so a 10% band is not resolvable.
    EstimateWithCI s = ratio_estimate(h.records, RatioTarget::SigmaLambda);
    CHECK(s.covers(1.0));
    CHECK(s.se < 0.15);
    // f = 0: the numerator is made of pure W1 increments.
    EstimateWithCI nu = ratio_estimate(h.records, RatioTarget::NuF);
    CHECK(nu.covers(0.0));
}

TEST_CASE("cycle durations: lag-1 autocorrelation and exponential tail")
{
    const auto& [cfg, h] = unit_medium_cycles();
    auto pool = h.iid_pool();
    REQUIRE(pool.size() >= 300);
    double lag1 = lag1_within_paths(h.records);
    CHECK(std::fabs(lag1) <= 3.0 / std::sqrt(double(pool.size())));

    // Empirical survival of lambda^2 dt at its quantiles; log-survival must fall with s.
    std::vector<double> s;
    for (const auto& r : pool)
        s.push_back(r.dt * cfg.lambda * cfg.lambda);
    std::sort(s.begin(), s.end());
    std::vector<double> xs, ys;
    for (double q : {0.5, 0.7, 0.8, 0.9, 0.95}) {
        std::size_t i = std::size_t(q * double(s.size()));
        xs.push_back(s[i]);
        ys.push_back(std::log(1.0 - double(i) / double(s.size())));
    }
    double mx = mean(xs), my = mean(ys), sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    CHECK(sxy / sxx < 0.0);
}

TEST_CASE("order lambda^-2 cycle lengths across lambda")
{
    Environment env = unit_medium();
    FunctionalSpec f = make_functional(env, FunctionalKind::Zero);
    std::vector<double> medians;
    for (double l : {0.4, 0.2, 0.1}) {
        RegenConfig cfg = RegenConfig::for_environment(env, f, l);
        HarvestOptions ho;
        // Euler is exact in a constant medium, so a fixed number of steps per block suffices.
        ho.step = 1.0 / (400 * l * l);
        ho.n_paths = 2;
        HarvestResult h = harvest(env, f, cfg, 30, 8, ho);
        std::vector<double> b;
        for (const auto& r : h.records)
            b.push_back(r.dt * l * l);
        std::nth_element(b.begin(), b.begin() + b.size() / 2, b.end());
        medians.push_back(b[b.size() / 2]);
    }
    auto [lo, hi] = std::minmax_element(medians.begin(), medians.end());
    CHECK(*hi / *lo < 3.0);
}

TEST_CASE("too few cycles for a ratio estimate")
{
    const auto& [cfg, h] = unit_medium_cycles();
    std::vector<RegenerationRecord> few(h.records.begin(), h.records.begin() + 10);
    try {
        ratio_estimate(few, RatioTarget::Ell);
        FAIL("expected TooFewCycles");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::TooFewCycles);
    }
}

TEST_CASE("harvest is reproducible and independent of the worker count")
{
    Environment env = unit_medium();
    FunctionalSpec f = make_functional(env, FunctionalKind::Zero);
    RegenConfig cfg = RegenConfig::for_environment(env, f, 0.5);
    HarvestOptions ho;
    ho.step = 0.02;
    ho.n_paths = 3;
    ho.workers = 1;
    HarvestResult a = harvest(env, f, cfg, 30, 4, ho);
    ho.workers = 3;
    HarvestResult b = harvest(env, f, cfg, 30, 4, ho);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].tau == b.records[i].tau);
        CHECK(a.records[i].dX1 == b.records[i].dX1);
    }
}

TEST_CASE("step budget")
{
    Environment env = unit_medium();
    FunctionalSpec f = make_functional(env, FunctionalKind::Zero);
    RegenConfig cfg = RegenConfig::for_environment(env, f, 0.5);
    HarvestOptions ho;
    ho.step = 0.02;
    ho.max_steps_per_path = 1000;
    try {
        harvest(env, f, cfg, 50, 1, ho);
        FAIL("expected BudgetExhausted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::BudgetExhausted);
    }
}

// Without forcing, "no backtrack below -R within H" has probability 2 Phi(R / sqrt(H)) - 1
// for a unit Brownian motion; discrete monitoring at step h raises the barrier by 0.5826 sqrt(h).
TEST_CASE("lambda = 0: no-backtrack frequency over a window of 1000 matches the Brownian oracle")
{
    Environment env = unit_medium();
    FunctionalSpec f = make_functional(env, FunctionalKind::Zero);
    IntegratorConfig ic;
    ic.step = 0.1;
    ic.seed = 17;
    ic.simulate_w1 = false;
    const double H = 1000.0, R = 1.0;
    const std::int64_t window = std::llround(H / ic.step);
    const int paths = 4000;
    int survived = 0;
    for (int p = 0; p < paths; ++p) {
        PathBuffer buf = PathBuffer::from_record(integrate(env, f, ic, H, {0.0, 0.0}, 1, std::uint64_t(p)));
        survived += first_backtrack(buf, 0, window, R, {1.0, 0.0}) < 0;
    }
    double freq = double(survived) / paths;
    double oracle = 2.0 * normal_cdf((R + 0.5826 * std::sqrt(ic.step)) / std::sqrt(H)) - 1.0;
    double se = std::sqrt(oracle * (1 - oracle) / paths);
    CHECK(std::fabs(freq - oracle) <= 4 * se);
    CHECK(freq < 0.05);
}
