#include "doctest.h"

#include <cmath>

#include "driftlab/environment.hpp"
#include "driftlab/error.hpp"
#include "driftlab/functional.hpp"
#include "driftlab/sde.hpp"
#include "driftlab/stats.hpp"

using namespace driftlab;

namespace {

Environment periodic_1d()
{
    PeriodicParams p;
    p.a11 = TrigSeries::parse("2 + 1*sin(1)");
    return Environment::periodic(1, p);
}

IntegratorConfig config(double step, double lambda, std::uint64_t seed = 7)
{
    IntegratorConfig c;
    c.step = step;
    c.lambda = lambda;
    c.seed = seed;
    return c;
}

} // namespace

TEST_CASE("Bbar equals displacement minus the drift integral at lambda = 0")
{
    Environment env = periodic_1d();
    FunctionalSpec f = make_functional(env, FunctionalKind::Zero);
    // Trapezoid vs left-point drift sums differ by O(h) per unit time.
    double prev = 0.0;
    for (double h : {4e-3, 1e-3}) {
        PathRecord path = integrate(env, f, config(h, 0.0), 4.0, {0.3, 0.0});
        double r = bbar_decomposition_check(env, path);
        CHECK(r < 20 * h);
        if (prev > 0)
            CHECK(r < prev);
        prev = r;
    }
}

TEST_CASE("A_b plus Bbar reproduces the displacement up to O(h)")
{
    Environment env = periodic_1d();
    FunctionalSpec f = make_functional(env, FunctionalKind::DriftComponent);
    PathRecord path = integrate(env, f, config(2e-3, 0.0), 3.0, {0.1, 0.0});
    double worst = 0.0;
    for (std::size_t i = 0; i < path.size(); ++i)
        worst = std::max(worst, std::fabs(path.X[i][0] - path.X[0][0] - path.Afun[i] - path.Bbar[i]));
    // A_f is a trapezoid sum, the drift of the scheme is left-point.
    CHECK(worst < 10 * 2e-3);
}

TEST_CASE("bracket of Bbar accumulates a11 dt")
{
    Environment env = periodic_1d();
    FunctionalSpec f = make_functional(env, FunctionalKind::Zero);
    PathRecord path = integrate(env, f, config(1e-3, 0.0), 2.0);
    // a11 lies in [1, 3].
    double t = path.times.back();
    CHECK(path.Bbracket.back() >= 1.0 * t - 1e-12);
    CHECK(path.Bbracket.back() <= 3.0 * t + 1e-12);
}

TEST_CASE("constant environment: Girsanov weight has mean 1 and tilts the mean displacement")
{
    Environment env = Environment::constant(1, Mat2::identity());
    FunctionalSpec f = make_functional(env, FunctionalKind::Zero);
    const double lambda = 0.5, t = 1.0;
    std::vector<double> w, wx;
    for (std::uint64_t p = 0; p < 4000; ++p) {
        PathRecord path = integrate(env, f, config(0.05, 0.0), t, {0.0, 0.0}, 1, p);
        double g = weight(path, lambda, t).value();
        w.push_back(g);
        wx.push_back(g * (path.X.back()[0] - path.X.front()[0]));
    }
    EstimateWithCI mw = plain_mean(w), mwx = plain_mean(wx);
    CHECK(mw.covers(1.0, 4.0));
    // Under the tilted law the displacement has mean lambda a t.
    CHECK(mwx.covers(lambda * t, 4.0));
}

TEST_CASE("Girsanov reweighting of unforced paths matches the forced drift")
{
    Environment env = periodic_1d();
    FunctionalSpec f = make_functional(env, FunctionalKind::Zero);
    const double lambda = 0.4, t = 2.0, h = 2e-3;
    std::vector<double> weighted, forced;
    for (std::uint64_t p = 0; p < 1500; ++p) {
        Vec x0 = stationary_start(env, 3, p);
        PathRecord free = integrate(env, f, config(h, 0.0, 3), t, x0, 1, p);
        weighted.push_back(weight(free, lambda, t).value() * (free.X.back()[0] - x0[0]));
        PathRecord pushed = integrate(env, f, config(h, lambda, 11), t, x0, 1, p);
        forced.push_back(pushed.X.back()[0] - x0[0]);
    }
    EstimateWithCI a = plain_mean(weighted), b = plain_mean(forced);
    CHECK(agree(a, b, 4.0));
    CHECK(b.value > 0.0);
}

TEST_CASE("weight is only defined on the path grid")
{
    Environment env = periodic_1d();
    FunctionalSpec f = make_functional(env, FunctionalKind::Zero);
    PathRecord path = integrate(env, f, config(1e-2, 0.0), 1.0);
    CHECK_NOTHROW(weight(path, 0.3, 0.5));
    try {
        weight(path, 0.3, 0.505);
        FAIL("expected OffGrid");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::OffGrid);
    }
}

TEST_CASE("horizon shorter than a step is rejected")
{
    Environment env = periodic_1d();
    FunctionalSpec f = make_functional(env, FunctionalKind::Zero);
    try {
        integrate(env, f, config(1e-2, 0.0), 1e-3);
        FAIL("expected HorizonTooShort");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::HorizonTooShort);
    }
}

TEST_CASE("paths are reproducible by (seed, path index) and distinct across indices")
{
    Environment env = periodic_1d();
    FunctionalSpec f = make_functional(env, FunctionalKind::DriftComponent);
    PathRecord a = integrate(env, f, config(1e-2, 0.2), 5.0, {0.0, 0.0}, 1, 4);
    PathRecord b = integrate(env, f, config(1e-2, 0.2), 5.0, {0.0, 0.0}, 1, 4);
    PathRecord c = integrate(env, f, config(1e-2, 0.2), 5.0, {0.0, 0.0}, 1, 5);
    CHECK(a.X.back()[0] == b.X.back()[0]);
    CHECK(a.Afun.back() == b.Afun.back());
    CHECK(a.X.back()[0] != c.X.back()[0]);
}

TEST_CASE("recording every k-th step keeps the same path")
{
    Environment env = periodic_1d();
    FunctionalSpec f = make_functional(env, FunctionalKind::Zero);
    PathRecord full = integrate(env, f, config(1e-2, 0.1), 2.0);
    PathRecord thin = integrate(env, f, config(1e-2, 0.1), 2.0, {0.0, 0.0}, 10);
    CHECK(thin.X.back()[0] == full.X.back()[0]);
    CHECK(thin.size() < full.size());
}

TEST_CASE("Milstein and Euler agree on the forced drift of a constant medium")
{
    Environment env = Environment::constant(1, Mat2::scalar(2.0));
    FunctionalSpec f = make_functional(env, FunctionalKind::Zero);
    IntegratorConfig c = config(1e-2, 0.3);
    c.scheme = Scheme::Milstein1D;
    PathRecord m = integrate(env, f, c, 1.0);
    c.scheme = Scheme::EulerMaruyama;
    PathRecord e = integrate(env, f, c, 1.0);
    // With constant sigma the correction term vanishes and both use the same noise.
    CHECK(m.X.back()[0] == doctest::Approx(e.X.back()[0]).epsilon(1e-12));
}

TEST_CASE("invalid integrator settings raise ConfigError")
{
    Environment env2 = Environment::constant(2, Mat2::identity());
    FunctionalSpec f = make_functional(env2, FunctionalKind::Zero);
    IntegratorConfig c = config(1e-2, 0.1);
    c.scheme = Scheme::Milstein1D;
    CHECK_THROWS_AS(validate(c, env2), Error);
    c = config(-1.0, 0.1);
    CHECK_THROWS_AS(validate(c, env2), Error);
    c = config(1e-2, 0.1);
    c.direction = {0.6, 0.6};
    CHECK_THROWS_AS(validate(c, env2), Error);
}

TEST_CASE("default step rule")
{
    CHECK(IntegratorConfig::default_step(0.0) == 1e-2);
    CHECK(IntegratorConfig::default_step(0.1) == doctest::Approx(1e-3));
    CHECK(IntegratorConfig::default_step(1.0) == 1e-2);
}
