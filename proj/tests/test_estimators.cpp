#include "doctest.h"

#include <cmath>

#include "driftlab/environment.hpp"
#include "driftlab/error.hpp"
#include "driftlab/estimators.hpp"
#include "driftlab/functional.hpp"
#include "driftlab/homogenize.hpp"

using namespace driftlab;

namespace {

const double kSqrt3 = std::sqrt(3.0);
// For a = 2 + sin: Gamma = harmonic - arithmetic mean, Sigma(b) = -Gamma.
const double kGamma = kSqrt3 - 2.0;

Environment periodic_1d()
{
    PeriodicParams p;
    p.a11 = TrigSeries::parse("2 + 1*sin(1)");
    return Environment::periodic(1, p);
}

McOptions options(std::size_t paths, double step, std::uint64_t seed = 1)
{
    McOptions o;
    o.n_paths = paths;
    o.step = step;
    o.seed = seed;
    return o;
}

template<class F>
ErrorCode code_of(F&& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error raised");
    return ErrorCode::CriterionFailed;
}

} // namespace

TEST_CASE("zero functional averages to exactly zero")
{
    Environment env = periodic_1d();
    FunctionalSpec zero = make_functional(env, FunctionalKind::Zero);
    EstimateWithCI nu = ergodic_nu(env, zero, 0.3, 200.0, options(8, 0.02));
    CHECK(nu.value == 0.0);
    CHECK(nu.se == 0.0);
}

TEST_CASE("constant medium: drift functional vanishes and the drift is lambda a")
{
    Environment env = Environment::constant(1, Mat2::scalar(2.0));
    FunctionalSpec b = make_functional(env, FunctionalKind::DriftComponent);
    CHECK(gamma_bar(env, b, 5.0, options(50, 0.05)).value == 0.0);
    CHECK(ergodic_nu(env, b, 0.5, 40.0, options(10, 0.05)).value == 0.0);
    EstimateWithCI ell = ergodic_drift(env, 0.25, 200.0, options(200, 0.05));
    CHECK(ell.covers(0.5));
}

TEST_CASE("sigma_cov is symmetric and reproduces Sigma(b) = 2 - sqrt 3")
{
    Environment env = periodic_1d();
    FunctionalSpec b = make_functional(env, FunctionalKind::DriftComponent);
    FunctionalSpec zero = make_functional(env, FunctionalKind::Zero);
    McOptions o = options(3000, 0.005);
    o.richardson = true;
    EstimateWithCI bb = sigma_cov(env, b, b, 5.0, o);
    CHECK(bb.covers(-kGamma, 4.0));
    CHECK(sigma_cov(env, b, zero, 5.0, o).value == sigma_cov(env, zero, b, 5.0, o).value);
}

TEST_CASE("Gamma is negative and matches the harmonic-arithmetic gap after extrapolation")
{
    Environment env = periodic_1d();
    FunctionalSpec b = make_functional(env, FunctionalKind::DriftComponent);
    McOptions o = options(8000, 0.01, 2);
    EstimateWithCI raw = gamma_bar(env, b, 5.0, o);
    o.richardson = true;
    EstimateWithCI ext = gamma_bar(env, b, 5.0, o);
    CHECK(ext.upper(3.0) < 0.0);
    CHECK(ext.covers(kGamma, 4.0));
    // The unextrapolated Euler estimate at this step is visibly biased towards 0.
    CHECK(raw.value - kGamma > 3.0 * raw.se);
}

TEST_CASE("cross-covariance of displacement and A_b vanishes because Sigma(b) = -Gamma")
{
    Environment env = periodic_1d();
    FunctionalSpec b = make_functional(env, FunctionalKind::DriftComponent);
    McOptions o = options(4000, 0.005);
    o.richardson = true;
    CHECK(cross_covariance(env, b, 5.0, o).covers(0.0, 4.0));
}

TEST_CASE("equilibrium variance of the displacement is the effective variance")
{
    Environment env = periodic_1d();
    McOptions o = options(6000, 0.01);
    o.richardson = true;
    EstimateWithCI v = equilibrium_variance(env, 10.0, o);
    CHECK(v.covers(kSqrt3, 4.0));
}

TEST_CASE("corrector pairing under the Metropolis-adjusted chain")
{
    Environment env = periodic_1d();
    FunctionalSpec b = make_functional(env, FunctionalKind::DriftComponent);
    TorusProblem prob(env, TorusGrid::make(1, 2048));
    const GridField& chi = prob.corrector();
    McOptions o = options(4000, 0.01);
    o.scheme = Scheme::MetropolisAdjusted;
    EstimateWithCI c = corrector_pairing(env, b, 5.0, o, [&](const Vec& x) { return chi.interpolate(x); });
    CHECK(c.covers(-0.5 * kGamma, 4.0));
}

TEST_CASE("results do not depend on the number of workers")
{
    Environment env = periodic_1d();
    FunctionalSpec b = make_functional(env, FunctionalKind::DriftComponent);
    McOptions o = options(24, 0.01, 9);
    o.workers = 1;
    EstimateWithCI one = gamma_bar(env, b, 2.0, o);
    o.workers = 4;
    EstimateWithCI four = gamma_bar(env, b, 2.0, o);
    CHECK(one.value == four.value);
    CHECK(one.se == four.se);
}

TEST_CASE("Doob check: g = 0 is trivially inside the bound; g = b respects it")
{
    Environment env = periodic_1d();
    FunctionalSpec zero = make_functional(env, FunctionalKind::Zero);
    DoobCheck z = doob_bound_check(env, zero, 2.0, options(50, 0.01), 0.0);
    CHECK(z.lhs.value == 0.0);
    CHECK(z.holds);
    FunctionalSpec b = make_functional(env, FunctionalKind::DriftComponent);
    double norm = h_minus1(env, b, b, TorusGrid::make(1, 1024)).norm_f;
    CHECK(norm == doctest::Approx(std::sqrt(-kGamma / 2)).epsilon(1e-4));
    DoobCheck d = doob_bound_check(env, b, 2.0, options(500, 0.005), norm);
    CHECK(d.holds);
    CHECK(d.slack > 1.0);
}

TEST_CASE("E max |A| scales like 1/lambda over a window of lambda^-2")
{
    Environment env = periodic_1d();
    FunctionalSpec b = make_functional(env, FunctionalKind::DriftComponent);
    ScalingFit fit = amax_scaling(env, b, {0.4, 0.2, 0.1}, options(300, 0.01));
    CHECK(fit.slope > -1.2);
    CHECK(fit.slope < -0.8);
    CHECK(fit.values.size() == 3);
}

TEST_CASE("Lebowitz-Rost drift: zero without forcing, sign of Gamma with it")
{
    Environment env = periodic_1d();
    FunctionalSpec b = make_functional(env, FunctionalKind::DriftComponent);
    McOptions o = options(600, 0.005);
    o.richardson = true;
    ScalingFit free = lebowitz_rost_drift(env, b, 0.0, {0.2}, o);
    CHECK(free.values[0].covers(0.0, 4.0));
    ScalingFit pushed = lebowitz_rost_drift(env, b, 4.0, {0.2}, o);
    CHECK(pushed.values[0].upper(3.0) < 0.0);
    CHECK(pushed.extras.at("alpha") == 4.0);
}

TEST_CASE("input errors")
{
    Environment env = periodic_1d();
    FunctionalSpec b = make_functional(env, FunctionalKind::DriftComponent);
    CHECK(code_of([&] { ergodic_nu(env, b, 0.1, 50.0, options(4, 0.01)); }) == ErrorCode::HorizonTooShort);
    CHECK(code_of([&] { gamma_bar(env, b, 0.001, options(4, 0.01)); }) == ErrorCode::HorizonTooShort);
    McOptions single = options(1, 0.01);
    single.richardson = true;
    CHECK(code_of([&] { ergodic_nu(env, b, 0.5, 100.0, single); }) == ErrorCode::ConfigError);
    McOptions mh = options(4, 0.01);
    mh.scheme = Scheme::MetropolisAdjusted;
    CHECK(code_of([&] { ergodic_drift(env, 0.2, 10.0, mh); }) == ErrorCode::ConfigError);
    mh.richardson = true;
    CHECK(code_of([&] { gamma_bar(env, b, 1.0, mh); }) == ErrorCode::ConfigError);
    EinsteinOptions eo;
    CHECK(code_of([&] { einstein_mc(env, {0.4, 0.2}, 10, 1, eo); }) == ErrorCode::ConfigError);
    CHECK(code_of([&] { amax_scaling(env, b, {0.4, -0.2}, options(4, 0.01)); }) == ErrorCode::ConfigError);
    CHECK(code_of([&] { amax_scaling(env, b, {0.1, 0.2, 0.4}, options(4, 0.01)); }) == ErrorCode::ConfigError);
    CHECK(code_of([&] { einstein_mc(env, {0.4, 0.4, 0.1}, 10, 1, eo); }) == ErrorCode::ConfigError);
}
