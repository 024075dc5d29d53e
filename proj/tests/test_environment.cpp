#include "doctest.h"

#include <cmath>
#include <set>

#include "driftlab/environment.hpp"
#include "driftlab/error.hpp"
#include "driftlab/functional.hpp"
#include "driftlab/rng.hpp"

using namespace driftlab;

namespace {

constexpr double kPi = 3.14159265358979323846;

Environment periodic_1d(const char* a11)
{
    PeriodicParams p;
    p.a11 = TrigSeries::parse(a11);
    return Environment::periodic(1, p);
}

Environment periodic_2d()
{
    PeriodicParams p;
    p.a11 = TrigSeries::parse("2 + 0.5*sin(1,1) + 0.3*cos(0,1)");
    p.a12 = TrigSeries::parse("0.2*sin(1,0)");
    p.a22 = TrigSeries::parse("1.5 + 0.4*cos(1,0)");
    return Environment::periodic(2, p);
}

Environment bumps_2d(std::uint64_t seed)
{
    BumpParams bp;
    bp.intensity = 1.0;
    bp.bump_radius = 0.5;
    bp.amplitude = 1.0;
    return Environment::random_bumps(2, bp, seed);
}

// b = (1/2) div a by central differences of the assembled a.
Vec fd_drift(const Environment& env, const Vec& x, double h = 1e-5)
{
    auto a = [&](Vec y) { return env.eval(y).a; };
    Vec out{0.0, 0.0};
    Vec xp = x, xm = x;
    xp[0] += h;
    xm[0] -= h;
    Mat2 ap = a(xp), am = a(xm);
    out[0] = 0.5 * (ap.m11 - am.m11) / (2 * h);
    out[1] = 0.5 * (ap.m21 - am.m21) / (2 * h);
    if (env.dim() == 2) {
        Vec yp = x, ym = x;
        yp[1] += h;
        ym[1] -= h;
        Mat2 bp = a(yp), bm = a(ym);
        out[0] += 0.5 * (bp.m12 - bm.m12) / (2 * h);
        out[1] += 0.5 * (bp.m22 - bm.m22) / (2 * h);
    }
    return out;
}

void check_sample(const Environment& env, const Vec& x)
{
    EnvSample s = env.eval(x);
    Mat2 ss = multiply_transpose(s.sigma);
    CHECK(ss.m11 == doctest::Approx(s.a.m11).epsilon(1e-12));
    if (env.dim() == 2) {
        CHECK(ss.m12 == doctest::Approx(s.a.m12).epsilon(1e-12));
        CHECK(ss.m22 == doctest::Approx(s.a.m22).epsilon(1e-12));
        CHECK(s.a.m12 == s.a.m21);
    }
    auto ev = sym_eigenvalues(s.a, env.dim());
    double kappa = env.bounds().kappa;
    CHECK(ev[0] >= kappa * (1 - 1e-12));
    CHECK(ev[env.dim() - 1] <= (1 + 1e-12) / kappa);
    Vec fd = fd_drift(env, x);
    CHECK(s.b[0] == doctest::Approx(fd[0]).epsilon(1e-5).scale(1.0));
    CHECK(s.b[1] == doctest::Approx(fd[1]).epsilon(1e-5).scale(1.0));
}

} // namespace

TEST_CASE("Philox4x32-10 known answers")
{
    CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff})
          == PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0})
          == PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("counter streams are addressable and reproducible")
{
    CounterRng a(7, 3);
    std::vector<std::uint32_t> seq;
    for (int i = 0; i < 40; ++i)
        seq.push_back(a.next_u32());
    CounterRng b(7, 3, 8); // block 8 = words 32..35
    for (int i = 32; i < 40; ++i)
        CHECK(b.next_u32() == seq[i]);
    CounterRng c(7, 4), d(8, 3);
    CHECK(c.next_u32() != seq[0]);
    CHECK(d.next_u32() != seq[0]);
    CHECK(derive_stream({1, 2}) != derive_stream({2, 1}));
    CHECK(derive_stream({1, 2}) == derive_stream({1, 2}));
}

TEST_CASE("uniform and normal draws have the right moments")
{
    CounterRng r(42, 0);
    const int n = 200000;
    double su = 0, sn = 0, sn2 = 0, mn = 1, mx = 0;
    for (int i = 0; i < n; ++i) {
        double u = r.uniform();
        mn = std::min(mn, u);
        mx = std::max(mx, u);
        su += u;
        double z = r.normal();
        sn += z;
        sn2 += z * z;
    }
    CHECK(mn > 0.0);
    CHECK(mx < 1.0);
    CHECK(std::fabs(su / n - 0.5) < 5 * std::sqrt(1.0 / 12 / n));
    CHECK(std::fabs(sn / n) < 5 / std::sqrt(double(n)));
    CHECK(std::fabs(sn2 / n - 1.0) < 5 * std::sqrt(2.0 / n));
}

TEST_CASE("trig series parse and print round trip")
{
    for (const char* text : {"2 + 1*sin(1)", "1 - 0.25*cos(1,2)", "1.5 + 0.4*cos(1) - 0.125*sin(0,3)"}) {
        auto s = TrigSeries::parse(text);
        CHECK(s.format() == text);
        CHECK(TrigSeries::parse(s.format()) == s);
    }
    auto s = TrigSeries::parse("2 + 1*sin(1)");
    CHECK(s.value({0.25, 0.0}) == doctest::Approx(3.0));
    Vec g;
    s.value_grad({0.0, 0.0}, g);
    CHECK(g[0] == doctest::Approx(2 * kPi));
    CHECK(TrigSeries::parse("").empty()); // absent table
    for (const char* bad : {"2 +", "sin(x)", "2 * cos(1", "1*tan(1)"})
        CHECK_THROWS_AS(TrigSeries::parse(bad), Error);
}

TEST_CASE("periodic 1-D field: a = sigma^2, b = a'/2, periodicity")
{
    auto env = periodic_1d("2 + 1*sin(1)");
    CHECK(env.range() == std::numeric_limits<double>::infinity());
    CHECK(env.bounds().kappa == doctest::Approx(1.0 / 3.0));
    for (double x : {0.0, 0.1, 0.37, 0.9, -3.3}) {
        check_sample(env, {x, 0.0});
        EnvSample s = env.eval({x, 0.0});
        CHECK(s.a.m11 == doctest::Approx(2 + std::sin(2 * kPi * x)));
        CHECK(s.b[0] == doctest::Approx(kPi * std::cos(2 * kPi * x)));
        EnvSample t = env.eval({x + 1.0, 0.0});
        CHECK(t.a.m11 == doctest::Approx(s.a.m11).epsilon(1e-12));
    }
}

TEST_CASE("reciprocal profile a = 1/p")
{
    PeriodicParams p;
    p.reciprocal = true;
    p.a11 = TrigSeries::parse("1 + 0.5*sin(1)");
    auto env = Environment::periodic(1, p);
    for (double x : {0.0, 0.2, 0.7}) {
        check_sample(env, {x, 0.0});
        CHECK(env.eval({x, 0.0}).a.m11 == doctest::Approx(1.0 / (1 + 0.5 * std::sin(2 * kPi * x))));
    }
}

TEST_CASE("periodic 2-D field: matrix structure and divergence drift")
{
    auto env = periodic_2d();
    for (Vec x : {Vec{0.0, 0.0}, Vec{0.3, 0.8}, Vec{-1.2, 2.45}})
        check_sample(env, x);
}

TEST_CASE("invalid coefficient tables are rejected")
{
    CHECK_THROWS_AS(periodic_1d("0.5 + 1*sin(1)"), Error);
    try {
        periodic_1d("0.5 + 1*sin(1)");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EllipticityViolation);
    }
    CHECK_THROWS_AS(Environment::constant(2, Mat2{1, 0.5, 0.2, 1}), Error);
    CHECK_THROWS_AS(Environment::constant(3, Mat2::identity()), Error);
    PeriodicParams p;
    p.a11 = TrigSeries::parse("2 + 1*sin(1,1)");
    CHECK_THROWS_AS(Environment::periodic(1, p), Error);
}

TEST_CASE("random bumps: deterministic, bounded, smooth drift")
{
    auto e1 = bumps_2d(11), e2 = bumps_2d(11), e3 = bumps_2d(12);
    CHECK(e1.range() == doctest::Approx(1.0));
    bool differs = false;
    for (int i = 0; i < 50; ++i) {
        Vec x{0.37 * i - 5.0, 0.11 * i + 1.0};
        CHECK(e1.eval(x).a.m11 == e2.eval(x).a.m11);
        differs |= e1.eval(x).a.m11 != e3.eval(x).a.m11;
        check_sample(e1, x);
    }
    CHECK(differs);
    CHECK(e1.with_seed(12).eval({0.3, 0.3}).a.m11 == e3.eval({0.3, 0.3}).a.m11);
}

TEST_CASE("random bumps: cached and uncached evaluation agree")
{
    auto env = bumps_2d(5);
    BumpCache cache;
    for (int i = 0; i < 200; ++i) {
        Vec x{0.05 * i, std::sin(0.1 * i)};
        EnvSample a = env.eval(x), b = env.eval(x, cache);
        CHECK(a.a.m11 == b.a.m11);
        CHECK(a.b[1] == b.b[1]);
    }
}

TEST_CASE("random bumps: finite range of dependence")
{
    // Points farther apart than the range never share a bump.
    auto env = bumps_2d(3);
    double r = env.range();
    CounterRng rng(1, 2);
    int shared_close = 0;
    for (int i = 0; i < 500; ++i) {
        Vec x{20 * rng.uniform() - 10, 20 * rng.uniform() - 10};
        double ang = 2 * kPi * rng.uniform();
        Vec far{x[0] + 1.01 * r * std::cos(ang), x[1] + 1.01 * r * std::sin(ang)};
        Vec near{x[0] + 0.1 * r, x[1]};
        auto ids = env.bumps_at(x);
        std::set<std::uint64_t> s(ids.begin(), ids.end());
        for (auto id : env.bumps_at(far))
            CHECK(s.count(id) == 0);
        for (auto id : env.bumps_at(near))
            shared_close += int(s.count(id));
    }
    CHECK(shared_close > 0);
}

TEST_CASE("random bumps in 1-D")
{
    BumpParams bp;
    bp.amplitude = 2.0;
    auto env = Environment::random_bumps(1, bp, 9);
    for (int i = 0; i < 40; ++i)
        check_sample(env, {0.29 * i - 4.0, 0.0});
}

TEST_CASE("drift functional reads b . e1 with F = a e1 / 2")
{
    auto env = periodic_2d();
    auto f = make_functional(env, FunctionalKind::DriftComponent);
    CHECK(f.locality_radius == std::numeric_limits<double>::infinity());
    for (Vec x : {Vec{0.1, 0.2}, Vec{0.77, 0.5}}) {
        EnvSample s = env.eval(x);
        CHECK(f.value(x, s) == s.b[0]);
        Vec F = f.field(x, s);
        CHECK(std::hypot(F[0], F[1]) <= f.sup_norm * (1 + 1e-12));
    }
    auto zero = make_functional(env, FunctionalKind::Zero);
    CHECK(zero.value({0.3, 0.3}, env.eval({0.3, 0.3})) == 0.0);
}

TEST_CASE("custom functional with a field above its declared bound is rejected")
{
    auto env = periodic_1d("2 + 1*sin(1)");
    CustomFunctional c;
    c.field = [](const Vec& x) { return Vec{std::cos(2 * kPi * x[0]), 0.0}; };
    c.divergence = [](const Vec& x) { return -2 * kPi * std::sin(2 * kPi * x[0]); };
    c.sup_norm = 0.5;
    try {
        make_functional(env, FunctionalKind::Custom, c);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnboundedF);
    }
    c.sup_norm = 1.0;
    CHECK_NOTHROW(make_functional(env, FunctionalKind::Custom, c));
}
