#include "driftlab/environment.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>

#include "driftlab/error.hpp"
#include "driftlab/rng.hpp"

namespace driftlab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string fmt_number(double v)
{
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

struct SeriesParser {
    const std::string& s;
    std::size_t pos = 0;

    void skip_ws()
    {
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
            ++pos;
    }
    [[noreturn]] void bad(const std::string& why) const
    {
        fail(ErrorCode::BadCoefficients, "trig series '" + s + "': " + why);
    }
    bool peek(char c)
    {
        skip_ws();
        return pos < s.size() && s[pos] == c;
    }
    void expect(char c)
    {
        if (!peek(c))
            bad(std::string("expected '") + c + "'");
        ++pos;
    }
    int parse_int()
    {
        skip_ws();
        int v = 0;
        auto res = std::from_chars(s.data() + pos, s.data() + s.size(), v);
        if (res.ec != std::errc())
            bad("expected integer wave number");
        pos = std::size_t(res.ptr - s.data());
        return v;
    }
    bool parse_func(TrigTerm& t)
    {
        skip_ws();
        if (s.compare(pos, 3, "sin") == 0)
            t.basis = TrigTerm::Basis::Sin;
        else if (s.compare(pos, 3, "cos") == 0)
            t.basis = TrigTerm::Basis::Cos;
        else
            return false;
        pos += 3;
        expect('(');
        t.k1 = parse_int();
        if (peek(',')) {
            ++pos;
            t.k2 = parse_int();
        }
        expect(')');
        return true;
    }
    TrigTerm parse_term(double sign)
    {
        TrigTerm t;
        t.coef = sign;
        if (parse_func(t))
            return t;
        skip_ws();
        double v = 0;
        auto res = std::from_chars(s.data() + pos, s.data() + s.size(), v);
        if (res.ec != std::errc())
            bad("expected number");
        pos = std::size_t(res.ptr - s.data());
        t.coef = sign * v;
        if (peek('*')) {
            ++pos;
            if (!parse_func(t))
                bad("expected sin(...) or cos(...) after '*'");
        }
        return t;
    }
};

double basis_value(TrigTerm::Basis basis, double phase)
{
    switch (basis) {
    case TrigTerm::Basis::Const: return 1.0;
    case TrigTerm::Basis::Cos: return std::cos(phase);
    case TrigTerm::Basis::Sin: return std::sin(phase);
    }
    return 0.0;
}

// Smooth compact profile (1 - q^2)^3 on the unit ball; C^2 across the boundary.
inline double bump_profile(double q2) { double u = 1.0 - q2; return u * u * u; }
inline double bump_profile_slope(double q2) { double u = 1.0 - q2; return -3.0 * u * u; } // d/d(q^2)

void sample_torus(const Environment& env, int n, double& lo, double& hi, double& max_ae1)
{
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    max_ae1 = 0.0;
    int ny = env.dim() == 2 ? n : 1;
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < n; ++i) {
            Vec x{double(i) / n, env.dim() == 2 ? double(j) / n : 0.0};
            EnvSample s = env.eval(x);
            auto ev = sym_eigenvalues(s.a, env.dim());
            if (!std::isfinite(ev[0]) || !std::isfinite(ev[1]) || ev[0] <= 0.0)
                fail(ErrorCode::EllipticityViolation,
                     "matrix field is not positive definite at x = (" + fmt_number(x[0]) + ", "
                         + fmt_number(x[1]) + ")");
            lo = std::min(lo, ev[0]);
            hi = std::max(hi, env.dim() == 2 ? ev[1] : ev[0]);
            max_ae1 = std::max(max_ae1, std::hypot(s.a.m11, env.dim() == 2 ? s.a.m21 : 0.0));
        }
    }
}

} // namespace

Mat2 multiply_transpose(const Mat2& s)
{
    return {s.m11 * s.m11 + s.m12 * s.m12, s.m11 * s.m21 + s.m12 * s.m22,
            s.m21 * s.m11 + s.m22 * s.m12, s.m21 * s.m21 + s.m22 * s.m22};
}

std::array<double, 2> sym_eigenvalues(const Mat2& a, int dim)
{
    if (dim == 1)
        return {a.m11, a.m11};
    double mean = 0.5 * (a.m11 + a.m22);
    double half = 0.5 * (a.m11 - a.m22);
    double r = std::hypot(half, a.m12);
    return {mean - r, mean + r};
}

Mat2 sym_sqrt(const Mat2& a, int dim)
{
    if (dim == 1)
        return {std::sqrt(a.m11), 0, 0, 0};
    // For SPD 2x2: sqrt(A) = (A + sqrt(det) I) / sqrt(tr + 2 sqrt(det)).
    double s = std::sqrt(a.m11 * a.m22 - a.m12 * a.m21);
    double t = std::sqrt(a.m11 + a.m22 + 2.0 * s);
    return {(a.m11 + s) / t, a.m12 / t, a.m21 / t, (a.m22 + s) / t};
}

//---------------------------------------------------------------------------//

double TrigSeries::value(const Vec& x) const
{
    double v = 0.0;
    for (const auto& t : terms)
        v += t.coef * basis_value(t.basis, kTwoPi * (t.k1 * x[0] + t.k2 * x[1]));
    return v;
}

double TrigSeries::value_grad(const Vec& x, Vec& grad) const
{
    double v = 0.0;
    grad = {0.0, 0.0};
    for (const auto& t : terms) {
        if (t.basis == TrigTerm::Basis::Const) {
            v += t.coef;
            continue;
        }
        double phase = kTwoPi * (t.k1 * x[0] + t.k2 * x[1]);
        double c = std::cos(phase), s = std::sin(phase);
        double val = t.basis == TrigTerm::Basis::Cos ? c : s;
        double der = t.basis == TrigTerm::Basis::Cos ? -s : c;
        v += t.coef * val;
        grad[0] += t.coef * der * kTwoPi * t.k1;
        grad[1] += t.coef * der * kTwoPi * t.k2;
    }
    return v;
}

TrigSeries TrigSeries::parse(const std::string& text)
{
    SeriesParser p{text};
    TrigSeries out;
    p.skip_ws();
    if (p.pos == text.size())
        return out;
    double sign = 1.0;
    if (p.peek('-')) {
        ++p.pos;
        sign = -1.0;
    }
    out.terms.push_back(p.parse_term(sign));
    while (true) {
        p.skip_ws();
        if (p.pos == text.size())
            break;
        if (p.peek('+'))
            sign = 1.0;
        else if (p.peek('-'))
            sign = -1.0;
        else
            p.bad("expected '+' or '-' between terms");
        ++p.pos;
        out.terms.push_back(p.parse_term(sign));
    }
    for (const auto& t : out.terms) {
        if (!std::isfinite(t.coef))
            p.bad("non-finite coefficient");
        if (t.basis == TrigTerm::Basis::Const && (t.k1 != 0 || t.k2 != 0))
            p.bad("constant term with a wave number");
    }
    return out;
}

std::string TrigSeries::format() const
{
    std::string out;
    bool first = true;
    for (const auto& t : terms) {
        double c = t.coef;
        if (first) {
            if (std::signbit(c)) {
                out += "-";
                c = -c;
            }
        } else {
            out += std::signbit(c) ? " - " : " + ";
            c = std::fabs(c);
        }
        first = false;
        out += fmt_number(c);
        if (t.basis != TrigTerm::Basis::Const) {
            out += t.basis == TrigTerm::Basis::Cos ? "*cos(" : "*sin(";
            out += std::to_string(t.k1);
            if (t.k2 != 0)
                out += "," + std::to_string(t.k2);
            out += ")";
        }
    }
    return out;
}

std::string to_string(EnvKind kind)
{
    switch (kind) {
    case EnvKind::Constant: return "constant";
    case EnvKind::Periodic: return "periodic";
    case EnvKind::RandomBumps: return "random_bumps";
    }
    return "?";
}

//---------------------------------------------------------------------------//

Environment Environment::constant(int dim, const Mat2& a)
{
    if (dim != 1 && dim != 2)
        fail(ErrorCode::BadCoefficients, "dimension must be 1 or 2");
    Environment env;
    env.dim_ = dim;
    env.kind_ = EnvKind::Constant;
    Mat2 m = a;
    if (dim == 1)
        m = {a.m11, 0, 0, 0};
    if (dim == 2 && m.m12 != m.m21)
        fail(ErrorCode::BadCoefficients, "constant matrix is not symmetric");
    auto ev = sym_eigenvalues(m, dim);
    if (!(ev[0] > 0.0) || !std::isfinite(ev[1]))
        fail(ErrorCode::EllipticityViolation, "constant matrix is not positive definite");
    env.params_ = ConstantParams{m};
    env.const_sigma_ = sym_sqrt(m, dim);
    env.bounds_.kappa = std::min({1.0, ev[0], 1.0 / ev[1]});
    env.max_norm_ae1_ = std::hypot(m.m11, m.m21);
    return env;
}

Environment Environment::periodic(int dim, const PeriodicParams& params)
{
    if (dim != 1 && dim != 2)
        fail(ErrorCode::BadCoefficients, "dimension must be 1 or 2");
    if (params.a11.empty())
        fail(ErrorCode::BadCoefficients, "a11 is required");
    if (dim == 1 && (!params.a12.empty() || !params.a22.empty()))
        fail(ErrorCode::BadCoefficients, "a 1-D table has only a11");
    if (dim == 2 && params.a22.empty())
        fail(ErrorCode::BadCoefficients, "a22 is required in 2-D");
    if (params.reciprocal && !params.a12.empty())
        fail(ErrorCode::BadCoefficients, "reciprocal profile needs a diagonal table");
    for (const auto* s : {&params.a11, &params.a12, &params.a22})
        for (const auto& t : s->terms)
            if ((dim == 1 && t.k2 != 0) || !std::isfinite(t.coef))
                fail(ErrorCode::BadCoefficients, "malformed term in a 1-D table");

    Environment env;
    env.dim_ = dim;
    env.kind_ = EnvKind::Periodic;
    env.params_ = params;
    double lo, hi, ae1;
    sample_torus(env, dim == 1 ? 4096 : 256, lo, hi, ae1);
    env.bounds_.kappa = std::min({1.0, lo, 1.0 / hi});
    env.max_norm_ae1_ = ae1;
    return env;
}

Environment Environment::random_bumps(int dim, const BumpParams& p, std::uint64_t seed)
{
    if (dim != 1 && dim != 2)
        fail(ErrorCode::BadCoefficients, "dimension must be 1 or 2");
    if (!(p.intensity > 0.0) || !(p.bump_radius > 0.0) || !std::isfinite(p.intensity)
        || !std::isfinite(p.bump_radius) || p.max_per_cell < 1)
        fail(ErrorCode::BadCoefficients, "intensity, bump_radius and max_per_cell must be positive");
    if (!(p.base > 0.0) || !(p.amplitude >= 0.0) || !std::isfinite(p.base)
        || !std::isfinite(p.amplitude))
        fail(ErrorCode::EllipticityViolation, "base must be positive and amplitude non-negative");
    Environment env;
    env.dim_ = dim;
    env.kind_ = EnvKind::RandomBumps;
    env.params_ = p;
    env.seed_ = seed;
    // A ball of radius r meets at most 2 cells of side 2r per axis.
    double top = p.base + p.amplitude * p.max_per_cell * (dim == 1 ? 2.0 : 4.0);
    env.bounds_.kappa = std::min({1.0, p.base, 1.0 / top});
    env.max_norm_ae1_ = top;
    return env;
}

double Environment::range() const
{
    switch (kind_) {
    case EnvKind::Constant: return 0.0;
    case EnvKind::Periodic: return std::numeric_limits<double>::infinity();
    case EnvKind::RandomBumps: return 2.0 * std::get<BumpParams>(params_).bump_radius;
    }
    return 0.0;
}

Environment Environment::with_seed(std::uint64_t seed) const
{
    Environment out = *this;
    if (kind_ == EnvKind::RandomBumps)
        out.seed_ = seed;
    return out;
}

//---------------------------------------------------------------------------//

void Environment::cell_bumps(std::int64_t cx, std::int64_t cy, std::vector<Bump>& out) const
{
    const auto& p = std::get<BumpParams>(params_);
    double side = 2.0 * p.bump_radius;
    double volume = dim_ == 1 ? side : side * side;
    CounterRng rng(seed_, derive_stream({0xB0B0ull, std::uint64_t(cx), std::uint64_t(cy)}));
    // Poisson count by inversion, truncated at max_per_cell.
    double u = rng.uniform();
    double mean = p.intensity * volume;
    double prob = std::exp(-mean);
    double cdf = prob;
    int count = 0;
    while (u > cdf && count < p.max_per_cell) {
        ++count;
        prob *= mean / count;
        cdf += prob;
    }
    for (int k = 0; k < count; ++k) {
        Bump bump;
        bump.id = derive_stream({std::uint64_t(cx), std::uint64_t(cy), std::uint64_t(k)});
        bump.center[0] = (double(cx) + rng.uniform()) * side;
        bump.center[1] = dim_ == 2 ? (double(cy) + rng.uniform()) * side : 0.0;
        double strength = p.amplitude * rng.uniform();
        if (dim_ == 1) {
            bump.weight = {strength, 0, 0, 0};
        } else {
            double angle = 2.0 * std::numbers::pi * rng.uniform();
            double c = std::cos(angle), s = std::sin(angle);
            bump.weight = {strength * c * c, strength * c * s, strength * c * s, strength * s * s};
        }
        out.push_back(bump);
    }
}

void Environment::refresh_cache(const Vec& x, BumpCache& cache) const
{
    double side = 2.0 * std::get<BumpParams>(params_).bump_radius;
    std::int64_t cx = std::int64_t(std::floor(x[0] / side));
    std::int64_t cy = dim_ == 2 ? std::int64_t(std::floor(x[1] / side)) : 0;
    if (cache.cell[0] == cx && cache.cell[1] == cy)
        return;
    cache.cell = {cx, cy};
    cache.bumps.clear();
    int ry = dim_ == 2 ? 1 : 0;
    for (std::int64_t dy = -ry; dy <= ry; ++dy)
        for (std::int64_t dx = -1; dx <= 1; ++dx)
            cell_bumps(cx + dx, cy + dy, cache.bumps);
}

EnvSample Environment::eval(const Vec& x) const
{
    if (kind_ == EnvKind::RandomBumps) {
        BumpCache cache;
        return eval(x, cache);
    }
    BumpCache unused;
    return eval(x, unused);
}

EnvSample Environment::eval(const Vec& x, BumpCache& cache) const
{
    EnvSample out;
    switch (kind_) {
    case EnvKind::Constant: {
        out.sigma = const_sigma_;
        out.a = multiply_transpose(out.sigma);
        return out;
    }
    case EnvKind::Periodic: {
        const auto& p = std::get<PeriodicParams>(params_);
        Vec g11, g12{0, 0}, g22{0, 0};
        double a11 = p.a11.value_grad(x, g11);
        double a12 = 0.0, a22 = 0.0;
        if (dim_ == 2) {
            a12 = p.a12.empty() ? 0.0 : p.a12.value_grad(x, g12);
            a22 = p.a22.value_grad(x, g22);
        }
        if (p.reciprocal) {
            double inv = 1.0 / a11;
            a11 = inv;
            g11 = {-g11[0] * inv * inv, -g11[1] * inv * inv};
            if (dim_ == 2) {
                double inv2 = 1.0 / a22;
                a22 = inv2;
                g22 = {-g22[0] * inv2 * inv2, -g22[1] * inv2 * inv2};
            }
        }
        Mat2 a{a11, a12, a12, a22};
        out.sigma = sym_sqrt(a, dim_);
        out.a = multiply_transpose(out.sigma);
        if (dim_ == 1) {
            out.b = {0.5 * g11[0], 0.0};
        } else {
            out.b = {0.5 * (g11[0] + g12[1]), 0.5 * (g12[0] + g22[1])};
        }
        return out;
    }
    case EnvKind::RandomBumps: {
        const auto& p = std::get<BumpParams>(params_);
        refresh_cache(x, cache);
        double r2 = p.bump_radius * p.bump_radius;
        Mat2 a = Mat2::scalar(p.base);
        if (dim_ == 1)
            a = {p.base, 0, 0, 0};
        Vec b{0.0, 0.0};
        for (const auto& bump : cache.bumps) {
            double dx = x[0] - bump.center[0];
            double dy = dim_ == 2 ? x[1] - bump.center[1] : 0.0;
            double q2 = (dx * dx + dy * dy) / r2;
            if (q2 >= 1.0)
                continue;
            double phi = bump_profile(q2);
            // grad phi = phi'(q^2) * 2 (x - p) / r^2
            double scale = bump_profile_slope(q2) * 2.0 / r2;
            double gx = scale * dx, gy = scale * dy;
            const Mat2& w = bump.weight;
            a.m11 += phi * w.m11;
            a.m12 += phi * w.m12;
            a.m21 += phi * w.m21;
            a.m22 += phi * w.m22;
            b[0] += 0.5 * (w.m11 * gx + w.m12 * gy);
            b[1] += 0.5 * (w.m21 * gx + w.m22 * gy);
        }
        if (dim_ == 1)
            b[1] = 0.0;
        out.sigma = sym_sqrt(a, dim_);
        out.a = multiply_transpose(out.sigma);
        out.b = b;
        return out;
    }
    }
    return out;
}

std::vector<std::uint64_t> Environment::bumps_at(const Vec& x) const
{
    std::vector<std::uint64_t> ids;
    if (kind_ != EnvKind::RandomBumps)
        return ids;
    BumpCache cache;
    refresh_cache(x, cache);
    double r = std::get<BumpParams>(params_).bump_radius;
    for (const auto& bump : cache.bumps) {
        double dx = x[0] - bump.center[0];
        double dy = dim_ == 2 ? x[1] - bump.center[1] : 0.0;
        if (dx * dx + dy * dy < r * r)
            ids.push_back(bump.id);
    }
    return ids;
}

} // namespace driftlab
