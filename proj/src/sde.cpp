#include "driftlab/sde.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "driftlab/error.hpp"

namespace driftlab {

double IntegratorConfig::default_step(double lambda)
{
    if (lambda <= 0.0)
        return 1e-2;
    return std::min(1e-2, lambda * lambda / 10.0);
}

void validate(const IntegratorConfig& cfg, const Environment& env)
{
    if (!(cfg.step > 0.0) || !std::isfinite(cfg.step))
        fail(ErrorCode::ConfigError, "integrator step must be positive");
    double norm = std::hypot(cfg.direction[0], cfg.direction[1]);
    if (std::fabs(norm - 1.0) > 1e-12)
        fail(ErrorCode::ConfigError, "direction must be a unit vector");
    if (env.dim() == 1 && cfg.direction[1] != 0.0)
        fail(ErrorCode::ConfigError, "direction has a second component in 1-D");
    if (cfg.scheme == Scheme::Milstein1D && env.dim() != 1)
        fail(ErrorCode::ConfigError, "Milstein scheme is only available in 1-D");
    if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda))
        fail(ErrorCode::ConfigError, "lambda must be non-negative");
    if (cfg.scheme == Scheme::MetropolisAdjusted && cfg.lambda != 0.0)
        fail(ErrorCode::ConfigError, "the Metropolis-adjusted scheme needs lambda = 0");
}

namespace {

// log N(y; x + b h, a h) up to the shared constant.
double log_proposal(const Vec& x, const Vec& y, const EnvSample& s, double h, int dim)
{
    double r0 = y[0] - x[0] - s.b[0] * h;
    if (dim == 1)
        return -0.5 * std::log(s.a.m11) - r0 * r0 / (2.0 * s.a.m11 * h);
    double r1 = y[1] - x[1] - s.b[1] * h;
    const Mat2& a = s.a;
    double det = a.m11 * a.m22 - a.m12 * a.m21;
    double q = (a.m22 * r0 * r0 - (a.m12 + a.m21) * r0 * r1 + a.m11 * r1 * r1) / det;
    return -0.5 * std::log(det) - q / (2.0 * h);
}

} // namespace

std::uint64_t path_stream(std::uint64_t path_index) { return derive_stream({0x5DEull, path_index}); }

Vec stationary_start(const Environment& env, std::uint64_t seed, std::uint64_t path_index)
{
    if (!env.is_periodic())
        return {0.0, 0.0};
    CounterRng rng(seed, derive_stream({0x57A7ull, path_index}));
    Vec x{rng.uniform(), 0.0};
    if (env.dim() == 2)
        x[1] = rng.uniform();
    return x;
}

//---------------------------------------------------------------------------//

Stepper::Stepper(const Environment& env, const FunctionalSpec& f, const IntegratorConfig& cfg,
                 const Vec& x0, std::uint64_t path_index)
    : env_(&env), f_(&f), cfg_(cfg), rng_(cfg.seed, path_stream(path_index))
{
    validate(cfg_, env);
    st_.x = x0;
    st_.x0 = x0;
    st_.direction = cfg_.direction;
    st_.sample = env_->eval(st_.x, cache_);
    st_.f_now = f_->value(st_.x, st_.sample);
}

StepNoise Stepper::draw_noise(double h)
{
    StepNoise n;
    double sq = std::sqrt(h);
    n.dw[0] = sq * rng_.normal();
    if (env_->dim() == 2)
        n.dw[1] = sq * rng_.normal();
    if (cfg_.simulate_w1)
        n.dw1 = sq * rng_.normal();
    return n;
}

void Stepper::step() { step(draw_noise(cfg_.step), cfg_.step); }

void Stepper::step(const StepNoise& noise, double h)
{
    const EnvSample& s = st_.sample;
    const Vec& e = cfg_.direction;
    const double lam = cfg_.lambda;
    const Mat2& sg = s.sigma;
    const Mat2& a = s.a;

    // sigma dW and the forcing a e.
    Vec sdw{sg.m11 * noise.dw[0] + sg.m12 * noise.dw[1], sg.m21 * noise.dw[0] + sg.m22 * noise.dw[1]};
    Vec ae{a.m11 * e[0] + a.m12 * e[1], a.m21 * e[0] + a.m22 * e[1]};
    Vec se{sg.m11 * e[0] + sg.m12 * e[1], sg.m21 * e[0] + sg.m22 * e[1]};

    Vec xn{st_.x[0] + (s.b[0] + lam * ae[0]) * h + sdw[0],
           st_.x[1] + (s.b[1] + lam * ae[1]) * h + sdw[1]};
    if (cfg_.scheme == Scheme::Milstein1D) {
        // In 1-D sigma sigma' = a'/2 = b.
        xn[0] += 0.5 * s.b[0] * (noise.dw[0] * noise.dw[0] - h);
    }
    if (env_->dim() == 1)
        xn[1] = 0.0;

    bool moved = true;
    EnvSample next;
    if (cfg_.scheme == Scheme::MetropolisAdjusted) {
        next = env_->eval(xn, cache_);
        double log_ratio = log_proposal(xn, st_.x, next, h, env_->dim()) - log_proposal(st_.x, xn, s, h, env_->dim());
        moved = log_ratio >= 0.0 || rng_.uniform() < std::exp(log_ratio);
        if (!moved) {
            ++st_.rejected;
            xn = st_.x;
            next = s;
        }
    } else {
        next = env_->eval(xn, cache_);
    }

    if (moved) {
        st_.bbar += e[0] * sdw[0] + e[1] * sdw[1];
        st_.bracket += (se[0] * se[0] + se[1] * se[1]) * h;
    }
    st_.w1 += noise.dw1;

    st_.x = xn;
    st_.sample = next;
    double f_new = f_->value(xn, st_.sample);
    st_.afun += 0.5 * (st_.f_now + f_new) * h;
    st_.f_now = f_new;
    st_.t += h;
    ++st_.steps;
    st_.running_max = std::max(st_.running_max, st_.progress());

    if (!std::isfinite(xn[0]) || !std::isfinite(xn[1]) || !std::isfinite(st_.afun)
        || !std::isfinite(st_.bbar))
        fail(ErrorCode::NonFinite, "path state became non-finite; reduce the step");
}

//---------------------------------------------------------------------------//

void PathRecord::push(const PathState& s)
{
    times.push_back(s.t);
    X.push_back(s.x);
    Afun.push_back(s.afun);
    W1.push_back(s.w1);
    Bbar.push_back(s.bbar);
    Bbracket.push_back(s.bracket);
    running_max.push_back(s.running_max);
}

void PathRecord::write_csv(std::ostream& os) const
{
    os << (dim == 2 ? "t,X1,X2,Afun,W1,Bbar\n" : "t,X1,Afun,W1,Bbar\n");
    os.precision(17);
    for (std::size_t i = 0; i < size(); ++i) {
        os << times[i] << ',' << X[i][0];
        if (dim == 2)
            os << ',' << X[i][1];
        os << ',' << Afun[i] << ',' << W1[i] << ',' << Bbar[i] << '\n';
    }
}

double GirsanovWeight::value() const { return std::exp(logw); }

PathRecord integrate(const Environment& env, const FunctionalSpec& f, const IntegratorConfig& cfg,
                     double horizon, const Vec& x0, std::size_t record_every,
                     std::uint64_t path_index)
{
    if (!(horizon >= cfg.step))
        fail(ErrorCode::HorizonTooShort, "horizon must be at least one step");
    if (record_every == 0)
        record_every = 1;
    Stepper stepper(env, f, cfg, x0, path_index);
    // Round to the nearest whole step when the horizon is (numerically) a multiple of h.
    double ratio = horizon / cfg.step;
    auto nsteps = std::uint64_t(std::llround(ratio));
    if (std::fabs(ratio - double(nsteps)) > 1e-9 * ratio)
        nsteps = std::uint64_t(std::ceil(ratio));

    PathRecord rec;
    rec.dim = env.dim();
    rec.step = cfg.step;
    rec.lambda = cfg.lambda;
    rec.direction = cfg.direction;
    std::size_t expected = std::size_t(nsteps / record_every) + 2;
    rec.times.reserve(expected);
    rec.X.reserve(expected);
    rec.push(stepper.state());
    for (std::uint64_t k = 1; k <= nsteps; ++k) {
        stepper.step();
        if (k % record_every == 0 || k == nsteps)
            rec.push(stepper.state());
    }
    return rec;
}

GirsanovWeight weight(const PathRecord& path, double lambda, double t)
{
    auto it = std::lower_bound(path.times.begin(), path.times.end(), t - 1e-9 * std::max(1.0, t));
    if (it == path.times.end() || std::fabs(*it - t) > 1e-9 * std::max(1.0, t))
        fail(ErrorCode::OffGrid, "time is not on the path grid");
    std::size_t i = std::size_t(it - path.times.begin());
    GirsanovWeight w;
    w.logw = lambda * path.Bbar[i] - 0.5 * lambda * lambda * path.Bbracket[i];
    return w;
}

double bbar_decomposition_check(const Environment& env, const PathRecord& path)
{
    const Vec& e = path.direction;
    BumpCache cache;
    double integral = 0.0;
    double residual = 0.0;
    double prev = 0.0;
    for (std::size_t i = 0; i < path.size(); ++i) {
        EnvSample s = env.eval(path.X[i], cache);
        double be = e[0] * s.b[0] + e[1] * s.b[1];
        if (i > 0)
            integral += 0.5 * (prev + be) * (path.times[i] - path.times[i - 1]);
        prev = be;
        double disp = e[0] * (path.X[i][0] - path.X[0][0]) + e[1] * (path.X[i][1] - path.X[0][1]);
        residual = std::max(residual, std::fabs(path.Bbar[i] - (disp - integral)));
    }
    return residual;
}

} // namespace driftlab
