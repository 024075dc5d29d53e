#include "driftlab/estimators.hpp"

#include <algorithm>
#include <cmath>

#include "driftlab/error.hpp"
#include "driftlab/parallel.hpp"
#include "driftlab/rng.hpp"

namespace driftlab {

namespace {

std::uint64_t step_count(double horizon, double step)
{
    if (!(horizon >= step))
        fail(ErrorCode::HorizonTooShort, "horizon shorter than one step");
    return std::uint64_t(std::llround(horizon / step));
}

IntegratorConfig integrator(const McOptions& opts, double lambda)
{
    IntegratorConfig ic;
    ic.step = opts.step;
    ic.scheme = opts.scheme;
    ic.seed = opts.seed;
    ic.lambda = lambda;
    return ic;
}

// Observer outputs per path at the base step and, with Richardson, at step/2.
struct PathRows {
    std::vector<std::vector<double>> fine;
    std::vector<std::vector<double>> coarse;

    // Per-path statistic, extrapolated when both levels are present.
    template<class F>
    std::vector<double> values(F stat) const
    {
        const auto& top = coarse.empty() ? fine : coarse;
        std::vector<double> out;
        out.reserve(top.size());
        for (std::size_t p = 0; p < top.size(); ++p)
            out.push_back(coarse.empty() ? stat(fine[p]) : 2.0 * stat(fine[p]) - stat(coarse[p]));
        return out;
    }
};

// Runs n_paths paths of `nsteps` steps and maps each to per-path numbers via `observe`.
template<class Observer>
PathRows run_paths(const Environment& env, const FunctionalSpec& f, double lambda, std::uint64_t nsteps,
                   const McOptions& opts, Observer observe)
{
    IntegratorConfig ic = integrator(opts, lambda);
    validate(ic, env);
    if (!opts.richardson) {
        PathRows rows;
        rows.fine = parallel_map(opts.n_paths, opts.workers, [&](std::size_t p) {
            Environment env_p = path_environment(env, p);
            Stepper st(env_p, f, ic, stationary_start(env_p, opts.seed, p), p);
            auto obs = observe(st.step_size());
            obs.start(st.state());
            for (std::uint64_t k = 0; k < nsteps; ++k) {
                st.step();
                obs.update(st.state());
            }
            return obs.finish(st.state());
        });
        return rows;
    }
    if (ic.scheme == Scheme::MetropolisAdjusted)
        fail(ErrorCode::ConfigError, "Richardson extrapolation needs a scheme without accept/reject");
    IntegratorConfig half = ic;
    half.step = 0.5 * ic.step;
    auto both = parallel_map(opts.n_paths, opts.workers, [&](std::size_t p) {
        Environment env_p = path_environment(env, p);
        Vec x0 = stationary_start(env_p, opts.seed, p);
        Stepper fine(env_p, f, half, x0, p);
        Stepper coarse(env_p, f, ic, x0, p);
        auto of = observe(half.step);
        auto oc = observe(ic.step);
        of.start(fine.state());
        oc.start(coarse.state());
        for (std::uint64_t k = 0; k < nsteps; ++k) {
            StepNoise n1 = fine.draw_noise(half.step);
            fine.step(n1, half.step);
            of.update(fine.state());
            StepNoise n2 = fine.draw_noise(half.step);
            fine.step(n2, half.step);
            of.update(fine.state());
            StepNoise sum;
            sum.dw = {n1.dw[0] + n2.dw[0], n1.dw[1] + n2.dw[1]};
            sum.dw1 = n1.dw1 + n2.dw1;
            coarse.step(sum, ic.step);
            oc.update(coarse.state());
        }
        return std::pair{of.finish(fine.state()), oc.finish(coarse.state())};
    });
    PathRows rows;
    for (auto& [a, b] : both) {
        rows.fine.push_back(std::move(a));
        rows.coarse.push_back(std::move(b));
    }
    return rows;
}

struct EndpointObserver {
    void start(const PathState&) {}
    void update(const PathState&) {}
    std::vector<double> finish(const PathState& s)
    {
        return {s.afun, s.progress(), s.bbar, s.bracket};
    }
};

// Time averages of A over batches of the single-path case.
struct BatchObserver {
    std::uint64_t nsteps = 0;
    std::uint64_t per = 1;
    std::uint64_t k = 0;
    double last = 0.0;
    std::vector<double> batches;
    void start(const PathState&) {}
    void update(const PathState& s)
    {
        if (++k % per == 0) {
            batches.push_back(s.afun - last);
            last = s.afun;
        }
    }
    std::vector<double> finish(const PathState&) { return batches; }
};

// Trapezoid integrals of two functionals evaluated on the stepper's samples.
struct PairObserver {
    const FunctionalSpec* f;
    const FunctionalSpec* g;
    std::function<double(const Vec&)> weight;
    double h;
    double fa = 0, ga = 0, fprev = 0, gprev = 0;
    double fval(const PathState& s) const
    {
        double v = f->value(s.x, s.sample);
        return weight ? v * weight(s.x) : v;
    }
    void start(const PathState& s)
    {
        fprev = fval(s);
        gprev = g->value(s.x, s.sample);
    }
    void update(const PathState& s)
    {
        double fv = fval(s), gv = g->value(s.x, s.sample);
        fa += 0.5 * (fprev + fv) * h;
        ga += 0.5 * (gprev + gv) * h;
        fprev = fv;
        gprev = gv;
    }
    std::vector<double> finish(const PathState&) { return {fa, ga}; }
};

struct MaxAbsObserver {
    double m = 0.0;
    void start(const PathState&) {}
    void update(const PathState& s) { m = std::max(m, std::fabs(s.afun)); }
    std::vector<double> finish(const PathState&) { return {m}; }
};

// ScalingFit rows run from the largest lambda down.
void require_decreasing(const std::vector<double>& lambdas)
{
    for (std::size_t i = 1; i < lambdas.size(); ++i)
        if (!(lambdas[i] < lambdas[i - 1]))
            fail(ErrorCode::ConfigError, "lambda grid must be strictly decreasing");
}

} // namespace

Environment path_environment(const Environment& env, std::size_t p)
{
    return env.with_seed(derive_stream({env.seed(), p}));
}

EstimateWithCI ergodic_nu(const Environment& env, const FunctionalSpec& f, double lambda,
                          double horizon, const McOptions& opts)
{
    if (lambda > 0.0 && horizon < 10.0 / (lambda * lambda) * (1.0 - 1e-12))
        fail(ErrorCode::HorizonTooShort, "ergodic averages need horizon >= 10 lambda^-2");
    std::uint64_t nsteps = step_count(horizon, opts.step);
    double T = double(nsteps) * opts.step;
    if (opts.n_paths == 1) {
        auto per = std::max<std::uint64_t>(1, nsteps / std::uint64_t(std::ceil(std::sqrt(double(nsteps)))));
        if (opts.richardson)
            fail(ErrorCode::ConfigError, "Richardson extrapolation needs more than one path");
        auto rows = run_paths(env, f, lambda, nsteps, opts, [&](double) {
            BatchObserver o;
            o.nsteps = nsteps;
            o.per = per;
            return o;
        });
        std::vector<double> rates;
        for (double b : rows.fine[0])
            rates.push_back(b / (double(per) * opts.step));
        auto e = plain_mean(rates);
        e.method = EstimateMethod::BatchMeans;
        return e;
    }
    auto rows = run_paths(env, f, lambda, nsteps, opts, [](double) { return EndpointObserver{}; });
    auto e = plain_mean(rows.values([&](const auto& r) { return r[0] / T; }));
    e.method = EstimateMethod::BatchMeans; // each path is one batch
    return e;
}

EstimateWithCI ergodic_drift(const Environment& env, double lambda, double horizon,
                             const McOptions& opts)
{
    std::uint64_t nsteps = step_count(horizon, opts.step);
    double T = double(nsteps) * opts.step;
    FunctionalSpec zero;
    auto rows = run_paths(env, zero, lambda, nsteps, opts, [](double) { return EndpointObserver{}; });
    auto e = plain_mean(rows.values([&](const auto& r) { return r[1] / T; }));
    e.method = EstimateMethod::BatchMeans;
    return e;
}

EstimateWithCI sigma_cov(const Environment& env, const FunctionalSpec& f, const FunctionalSpec& g,
                         double horizon, const McOptions& opts)
{
    std::uint64_t nsteps = step_count(horizon, opts.step);
    double T = double(nsteps) * opts.step;
    FunctionalSpec zero;
    auto rows = run_paths(env, zero, 0.0, nsteps, opts, [&](double h) { return PairObserver{&f, &g, {}, h}; });
    return plain_mean(rows.values([&](const auto& r) { return r[0] * r[1] / T; }));
}

EstimateWithCI gamma_bar(const Environment& env, const FunctionalSpec& f, double horizon,
                         const McOptions& opts)
{
    std::uint64_t nsteps = step_count(horizon, opts.step);
    double T = double(nsteps) * opts.step;
    auto rows = run_paths(env, f, 0.0, nsteps, opts, [](double) { return EndpointObserver{}; });
    return plain_mean(rows.values([&](const auto& r) { return r[0] * r[2] / T; }));
}

EstimateWithCI corrector_pairing(const Environment& env, const FunctionalSpec& f, double horizon,
                                 const McOptions& opts, const std::function<double(const Vec&)>& chi)
{
    std::uint64_t nsteps = step_count(horizon, opts.step);
    double T = double(nsteps) * opts.step;
    FunctionalSpec zero;
    auto rows = run_paths(env, zero, 0.0, nsteps, opts, [&](double h) { return PairObserver{&f, &zero, chi, h}; });
    return plain_mean(rows.values([&](const auto& r) { return r[0] / T; }));
}

EstimateWithCI cross_covariance(const Environment& env, const FunctionalSpec& f, double horizon,
                                const McOptions& opts)
{
    std::uint64_t nsteps = step_count(horizon, opts.step);
    double T = double(nsteps) * opts.step;
    auto rows = run_paths(env, f, 0.0, nsteps, opts, [](double) { return EndpointObserver{}; });
    return plain_mean(rows.values([&](const auto& r) { return r[0] * r[1] / T; }));
}

EstimateWithCI equilibrium_variance(const Environment& env, double horizon, const McOptions& opts)
{
    std::uint64_t nsteps = step_count(horizon, opts.step);
    double T = double(nsteps) * opts.step;
    FunctionalSpec zero;
    auto rows = run_paths(env, zero, 0.0, nsteps, opts, [](double) { return EndpointObserver{}; });
    // Centring uses the mean displacement at the finest level.
    std::vector<double> x;
    for (const auto& r : rows.fine)
        x.push_back(r[1] / std::sqrt(T));
    double m = mean(x);
    EstimateWithCI e = plain_mean(rows.values([&](const auto& r) {
        double v = r[1] / std::sqrt(T) - m;
        return v * v;
    }));
    double n = double(x.size());
    e.value *= n / std::max(1.0, n - 1.0);
    e.se *= n / std::max(1.0, n - 1.0);
    return e;
}

ScalingFit lebowitz_rost_drift(const Environment& env, const FunctionalSpec& f, double alpha,
                               const std::vector<double>& eps_grid, const McOptions& opts)
{
    if (!(alpha >= 0.0))
        fail(ErrorCode::ConfigError, "alpha must be non-negative");
    ScalingFit fit;
    std::vector<double> lx, ly, lse;
    for (double eps : eps_grid) {
        double lambda = std::sqrt(alpha) * eps;
        double horizon = 1.0 / (eps * eps);
        std::uint64_t nsteps = step_count(horizon, opts.step);
        auto rows = run_paths(env, f, lambda, nsteps, opts, [](double) { return EndpointObserver{}; });
        // A^eps(1) - A^eps(0), the slope over [0, 1].
        auto e = plain_mean(rows.values([&](const auto& r) { return eps * r[0]; }));
        fit.lambdas.push_back(eps);
        fit.values.push_back(e);
        if (e.value != 0.0) {
            lx.push_back(std::log(eps));
            ly.push_back(std::log(std::fabs(e.value)));
            lse.push_back(e.se / std::fabs(e.value));
        }
    }
    if (lx.size() >= 2) {
        auto lf = fit_line(lx, ly, lse);
        fit.slope = lf.slope;
        fit.slope_se = lf.slope_se;
        fit.intercept = lf.intercept;
    }
    fit.extras["alpha"] = alpha;
    return fit;
}

ScalingFit amax_scaling(const Environment& env, const FunctionalSpec& f,
                        const std::vector<double>& lambdas, const McOptions& opts)
{
    require_decreasing(lambdas);
    ScalingFit fit;
    std::vector<double> lx, ly, lse;
    double worst = 0.0;
    for (double lambda : lambdas) {
        if (!(lambda > 0.0))
            fail(ErrorCode::ConfigError, "amax scaling needs positive lambdas");
        double horizon = 1.0 / (lambda * lambda);
        std::uint64_t nsteps = step_count(horizon, opts.step);
        auto rows = run_paths(env, f, lambda, nsteps, opts, [](double) { return MaxAbsObserver{}; });
        auto e = plain_mean(rows.values([](const auto& r) { return r[0]; }));
        fit.lambdas.push_back(lambda);
        fit.values.push_back(e);
        // E max|A| / (lambda t 2 |F|) at t = lambda^-2.
        if (f.sup_norm > 0.0)
            worst = std::max(worst, e.value * lambda / (2.0 * f.sup_norm));
        if (e.value > 0.0) {
            lx.push_back(std::log(lambda));
            ly.push_back(std::log(e.value));
            lse.push_back(e.se / e.value);
        }
    }
    if (lx.size() >= 2) {
        auto lf = fit_line(lx, ly, lse);
        fit.slope = lf.slope;
        fit.slope_se = lf.slope_se;
        fit.intercept = lf.intercept;
    }
    fit.extras["max_normalized"] = worst;
    return fit;
}

ScalingFit einstein_mc(const Environment& env, const std::vector<double>& lambdas,
                       std::size_t n_cycles, std::uint64_t seed, const EinsteinOptions& opts)
{
    if (lambdas.size() < 3)
        fail(ErrorCode::ConfigError, "einstein_mc needs at least three lambdas");
    require_decreasing(lambdas);
    FunctionalSpec zero;
    ScalingFit fit;
    std::vector<double> lx, ly, lse;
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        double lambda = lambdas[i];
        if (!(lambda > 0.0 && lambda <= 1.0))
            fail(ErrorCode::ConfigError, "lambdas must lie in (0, 1]");
        RegenConfig rc = RegenConfig::for_environment(env, zero, lambda);
        rc.coupling_scale = opts.coupling_scale;
        rc.censor_blocks = opts.censor_blocks;
        auto res = harvest(env, zero, rc, n_cycles, derive_stream({seed, i}), opts.harvest);
        auto ell = ratio_estimate(res.records, RatioTarget::Ell);
        EstimateWithCI v = ell;
        v.value /= lambda;
        v.se /= lambda;
        fit.lambdas.push_back(lambda);
        fit.values.push_back(v);
        auto sig = ratio_estimate(res.records, RatioTarget::SigmaLambda);
        fit.extras["sigma_lambda@" + std::to_string(lambda)] = sig.value;
        fit.extras["sigma_lambda_se@" + std::to_string(lambda)] = sig.se;
        fit.extras["cycles@" + std::to_string(lambda)] = double(res.iid_pool().size());
        lx.push_back(lambda);
        ly.push_back(v.value);
        lse.push_back(v.se);
    }
    // Linear extrapolation in lambda towards 0.
    auto lf = fit_line(lx, ly, lse);
    fit.slope = lf.slope;
    fit.slope_se = lf.slope_se;
    fit.intercept = lf.intercept;
    auto comp = equilibrium_variance(env, opts.companion_horizon, opts.companion);
    fit.extras["sigma0"] = comp.value;
    fit.extras["sigma0_se"] = comp.se;
    return fit;
}

DoobCheck doob_bound_check(const Environment& env, const FunctionalSpec& g, double t,
                           const McOptions& opts, double hminus1_norm)
{
    std::uint64_t nsteps = step_count(t, opts.step);
    auto rows = run_paths(env, g, 0.0, nsteps, opts, [](double) { return MaxAbsObserver{}; });
    DoobCheck out;
    out.lhs = plain_mean(rows.values([](const auto& r) { return r[0] * r[0]; }));
    out.bound = 8.0 * t * hminus1_norm * hminus1_norm;
    out.holds = out.lhs.value <= out.bound + 3.0 * out.lhs.se;
    out.slack = out.lhs.value > 0.0 ? out.bound / out.lhs.value : std::numeric_limits<double>::infinity();
    return out;
}

} // namespace driftlab
