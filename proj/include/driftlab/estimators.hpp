#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "driftlab/environment.hpp"
#include "driftlab/functional.hpp"
#include "driftlab/regeneration.hpp"
#include "driftlab/sde.hpp"
#include "driftlab/stats.hpp"

namespace driftlab {

// Shared Monte Carlo settings. Path p uses environment realization env.with_seed(...p...)
// and the stationary start, so averages are annealed over the environment.
struct McOptions {
    double step = 1e-2;
    Scheme scheme = Scheme::EulerMaruyama;
    std::size_t n_paths = 100;
    std::uint64_t seed = 1;
    int workers = 0;
    // Each path also runs at step/2 on the same Brownian increments and reports
    // 2 v(step/2) - v(step), cancelling the first-order discretization bias.
    bool richardson = false;
};

struct ScalingFit {
    std::vector<double> lambdas;
    std::vector<EstimateWithCI> values;
    double slope = 0.0;
    double slope_se = 0.0;
    double intercept = 0.0;
    std::map<std::string, double> extras;
};

// Realization used for path p (fresh seed per path for random kinds).
Environment path_environment(const Environment& env, std::size_t p);

EstimateWithCI ergodic_nu(const Environment& env, const FunctionalSpec& f, double lambda,
                          double horizon, const McOptions& opts);
// e1.(X(T) - X(0)) / T under forcing lambda.
EstimateWithCI ergodic_drift(const Environment& env, double lambda, double horizon,
                             const McOptions& opts);
EstimateWithCI sigma_cov(const Environment& env, const FunctionalSpec& f, const FunctionalSpec& g,
                         double horizon, const McOptions& opts);
EstimateWithCI gamma_bar(const Environment& env, const FunctionalSpec& f, double horizon,
                         const McOptions& opts);
EstimateWithCI corrector_pairing(const Environment& env, const FunctionalSpec& f, double horizon,
                                 const McOptions& opts, const std::function<double(const Vec&)>& chi);
// Mean of e1.X(t) A_f(t) / t at lambda = 0.
EstimateWithCI cross_covariance(const Environment& env, const FunctionalSpec& f, double horizon,
                                const McOptions& opts);
// Sample variance of e1.X(t) / sqrt(t) at lambda = 0.
EstimateWithCI equilibrium_variance(const Environment& env, double horizon, const McOptions& opts);

// Drift of A^eps(t) = eps A_f(t / eps^2) over t in [0, 1] with lambda = sqrt(alpha) eps.
ScalingFit lebowitz_rost_drift(const Environment& env, const FunctionalSpec& f, double alpha,
                               const std::vector<double>& eps_grid, const McOptions& opts);

// E max_{s <= 1/lambda^2} |A_f(s)| per lambda, with the log-log slope.
ScalingFit amax_scaling(const Environment& env, const FunctionalSpec& f,
                        const std::vector<double>& lambdas, const McOptions& opts);

struct EinsteinOptions {
    HarvestOptions harvest;
    double coupling_scale = 0.375;
    double censor_blocks = 50.0;
    // Companion lambda = 0 run.
    McOptions companion;
    double companion_horizon = 200.0;
};

// ell(lambda)/lambda per lambda by regeneration; extras hold the lambda = 0 variance.
ScalingFit einstein_mc(const Environment& env, const std::vector<double>& lambdas,
                       std::size_t n_cycles, std::uint64_t seed, const EinsteinOptions& opts);

struct DoobCheck {
    EstimateWithCI lhs;
    double bound = 0.0;
    bool holds = false;
    double slack = 0.0; // bound / lhs
};

DoobCheck doob_bound_check(const Environment& env, const FunctionalSpec& g, double t,
                           const McOptions& opts, double hminus1_norm);

} // namespace driftlab
