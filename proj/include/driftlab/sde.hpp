#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "driftlab/environment.hpp"
#include "driftlab/functional.hpp"
#include "driftlab/rng.hpp"

namespace driftlab {

// MetropolisAdjusted: Euler proposal accepted with the Metropolis-Hastings ratio for
// Lebesgue measure, which the unforced dynamics leave invariant. Equilibrium averages
// then carry no discretization bias; pathwise quantities such as Bbar only move on
// accepted steps. Unforced runs only.
enum class Scheme { EulerMaruyama, Milstein1D, MetropolisAdjusted };

struct IntegratorConfig {
    double step = 1e-2;
    Scheme scheme = Scheme::EulerMaruyama;
    std::uint64_t seed = 1;
    double lambda = 0.0;
    Vec direction{1.0, 0.0};
    // The companion Brownian coordinate can be skipped when only X is needed; W1 then stays 0.
    bool simulate_w1 = true;

    // min(1e-2, lambda^2 / 10); 1e-2 at lambda = 0.
    static double default_step(double lambda);
};

void validate(const IntegratorConfig& cfg, const Environment& env);

struct PathState {
    std::uint64_t steps = 0;
    double t = 0.0;
    Vec x{0.0, 0.0};
    Vec x0{0.0, 0.0};
    double afun = 0.0;
    double w1 = 0.0;
    double bbar = 0.0;
    double bracket = 0.0;
    double running_max = 0.0;
    double f_now = 0.0;
    EnvSample sample;
    Vec direction{1.0, 0.0};
    std::uint64_t rejected = 0;

    // Displacement along the forcing direction since the start.
    double progress() const
    {
        return direction[0] * (x[0] - x0[0]) + direction[1] * (x[1] - x0[1]);
    }
};

// Noise increments of one step, already scaled by sqrt(h).
struct StepNoise {
    Vec dw{0.0, 0.0};
    double dw1 = 0.0;
};

/*!
 * Advances one path of (X, A_f, W1, Bbar, <Bbar>) step by step. The per-path
 * bump cache lives here, so the environment itself stays shared and immutable.
 */
class Stepper {
  public:
    Stepper(const Environment& env, const FunctionalSpec& f, const IntegratorConfig& cfg,
            const Vec& x0, std::uint64_t path_index = 0);

    void step();
    // Step with externally supplied increments; used to couple paths at two step sizes.
    void step(const StepNoise& noise, double h);
    StepNoise draw_noise(double h);

    const PathState& state() const { return st_; }
    double step_size() const { return cfg_.step; }
    const IntegratorConfig& config() const { return cfg_; }

  private:
    const Environment* env_;
    const FunctionalSpec* f_;
    IntegratorConfig cfg_;
    CounterRng rng_;
    BumpCache cache_;
    PathState st_;
};

struct PathRecord {
    int dim = 1;
    double step = 0.0;
    double lambda = 0.0;
    Vec direction{1.0, 0.0};
    std::vector<double> times;
    std::vector<Vec> X;
    std::vector<double> Afun;
    std::vector<double> W1;
    std::vector<double> Bbar;
    std::vector<double> Bbracket;
    std::vector<double> running_max;

    std::size_t size() const { return times.size(); }
    void push(const PathState& s);
    // Columns: t,X1[,X2],Afun,W1,Bbar
    void write_csv(std::ostream& os) const;
};

struct GirsanovWeight {
    double logw = 0.0;
    double value() const;
};

// Path stream id and the stationary starting point (uniform on the torus for periodic fields).
std::uint64_t path_stream(std::uint64_t path_index);
Vec stationary_start(const Environment& env, std::uint64_t seed, std::uint64_t path_index);

PathRecord integrate(const Environment& env, const FunctionalSpec& f, const IntegratorConfig& cfg,
                     double horizon, const Vec& x0 = {0.0, 0.0}, std::size_t record_every = 1,
                     std::uint64_t path_index = 0);

GirsanovWeight weight(const PathRecord& path, double lambda, double t);

// max_k |Bbar_k - [e.(X_k - X_0) - trapezoid sum of e.b]|; needs every step recorded.
double bbar_decomposition_check(const Environment& env, const PathRecord& path);

} // namespace driftlab
