#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "driftlab/environment.hpp"
#include "driftlab/functional.hpp"
#include "driftlab/sde.hpp"
#include "driftlab/stats.hpp"

namespace driftlab {

enum class RegenMode { Bernoulli, EventBased };

std::string to_string(RegenMode mode);

struct RegenConfig {
    double lambda = 0.1;
    double R_assump = 0.0;
    double R_f = 0.0;
    double delta = 0.5;
    RegenMode mode = RegenMode::EventBased;
    // Scales every length of the coupling balls U and B; 1 is the textbook geometry.
    double coupling_scale = 0.375;
    // Certification window after S, in units of lambda^-2.
    double censor_blocks = 50.0;

    // max{R_assump, R_f, 1/lambda}
    double R_lambda() const;
    // Margin below e1.X(tau) kept by the path before tau - lambda^-2: (8 * scale - 1) R(lambda).
    double halfspace_margin() const { return (8.0 * coupling_scale - 1.0) * R_lambda(); }

    // Periodic fields have no finite range; their period (1) plays that role.
    static RegenConfig for_environment(const Environment& env, const FunctionalSpec& f, double lambda);
};

void validate(const RegenConfig& cfg);

// The i.i.d. Bernoulli variables Y_m, keyed by the absolute block index m.
struct BernoulliStream {
    std::uint64_t seed = 0;
    double delta = 0.5;
    bool at(std::int64_t block) const;
};

struct PathSample {
    Vec x{0.0, 0.0};
    double afun = 0.0;
    double w1 = 0.0;
};

// Samples with absolute indices [begin, end); old samples can be dropped.
class PathBuffer {
  public:
    void push(const PathSample& s) { data_.push_back(s); }
    const PathSample& at(std::int64_t i) const { return data_[std::size_t(i - begin_)]; }
    std::int64_t begin() const { return begin_; }
    std::int64_t end() const { return begin_ + std::int64_t(data_.size()); }
    void drop_before(std::int64_t i);

    static PathBuffer from_record(const PathRecord& path);

  private:
    std::deque<PathSample> data_;
    std::int64_t begin_ = 0;
};

enum class Phase { SeekingRecord, InSuccessBlock, AwaitingBacktrack };

// One (N_k, S_k, J_k, R_k) quadruple in absolute time; J and R are +inf for the certified one.
struct SkeletonEvent {
    double N = 0, S = 0, J = 0, R = 0;
};

struct SkeletonState {
    Phase phase = Phase::SeekingRecord;
    double Ntilde = std::numeric_limits<double>::infinity();
    double N = std::numeric_limits<double>::infinity();
    double S = std::numeric_limits<double>::infinity();
    double J = std::numeric_limits<double>::infinity();
    double R = std::numeric_limits<double>::infinity();
    double level_a = 0.0; // a_k of the current search
    int K = 1;
    // Counters since construction.
    std::uint64_t candidates = 0;   // Ntilde values reached
    std::uint64_t successes = 0;    // S_k values reached
    std::uint64_t backtracks = 0;   // finite R_k
    std::uint64_t certified = 0;
    // Set when the buffer ended before the current cycle could be certified.
    bool horizon_exceeded = false;
};

struct RegenerationRecord {
    std::size_t k = 0;
    std::size_t path = 0;
    double dt = 0.0;
    std::vector<double> dZ; // (dX_1..dX_d, dy)
    double dA = 0.0;
    double dW1 = 0.0;
    Vec dX{0.0, 0.0};
    double dX1 = 0.0;
    bool is_first = false;
    bool censored = false;
    // Diagnostics.
    double tau = 0.0;    // absolute time of the regeneration
    double origin = 0.0; // absolute time of the previous one
    int K = 0;
    double pre_gap = 0.0;  // max over [origin, tau - lambda^-2] of e1.X minus e1.X(tau)
    double post_min = 0.0; // min over [tau, tau + H] of e1.X minus e1.X(tau)
    std::vector<SkeletonEvent> trace;
};

/*!
 * Stopping-time skeleton on one path. Consumes samples from a PathBuffer at
 * step h with lambda^-2 an exact multiple of h, and emits a record each time
 * a regeneration is certified.
 */
class Skeleton {
  public:
    Skeleton(const RegenConfig& cfg, double step, const Vec& direction, int dim,
             const PathBuffer& buffer);

    std::vector<RegenerationRecord> advance(const PathBuffer& buffer, const BernoulliStream& ys);

    const SkeletonState& state() const { return st_; }
    // Samples before this index are no longer needed.
    std::int64_t earliest_needed() const;
    std::int64_t block_steps() const { return m_; }

  private:
    enum class Sub { FindCrossing, CheckOsc, Decide, Event, Backtrack, AwaitRk };

    double xi(const PathSample& s) const { return dir_[0] * s.x[0] + dir_[1] * s.x[1]; }
    std::int64_t ceil_block(std::int64_t i) const { return ((i + m_ - 1) / m_) * m_; }
    bool ingest_block_max(const PathBuffer& buf);
    double max_before(std::int64_t from, std::int64_t to, const PathBuffer& buf) const;
    void start_search(std::int64_t from, double level, const PathBuffer& buf);
    bool in_coupling_event(const PathBuffer& buf, std::int64_t from) const;
    RegenerationRecord certify(const PathBuffer& buf);

    RegenConfig cfg_;
    double h_;
    Vec dir_;
    int dim_;
    std::int64_t m_;        // steps per block
    std::int64_t horizon_;  // certification window in steps
    double R_;
    SkeletonState st_;
    Sub sub_ = Sub::FindCrossing;

    std::int64_t origin_ = 0;
    PathSample origin_sample_;
    std::int64_t cursor_ = 0;
    double level_ = 0.0;
    std::int64_t search_from_ = 0;
    std::int64_t crossing_ = 0;
    std::int64_t candidate_ = 0;
    std::int64_t s_index_ = 0;
    double post_min_ = 0.0;
    double xi_n_ = 0.0;
    std::int64_t rk_ = 0;
    std::vector<SkeletonEvent> trace_;
    std::size_t emitted_ = 0;

    // Max of e1.X over each completed block [b m, (b+1) m), from the origin block on.
    std::vector<double> block_max_;
    std::int64_t block_max_first_ = 0;
    std::int64_t block_max_cursor_ = 0;
    double partial_max_ = -std::numeric_limits<double>::infinity();
};

// Adjusted step h' <= h with lambda^-2 / h' an integer.
double block_aligned_step(double lambda, double step);

struct AdvanceResult {
    std::vector<RegenerationRecord> records;
    SkeletonState state;
};

// Runs the skeleton over a finished path; the unfinished tail is reported through state.horizon_exceeded.
AdvanceResult advance(const RegenConfig& cfg, const PathRecord& path, const BernoulliStream& ys);

// First index j in (from, from + window] with e1.X_j <= e1.X_from - drop, or -1.
std::int64_t first_backtrack(const PathBuffer& buf, std::int64_t from, std::int64_t window,
                             double drop, const Vec& direction);

struct HarvestOptions {
    double step = 1e-2;
    Scheme scheme = Scheme::EulerMaruyama;
    std::size_t n_paths = 1;
    int workers = 0;
    // Step budget per path; BudgetExhausted when reached.
    std::uint64_t max_steps_per_path = 4'000'000'000ull;
    // Dynamics forcing; NaN means cfg.lambda.
    double dynamics_lambda = std::numeric_limits<double>::quiet_NaN();
};

struct HarvestResult {
    std::vector<RegenerationRecord> records;
    std::size_t censored = 0;
    std::uint64_t candidates = 0;
    std::uint64_t successes = 0;
    std::uint64_t backtracks = 0;
    std::uint64_t total_steps = 0;
    double step = 0.0;
    double delta = 0.0;

    std::vector<RegenerationRecord> iid_pool() const;
    void write_csv(std::ostream& os, int dim) const;
};

HarvestResult harvest(const Environment& env, const FunctionalSpec& f, const RegenConfig& cfg,
                      std::size_t n_cycles, std::uint64_t seed, const HarvestOptions& opts = {});

// Frequency of the coupling event from a start uniform in B, floored at 1e-3.
double estimate_delta(const Environment& env, const FunctionalSpec& f, const RegenConfig& cfg,
                      double step, std::size_t trials, std::uint64_t seed);

enum class RatioTarget { NuF, Ell, SigmaLambda, SigmaLambdaF };

EstimateWithCI ratio_estimate(const std::vector<RegenerationRecord>& records, RatioTarget which,
                              bool batched = false);

// Lag-1 autocorrelation of dt over the i.i.d. pool, pairing consecutive cycles of the same path.
double lag1_within_paths(const std::vector<RegenerationRecord>& records);

// Checks lambda^-2 <= N_1 - origin and N <= S <= J <= R <= next N on every event of the record.
bool ordering_holds(const RegenerationRecord& rec, double lambda);

} // namespace driftlab
