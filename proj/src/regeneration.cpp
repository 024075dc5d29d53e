#include "driftlab/regeneration.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "driftlab/error.hpp"
#include "driftlab/parallel.hpp"
#include "driftlab/rng.hpp"

namespace driftlab {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

std::string to_string(RegenMode mode)
{
    return mode == RegenMode::Bernoulli ? "bernoulli" : "event";
}

double RegenConfig::R_lambda() const { return std::max({R_assump, R_f, 1.0 / lambda}); }

RegenConfig RegenConfig::for_environment(const Environment& env, const FunctionalSpec& f,
                                         double lambda)
{
    RegenConfig cfg;
    cfg.lambda = lambda;
    cfg.R_assump = std::isfinite(env.range()) ? env.range() : 1.0;
    cfg.R_f = std::isfinite(f.locality_radius) ? f.locality_radius : 1.0;
    return cfg;
}

void validate(const RegenConfig& cfg)
{
    if (!(cfg.lambda > 0.0 && cfg.lambda <= 1.0))
        fail(ErrorCode::ConfigError, "regeneration needs lambda in (0, 1]");
    if (!(cfg.delta > 0.0 && cfg.delta < 1.0) && cfg.mode == RegenMode::Bernoulli)
        fail(ErrorCode::ConfigError, "delta must lie in (0, 1)");
    if (!(cfg.coupling_scale > 0.125))
        fail(ErrorCode::ConfigError, "coupling_scale must exceed 1/8 to keep a halfspace margin");
    if (!(cfg.censor_blocks >= 1.0))
        fail(ErrorCode::ConfigError, "censor_blocks must be at least 1");
    if (!(cfg.R_assump >= 0.0) || !(cfg.R_f >= 0.0))
        fail(ErrorCode::ConfigError, "ranges must be non-negative");
}

bool BernoulliStream::at(std::int64_t block) const
{
    CounterRng rng(seed, derive_stream({0xBE77ull, std::uint64_t(block)}));
    return rng.uniform() < delta;
}

void PathBuffer::drop_before(std::int64_t i)
{
    while (begin_ < i && !data_.empty()) {
        data_.pop_front();
        ++begin_;
    }
}

PathBuffer PathBuffer::from_record(const PathRecord& path)
{
    PathBuffer buf;
    for (std::size_t i = 0; i < path.size(); ++i)
        buf.push({path.X[i], path.Afun[i], path.W1[i]});
    return buf;
}

double block_aligned_step(double lambda, double step)
{
    double block = 1.0 / (lambda * lambda);
    double m = std::ceil(block / step * (1.0 - 1e-12));
    return block / std::max(1.0, m);
}

//---------------------------------------------------------------------------//

Skeleton::Skeleton(const RegenConfig& cfg, double step, const Vec& direction, int dim,
                   const PathBuffer& buffer)
    : cfg_(cfg), h_(step), dir_(direction), dim_(dim)
{
    validate(cfg_);
    double block = 1.0 / (cfg_.lambda * cfg_.lambda);
    m_ = std::llround(block / h_);
    if (m_ < 1 || std::fabs(double(m_) * h_ - block) > 1e-9 * block)
        fail(ErrorCode::ConfigError, "lambda^-2 must be a whole number of steps");
    horizon_ = std::llround(cfg_.censor_blocks * double(m_));
    R_ = cfg_.R_lambda();
    origin_ = buffer.begin();
    if (origin_ % m_ != 0)
        fail(ErrorCode::ConfigError, "skeleton must start on a block boundary");
    origin_sample_ = buffer.at(origin_);
    block_max_first_ = origin_ / m_;
    block_max_cursor_ = origin_;
    start_search(origin_, xi(origin_sample_) + 3.0 * R_, buffer);
}

void Skeleton::start_search(std::int64_t from, double level, const PathBuffer& buf)
{
    search_from_ = from;
    level_ = level;
    cursor_ = from + 1;
    sub_ = Sub::FindCrossing;
    st_.phase = Phase::SeekingRecord;
    st_.level_a = cfg_.lambda * (level - xi(buf.at(from)));
}

bool Skeleton::ingest_block_max(const PathBuffer& buf)
{
    while (block_max_cursor_ < buf.end()) {
        partial_max_ = std::max(partial_max_, xi(buf.at(block_max_cursor_)));
        ++block_max_cursor_;
        if (block_max_cursor_ % m_ == 0) {
            block_max_.push_back(partial_max_);
            partial_max_ = -kInf;
        }
    }
    return true;
}

double Skeleton::max_before(std::int64_t from, std::int64_t to, const PathBuffer& buf) const
{
    // from and to are block boundaries; max over samples [from, to].
    double m = xi(buf.at(to));
    for (std::int64_t b = from / m_; b < to / m_; ++b)
        m = std::max(m, block_max_[std::size_t(b - block_max_first_)]);
    return m;
}

bool Skeleton::in_coupling_event(const PathBuffer& buf, std::int64_t from) const
{
    const double g = cfg_.coupling_scale;
    const PathSample& z = buf.at(from);
    const double yz = z.afun + z.w1;
    auto offset2 = [&](const PathSample& s, double ahead) {
        double dx0 = s.x[0] - z.x[0] - ahead * R_ * dir_[0];
        double dx1 = dim_ == 2 ? s.x[1] - z.x[1] - ahead * R_ * dir_[1] : 0.0;
        double dy = s.afun + s.w1 - yz;
        return dx0 * dx0 + dx1 * dx1 + dy * dy;
    };
    const double ru = 6.0 * g * R_;
    for (std::int64_t i = from; i <= from + m_; ++i)
        if (offset2(buf.at(i), 5.0 * g) > ru * ru)
            return false;
    const double rb = g * R_;
    return offset2(buf.at(from + m_), 9.0 * g) <= rb * rb;
}

std::int64_t Skeleton::earliest_needed() const
{
    std::int64_t anchor = cursor_;
    switch (sub_) {
    case Sub::FindCrossing: anchor = cursor_ - 1; break;
    case Sub::CheckOsc: anchor = crossing_; break;
    case Sub::Decide:
    case Sub::Event: anchor = candidate_; break;
    case Sub::Backtrack:
    case Sub::AwaitRk: anchor = s_index_; break;
    }
    return std::min(anchor, block_max_cursor_);
}

RegenerationRecord Skeleton::certify(const PathBuffer& buf)
{
    const PathSample& s = buf.at(s_index_);
    RegenerationRecord rec;
    rec.k = ++emitted_;
    rec.is_first = rec.k == 1;
    rec.dt = double(s_index_ - origin_) * h_;
    rec.dX = {s.x[0] - origin_sample_.x[0], s.x[1] - origin_sample_.x[1]};
    rec.dX1 = dir_[0] * rec.dX[0] + dir_[1] * rec.dX[1];
    rec.dA = s.afun - origin_sample_.afun;
    rec.dW1 = s.w1 - origin_sample_.w1;
    rec.dZ.assign(rec.dX.begin(), rec.dX.begin() + dim_);
    rec.dZ.push_back(rec.dA + rec.dW1);
    rec.tau = double(s_index_) * h_;
    rec.origin = double(origin_) * h_;
    rec.K = st_.K;
    double xs = xi(s);
    // Window [origin, N] with N = tau - lambda^-2; N itself is held in xi_n_.
    double pre = xi_n_;
    for (std::int64_t b = origin_ / m_; b < (s_index_ - m_) / m_; ++b)
        pre = std::max(pre, block_max_[std::size_t(b - block_max_first_)]);
    rec.pre_gap = pre - xs;
    rec.post_min = post_min_;
    rec.trace = trace_;
    rec.trace.push_back({st_.N, st_.S, kInf, kInf});
    ++st_.certified;

    // The next cycle starts at tau.
    std::int64_t drop = s_index_ / m_ - block_max_first_;
    block_max_.erase(block_max_.begin(), block_max_.begin() + drop);
    block_max_first_ = s_index_ / m_;
    origin_ = s_index_;
    origin_sample_ = s;
    trace_.clear();
    st_.K = 1;
    start_search(s_index_, xs + 3.0 * R_, buf);
    return rec;
}

std::vector<RegenerationRecord> Skeleton::advance(const PathBuffer& buf, const BernoulliStream& ys)
{
    std::vector<RegenerationRecord> out;
    const std::int64_t end = buf.end();
    while (true) {
        ingest_block_max(buf);
        switch (sub_) {
        case Sub::FindCrossing: {
            while (cursor_ < end && xi(buf.at(cursor_)) < level_)
                ++cursor_;
            if (cursor_ >= end)
                return out;
            crossing_ = cursor_;
            sub_ = Sub::CheckOsc;
            break;
        }
        case Sub::CheckOsc: {
            std::int64_t c = ceil_block(crossing_);
            if (c >= end)
                return out;
            bool calm = true;
            for (std::int64_t i = crossing_; i <= c && calm; ++i)
                calm = std::fabs(xi(buf.at(i)) - level_) <= 0.5 * R_;
            if (calm) {
                candidate_ = c;
                st_.Ntilde = double(c) * h_;
                ++st_.candidates;
                sub_ = Sub::Decide;
            } else {
                level_ = max_before(search_from_, c, buf) + R_;
                cursor_ = c + 1;
                sub_ = Sub::FindCrossing;
            }
            break;
        }
        case Sub::Decide: {
            if (cfg_.mode == RegenMode::Bernoulli && !ys.at(candidate_ / m_)) {
                start_search(candidate_, xi(buf.at(candidate_)) + 3.0 * R_, buf);
                break;
            }
            sub_ = Sub::Event;
            st_.phase = Phase::InSuccessBlock;
            break;
        }
        case Sub::Event: {
            if (candidate_ + m_ >= end)
                return out;
            if (!in_coupling_event(buf, candidate_)) {
                start_search(candidate_, xi(buf.at(candidate_)) + 3.0 * R_, buf);
                break;
            }
            s_index_ = candidate_ + m_;
            xi_n_ = xi(buf.at(candidate_));
            st_.N = double(candidate_) * h_;
            st_.S = double(s_index_) * h_;
            st_.J = st_.R = kInf;
            ++st_.successes;
            post_min_ = 0.0;
            cursor_ = s_index_ + 1;
            sub_ = Sub::Backtrack;
            st_.phase = Phase::AwaitingBacktrack;
            break;
        }
        case Sub::Backtrack: {
            const double base = xi(buf.at(s_index_));
            const double threshold = base - R_;
            const std::int64_t last = s_index_ + horizon_;
            while (cursor_ <= last && cursor_ < end) {
                double v = xi(buf.at(cursor_));
                if (v <= threshold)
                    break;
                post_min_ = std::min(post_min_, v - base);
                ++cursor_;
            }
            if (cursor_ > last) {
                out.push_back(certify(buf));
                break;
            }
            if (cursor_ >= end)
                return out;
            // Backtracked at cursor_: interpolate J, then R_k = ceil(J).
            double prev = xi(buf.at(cursor_ - 1));
            double cur = xi(buf.at(cursor_));
            double frac = (prev - threshold) / (prev - cur);
            st_.J = (double(cursor_ - 1) + frac) * h_;
            rk_ = ceil_block(cursor_);
            st_.R = double(rk_) * h_;
            ++st_.backtracks;
            sub_ = Sub::AwaitRk;
            break;
        }
        case Sub::AwaitRk: {
            if (rk_ >= end)
                return out;
            trace_.push_back({st_.N, st_.S, st_.J, st_.R});
            double top = max_before(origin_, rk_, buf);
            ++st_.K;
            start_search(rk_, top + R_, buf);
            break;
        }
        }
    }
}

//---------------------------------------------------------------------------//

AdvanceResult advance(const RegenConfig& cfg, const PathRecord& path, const BernoulliStream& ys)
{
    PathBuffer buf = PathBuffer::from_record(path);
    Skeleton sk(cfg, path.step, path.direction, path.dim, buf);
    AdvanceResult res;
    res.records = sk.advance(buf, ys);
    res.state = sk.state();
    // Whatever cycle is open at the end of the path cannot be certified.
    res.state.horizon_exceeded = true;
    return res;
}

std::int64_t first_backtrack(const PathBuffer& buf, std::int64_t from, std::int64_t window,
                             double drop, const Vec& direction)
{
    auto xi = [&](std::int64_t i) {
        const auto& s = buf.at(i);
        return direction[0] * s.x[0] + direction[1] * s.x[1];
    };
    double threshold = xi(from) - drop;
    for (std::int64_t j = from + 1; j <= from + window && j < buf.end(); ++j)
        if (xi(j) <= threshold)
            return j;
    return -1;
}

std::vector<RegenerationRecord> HarvestResult::iid_pool() const
{
    std::vector<RegenerationRecord> pool;
    for (const auto& r : records)
        if (!r.is_first && !r.censored)
            pool.push_back(r);
    return pool;
}

void HarvestResult::write_csv(std::ostream& os, int dim) const
{
    os << "k,dt,dA,dW1,dX_1";
    if (dim == 2)
        os << ",dX_2";
    os << ",censored\n";
    os.precision(17);
    for (const auto& r : records) {
        os << r.k << ',' << r.dt << ',' << r.dA << ',' << r.dW1 << ',' << r.dX[0];
        if (dim == 2)
            os << ',' << r.dX[1];
        os << ',' << (r.censored ? 1 : 0) << '\n';
    }
}

namespace {

struct PathHarvest {
    std::vector<RegenerationRecord> records;
    SkeletonState state;
    std::uint64_t steps = 0;
};

} // namespace

HarvestResult harvest(const Environment& env, const FunctionalSpec& f, const RegenConfig& cfg,
                      std::size_t n_cycles, std::uint64_t seed, const HarvestOptions& opts)
{
    validate(cfg);
    if (n_cycles < 1)
        fail(ErrorCode::ConfigError, "n_cycles must be at least 1");
    const std::size_t n_paths = std::max<std::size_t>(1, opts.n_paths);
    const double h = block_aligned_step(cfg.lambda, opts.step);
    const std::size_t quota = (n_cycles + n_paths - 1) / n_paths + 1;
    const double dyn_lambda = std::isnan(opts.dynamics_lambda) ? cfg.lambda : opts.dynamics_lambda;

    auto run_path = [&](std::size_t p) {
        Environment env_p = env.with_seed(derive_stream({env.seed(), p}));
        IntegratorConfig ic;
        ic.step = h;
        ic.scheme = opts.scheme;
        ic.seed = seed;
        ic.lambda = dyn_lambda;
        Stepper stepper(env_p, f, ic, stationary_start(env_p, seed, p), p);
        PathBuffer buf;
        auto push = [&] {
            const auto& s = stepper.state();
            buf.push({s.x, s.afun, s.w1});
        };
        push();
        Skeleton sk(cfg, h, ic.direction, env.dim(), buf);
        BernoulliStream ys{derive_stream({seed, p, 0x7Bull}), cfg.delta};
        PathHarvest out;
        const std::int64_t chunk = sk.block_steps();
        while (out.records.size() < quota) {
            for (std::int64_t k = 0; k < chunk; ++k) {
                stepper.step();
                push();
            }
            out.steps += std::uint64_t(chunk);
            for (auto& r : sk.advance(buf, ys)) {
                r.path = p;
                out.records.push_back(std::move(r));
                if (out.records.size() >= quota)
                    break;
            }
            buf.drop_before(sk.earliest_needed());
            if (out.steps > opts.max_steps_per_path)
                fail(ErrorCode::BudgetExhausted, "step budget exhausted before enough cycles were certified");
        }
        out.state = sk.state();
        return out;
    };

    auto per_path = parallel_map(n_paths, opts.workers, run_path);
    HarvestResult res;
    res.step = h;
    res.delta = cfg.delta;
    for (auto& ph : per_path) {
        for (auto& r : ph.records)
            res.records.push_back(std::move(r));
        res.candidates += ph.state.candidates;
        res.successes += ph.state.successes;
        res.backtracks += ph.state.backtracks;
        res.total_steps += ph.steps;
    }
    return res;
}

double estimate_delta(const Environment& env, const FunctionalSpec& f, const RegenConfig& cfg,
                      double step, std::size_t trials, std::uint64_t seed)
{
    validate(cfg);
    const double h = block_aligned_step(cfg.lambda, step);
    const std::int64_t m = std::llround(1.0 / (cfg.lambda * cfg.lambda) / h);
    const double R = cfg.R_lambda();
    const double g = cfg.coupling_scale;
    const int d = env.dim();
    std::size_t hits = 0;
    for (std::size_t i = 0; i < trials; ++i) {
        Environment env_i = env.with_seed(derive_stream({env.seed(), i, 0xDE17Aull}));
        CounterRng rng(seed, derive_stream({0xB1A5ull, i}));
        // Uniform point of the unit ball in d+1 dimensions by rejection.
        double u[3];
        double r2;
        do {
            r2 = 0.0;
            for (int k = 0; k <= d; ++k) {
                u[k] = 2.0 * rng.uniform() - 1.0;
                r2 += u[k] * u[k];
            }
        } while (r2 > 1.0);
        Vec x0{9.0 * g * R + g * R * u[0], d == 2 ? g * R * u[1] : 0.0};
        IntegratorConfig ic;
        ic.step = h;
        ic.seed = seed;
        ic.lambda = cfg.lambda;
        Stepper st(env_i, f, ic, x0, i);
        PathBuffer buf;
        buf.push({x0, 0.0, 0.0});
        for (std::int64_t k = 0; k < m; ++k) {
            st.step();
            buf.push({st.state().x, st.state().afun, st.state().w1});
        }
        // Same event test the skeleton uses, relative to the start point.
        const PathSample& z = buf.at(0);
        auto off2 = [&](const PathSample& s, double ahead) {
            double a0 = s.x[0] - z.x[0] - ahead * R;
            double a1 = d == 2 ? s.x[1] - z.x[1] : 0.0;
            double dy = s.afun + s.w1;
            return a0 * a0 + a1 * a1 + dy * dy;
        };
        bool inside = true;
        for (std::int64_t k = 0; k <= m && inside; ++k)
            inside = off2(buf.at(k), 5.0 * g) <= 36.0 * g * g * R * R;
        if (inside && off2(buf.at(m), 9.0 * g) <= g * g * R * R)
            ++hits;
    }
    return std::max(1e-3, double(hits) / double(std::max<std::size_t>(1, trials)));
}

//---------------------------------------------------------------------------//

EstimateWithCI ratio_estimate(const std::vector<RegenerationRecord>& records, RatioTarget which,
                              bool batched)
{
    std::vector<const RegenerationRecord*> pool;
    for (const auto& r : records)
        if (!r.is_first && !r.censored)
            pool.push_back(&r);
    if (pool.size() < 30)
        fail(ErrorCode::TooFewCycles, "ratio estimates need at least 30 cycles in the i.i.d. pool");
    std::vector<double> num, den;
    for (const auto* r : pool)
        den.push_back(r->dt);
    switch (which) {
    case RatioTarget::NuF:
        for (const auto* r : pool)
            num.push_back(r->dA + r->dW1);
        break;
    case RatioTarget::Ell:
        for (const auto* r : pool)
            num.push_back(r->dX1);
        break;
    case RatioTarget::SigmaLambda:
    case RatioTarget::SigmaLambdaF: {
        bool along_y = which == RatioTarget::SigmaLambdaF;
        std::vector<double> inc;
        for (const auto* r : pool)
            inc.push_back(along_y ? r->dA + r->dW1 : r->dX1);
        double rate = mean(inc) / mean(den);
        for (std::size_t i = 0; i < pool.size(); ++i) {
            double c = inc[i] - den[i] * rate;
            num.push_back(c * c);
        }
        break;
    }
    }
    if (batched) {
        std::size_t nb = std::size_t(std::ceil(std::sqrt(double(num.size()))));
        std::size_t per = num.size() / nb;
        std::vector<double> bn, bd;
        for (std::size_t b = 0; b < nb; ++b) {
            double sn = 0, sd = 0;
            for (std::size_t i = b * per; i < (b + 1) * per; ++i) {
                sn += num[i];
                sd += den[i];
            }
            bn.push_back(sn);
            bd.push_back(sd);
        }
        auto e = ratio_of_means(bn, bd);
        e.n = num.size();
        e.method = EstimateMethod::BatchMeans;
        return e;
    }
    return ratio_of_means(num, den);
}

double lag1_within_paths(const std::vector<RegenerationRecord>& records)
{
    std::vector<const RegenerationRecord*> pool;
    for (const auto& r : records)
        if (!r.is_first && !r.censored)
            pool.push_back(&r);
    std::vector<double> dts;
    for (const auto* r : pool)
        dts.push_back(r->dt);
    double m = mean(dts);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        double c = pool[i]->dt - m;
        den += c * c;
        if (i + 1 < pool.size() && pool[i + 1]->path == pool[i]->path && pool[i + 1]->k == pool[i]->k + 1)
            num += c * (pool[i + 1]->dt - m);
    }
    return den > 0.0 ? num / den : 0.0;
}

bool ordering_holds(const RegenerationRecord& rec, double lambda)
{
    const double block = 1.0 / (lambda * lambda);
    auto on_grid = [&](double t) {
        if (!std::isfinite(t))
            return true;
        double q = t / block;
        return std::fabs(q - std::round(q)) < 1e-6;
    };
    if (rec.trace.empty())
        return false;
    double prev_r = rec.origin;
    for (std::size_t i = 0; i < rec.trace.size(); ++i) {
        const auto& e = rec.trace[i];
        double lower = i == 0 ? rec.origin + block : prev_r;
        if (e.N < lower - 1e-9 * block || e.S < e.N || e.J < e.S || e.R < e.J)
            return false;
        if (!on_grid(e.N) || !on_grid(e.S) || !on_grid(e.R))
            return false;
        if (std::fabs(e.S - e.N - block) > 1e-6 * block)
            return false;
        prev_r = e.R;
    }
    const auto& last = rec.trace.back();
    return std::isinf(last.R) && std::fabs(last.S - rec.tau) < 1e-6 * block;
}

} // namespace driftlab
