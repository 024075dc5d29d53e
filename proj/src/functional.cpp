#include "driftlab/functional.hpp"

#include <cmath>

#include "driftlab/error.hpp"

namespace driftlab {

std::string to_string(FunctionalKind kind)
{
    switch (kind) {
    case FunctionalKind::Zero: return "zero";
    case FunctionalKind::DriftComponent: return "drift";
    case FunctionalKind::Custom: return "custom";
    }
    return "?";
}

Vec FunctionalSpec::field(const Vec& x, const EnvSample& s) const
{
    switch (kind) {
    case FunctionalKind::Zero: return {0.0, 0.0};
    case FunctionalKind::DriftComponent: return {0.5 * s.a.m11, 0.5 * s.a.m21};
    case FunctionalKind::Custom: return custom_.field(x);
    }
    return {0.0, 0.0};
}

FunctionalSpec make_functional(const Environment& env, FunctionalKind kind,
                               const CustomFunctional& custom)
{
    FunctionalSpec out;
    out.kind = kind;
    switch (kind) {
    case FunctionalKind::Zero:
        return out;
    case FunctionalKind::DriftComponent:
        out.label = "drift";
        out.locality_radius = env.range();
        out.sup_norm = 0.5 * env.max_norm_ae1();
        out.centered = true;
        return out;
    case FunctionalKind::Custom:
        break;
    }
    if (!custom.field || !custom.divergence)
        fail(ErrorCode::BadCoefficients, "custom functional needs both F and div F");
    out.custom_ = custom;
    out.label = custom.label;
    out.sup_norm = custom.sup_norm;
    out.centered = custom.centered;
    out.locality_radius = env.range();

    // Spot-check the declared bound on a deterministic lattice of points.
    const int n = env.dim() == 1 ? 4096 : 128;
    double span = env.is_periodic() ? 1.0 : 16.0;
    for (int j = 0; j < (env.dim() == 2 ? n : 1); ++j) {
        for (int i = 0; i < n; ++i) {
            Vec x{span * i / n, env.dim() == 2 ? span * j / n : 0.0};
            Vec f = custom.field(x);
            double norm = std::hypot(f[0], env.dim() == 2 ? f[1] : 0.0);
            if (!std::isfinite(norm) || norm > custom.sup_norm * (1.0 + 1e-12))
                fail(ErrorCode::UnboundedF, "custom F exceeds its declared sup norm");
        }
    }
    return out;
}

FunctionalSpec make_trig_functional(const Environment& env, const TrigSeries& f1,
                                    const TrigSeries& f2)
{
    CustomFunctional c;
    c.field = [f1, f2](const Vec& x) { return Vec{f1.value(x), f2.value(x)}; };
    c.divergence = [f1, f2](const Vec& x) {
        Vec g1, g2{0.0, 0.0};
        f1.value_grad(x, g1);
        if (!f2.empty())
            f2.value_grad(x, g2);
        return g1[0] + g2[1];
    };
    double bound = 0.0;
    for (const auto& t : f1.terms)
        bound += std::fabs(t.coef);
    double bound2 = 0.0;
    for (const auto& t : f2.terms)
        bound2 += std::fabs(t.coef);
    c.sup_norm = std::hypot(bound, bound2);
    // Derivatives of periodic trig fields integrate to zero over the torus.
    c.centered = true;
    c.label = "trig";
    return make_functional(env, FunctionalKind::Custom, c);
}

} // namespace driftlab
