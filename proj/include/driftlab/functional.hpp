#pragma once

#include <functional>
#include <string>

#include "driftlab/environment.hpp"

namespace driftlab {

enum class FunctionalKind { Zero, DriftComponent, Custom };

std::string to_string(FunctionalKind kind);

// Analytic field F and its divergence for Custom functionals.
struct CustomFunctional {
    std::function<Vec(const Vec&)> field;
    std::function<double(const Vec&)> divergence;
    double sup_norm = 0.0;
    bool centered = true;
    std::string label = "custom";
};

/*!
 * A local observable f = div F. The drift component uses F = a e1 / 2, so
 * f = b . e1 is read straight off the environment sample.
 */
class FunctionalSpec {
  public:
    FunctionalKind kind = FunctionalKind::Zero;
    double locality_radius = 0.0;
    double sup_norm = 0.0;
    bool centered = true;
    std::string label = "zero";

    double value(const Vec& x, const EnvSample& s) const
    {
        switch (kind) {
        case FunctionalKind::Zero: return 0.0;
        case FunctionalKind::DriftComponent: return s.b[0];
        case FunctionalKind::Custom: return custom_.divergence(x);
        }
        return 0.0;
    }
    Vec field(const Vec& x, const EnvSample& s) const;
    bool is_zero() const { return kind == FunctionalKind::Zero; }

  private:
    friend FunctionalSpec make_functional(const Environment&, FunctionalKind, const CustomFunctional&);
    CustomFunctional custom_;
};

FunctionalSpec make_functional(const Environment& env, FunctionalKind kind,
                               const CustomFunctional& custom = {});

// Custom functional whose field components are trig series (divergence computed analytically).
FunctionalSpec make_trig_functional(const Environment& env, const TrigSeries& f1,
                                    const TrigSeries& f2);

} // namespace driftlab
