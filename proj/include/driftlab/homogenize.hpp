#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "driftlab/environment.hpp"
#include "driftlab/functional.hpp"

namespace driftlab {

struct TorusGrid {
    int dim = 1;
    int n = 16;

    // n must be a power of two, at least 16.
    static TorusGrid make(int dim, int n);
    double h() const { return 1.0 / n; }
    std::size_t size() const { return dim == 1 ? std::size_t(n) : std::size_t(n) * n; }
    double node_volume() const { return dim == 1 ? h() : h() * h(); }
    std::size_t index(int i, int j = 0) const;
    Vec node(std::size_t k) const;
};

struct GridField {
    TorusGrid grid;
    std::vector<double> values;

    double integral() const;
    double min() const;
    double max_abs() const;
    // Periodic (bi)linear interpolation.
    double interpolate(const Vec& x) const;
    void write_csv(std::ostream& os, const std::string& column) const;
};

class TorusDiscretization;

/*!
 * Discrete periodic cell problems for one environment on one grid. The
 * operator is the variational form sum_cells sum_corners w g.A_c g with
 * harmonic-mean cell matrices, so the corrector, the potentials and the
 * steady state share one quadrature and discrete integration by parts is exact.
 */
class TorusProblem {
  public:
    TorusProblem(const Environment& env, const TorusGrid& grid);
    ~TorusProblem();
    TorusProblem(TorusProblem&&) noexcept;
    TorusProblem& operator=(TorusProblem&&) noexcept;

    const TorusGrid& grid() const;

    GridField steady_state(double lambda) const;
    const GridField& corrector() const;
    // u with (1/2) div(a grad u) = -f, mean zero.
    GridField potential(const GridField& f) const;
    // Node values of f; NotCentered if the grid mean is not zero to tolerance (then projected).
    GridField sample(const FunctionalSpec& f) const;

    // Discrete energy sum w grad u . A grad v.
    double energy(const GridField& u, const GridField& v) const;
    // Cell quadrature of e1.a e1.
    double integral_a11() const;
    // Node quadrature of (b + lambda a e1) f.
    Vec drift(const GridField& f_lambda, double lambda) const;
    double pairing(const GridField& f, const GridField& g) const; // sum h^d f g

    // (form1, form2) of the effective variance in direction e1.
    std::pair<double, double> effective_sigma() const;

  private:
    std::unique_ptr<TorusDiscretization> impl_;
};

struct TorusSolution {
    GridField f_lambda;
    GridField chi1;
    std::map<std::string, GridField> u_f;
    double sigma1 = 0.0;
    Vec ell{0.0, 0.0};
};

TorusSolution solve_torus(const Environment& env, double lambda, const TorusGrid& grid,
                          const std::vector<FunctionalSpec>& functionals = {});

GridField steady_state(const Environment& env, double lambda, const TorusGrid& grid);
GridField corrector(const Environment& env, const TorusGrid& grid);
std::pair<double, double> effective_sigma(const Environment& env, const TorusGrid& grid);
Vec effective_drift(const Environment& env, double lambda, const TorusGrid& grid);

struct IdentityRow {
    std::string identity;
    double lhs = 0.0;
    double rhs = 0.0;
    double abs_err = 0.0;
};

struct FdtReport {
    double dnu_dlambda = 0.0;   // central difference of nu_lambda(f)
    double gamma_pde = 0.0;     // -E(u_f, chi)
    double corrector_form = 0.0; // -2 sum f chi
    double variance_form = 0.0; // sigma1 - int a11, drift functional only (else NaN)
    double lambda_fd = 0.0;
    int grid_n = 0;
    std::vector<IdentityRow> rows;

    std::string to_json() const;
};

FdtReport fdt_identities(const Environment& env, const FunctionalSpec& f, double lambda_fd,
                         const TorusGrid& grid);

struct HMinus1Result {
    double sigma_ff = 0.0; // E(u_f, u_f)
    double sigma_fg = 0.0; // E(u_f, u_g)
    double sigma_gg = 0.0;
    double norm_f = 0.0;   // sqrt(sigma_ff / 2)
    double inner_fg = 0.0; // sigma_fg / 2
};

HMinus1Result h_minus1(const Environment& env, const FunctionalSpec& f, const FunctionalSpec& g,
                       const TorusGrid& grid);

} // namespace driftlab
