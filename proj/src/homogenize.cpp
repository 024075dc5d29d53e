#include "driftlab/homogenize.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "driftlab/error.hpp"

namespace driftlab {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;
using Lu = Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>>;

Mat2 inverse(const Mat2& m, int dim)
{
    if (dim == 1)
        return {1.0 / m.m11, 0, 0, 0};
    double det = m.m11 * m.m22 - m.m12 * m.m21;
    return {m.m22 / det, -m.m12 / det, -m.m21 / det, m.m11 / det};
}

// One corner sub-gradient: gradient component alpha is (u[hi] - u[lo]) / h,
// and the edge mean of f used with it is (f[lo] + f[hi]) / 2.
struct CornerStencil {
    std::size_t lo[2];
    std::size_t hi[2];
};

} // namespace

std::size_t TorusGrid::index(int i, int j) const
{
    int ii = ((i % n) + n) % n;
    if (dim == 1)
        return std::size_t(ii);
    int jj = ((j % n) + n) % n;
    return std::size_t(jj) * n + ii;
}

Vec TorusGrid::node(std::size_t k) const
{
    if (dim == 1)
        return {double(k) * h(), 0.0};
    return {double(k % n) * h(), double(k / n) * h()};
}

TorusGrid TorusGrid::make(int dim, int n)
{
    if (dim != 1 && dim != 2)
        fail(ErrorCode::ConfigError, "torus dimension must be 1 or 2");
    if (n < 16 || (n & (n - 1)) != 0)
        fail(ErrorCode::ConfigError, "grid points per axis must be a power of two >= 16");
    return {dim, n};
}

double GridField::integral() const
{
    double s = 0.0;
    for (double v : values)
        s += v;
    return s * grid.node_volume();
}

double GridField::min() const { return *std::min_element(values.begin(), values.end()); }

double GridField::max_abs() const
{
    double m = 0.0;
    for (double v : values)
        m = std::max(m, std::fabs(v));
    return m;
}

double GridField::interpolate(const Vec& x) const
{
    int n = grid.n;
    double sx = x[0] * n;
    double fx = std::floor(sx);
    double tx = sx - fx;
    int i = int(std::fmod(fx, double(n)));
    if (grid.dim == 1)
        return (1.0 - tx) * values[grid.index(i)] + tx * values[grid.index(i + 1)];
    double sy = x[1] * n;
    double fy = std::floor(sy);
    double ty = sy - fy;
    int j = int(std::fmod(fy, double(n)));
    return (1.0 - tx) * (1.0 - ty) * values[grid.index(i, j)]
           + tx * (1.0 - ty) * values[grid.index(i + 1, j)]
           + (1.0 - tx) * ty * values[grid.index(i, j + 1)] + tx * ty * values[grid.index(i + 1, j + 1)];
}

void GridField::write_csv(std::ostream& os, const std::string& column) const
{
    os << (grid.dim == 1 ? "x," : "x1,x2,") << column << '\n';
    os.precision(17);
    for (std::size_t k = 0; k < values.size(); ++k) {
        Vec x = grid.node(k);
        os << x[0] << ',';
        if (grid.dim == 2)
            os << x[1] << ',';
        os << values[k] << '\n';
    }
}

//---------------------------------------------------------------------------//

class TorusDiscretization {
  public:
    TorusDiscretization(const Environment& env, const TorusGrid& grid);

    template<class F>
    void for_each_corner(F&& fn) const;

    GridField solve_pinned_symmetric(const Eigen::VectorXd& rhs) const;
    void check_residual(const SpMat& m, const Eigen::VectorXd& x, const Eigen::VectorXd& rhs,
                        const char* what) const;

    Environment env;
    TorusGrid grid;
    std::vector<Mat2> cell_a;
    std::vector<Mat2> node_a;
    std::vector<Vec> node_b;
    SpMat stiffness;
    SpMat drift_form;
    std::vector<Triplet> stiffness_triplets;
    std::vector<Triplet> drift_triplets;
    Lu symmetric_lu;
    GridField chi;
};

template<class F>
void TorusDiscretization::for_each_corner(F&& fn) const
{
    const int n = grid.n;
    if (grid.dim == 1) {
        for (int i = 0; i < n; ++i) {
            CornerStencil c{{grid.index(i), 0}, {grid.index(i + 1), 0}};
            fn(std::size_t(i), grid.h(), c);
        }
        return;
    }
    double w = 0.25 * grid.h() * grid.h();
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            std::size_t cell = grid.index(i, j);
            for (int q = 0; q < 2; ++q) {
                for (int p = 0; p < 2; ++p) {
                    CornerStencil c{{grid.index(i, j + q), grid.index(i + p, j)},
                                    {grid.index(i + 1, j + q), grid.index(i + p, j + 1)}};
                    fn(cell, w, c);
                }
            }
        }
    }
}

TorusDiscretization::TorusDiscretization(const Environment& e, const TorusGrid& g)
    : env(e), grid(g)
{
    if (!env.is_periodic() && env.kind() != EnvKind::Constant)
        fail(ErrorCode::ConfigError, "torus solves need a periodic or constant environment");
    if (env.dim() != grid.dim)
        fail(ErrorCode::ConfigError, "grid and environment dimensions differ");
    const std::size_t N = grid.size();
    const int d = grid.dim;
    node_a.resize(N);
    node_b.resize(N);
    for (std::size_t k = 0; k < N; ++k) {
        EnvSample s = env.eval(grid.node(k));
        node_a[k] = s.a;
        node_b[k] = s.b;
    }
    // Matrix harmonic mean of the 2^d corner values.
    cell_a.resize(N);
    const int n = grid.n;
    for (std::size_t k = 0; k < N; ++k) {
        int i = int(d == 1 ? k : k % n);
        int j = int(d == 1 ? 0 : k / n);
        Mat2 inv_sum;
        int corners = d == 1 ? 2 : 4;
        for (int c = 0; c < corners; ++c) {
            Mat2 inv = inverse(node_a[grid.index(i + (c & 1), j + (c >> 1))], d);
            inv_sum.m11 += inv.m11;
            inv_sum.m12 += inv.m12;
            inv_sum.m21 += inv.m21;
            inv_sum.m22 += inv.m22;
        }
        Mat2 mean_inv{inv_sum.m11 / corners, inv_sum.m12 / corners, inv_sum.m21 / corners,
                      inv_sum.m22 / corners};
        cell_a[k] = inverse(mean_inv, d);
    }

    const double ih = 1.0 / grid.h();
    for_each_corner([&](std::size_t cell, double w, const CornerStencil& c) {
        const Mat2& A = cell_a[cell];
        double amat[2][2] = {{A.m11, A.m12}, {A.m21, A.m22}};
        for (int al = 0; al < d; ++al) {
            for (int be = 0; be < d; ++be) {
                double coef = w * amat[al][be] * ih * ih;
                stiffness_triplets.emplace_back(c.hi[al], c.hi[be], coef);
                stiffness_triplets.emplace_back(c.hi[al], c.lo[be], -coef);
                stiffness_triplets.emplace_back(c.lo[al], c.hi[be], -coef);
                stiffness_triplets.emplace_back(c.lo[al], c.lo[be], coef);
            }
            // Drift form: w (D_al v) (A e1)_al (M_al f).
            double coef = w * amat[al][0] * ih * 0.5;
            drift_triplets.emplace_back(c.hi[al], c.lo[al], coef);
            drift_triplets.emplace_back(c.hi[al], c.hi[al], coef);
            drift_triplets.emplace_back(c.lo[al], c.lo[al], -coef);
            drift_triplets.emplace_back(c.lo[al], c.hi[al], -coef);
        }
    });
    stiffness.resize(Eigen::Index(N), Eigen::Index(N));
    stiffness.setFromTriplets(stiffness_triplets.begin(), stiffness_triplets.end());
    drift_form.resize(Eigen::Index(N), Eigen::Index(N));
    drift_form.setFromTriplets(drift_triplets.begin(), drift_triplets.end());

    // Pin node 0 to remove the constant null space.
    std::vector<Triplet> pinned;
    pinned.reserve(stiffness_triplets.size());
    for (const auto& t : stiffness_triplets)
        if (t.row() != 0)
            pinned.push_back(t);
    pinned.emplace_back(0, 0, 1.0);
    SpMat m{Eigen::Index(N), Eigen::Index(N)};
    m.setFromTriplets(pinned.begin(), pinned.end());
    symmetric_lu.compute(m);
    if (symmetric_lu.info() != Eigen::Success)
        fail(ErrorCode::SolverDiverged, "factorization of the cell operator failed");

    // Corrector: E(chi, v) = -sum w D v . A e1.
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(Eigen::Index(N));
    Eigen::VectorXd rhs = -(drift_form * ones);
    chi = solve_pinned_symmetric(rhs);
}

void TorusDiscretization::check_residual(const SpMat& m, const Eigen::VectorXd& x,
                                         const Eigen::VectorXd& rhs, const char* what) const
{
    Eigen::VectorXd r = m * x - rhs;
    Eigen::VectorXd row_norm = Eigen::VectorXd::Zero(m.rows());
    for (Eigen::Index k = 0; k < m.outerSize(); ++k)
        for (SpMat::InnerIterator it(m, k); it; ++it)
            row_norm[it.row()] += std::fabs(it.value());
    double scale = std::max({rhs.lpNorm<Eigen::Infinity>(), row_norm.maxCoeff() * x.lpNorm<Eigen::Infinity>()});
    double rn = r.lpNorm<Eigen::Infinity>();
    // Second clause: right-hand sides that vanish up to roundoff.
    bool ok = rn <= 1e-10 * scale || rn <= 1e-13 * row_norm.maxCoeff();
    if (!std::isfinite(rn) || !ok)
        fail(ErrorCode::SolverDiverged, std::string(what) + ": residual too large");
}

GridField TorusDiscretization::solve_pinned_symmetric(const Eigen::VectorXd& rhs_in) const
{
    Eigen::VectorXd rhs = rhs_in;
    rhs[0] = 0.0;
    Eigen::VectorXd u = symmetric_lu.solve(rhs);
    if (symmetric_lu.info() != Eigen::Success)
        fail(ErrorCode::SolverDiverged, "symmetric cell solve failed");
    u.array() -= u.mean();
    check_residual(stiffness, u, rhs_in, "cell problem");
    GridField out{grid, std::vector<double>(u.data(), u.data() + u.size())};
    return out;
}

//---------------------------------------------------------------------------//

TorusProblem::TorusProblem(const Environment& env, const TorusGrid& grid)
    : impl_(std::make_unique<TorusDiscretization>(env, grid))
{
}

TorusProblem::~TorusProblem() = default;
TorusProblem::TorusProblem(TorusProblem&&) noexcept = default;
TorusProblem& TorusProblem::operator=(TorusProblem&&) noexcept = default;

const TorusGrid& TorusProblem::grid() const { return impl_->grid; }

const GridField& TorusProblem::corrector() const { return impl_->chi; }

GridField TorusProblem::steady_state(double lambda) const
{
    const auto& D = *impl_;
    const std::size_t N = D.grid.size();
    // (K - 2 lambda B) f = 0; pin f_0 = 1 and normalize afterwards.
    std::vector<Triplet> trip;
    trip.reserve(D.stiffness_triplets.size() + D.drift_triplets.size() + 1);
    for (const auto& t : D.stiffness_triplets)
        if (t.row() != 0)
            trip.push_back(t);
    for (const auto& t : D.drift_triplets)
        if (t.row() != 0)
            trip.emplace_back(t.row(), t.col(), -2.0 * lambda * t.value());
    trip.emplace_back(0, 0, 1.0);
    SpMat m{Eigen::Index(N), Eigen::Index(N)};
    m.setFromTriplets(trip.begin(), trip.end());
    Lu lu;
    lu.compute(m);
    if (lu.info() != Eigen::Success)
        fail(ErrorCode::SolverDiverged, "factorization of the steady-state operator failed");
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(Eigen::Index(N));
    rhs[0] = 1.0;
    Eigen::VectorXd f = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !f.allFinite())
        fail(ErrorCode::SolverDiverged, "steady-state solve failed");
    f /= f.sum() * D.grid.node_volume();
    SpMat full = D.stiffness - 2.0 * lambda * D.drift_form;
    D.check_residual(full, f, Eigen::VectorXd::Zero(Eigen::Index(N)), "steady state");
    return GridField{D.grid, std::vector<double>(f.data(), f.data() + f.size())};
}

GridField TorusProblem::potential(const GridField& f) const
{
    const auto& D = *impl_;
    Eigen::VectorXd rhs(Eigen::Index(f.values.size()));
    for (std::size_t k = 0; k < f.values.size(); ++k)
        rhs[Eigen::Index(k)] = 2.0 * D.grid.node_volume() * f.values[k];
    return D.solve_pinned_symmetric(rhs);
}

GridField TorusProblem::sample(const FunctionalSpec& f) const
{
    const auto& D = *impl_;
    GridField out{D.grid, std::vector<double>(D.grid.size())};
    double scale = 0.0;
    for (std::size_t k = 0; k < out.values.size(); ++k) {
        Vec x = D.grid.node(k);
        EnvSample s{Mat2{}, D.node_a[k], D.node_b[k]};
        out.values[k] = f.value(x, s);
        scale = std::max(scale, std::fabs(out.values[k]));
    }
    double m = out.integral();
    if (std::fabs(m) > 1e-8 * std::max(1.0, scale))
        fail(ErrorCode::NotCentered, "functional has non-zero grid mean");
    for (double& v : out.values)
        v -= m;
    return out;
}

double TorusProblem::energy(const GridField& u, const GridField& v) const
{
    const auto& D = *impl_;
    Eigen::Map<const Eigen::VectorXd> uu(u.values.data(), Eigen::Index(u.values.size()));
    Eigen::Map<const Eigen::VectorXd> vv(v.values.data(), Eigen::Index(v.values.size()));
    // Symmetrized so that energy(u, v) == energy(v, u) bit for bit.
    return 0.5 * (uu.dot(D.stiffness * vv) + vv.dot(D.stiffness * uu));
}

double TorusProblem::integral_a11() const
{
    double s = 0.0;
    for (const auto& a : impl_->cell_a)
        s += a.m11;
    return s * impl_->grid.node_volume();
}

Vec TorusProblem::drift(const GridField& f_lambda, double lambda) const
{
    const auto& D = *impl_;
    Vec ell{0.0, 0.0};
    for (std::size_t k = 0; k < D.grid.size(); ++k) {
        const Mat2& a = D.node_a[k];
        ell[0] += (D.node_b[k][0] + lambda * a.m11) * f_lambda.values[k];
        ell[1] += (D.node_b[k][1] + lambda * a.m21) * f_lambda.values[k];
    }
    ell[0] *= D.grid.node_volume();
    ell[1] *= D.grid.node_volume();
    return ell;
}

double TorusProblem::pairing(const GridField& f, const GridField& g) const
{
    double s = 0.0;
    for (std::size_t k = 0; k < f.values.size(); ++k)
        s += f.values[k] * g.values[k];
    return s * impl_->grid.node_volume();
}

std::pair<double, double> TorusProblem::effective_sigma() const
{
    const auto& D = *impl_;
    const auto& chi = D.chi.values;
    const double ih = 1.0 / D.grid.h();
    double form1 = 0.0;
    D.for_each_corner([&](std::size_t cell, double w, const CornerStencil& c) {
        const Mat2& A = D.cell_a[cell];
        double g0 = 1.0 + (chi[c.hi[0]] - chi[c.lo[0]]) * ih;
        double g1 = D.grid.dim == 2 ? (chi[c.hi[1]] - chi[c.lo[1]]) * ih : 0.0;
        form1 += w * (g0 * (A.m11 * g0 + A.m12 * g1) + g1 * (A.m21 * g0 + A.m22 * g1));
    });
    double form2 = integral_a11() - energy(D.chi, D.chi);
    return {form1, form2};
}

//---------------------------------------------------------------------------//

TorusSolution solve_torus(const Environment& env, double lambda, const TorusGrid& grid,
                          const std::vector<FunctionalSpec>& functionals)
{
    TorusProblem problem(env, grid);
    TorusSolution sol;
    sol.f_lambda = problem.steady_state(lambda);
    sol.chi1 = problem.corrector();
    sol.sigma1 = problem.effective_sigma().first;
    sol.ell = problem.drift(sol.f_lambda, lambda);
    for (const auto& f : functionals)
        sol.u_f.emplace(f.label, problem.potential(problem.sample(f)));
    return sol;
}

GridField steady_state(const Environment& env, double lambda, const TorusGrid& grid)
{
    return TorusProblem(env, grid).steady_state(lambda);
}

GridField corrector(const Environment& env, const TorusGrid& grid)
{
    return TorusProblem(env, grid).corrector();
}

std::pair<double, double> effective_sigma(const Environment& env, const TorusGrid& grid)
{
    return TorusProblem(env, grid).effective_sigma();
}

Vec effective_drift(const Environment& env, double lambda, const TorusGrid& grid)
{
    TorusProblem p(env, grid);
    return p.drift(p.steady_state(lambda), lambda);
}

std::string FdtReport::to_json() const
{
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows)
        arr.push_back({{"identity", r.identity},
                       {"lhs", r.lhs},
                       {"rhs", r.rhs},
                       {"abs_err", r.abs_err},
                       {"grid_n", grid_n},
                       {"lambda_fd", lambda_fd}});
    return arr.dump(2);
}

FdtReport fdt_identities(const Environment& env, const FunctionalSpec& f, double lambda_fd,
                         const TorusGrid& grid)
{
    if (!(lambda_fd > 0.0))
        fail(ErrorCode::ConfigError, "lambda_fd must be positive");
    TorusProblem problem(env, grid);
    GridField fv = problem.sample(f);
    double nu_plus = problem.pairing(fv, problem.steady_state(lambda_fd));
    double nu_minus = problem.pairing(fv, problem.steady_state(-lambda_fd));
    GridField u = problem.potential(fv);
    FdtReport rep;
    rep.lambda_fd = lambda_fd;
    rep.grid_n = grid.n;
    rep.dnu_dlambda = (nu_plus - nu_minus) / (2.0 * lambda_fd);
    rep.gamma_pde = -problem.energy(u, problem.corrector());
    rep.corrector_form = -2.0 * problem.pairing(fv, problem.corrector());
    rep.variance_form = std::numeric_limits<double>::quiet_NaN();
    if (f.kind == FunctionalKind::DriftComponent) {
        auto [s1, s2] = problem.effective_sigma();
        (void)s1;
        rep.variance_form = s2 - problem.integral_a11();
    }
    auto row = [&](const char* name, double lhs, double rhs) {
        rep.rows.push_back({name, lhs, rhs, std::fabs(lhs - rhs)});
    };
    row("dnu_dlambda=gamma_pde", rep.dnu_dlambda, rep.gamma_pde);
    row("gamma_pde=corrector_form", rep.gamma_pde, rep.corrector_form);
    if (f.kind == FunctionalKind::DriftComponent)
        row("gamma_pde=variance_form", rep.gamma_pde, rep.variance_form);
    return rep;
}

HMinus1Result h_minus1(const Environment& env, const FunctionalSpec& f, const FunctionalSpec& g,
                       const TorusGrid& grid)
{
    TorusProblem problem(env, grid);
    GridField uf = problem.potential(problem.sample(f));
    GridField ug = problem.potential(problem.sample(g));
    HMinus1Result r;
    r.sigma_ff = problem.energy(uf, uf);
    r.sigma_gg = problem.energy(ug, ug);
    r.sigma_fg = problem.energy(uf, ug);
    r.norm_f = std::sqrt(std::max(0.0, r.sigma_ff) / 2.0);
    r.inner_fg = r.sigma_fg / 2.0;
    return r;
}

} // namespace driftlab
