#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <variant>
#include <vector>

namespace driftlab {

inline constexpr int kMaxDim = 2;
using Vec = std::array<double, kMaxDim>;

struct Mat2 {
    double m11 = 0, m12 = 0, m21 = 0, m22 = 0;

    static Mat2 identity() { return {1, 0, 0, 1}; }
    static Mat2 scalar(double s) { return {s, 0, 0, s}; }
    Vec col1() const { return {m11, m21}; }
};

Mat2 multiply_transpose(const Mat2& s); // s * s^T
// Eigenvalues of a symmetric matrix restricted to the leading dim x dim block, ascending.
std::array<double, 2> sym_eigenvalues(const Mat2& a, int dim);
// Symmetric positive square root restricted to dim x dim.
Mat2 sym_sqrt(const Mat2& a, int dim);

struct EllipticityBounds {
    double kappa = 1.0;
};

// One term coef * basis(2*pi*(k1*x1 + k2*x2)); basis is 1, cos or sin.
struct TrigTerm {
    enum class Basis { Const, Cos, Sin };
    double coef = 0.0;
    Basis basis = Basis::Const;
    int k1 = 0;
    int k2 = 0;

    bool operator==(const TrigTerm&) const = default;
};

struct TrigSeries {
    std::vector<TrigTerm> terms;

    double value(const Vec& x) const;
    // Value and gradient together.
    double value_grad(const Vec& x, Vec& grad) const;
    bool empty() const { return terms.empty(); }

    // Text form like "2 + 1*sin(1)" or "1 - 0.25*cos(1,2)".
    static TrigSeries parse(const std::string& text);
    std::string format() const;
    bool operator==(const TrigSeries&) const = default;
};

enum class EnvKind { Constant, Periodic, RandomBumps };

std::string to_string(EnvKind kind);

struct ConstantParams {
    Mat2 a = Mat2::identity();
};

struct PeriodicParams {
    // a_ij = series_ij, or 1/series_ij for the diagonal when `reciprocal`.
    bool reciprocal = false;
    TrigSeries a11, a12, a22;
};

struct BumpParams {
    double intensity = 1.0;   // bumps per unit volume
    double bump_radius = 0.5;
    double amplitude = 1.0;
    double base = 1.0;
    int max_per_cell = 8;      // truncation of the Poisson count
};

struct EnvSample {
    Mat2 sigma;
    Mat2 a;
    Vec b{0.0, 0.0};
};

struct Bump {
    Vec center{0.0, 0.0};
    Mat2 weight;
    std::uint64_t id = 0;
};

// Bumps of the 3^d block of cells around the last queried cell; owned by one path.
struct BumpCache {
    std::array<std::int64_t, 2> cell{std::numeric_limits<std::int64_t>::min(), 0};
    std::vector<Bump> bumps;
};

class Environment {
  public:
    static Environment constant(int dim, const Mat2& a);
    static Environment periodic(int dim, const PeriodicParams& params);
    static Environment random_bumps(int dim, const BumpParams& params, std::uint64_t seed);

    int dim() const { return dim_; }
    EnvKind kind() const { return kind_; }
    bool is_periodic() const { return kind_ == EnvKind::Periodic; }
    // Dependence range; +infinity for periodic fields.
    double range() const;
    EllipticityBounds bounds() const { return bounds_; }
    std::uint64_t seed() const { return seed_; }
    // Largest |a e1| seen while validating (used for sup norms of a e1 / 2).
    double max_norm_ae1() const { return max_norm_ae1_; }

    const ConstantParams* constant_params() const { return std::get_if<ConstantParams>(&params_); }
    const PeriodicParams* periodic_params() const { return std::get_if<PeriodicParams>(&params_); }
    const BumpParams* bump_params() const { return std::get_if<BumpParams>(&params_); }

    EnvSample eval(const Vec& x) const;
    EnvSample eval(const Vec& x, BumpCache& cache) const;

    // Another realization of the same random model; non-random kinds are returned unchanged.
    Environment with_seed(std::uint64_t seed) const;

    // Ids of bumps whose support contains x (empty for non-bump kinds).
    std::vector<std::uint64_t> bumps_at(const Vec& x) const;

  private:
    Environment() = default;
    void refresh_cache(const Vec& x, BumpCache& cache) const;
    void cell_bumps(std::int64_t cx, std::int64_t cy, std::vector<Bump>& out) const;

    int dim_ = 1;
    EnvKind kind_ = EnvKind::Constant;
    std::variant<ConstantParams, PeriodicParams, BumpParams> params_;
    EllipticityBounds bounds_;
    std::uint64_t seed_ = 0;
    double max_norm_ae1_ = 1.0;
    Mat2 const_sigma_;
};

} // namespace driftlab
