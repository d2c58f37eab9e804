#pragma once

// Finite-dimensional normed spaces and the concrete maps used in the
// experiments. Vectors are plain std::vector<double>.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace halpern {

using Vec = std::vector<double>;

enum class NormKind { LInf, L1, L2 };

std::string_view to_string(NormKind kind);
NormKind parse_norm_kind(std::string_view name);

double norm(NormKind kind, std::span<const double> x);
double distance(NormKind kind, std::span<const double> x, std::span<const double> y);

/// Raised when a map is evaluated outside its declared domain.
class DomainError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A map T: C -> C on R^dim with a declared Lipschitz constant in `norm`.
///
/// `residual`, when set, evaluates ||x - Tx|| in the represented space
/// instead of the plain vector norm. The Goebel map uses it: its elements are
/// continuous functions sampled on a grid, and the sup of |x(t) - Tx(t)| over
/// the interpolant is not the max over the samples.
struct OperatorSpec {
  std::string name;
  std::size_t dim = 0;
  double rho = 1.0;
  NormKind norm = NormKind::LInf;
  std::function<Vec(const Vec&)> eval;
  std::optional<Vec> fixed_point;
  std::function<bool(const Vec&)> domain_check;
  std::function<double(const Vec&, const Vec&)> residual;

  bool in_domain(const Vec& x) const;
  /// Evaluates T, throwing DomainError outside the domain.
  Vec apply(const Vec& x) const;
  /// ||x - Tx|| given Tx.
  double residual_norm(const Vec& x, const Vec& tx) const;
  double dist(const Vec& x, const Vec& y) const { return distance(norm, x, y); }
};

/// T x = rho A x on (R^2, inf-norm), A a rotation by theta divided by |cos|+|sin|.
OperatorSpec rotation_contraction(double rho, double theta);

/// T(x_1..x_d) = rho (x_d, x_1, ..., x_{d-1}).
OperatorSpec cyclic_shift(double rho, std::size_t d, NormKind norm = NormKind::LInf);

/// Goebel's map x(t) -> rho max{x(t) - 1 + 1/rho, 0} on
/// C = {x : 0 = x(0) <= x(t) <= x(1) = 1}, sampled at `grid` equispaced t.
OperatorSpec goebel_map(double rho, std::size_t grid = 101);

/// rho-scaled right shift on l^1, truncated to `trunc` coordinates.
OperatorSpec l1_right_shift(double rho, std::size_t trunc);

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

/// Induced operator norm for LInf (max row sum) and L1 (max column sum).
double operator_norm(const Matrix& a, NormKind kind);

/// T x = A x + b. The declared rho is audited against the exact LInf/L1
/// operator norm; the fixed point is solved for when I - A is invertible.
OperatorSpec affine_operator(const Matrix& a, const Vec& b, double rho, NormKind norm);

/// Products prod_{j=i}^n beta_j with 0 for i <= 0 and 1 for i > n.
double beta_product(std::span<const double> betas, long i, long n);

/// Start point of length n+2 that makes the cyclic map attain the affine
/// residual bound at step n. sign(0) is taken as +1.
Vec sign_init_x0(double rho, std::span<const double> betas, std::size_t n);

/// Counter-based uniform draws on [-1,1]: coordinate i depends only on
/// (seed, i) through SplitMix64.
inline constexpr std::string_view kRngName = "splitmix64-ctr";
double uniform_pm1(std::uint64_t seed, std::uint64_t index);
Vec random_pm1(std::size_t dim, std::uint64_t seed);

struct LipschitzAudit {
  std::size_t pairs = 0;
  double worst_ratio = 0.0; // max ||Tx-Ty|| / ||x-y||
  bool ok = true;
};

/// Samples pairs from `sampler(seed)` and checks ||Tx-Ty|| <= rho ||x-y|| (1 + rel_tol).
LipschitzAudit audit_lipschitz(const OperatorSpec& op, const std::function<Vec(std::uint64_t)>& sampler,
                               std::size_t pairs, double rel_tol = 1e-12);

/// A random point of the Goebel domain on the given grid.
Vec random_goebel_point(std::size_t grid, std::uint64_t seed);

} // namespace halpern
