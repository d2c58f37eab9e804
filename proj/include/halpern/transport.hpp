#pragma once

// Nested optimal-transport bounds for Mann iterates, their dual potentials,
// and the finite adversarial instance that attains them.

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "halpern/engine.hpp"
#include "halpern/operators.hpp"
#include "halpern/schedules.hpp"

namespace halpern {

struct TransportSolution {
  Matrix plan;        // K x K, rows follow pi_m, columns pi_n
  Vec u;              // single potential: |u_i - u_j| <= cost_ij, u_i - u_j = cost_ij on the support
  double value = 0.0; // primal optimum
  double dual_value = 0.0; // sum_i u_i (pi_m_i - pi_n_i)
  std::size_t pivots = 0;
};

/// Exact transportation solve for a metric cost (symmetric, zero diagonal,
/// triangle inequality). The shorter marginal is padded with zeros. The
/// diagonal is fixed first at min{pi_m_i, pi_n_i}; the remaining problem is
/// solved by the transportation simplex.
TransportSolution solve_transport(const Vec& pi_m, const Vec& pi_n, const Matrix& cost);

/// d and c over {-1, 0, ..., N}^2 plus R_0..R_N.
class BoundTable {
public:
  BoundTable() = default;
  BoundTable(double rho, std::size_t n);

  double rho() const noexcept { return rho_; }
  std::size_t horizon() const noexcept { return n_; }

  double& d(long m, long n) { return d_(idx(m), idx(n)); }
  double d(long m, long n) const { return d_(idx(m), idx(n)); }
  double& c(long m, long n) { return c_(idx(m), idx(n)); }
  double c(long m, long n) const { return c_(idx(m), idx(n)); }

  Vec R;
  /// Dual potential u^{m,n} (indices 0..n) for 0 <= m <= n, stored at m * (N+1) + n.
  std::vector<Vec> duals;
  std::vector<double> duality_gaps;

  const Vec& dual(long m, long n) const { return duals.at(static_cast<std::size_t>(m) * (n_ + 1) + n); }

private:
  std::size_t idx(long k) const { return static_cast<std::size_t>(k + 1); }
  double rho_ = 1.0;
  std::size_t n_ = 0;
  Matrix d_;
  Matrix c_;
};

/// Fills the table cell by cell in order of increasing max(m, n).
BoundTable ot_bounds(Rho rho, const MannArray& pi, std::size_t n);

struct AdversarialInstance {
  std::vector<std::pair<long, long>> index_set; // Q_N in lexicographic order
  std::vector<Vec> y;                           // y^0 .. y^{N+1}, scaled by kappa
  std::vector<Vec> x;                           // x^0 .. x^N
  double rho = 1.0;
  double kappa = 1.0;
  std::size_t horizon = 0;

  /// T x^k = y^{k+1} on the orbit.
  const Vec& image(std::size_t k) const { return y.at(k + 1); }
};

AdversarialInstance build_adversarial_instance(const BoundTable& table, double kappa, const MannArray& pi);
AdversarialInstance build_adversarial_instance(Rho rho, double kappa, const MannArray& pi, std::size_t n);

struct TightnessCheck {
  std::string check;
  long m = 0;
  long n = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  bool ok = true;
  double abs_diff() const;
};

struct TightnessReport {
  std::vector<TightnessCheck> checks;
  bool all_ok() const;
  std::size_t failures() const;
};

/// Sup-norm checks: distances kappa d, residuals kappa R, orbit-Lipschitz
/// images at distance kappa c <= rho ||x^m - x^n||, and ||y^0 - y^{n+1}|| = kappa.
TightnessReport verify_tightness(const AdversarialInstance& inst, const BoundTable& table);

} // namespace halpern
