#pragma once

// Residual bounds for Halpern iterates of affine maps and the schedule that
// minimizes them.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "halpern/engine.hpp"
#include "halpern/schedules.hpp"

namespace halpern {

/// L_n(beta) = sum_{i=0}^{n+1} |B_{i+1} - 2 B_i + B_{i-1}| rho^{n+1-i} with
/// B_i = prod_{j=i}^n beta_j, B = 0 for i <= 0 and B = 1 for i > n.
double affine_residual_bound(Rho rho, std::span<const double> betas, std::size_t n);

/// All of L_0..L_{n_max}, O(n_max^2).
std::vector<double> affine_residual_bounds(Rho rho, std::span<const double> betas, std::size_t n_max);

class LambertDomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Principal branch W0 on [-1/e, inf), Halley iteration.
double lambert_w0(double x);

/// Largest k with (1 + rho^{k+1})/(k+1) <= f (1 + rho^k)/k, f = min{rho, 1};
/// 0 when k = 1 already fails. Found by scanning and cross-checked against
/// the Lambert-W0 closed form; a mismatch throws std::logic_error.
std::size_t affine_n0(Rho rho);
std::size_t affine_n0_scan(Rho rho);
std::size_t affine_n0_lambert(Rho rho);

/// Minimal L_n. At rho = 1 this is the limit value 2/(n+1).
double l_star(Rho rho, std::size_t n);

/// Minimum over the n+1 extreme points of the reduced linear program.
double l_star_bruteforce(Rho rho, std::size_t n);

struct AffineRow {
  std::size_t n = 0;
  double beta = 0.0;
  bool frozen = false;
  double l_star = 0.0;
};

struct AffineSchedule {
  std::vector<AffineRow> rows; // rows[0] is the start
  bool limit_case = false;     // rho == 1

  std::vector<StepAction> actions() const;
};

/// beta_n = n/(n+1) while the step test holds; afterwards beta_n = 1 for
/// rho < 1 and a frozen step for rho > 1.
AffineSchedule aff_schedule(Rho rho, std::size_t n_max);

/// `n,beta,frozen,l_star`; frozen rows leave beta empty.
void write_affine_csv(std::ostream& os, const AffineSchedule& schedule);

} // namespace halpern
