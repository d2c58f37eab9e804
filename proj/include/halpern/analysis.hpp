#pragma once

// Quantities comparing the optimal bounds with other rates: transition
// indices, normed-vs-Hilbert ratios, the rho_n sequence and the logistic
// envelope of the expansive regime.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "halpern/schedules.hpp"

namespace halpern {

inline constexpr double kESquared = 7.3890560989306502272;

/// delta0 rho^n (1 - rho^2) / (1 - rho^{n+1}) for rho in (0,1).
double pr_bound(Rho rho, std::size_t n, double delta0);

/// (1 - rho^{n+1})/(1 - rho) * R*_n / rho^n for rho in (0,1).
double q_n(Rho rho, std::size_t n);
/// Q_0..Q_{n_max} from one pass over the optimal bounds.
std::vector<double> q_n_all(Rho rho, std::size_t n_max);

/// Smallest n with R*_n <= 1/rho - 1, compared as rho R*_n <= (1 - rho) + 1e-14.
std::size_t n0_transition(Rho rho);
/// Smallest n with rho <= rho_n.
std::size_t n0_transition_bracket(Rho rho);

/// R*_{n0} / ((1 - rho) rho^{n0}).
double q_inf(Rho rho);

struct RhoZSequences {
  std::vector<double> z;       // z_{n+1} = (1 + z_n)^2 / 4, z_0 = 0
  std::vector<double> rho;     // rho_{n+1} = (1 + rho_n^2) / 2, rho_0 = 1/2
  std::vector<double> gap;     // 1 - rho_n, iterated directly as w - w^2/2
  std::vector<double> rho_pow; // rho_n^n computed from gap
};

RhoZSequences rho_z_sequences(std::size_t n_max);

struct LogisticRow {
  std::size_t n = 0;
  double e = 0.0;
  double lower = 0.0; // 1 / ((n+3) + ln(n+3))
  double upper = 0.0; // 1 / (n+3)
  bool ok = true;
};

/// e_n = e_{n-1}(1 - e_{n-1}), e_0 = 1/4, with its envelope.
std::vector<LogisticRow> logistic_sandwich(std::size_t n_max);

/// max_n |e_n - (rho/4)(R*_n - r_rho)| for rho >= 1.
double logistic_identity_gap(Rho rho, std::size_t n_max);

/// diam (1 - 1/rho) for rho >= 1.
double minimal_displacement(Rho rho, double diam);

struct SpeedupCertificate {
  std::size_t n0 = 0;
  double ratio = 0.0;            // rho^{n0} / R*_{n0}
  double transition_bound = 0.0; // rho^{n0+1} / (1 - rho)
  double rho_pow_n0 = 0.0;       // rho^{n0}
  double pow_bound = 0.0;        // rho e^{-2}
  bool transition_ok = true;
  bool pow_ok = true;
  bool all_ok() const { return transition_ok && pow_ok; }
};

SpeedupCertificate speedup_certificate(Rho rho);

struct ComparisonRow {
  double rho = 0.0;
  std::optional<std::size_t> n; // empty for the n -> infinity limit
  double q = 0.0;
  double pr = 0.0;
  double r_star = 0.0;
};

/// Rows for each requested n plus one limit row, with delta0 = 1.
std::vector<ComparisonRow> comparison_rows(Rho rho, std::span<const std::size_t> ns);

/// Indices plotted in the ratio figure.
std::vector<std::size_t> fig2_indices();
/// `points` equispaced values in (0, 0.9999].
std::vector<double> fig2_grid(std::size_t points);
/// `rho,n,q_n,q_inf`.
void write_fig2_csv(std::ostream& os, std::span<const double> grid, std::span<const std::size_t> ns);

} // namespace halpern
