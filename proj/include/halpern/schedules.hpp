#pragma once

// Closed-form anchoring schedules and their worst-case residual bound
// sequences. Everything here is a pure function of the Lipschitz constant
// and (optionally) a user-supplied list of anchoring coefficients.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace halpern {

/// Lipschitz constant of a map. Always strictly positive and finite.
class Rho {
public:
  explicit Rho(double value);
  double value() const noexcept { return value_; }
  operator double() const noexcept { return value_; }

private:
  double value_;
};

/// Auxiliary sequences of the orbit-bound recursion: d_n bounds the step
/// length ||x^n - x^{n-1}||, c_n = min{1, rho d_n}.
struct RecursionAux {
  double d = 0.0;
  double c = 0.0;
};

/// Auxiliary sequences of the fixed-point-distance recursion.
struct FlatAux {
  double mu = 0.0;     // bounds ||x^n - x*|| / delta0
  double nu = 0.0;     // bounds ||x^0 - T x^n|| / delta0
  double d_flat = 0.0; // bounds ||x^n - x^{n-1}|| / delta0
};

struct ScheduleRow {
  std::size_t n = 0;
  double beta = 0.0;
  double bound = 0.0;
  std::variant<std::monostate, RecursionAux, FlatAux> aux;
};

enum class ScheduleKind { MOpt, Ada, FlatOpt, Affine, BanachPicard, FixedSequence };

std::string_view to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view name);

inline constexpr std::size_t kMaxScheduleLength = 10'000'000;

// --- orbit-bound family -----------------------------------------------------

double beta_unconstrained(Rho rho, double r);
double b_opt(Rho rho, double r);
double v_opt(Rho rho, double r);
double r_limit(Rho rho);

/// Minimax-optimal schedule: row 0 is (beta=0, R=1), then
/// beta_n = b_opt(R_{n-1}), R_n = v_opt(R_{n-1}).
std::vector<ScheduleRow> m_opt_schedule(Rho rho, std::size_t n_max);

/// The same betas through beta_{n+1} = min{1, (1 + (rho beta_n)^2) / (2 rho)}.
std::vector<double> m_opt_betas_direct(Rho rho, std::size_t n_max);

/// Runs the (d_n, c_n, R_n) recursion for an arbitrary schedule.
/// betas[0] must be 0; every entry must lie in [0,1].
std::vector<ScheduleRow> halpern_recursive_bounds(Rho rho, std::span<const double> betas);

// --- fixed-point-distance ("flat") family -----------------------------------

double flat_beta_unconstrained(Rho rho, double r);
double b_flat(Rho rho, double r);
double v_flat(Rho rho, double r);

struct FlatLimits {
  double r_flat = 0.0;
  double beta_flat = 0.0;
};
FlatLimits flat_limits(Rho rho);

std::vector<ScheduleRow> flat_schedule(Rho rho, std::size_t n_max);

struct FlatBoundRow {
  std::size_t n = 0;
  double mu = 0.0;
  double nu = 0.0;
  double d_flat = 0.0;
  double bound = 0.0;      // (1 - beta_n) nu_n + rho beta_n d_flat_n
  double bound_rec = 0.0;  // collapsed one-term recursion for the same value
};

/// Bounds per unit delta0; multiply by `delta0` for absolute values.
struct FlatBounds {
  double delta0 = 1.0;
  std::vector<FlatBoundRow> rows;
};

/// Requires betas non-decreasing with betas[0] = 0.
FlatBounds flat_general_bounds(Rho rho, std::span<const double> betas, double delta0);

// --- helpers ----------------------------------------------------------------

std::vector<double> betas_of(std::span<const ScheduleRow> rows);
std::vector<double> bounds_of(std::span<const ScheduleRow> rows);

/// beta_0 = 0 followed by ones: the Banach-Picard iteration written as Halpern.
std::vector<double> banach_picard_betas(std::size_t n_max);

} // namespace halpern
