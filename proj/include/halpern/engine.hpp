#pragma once

// Iteration drivers: Halpern, Banach-Picard, adaptive Halpern and general
// Mann averaging. Every run executes exactly n_max steps and records a trace;
// bound checking is a separate pass over the trace.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "halpern/operators.hpp"
#include "halpern/schedules.hpp"

namespace halpern {

/// One step of a schedule. `freeze` means x^n = x^{n-1}.
struct StepAction {
  double beta = 0.0;
  bool freeze = false;
};

std::vector<StepAction> actions_from_betas(std::span<const double> betas);

struct TraceStep {
  std::size_t n = 0;
  double beta = 0.0;
  bool frozen = false;
  double residual = 0.0;   // ||x^n - T x^n||
  double anchor_gap = 0.0; // ||x^0 - T x^n||
  double kappa_hat = 0.0;  // running max of anchor_gap
  double dist_x0 = 0.0;    // ||x^n - x^0||
  double step_len = 0.0;   // ||x^n - x^{n-1}||, 0 at n = 0
  std::optional<double> dist_fp;
  std::optional<double> bound; // per-step bound multiplier (adaptive R_n)
};

struct IterationTrace {
  std::string label;
  std::vector<TraceStep> steps;
  std::optional<double> delta0;
  std::optional<double> kappa0;
  bool converged = false;
  Vec last_iterate;

  std::vector<double> residuals() const;
};

/// Raised when a run leaves the operator's domain; carries the step index.
class IterationDomainError : public DomainError {
public:
  IterationDomainError(std::size_t step, const std::string& what);
  std::size_t step() const noexcept { return step_; }

private:
  std::size_t step_;
};

/// Raised when a guarantee that must hold for every rho-Lipschitz map fails
/// on a run (a misdeclared rho or a bug).
class BoundViolation : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// x^n = (1 - beta_n) x^0 + beta_n T x^{n-1}; betas[0] is ignored.
IterationTrace halpern_run(const OperatorSpec& op, const Vec& x0, std::span<const double> betas, std::size_t n_max);
IterationTrace halpern_run(const OperatorSpec& op, const Vec& x0, std::span<const StepAction> steps,
                           std::size_t n_max);

/// x^n = T x^{n-1}; also enforces ||x^n - Tx^n|| <= rho ||x^{n-1} - Tx^{n-1}||.
IterationTrace banach_picard_run(const OperatorSpec& op, const Vec& x0, std::size_t n_max);

/// Adaptive anchoring driven by the observed orbit. Each step is checked
/// against the monotonicity and sandwich guarantees; a failure throws
/// BoundViolation. If x^0 is already fixed the run stops at step 0 with
/// `converged` set.
IterationTrace ada_halpern_run(const OperatorSpec& op, const Vec& x0, std::size_t n_max);

/// Lower-triangular averaging weights: row n holds pi^n_0..pi^n_n.
class MannArray {
public:
  explicit MannArray(std::vector<std::vector<double>> rows);

  static MannArray halpern(std::span<const double> betas);
  static MannArray banach_picard(std::size_t n_max);
  static MannArray uniform(std::size_t n_max);

  std::size_t size() const noexcept { return rows_.size(); }
  const std::vector<double>& row(std::size_t n) const { return rows_.at(n); }

private:
  std::vector<std::vector<double>> rows_;
};

/// x^n = sum_i pi^n_i T x^{i-1} with T x^{-1} = x^0.
IterationTrace mann_run(const OperatorSpec& op, const Vec& x0, const MannArray& pi, std::size_t n_max);

/// x^0, T x^0, ..., T x^{n_max} for the Mann sequence.
std::vector<Vec> mann_orbit(const OperatorSpec& op, const Vec& x0, const MannArray& pi, std::size_t n_max);

/// max ||y_m - y_n|| over the given points: the smallest kappa for which the
/// orbit bound holds on a run.
double orbit_diameter(const OperatorSpec& op, const std::vector<Vec>& points);

enum class CheckKind { Residual, DistFixedPoint, AnchorGap, StepLength };

struct StepCheck {
  std::size_t n = 0;
  CheckKind kind = CheckKind::Residual;
  double lhs = 0.0;
  double rhs = 0.0;
  bool ok = true;
};

struct BoundReport {
  std::vector<StepCheck> checks;
  bool all_ok() const;
  std::size_t failures() const;
};

/// residual_n <= scale * bound_n * (1 + 1e-9). For rows carrying FlatAux the
/// distance, anchor-gap and step-length inequalities are checked as well.
BoundReport check_bounds(const IterationTrace& trace, std::span<const ScheduleRow> bound_rows, double scale);

struct FlatConvergenceReport {
  double beta_flat = 0.0;
  double contraction = 0.0;  // L = rho * beta_flat
  Vec limit_point;           // fixed point of (1 - beta_flat) x^0 + beta_flat T
  double initial_gap = 0.0;  // ||x^0 - limit_point||
  double delta0 = 0.0;       // ||x^0 - x*||
  double remark_bound = 0.0; // (sqrt2 + 1) delta0 / rho
  std::vector<StepCheck> envelope;
  bool remark_ok = true;
  bool all_ok() const;
};

/// Runs the flat-optimal schedule for rho in (1, sqrt2 + 1) and checks the
/// (n+1) L^n envelope around the limit point.
FlatConvergenceReport flat_convergence_check(const OperatorSpec& op, const Vec& x0, std::size_t n_max);

/// `n,beta,residual,kappa_hat,dist_x0,dist_fp,bound` with 17 significant digits.
void write_trace_csv(std::ostream& os, const IterationTrace& trace);

} // namespace halpern
