#include "halpern/engine.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numeric>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

namespace halpern {

namespace {

constexpr double kSqrt2 = 1.41421356237309504880;

Vec apply_at(const OperatorSpec& op, const Vec& x, std::size_t step) {
  try {
    return op.apply(x);
  } catch (const DomainError& e) {
    throw IterationDomainError(step, e.what());
  }
}

// Shared bookkeeping for every driver.
class Recorder {
public:
  Recorder(const OperatorSpec& op, const Vec& x0, std::string label) : op_(op), x0_(x0) {
    trace_.label = std::move(label);
  }

  void record(std::size_t n, double beta, bool frozen, const Vec& x, const Vec& tx, const Vec* prev) {
    TraceStep s;
    s.n = n;
    s.beta = beta;
    s.frozen = frozen;
    s.residual = op_.residual_norm(x, tx);
    s.anchor_gap = op_.dist(x0_, tx);
    kappa_ = std::max(kappa_, s.anchor_gap);
    s.kappa_hat = kappa_;
    s.dist_x0 = op_.dist(x, x0_);
    s.step_len = prev ? op_.dist(x, *prev) : 0.0;
    if (op_.fixed_point) s.dist_fp = op_.dist(x, *op_.fixed_point);
    trace_.steps.push_back(s);
  }

  TraceStep& last() { return trace_.steps.back(); }

  IterationTrace finish(Vec last_iterate) {
    if (op_.fixed_point) trace_.delta0 = op_.dist(x0_, *op_.fixed_point);
    trace_.last_iterate = std::move(last_iterate);
    return std::move(trace_);
  }

private:
  const OperatorSpec& op_;
  const Vec& x0_;
  IterationTrace trace_;
  double kappa_ = 0.0;
};

void require_start(const OperatorSpec& op, const Vec& x0) {
  if (!op.in_domain(x0)) throw IterationDomainError(0, fmt::format("{}: x0 outside the domain", op.name));
}

Vec anchor_combination(const Vec& x0, const Vec& tx, double beta) {
  Vec x(x0.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (1.0 - beta) * x0[i] + beta * tx[i];
  return x;
}

} // namespace

std::vector<StepAction> actions_from_betas(std::span<const double> betas) {
  std::vector<StepAction> out;
  out.reserve(betas.size());
  for (double b : betas) out.push_back({b, false});
  return out;
}

std::vector<double> IterationTrace::residuals() const {
  std::vector<double> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.residual);
  return out;
}

IterationDomainError::IterationDomainError(std::size_t step, const std::string& what)
    : DomainError(fmt::format("step {}: {}", step, what)), step_(step) {}

IterationTrace halpern_run(const OperatorSpec& op, const Vec& x0, std::span<const StepAction> steps,
                           std::size_t n_max) {
  if (steps.size() < n_max + 1) {
    throw std::invalid_argument(fmt::format("schedule has {} entries, need {}", steps.size(), n_max + 1));
  }
  for (std::size_t n = 1; n <= n_max; ++n) {
    if (!steps[n].freeze && !(steps[n].beta >= 0.0 && steps[n].beta <= 1.0)) {
      throw std::invalid_argument(fmt::format("beta_{} = {} lies outside [0,1]", n, steps[n].beta));
    }
  }
  require_start(op, x0);
  Recorder rec(op, x0, "halpern");
  Vec x = x0;
  Vec tx = apply_at(op, x, 0);
  rec.record(0, 0.0, false, x, tx, nullptr);
  for (std::size_t n = 1; n <= n_max; ++n) {
    const Vec prev = x;
    if (!steps[n].freeze) {
      x = anchor_combination(x0, tx, steps[n].beta);
      tx = apply_at(op, x, n);
    }
    rec.record(n, steps[n].beta, steps[n].freeze, x, tx, &prev);
  }
  return rec.finish(std::move(x));
}

IterationTrace halpern_run(const OperatorSpec& op, const Vec& x0, std::span<const double> betas, std::size_t n_max) {
  const auto actions = actions_from_betas(betas);
  return halpern_run(op, x0, std::span<const StepAction>(actions), n_max);
}

IterationTrace banach_picard_run(const OperatorSpec& op, const Vec& x0, std::size_t n_max) {
  const auto betas = banach_picard_betas(n_max);
  auto trace = halpern_run(op, x0, betas, n_max);
  trace.label = "banach-picard";
  for (std::size_t n = 1; n < trace.steps.size(); ++n) {
    const double now = trace.steps[n].residual;
    const double before = trace.steps[n - 1].residual;
    if (now > op.rho * before * (1.0 + 1e-12)) {
      throw BoundViolation(
          fmt::format("{}: residual grew from {} to {} at step {} beyond rho = {}", op.name, before, now, n, op.rho));
    }
  }
  return trace;
}

IterationTrace ada_halpern_run(const OperatorSpec& op, const Vec& x0, std::size_t n_max) {
  constexpr double kTol = 1e-12;
  const Rho rho(op.rho);
  require_start(op, x0);
  Recorder rec(op, x0, "ada-halpern");
  Vec x = x0;
  Vec tx = apply_at(op, x, 0);
  rec.record(0, 0.0, false, x, tx, nullptr);
  rec.last().bound = 1.0;
  double kappa = op.dist(x0, tx);
  if (kappa == 0.0) {
    auto trace = rec.finish(std::move(x));
    trace.converged = true;
    return trace;
  }

  const double floor = r_limit(rho);
  double r_prev = 1.0;
  double r_star_prev = 1.0;
  double beta_prev = 0.0;
  for (std::size_t n = 1; n <= n_max; ++n) {
    const double beta = b_opt(rho, r_prev);
    const Vec prev = x;
    const Vec tx_prev = tx;
    x = anchor_combination(x0, tx_prev, beta);
    tx = apply_at(op, x, n);
    kappa = std::max(kappa, op.dist(x0, tx));
    const double r = 1.0 - beta + beta * op.dist(tx, tx_prev) / kappa;
    rec.record(n, beta, false, x, tx, &prev);
    rec.last().bound = r;

    const double ceiling = v_opt(rho, r_prev);
    const double r_star = v_opt(rho, r_star_prev);
    const double residual = rec.last().residual;
    auto fail = [&](std::string_view what) {
      throw BoundViolation(fmt::format("{}: adaptive guarantee '{}' failed at step {} (beta={}, R={}, R_prev={})",
                                       op.name, what, n, beta, r, r_prev));
    };
    if (beta < beta_prev - kTol) fail("beta non-decreasing");
    if (r < floor - kTol) fail("R_n >= r_rho");
    if (r > ceiling + kTol) fail("R_n <= V(R_{n-1})");
    if (ceiling > r_star + kTol) fail("V(R_{n-1}) <= R*_n");
    // Compared after dividing by kappa_hat; below the smallest normal double R carries no relative precision.
    if (residual / kappa > r * (1.0 + kTol) + std::numeric_limits<double>::min()) fail("residual <= kappa_hat R_n");

    r_prev = r;
    r_star_prev = r_star;
    beta_prev = beta;
  }
  return rec.finish(std::move(x));
}

MannArray::MannArray(std::vector<std::vector<double>> rows) : rows_(std::move(rows)) {
  for (std::size_t n = 0; n < rows_.size(); ++n) {
    const auto& r = rows_[n];
    if (r.size() != n + 1) throw std::invalid_argument(fmt::format("Mann row {} must have {} weights", n, n + 1));
    if (std::any_of(r.begin(), r.end(), [](double w) { return !(w >= 0.0); })) {
      throw std::invalid_argument(fmt::format("Mann row {} has a negative weight", n));
    }
    const double sum = std::accumulate(r.begin(), r.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument(fmt::format("Mann row {} sums to {}", n, sum));
    if (!(r.back() > 0.0)) throw std::invalid_argument(fmt::format("Mann row {} needs pi^n_n > 0", n));
  }
}

MannArray MannArray::halpern(std::span<const double> betas) {
  std::vector<std::vector<double>> rows;
  rows.reserve(betas.size());
  rows.push_back({1.0});
  for (std::size_t n = 1; n < betas.size(); ++n) {
    std::vector<double> r(n + 1, 0.0);
    r.front() = 1.0 - betas[n];
    r.back() = betas[n];
    rows.push_back(std::move(r));
  }
  return MannArray(std::move(rows));
}

MannArray MannArray::banach_picard(std::size_t n_max) {
  std::vector<std::vector<double>> rows;
  for (std::size_t n = 0; n <= n_max; ++n) {
    std::vector<double> r(n + 1, 0.0);
    r.back() = 1.0;
    rows.push_back(std::move(r));
  }
  return MannArray(std::move(rows));
}

MannArray MannArray::uniform(std::size_t n_max) {
  std::vector<std::vector<double>> rows;
  for (std::size_t n = 0; n <= n_max; ++n) rows.emplace_back(n + 1, 1.0 / static_cast<double>(n + 1));
  return MannArray(std::move(rows));
}

IterationTrace mann_run(const OperatorSpec& op, const Vec& x0, const MannArray& pi, std::size_t n_max) {
  if (pi.size() < n_max + 1) throw std::invalid_argument("Mann array shorter than the requested run");
  require_start(op, x0);
  Recorder rec(op, x0, "mann");
  // images[i] holds T x^{i-1}; images[0] = x^0.
  std::vector<Vec> images;
  images.reserve(n_max + 2);
  images.push_back(x0);
  Vec x = x0;
  images.push_back(apply_at(op, x, 0));
  rec.record(0, pi.row(0).back(), false, x, images.back(), nullptr);
  for (std::size_t n = 1; n <= n_max; ++n) {
    const auto& w = pi.row(n);
    const Vec prev = x;
    // Same association order as the Halpern update: w_0 x^0 first, then the images.
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = w[0] * images[0][k];
    for (std::size_t i = 1; i <= n; ++i) {
      if (w[i] == 0.0) continue;
      for (std::size_t k = 0; k < x.size(); ++k) x[k] += w[i] * images[i][k];
    }
    images.push_back(apply_at(op, x, n));
    rec.record(n, w.back(), false, x, images.back(), &prev);
  }
  auto trace = rec.finish(std::move(x));
  trace.label = "mann";
  return trace;
}

std::vector<Vec> mann_orbit(const OperatorSpec& op, const Vec& x0, const MannArray& pi, std::size_t n_max) {
  if (pi.size() < n_max + 1) throw std::invalid_argument("Mann array shorter than the requested run");
  require_start(op, x0);
  std::vector<Vec> images{x0};
  for (std::size_t n = 0; n <= n_max; ++n) {
    const auto& w = pi.row(n);
    Vec x(x0.size());
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = w[0] * images[0][k];
    for (std::size_t i = 1; i <= n; ++i) {
      if (w[i] == 0.0) continue;
      for (std::size_t k = 0; k < x.size(); ++k) x[k] += w[i] * images[i][k];
    }
    images.push_back(apply_at(op, x, n));
  }
  return images;
}

double orbit_diameter(const OperatorSpec& op, const std::vector<Vec>& points) {
  double best = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) best = std::max(best, op.dist(points[i], points[j]));
  }
  return best;
}

bool BoundReport::all_ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const StepCheck& c) { return c.ok; });
}

std::size_t BoundReport::failures() const {
  return static_cast<std::size_t>(std::count_if(checks.begin(), checks.end(), [](const StepCheck& c) { return !c.ok; }));
}

BoundReport check_bounds(const IterationTrace& trace, std::span<const ScheduleRow> bound_rows, double scale) {
  constexpr double kRel = 1e-9;
  BoundReport report;
  const std::size_t count = std::min(trace.steps.size(), bound_rows.size());
  auto add = [&](std::size_t n, CheckKind kind, double lhs, double rhs) {
    report.checks.push_back({n, kind, lhs, rhs, lhs <= rhs * (1.0 + kRel)});
  };
  for (std::size_t n = 0; n < count; ++n) {
    const auto& s = trace.steps[n];
    const auto& row = bound_rows[n];
    add(n, CheckKind::Residual, s.residual, scale * row.bound);
    if (const auto* flat = std::get_if<FlatAux>(&row.aux)) {
      if (s.dist_fp) add(n, CheckKind::DistFixedPoint, *s.dist_fp, scale * flat->mu);
      add(n, CheckKind::AnchorGap, s.anchor_gap, scale * flat->nu);
      add(n, CheckKind::StepLength, s.step_len, scale * flat->d_flat);
    }
  }
  return report;
}

bool FlatConvergenceReport::all_ok() const {
  return remark_ok && std::all_of(envelope.begin(), envelope.end(), [](const StepCheck& c) { return c.ok; });
}

FlatConvergenceReport flat_convergence_check(const OperatorSpec& op, const Vec& x0, std::size_t n_max) {
  constexpr double kAbs = 1e-12;
  if (!(op.rho > 1.0 && op.rho < kSqrt2 + 1.0)) {
    throw std::invalid_argument(fmt::format("flat convergence check needs rho in (1, 1+sqrt2), got {}", op.rho));
  }
  if (!op.fixed_point) throw std::invalid_argument("flat convergence check needs a known fixed point");
  require_start(op, x0);
  const Rho rho(op.rho);

  FlatConvergenceReport out;
  out.beta_flat = flat_limits(rho).beta_flat;
  out.contraction = rho * out.beta_flat;

  // Banach iteration of the limit map, a contraction with factor L < 1.
  Vec y = x0;
  for (std::size_t it = 0; it < 1'000'000; ++it) {
    Vec next = anchor_combination(x0, op.apply(y), out.beta_flat);
    const double step = op.dist(next, y);
    y = std::move(next);
    if (step < 1e-13) break;
  }
  out.limit_point = y;
  out.initial_gap = op.dist(x0, y);
  out.delta0 = op.dist(x0, *op.fixed_point);
  out.remark_bound = (kSqrt2 + 1.0) * out.delta0 / rho;
  out.remark_ok = out.initial_gap <= out.remark_bound * (1.0 + 1e-12) + kAbs;

  OperatorSpec shifted = op;
  shifted.fixed_point = y;
  const auto rows = flat_schedule(rho, n_max);
  const auto trace = halpern_run(shifted, x0, betas_of(rows), n_max);
  for (const auto& s : trace.steps) {
    const double envelope =
        out.initial_gap * static_cast<double>(s.n + 1) * std::pow(out.contraction, static_cast<double>(s.n));
    out.envelope.push_back({s.n, CheckKind::DistFixedPoint, *s.dist_fp, envelope, *s.dist_fp <= envelope + kAbs});
  }
  return out;
}

void write_trace_csv(std::ostream& os, const IterationTrace& trace) {
  os << "n,beta,residual,kappa_hat,dist_x0,dist_fp,bound\n";
  for (const auto& s : trace.steps) {
    fmt::print(os, "{},", s.n);
    if (!s.frozen) fmt::print(os, "{:.17g}", s.beta);
    fmt::print(os, ",{:.17g},{:.17g},{:.17g},", s.residual, s.kappa_hat, s.dist_x0);
    if (s.dist_fp) fmt::print(os, "{:.17g}", *s.dist_fp);
    os << ',';
    if (s.bound) fmt::print(os, "{:.17g}", *s.bound);
    os << '\n';
  }
}

} // namespace halpern
