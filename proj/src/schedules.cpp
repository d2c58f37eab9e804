#include "halpern/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace halpern {

namespace {

constexpr double kSqrt2 = 1.41421356237309504880;

void check_length(std::size_t n_max) {
  if (n_max > kMaxScheduleLength) {
    throw std::invalid_argument(
        fmt::format("schedule length {} exceeds the cap of {}", n_max, kMaxScheduleLength));
  }
}

} // namespace

Rho::Rho(double value) : value_(value) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw std::invalid_argument(fmt::format("Lipschitz constant must be positive and finite, got {}", value));
  }
}

std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
  case ScheduleKind::MOpt: return "mopt";
  case ScheduleKind::Ada: return "ada";
  case ScheduleKind::FlatOpt: return "flat";
  case ScheduleKind::Affine: return "affine";
  case ScheduleKind::BanachPicard: return "bp";
  case ScheduleKind::FixedSequence: return "fixed";
  }
  return "?";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  for (auto kind : {ScheduleKind::MOpt, ScheduleKind::Ada, ScheduleKind::FlatOpt, ScheduleKind::Affine,
                    ScheduleKind::BanachPicard, ScheduleKind::FixedSequence}) {
    if (to_string(kind) == name) return kind;
  }
  throw std::invalid_argument(fmt::format("unknown schedule kind '{}'", name));
}

double beta_unconstrained(Rho rho, double r) { return 0.5 * (1.0 / rho + 1.0 - r); }

double b_opt(Rho rho, double r) { return std::min(1.0, beta_unconstrained(rho, r)); }

double v_opt(Rho rho, double r) {
  if (r >= 1.0 / rho - 1.0) {
    const double beta = beta_unconstrained(rho, r);
    return 1.0 - rho * beta * beta;
  }
  return rho * r;
}

double r_limit(Rho rho) { return std::max(0.0, 1.0 - 1.0 / rho); }

std::vector<ScheduleRow> m_opt_schedule(Rho rho, std::size_t n_max) {
  check_length(n_max);
  std::vector<ScheduleRow> rows;
  rows.reserve(n_max + 1);
  rows.push_back({0, 0.0, 1.0, RecursionAux{}});
  for (std::size_t n = 1; n <= n_max; ++n) {
    const auto& prev = rows.back();
    const double beta = b_opt(rho, prev.bound);
    const double bound = v_opt(rho, prev.bound);
    // On the optimal path beta_n >= beta_{n-1}, so d_n = beta_n + R_{n-1} - 1.
    const double d = beta + prev.bound - 1.0;
    rows.push_back({n, beta, bound, RecursionAux{d, std::min(1.0, rho * d)}});
  }
  return rows;
}

std::vector<double> m_opt_betas_direct(Rho rho, std::size_t n_max) {
  check_length(n_max);
  std::vector<double> betas(n_max + 1, 0.0);
  for (std::size_t n = 1; n <= n_max; ++n) {
    const double rb = rho * betas[n - 1];
    betas[n] = std::min(1.0, (1.0 + rb * rb) / (2.0 * rho));
  }
  return betas;
}

std::vector<ScheduleRow> halpern_recursive_bounds(Rho rho, std::span<const double> betas) {
  if (betas.empty()) throw std::invalid_argument("schedule must contain beta_0");
  check_length(betas.size() - 1);
  for (std::size_t n = 0; n < betas.size(); ++n) {
    if (!(betas[n] >= 0.0 && betas[n] <= 1.0)) {
      throw std::invalid_argument(fmt::format("beta_{} = {} lies outside [0,1]", n, betas[n]));
    }
  }
  if (betas[0] != 0.0) throw std::invalid_argument("beta_0 must be 0");

  std::vector<ScheduleRow> rows;
  rows.reserve(betas.size());
  rows.push_back({0, 0.0, 1.0, RecursionAux{}});
  double c_prev = 0.0;
  for (std::size_t n = 1; n < betas.size(); ++n) {
    const double b0 = betas[n - 1];
    const double b1 = betas[n];
    const double d = std::abs(b0 - b1) + std::min(b0, b1) * c_prev;
    const double c = std::min(1.0, rho * d);
    rows.push_back({n, b1, 1.0 - b1 * (1.0 - c), RecursionAux{d, c}});
    c_prev = c;
  }
  return rows;
}

double flat_beta_unconstrained(Rho rho, double r) { return (1.0 / rho + 3.0 - r) / 4.0; }

double b_flat(Rho rho, double r) {
  if (r <= 1.0 / rho - 1.0) return 1.0;
  if (r >= 1.0 / rho + 3.0) return 0.0;
  return flat_beta_unconstrained(rho, r);
}

double v_flat(Rho rho, double r) {
  if (r <= 1.0 / rho - 1.0) return rho * r;
  if (r >= 1.0 / rho + 3.0) return 1.0 + rho;
  const double beta = flat_beta_unconstrained(rho, r);
  return (1.0 + rho) - 2.0 * rho * beta * beta;
}

FlatLimits flat_limits(Rho rho) {
  const double upper = kSqrt2 + 1.0;
  if (rho < 1.0) return {0.0, 1.0};
  if (rho <= upper) {
    return {upper * upper * (1.0 - 1.0 / rho), (upper - rho) / (rho * kSqrt2)};
  }
  return {1.0 + rho, 0.0};
}

std::vector<ScheduleRow> flat_schedule(Rho rho, std::size_t n_max) {
  check_length(n_max);
  std::vector<double> betas(n_max + 1, 0.0);
  std::vector<double> bounds(n_max + 1, 1.0 + rho);
  for (std::size_t n = 1; n <= n_max; ++n) {
    betas[n] = b_flat(rho, bounds[n - 1]);
    bounds[n] = v_flat(rho, bounds[n - 1]);
  }
  const auto aux = flat_general_bounds(rho, betas, 1.0);
  std::vector<ScheduleRow> rows;
  rows.reserve(n_max + 1);
  for (std::size_t n = 0; n <= n_max; ++n) {
    const auto& a = aux.rows[n];
    rows.push_back({n, betas[n], bounds[n], FlatAux{a.mu, a.nu, a.d_flat}});
  }
  return rows;
}

FlatBounds flat_general_bounds(Rho rho, std::span<const double> betas, double delta0) {
  if (betas.empty()) throw std::invalid_argument("schedule must contain beta_0");
  check_length(betas.size() - 1);
  if (!(delta0 > 0.0)) throw std::invalid_argument("delta0 must be positive");
  if (betas[0] != 0.0) throw std::invalid_argument("beta_0 must be 0");
  for (std::size_t n = 1; n < betas.size(); ++n) {
    if (!(betas[n] >= 0.0 && betas[n] <= 1.0)) {
      throw std::invalid_argument(fmt::format("beta_{} = {} lies outside [0,1]", n, betas[n]));
    }
    if (betas[n] < betas[n - 1]) {
      throw std::invalid_argument(
          fmt::format("fixed-point-distance bounds need a non-decreasing schedule (beta_{} < beta_{})", n, n - 1));
    }
  }

  FlatBounds out;
  out.delta0 = delta0;
  out.rows.reserve(betas.size());
  // beta_0 = 0 makes the values at index -1 irrelevant.
  const double nu0 = 1.0 + rho;
  out.rows.push_back({0, 1.0, nu0, 0.0, nu0, nu0});
  for (std::size_t n = 1; n < betas.size(); ++n) {
    const auto& p = out.rows.back();
    const double b = betas[n];
    const double b_prev = betas[n - 1];
    FlatBoundRow row;
    row.n = n;
    row.mu = 1.0 - b + rho * b * p.mu;
    row.nu = 1.0 + rho * row.mu;
    row.d_flat = (b - b_prev) * p.nu + rho * b_prev * p.d_flat;
    row.bound = (1.0 - b) * row.nu + rho * b * row.d_flat;
    row.bound_rec = (1.0 + rho) - (1.0 + 3.0 * rho) * b + 2.0 * rho * b * b + rho * b * p.bound_rec;
    out.rows.push_back(row);
  }
  return out;
}

std::vector<double> betas_of(std::span<const ScheduleRow> rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.beta);
  return out;
}

std::vector<double> bounds_of(std::span<const ScheduleRow> rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.bound);
  return out;
}

std::vector<double> banach_picard_betas(std::size_t n_max) {
  check_length(n_max);
  std::vector<double> betas(n_max + 1, 1.0);
  betas[0] = 0.0;
  return betas;
}

} // namespace halpern
