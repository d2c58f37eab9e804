#include "halpern/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/ostream.h>

namespace halpern {

namespace {

void require_contractive(double rho) {
  if (!(rho < 1.0)) throw std::invalid_argument(fmt::format("needs rho in (0,1), got {}", rho));
}

// 1 - rho^{k} without cancellation.
double one_minus_pow(double rho, double k) { return -std::expm1(k * std::log(rho)); }

bool below_threshold(double rho, double r) { return rho * r <= (1.0 - rho) + 1e-14; }

struct Transition {
  std::size_t n0;
  double r_star;
};

Transition transition(double rho) {
  const Rho r(rho);
  double bound = 1.0;
  for (std::size_t n = 0; n <= kMaxScheduleLength; ++n) {
    if (below_threshold(rho, bound)) return {n, bound};
    bound = v_opt(r, bound);
  }
  throw std::runtime_error(fmt::format("no transition index below {} at rho = {}", kMaxScheduleLength, rho));
}

} // namespace

double pr_bound(Rho rho, std::size_t n, double delta0) {
  require_contractive(rho);
  const double nd = static_cast<double>(n);
  return delta0 * std::pow(static_cast<double>(rho), nd) * (1.0 - rho) * (1.0 + rho) / one_minus_pow(rho, nd + 1.0);
}

std::vector<double> q_n_all(Rho rho, std::size_t n_max) {
  require_contractive(rho);
  // Past the transition R*_n / rho^n = R*_{n0} / rho^{n0}; using that form
  // avoids 0 * inf when rho^n underflows.
  const auto t = transition(rho);
  const auto rows = m_opt_schedule(rho, std::min(n_max, t.n0));
  const double lr = std::log(static_cast<double>(rho));
  const double tail = t.r_star * std::exp(-static_cast<double>(t.n0) * lr);
  std::vector<double> out;
  out.reserve(n_max + 1);
  for (std::size_t n = 0; n <= n_max; ++n) {
    const double nd = static_cast<double>(n);
    const double scaled = n < t.n0 ? rows[n].bound * std::exp(-nd * lr) : tail;
    out.push_back(one_minus_pow(rho, nd + 1.0) / (1.0 - rho) * scaled);
  }
  return out;
}

double q_n(Rho rho, std::size_t n) { return q_n_all(rho, n).back(); }

std::size_t n0_transition(Rho rho) {
  require_contractive(rho);
  return transition(rho).n0;
}

std::size_t n0_transition_bracket(Rho rho) {
  require_contractive(rho);
  double rn = 0.5;
  for (std::size_t n = 0; n <= kMaxScheduleLength; ++n) {
    if (rho <= rn) return n;
    rn = 0.5 * (1.0 + rn * rn);
  }
  throw std::runtime_error("rho_n bracket not found");
}

double q_inf(Rho rho) {
  require_contractive(rho);
  const auto t = transition(rho);
  return t.r_star / ((1.0 - rho) * std::pow(static_cast<double>(rho), static_cast<double>(t.n0)));
}

RhoZSequences rho_z_sequences(std::size_t n_max) {
  RhoZSequences s;
  s.z.reserve(n_max + 1);
  s.rho.reserve(n_max + 1);
  s.gap.reserve(n_max + 1);
  s.rho_pow.reserve(n_max + 1);
  double z = 0.0;
  double r = 0.5;
  double w = 0.5;
  for (std::size_t n = 0; n <= n_max; ++n) {
    s.z.push_back(z);
    s.rho.push_back(r);
    s.gap.push_back(w);
    s.rho_pow.push_back(std::exp(static_cast<double>(n) * std::log1p(-w)));
    z = 0.25 * (1.0 + z) * (1.0 + z);
    r = 0.5 * (1.0 + r * r);
    w = w - 0.5 * w * w;
  }
  return s;
}

std::vector<LogisticRow> logistic_sandwich(std::size_t n_max) {
  std::vector<LogisticRow> out;
  out.reserve(n_max + 1);
  double e = 0.25;
  for (std::size_t n = 0; n <= n_max; ++n) {
    const double m = static_cast<double>(n) + 3.0;
    LogisticRow row{n, e, 1.0 / (m + std::log(m)), 1.0 / m, true};
    row.ok = row.lower <= row.e && row.e <= row.upper;
    out.push_back(row);
    e = e * (1.0 - e);
  }
  return out;
}

double logistic_identity_gap(Rho rho, std::size_t n_max) {
  if (rho < 1.0) throw std::invalid_argument("logistic identity needs rho >= 1");
  const auto rows = m_opt_schedule(rho, n_max);
  const auto e = logistic_sandwich(n_max);
  const double floor = r_limit(rho);
  double worst = 0.0;
  for (std::size_t n = 0; n <= n_max; ++n) {
    worst = std::max(worst, std::abs(e[n].e - 0.25 * rho * (rows[n].bound - floor)));
  }
  return worst;
}

double minimal_displacement(Rho rho, double diam) {
  if (rho < 1.0) throw std::invalid_argument("minimal displacement bound needs rho >= 1");
  if (!(diam > 0.0)) throw std::invalid_argument("diameter must be positive");
  return diam * (1.0 - 1.0 / rho);
}

SpeedupCertificate speedup_certificate(Rho rho) {
  require_contractive(rho);
  const auto t = transition(rho);
  const double r = rho;
  SpeedupCertificate c;
  c.n0 = t.n0;
  c.rho_pow_n0 = std::pow(r, static_cast<double>(t.n0));
  c.ratio = c.rho_pow_n0 / t.r_star;
  c.transition_bound = c.rho_pow_n0 * r / (1.0 - r);
  c.pow_bound = r / kESquared;
  c.transition_ok = c.ratio >= c.transition_bound * (1.0 - 1e-12);
  c.pow_ok = c.rho_pow_n0 >= c.pow_bound * (1.0 - 1e-12);
  return c;
}

std::vector<ComparisonRow> comparison_rows(Rho rho, std::span<const std::size_t> ns) {
  require_contractive(rho);
  const std::size_t n_max = ns.empty() ? 0 : *std::max_element(ns.begin(), ns.end());
  const auto q = q_n_all(rho, n_max);
  const auto rows = m_opt_schedule(rho, n_max);
  std::vector<ComparisonRow> out;
  for (std::size_t n : ns) out.push_back({rho, n, q[n], pr_bound(rho, n, 1.0), rows[n].bound});
  const auto t = transition(rho);
  out.push_back({rho, std::nullopt, q_inf(rho), 0.0, t.r_star});
  return out;
}

std::vector<std::size_t> fig2_indices() { return {0, 1, 2, 3, 4, 6, 9, 13, 19, 32, 64}; }

std::vector<double> fig2_grid(std::size_t points) {
  if (points == 0) throw std::invalid_argument("grid needs at least one point");
  std::vector<double> g;
  g.reserve(points);
  for (std::size_t k = 1; k <= points; ++k) g.push_back(0.9999 * static_cast<double>(k) / static_cast<double>(points));
  return g;
}

void write_fig2_csv(std::ostream& os, std::span<const double> grid, std::span<const std::size_t> ns) {
  os << "rho,n,q_n,q_inf\n";
  const std::size_t n_max = ns.empty() ? 0 : *std::max_element(ns.begin(), ns.end());
  for (double r : grid) {
    const Rho rho(r);
    const auto q = q_n_all(rho, n_max);
    const double qi = q_inf(rho);
    for (std::size_t n : ns) fmt::print(os, "{:.17g},{},{:.17g},{:.17g}\n", r, n, q[n], qi);
  }
}

} // namespace halpern
