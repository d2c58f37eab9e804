#include "halpern/affine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

namespace halpern {

namespace {

constexpr double kInvE = 0.36787944117144232160;
constexpr std::size_t kScanCap = 100'000'000;

// Alg. step test: (1 + rho^{k+1})/(k+1) <= min{rho, 1} (1 + rho^k)/k.
bool averaging_pays(double rho, std::size_t k) {
  const double kd = static_cast<double>(k);
  const double lhs = (1.0 + std::pow(rho, kd + 1.0)) / (kd + 1.0);
  const double rhs = std::min(rho, 1.0) * (1.0 + std::pow(rho, kd)) / kd;
  return lhs <= rhs;
}

void require_not_one(double rho) {
  if (rho == 1.0) throw std::invalid_argument("n0 is infinite at rho = 1");
}

} // namespace

double affine_residual_bound(Rho rho, std::span<const double> betas, std::size_t n) {
  if (betas.size() < n + 1) throw std::invalid_argument("affine bound needs beta_0..beta_n");
  for (std::size_t i = 1; i <= n; ++i) {
    if (!(betas[i] >= 0.0 && betas[i] <= 1.0)) {
      throw std::invalid_argument(fmt::format("beta_{} = {} lies outside [0,1]", i, betas[i]));
    }
  }
  // suffix[i] = prod_{j=i}^n beta_j for 1 <= i <= n+1.
  std::vector<double> suffix(n + 2, 1.0);
  for (std::size_t i = n; i >= 1; --i) suffix[i] = betas[i] * suffix[i + 1];
  const long nl = static_cast<long>(n);
  auto B = [&](long i) {
    if (i <= 0) return 0.0;
    if (i > nl) return 1.0;
    return suffix[static_cast<std::size_t>(i)];
  };
  double sum = 0.0;
  for (long i = 0; i <= nl + 1; ++i) {
    const double second = B(i + 1) - 2.0 * B(i) + B(i - 1);
    sum += std::abs(second) * std::pow(static_cast<double>(rho), static_cast<double>(nl + 1 - i));
  }
  return sum;
}

std::vector<double> affine_residual_bounds(Rho rho, std::span<const double> betas, std::size_t n_max) {
  std::vector<double> out;
  out.reserve(n_max + 1);
  for (std::size_t n = 0; n <= n_max; ++n) out.push_back(affine_residual_bound(rho, betas, n));
  return out;
}

double lambert_w0(double x) {
  if (std::isnan(x) || x < -kInvE) throw LambertDomainError(fmt::format("W0 is undefined at {}", x));
  if (x == 0.0) return 0.0;
  if (x == -kInvE) return -1.0;
  if (std::isinf(x)) return x;

  double w;
  if (x < -0.3) {
    // Series around the branch point -1/e.
    const double p = std::sqrt(2.0 * (std::exp(1.0) * x + 1.0));
    w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
  } else if (x <= std::exp(1.0)) {
    const double l = std::log1p(x);
    w = l * (1.0 - std::log1p(l) / (2.0 + l));
  } else {
    const double l1 = std::log(x);
    const double l2 = std::log(l1);
    w = l1 - l2 + l2 / l1;
  }
  for (int it = 0; it < 50; ++it) {
    const double ew = std::exp(w);
    const double f = w * ew - x;
    const double wp1 = w + 1.0;
    if (wp1 == 0.0) break;
    const double step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
    w -= step;
    if (std::abs(step) <= 1e-15 * (1.0 + std::abs(w))) break;
  }
  return w;
}

std::size_t affine_n0_scan(Rho rho) {
  require_not_one(rho);
  std::size_t k = 1;
  while (averaging_pays(rho, k)) {
    if (++k > kScanCap) throw std::runtime_error("n0 scan exceeded its cap");
  }
  return k - 1;
}

std::size_t affine_n0_lambert(Rho rho) {
  require_not_one(rho);
  const double r = rho;
  const double lr = std::log(r);
  const double arg = lr / (r - 1.0) * std::pow(r, 1.0 / (1.0 - r));
  const double w = lambert_w0(arg);
  const double value = r < 1.0 ? r / (1.0 - r) - w / lr : 1.0 / (r - 1.0) + w / lr;
  return static_cast<std::size_t>(std::floor(value));
}

std::size_t affine_n0(Rho rho) {
  const std::size_t scan = affine_n0_scan(rho);
  const std::size_t closed = affine_n0_lambert(rho);
  if (scan != closed) {
    throw std::logic_error(
        fmt::format("n0 mismatch at rho = {}: scan gives {}, Lambert form gives {}", static_cast<double>(rho), scan, closed));
  }
  return scan;
}

static double l_star_given(double r, std::size_t n, std::size_t n0) {
  const double nd = static_cast<double>(n);
  if (r == 1.0) return 2.0 / (nd + 1.0);
  if (n <= n0) return (1.0 + std::pow(r, nd + 1.0)) / (nd + 1.0);
  const double k = static_cast<double>(n0);
  const double head = (1.0 + std::pow(r, k + 1.0)) / (k + 1.0);
  return r < 1.0 ? head * std::pow(r, nd - k) : head;
}

double l_star(Rho rho, std::size_t n) {
  if (rho == 1.0) return l_star_given(rho, n, 0);
  return l_star_given(rho, n, affine_n0(rho));
}

double l_star_bruteforce(Rho rho, std::size_t n) {
  const double r = rho;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k <= n; ++k) {
    const double kd = static_cast<double>(k);
    double value = (1.0 + std::pow(r, kd + 1.0)) / (kd + 1.0);
    if (r < 1.0) value *= std::pow(r, static_cast<double>(n - k));
    best = std::min(best, value);
  }
  return best;
}

std::vector<StepAction> AffineSchedule::actions() const {
  std::vector<StepAction> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back({r.beta, r.frozen});
  return out;
}

AffineSchedule aff_schedule(Rho rho, std::size_t n_max) {
  if (n_max < 1) throw std::invalid_argument("aff_schedule needs n_max >= 1");
  if (n_max > kMaxScheduleLength) throw std::invalid_argument("schedule length exceeds the cap");
  const double r = rho;
  AffineSchedule s;
  s.limit_case = r == 1.0;
  const std::size_t n0 = s.limit_case ? 0 : affine_n0(rho);
  s.rows.reserve(n_max + 1);
  s.rows.push_back({0, 0.0, false, l_star_given(r, 0, n0)});
  bool averaging = true;
  for (std::size_t n = 1; n <= n_max; ++n) {
    averaging = averaging && averaging_pays(r, n);
    AffineRow row{n, 0.0, false, l_star_given(r, n, n0)};
    if (averaging) row.beta = static_cast<double>(n) / static_cast<double>(n + 1);
    else if (r < 1.0) row.beta = 1.0;
    else row.frozen = true;
    s.rows.push_back(row);
  }
  return s;
}

void write_affine_csv(std::ostream& os, const AffineSchedule& schedule) {
  os << "n,beta,frozen,l_star\n";
  for (const auto& r : schedule.rows) {
    fmt::print(os, "{},", r.n);
    if (!r.frozen) fmt::print(os, "{:.17g}", r.beta);
    fmt::print(os, ",{},{:.17g}\n", r.frozen ? 1 : 0, r.l_star);
  }
}

} // namespace halpern
