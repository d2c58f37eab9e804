#include "halpern/operators.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <fmt/format.h>

namespace halpern {

std::string_view to_string(NormKind kind) {
  switch (kind) {
  case NormKind::LInf: return "linf";
  case NormKind::L1: return "l1";
  case NormKind::L2: return "l2";
  }
  return "?";
}

NormKind parse_norm_kind(std::string_view name) {
  for (auto kind : {NormKind::LInf, NormKind::L1, NormKind::L2}) {
    if (to_string(kind) == name) return kind;
  }
  throw std::invalid_argument(fmt::format("unknown norm '{}'", name));
}

double norm(NormKind kind, std::span<const double> x) {
  double acc = 0.0;
  switch (kind) {
  case NormKind::LInf:
    for (double v : x) acc = std::max(acc, std::abs(v));
    return acc;
  case NormKind::L1:
    for (double v : x) acc += std::abs(v);
    return acc;
  case NormKind::L2: {
    // Scaled accumulation avoids overflow for large entries.
    double scale = 0.0;
    for (double v : x) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) return 0.0;
    for (double v : x) acc += (v / scale) * (v / scale);
    return scale * std::sqrt(acc);
  }
  }
  return acc;
}

double distance(NormKind kind, std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw std::invalid_argument(fmt::format("dimension mismatch: {} vs {}", x.size(), y.size()));
  }
  Vec diff(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) diff[i] = x[i] - y[i];
  return norm(kind, diff);
}

bool OperatorSpec::in_domain(const Vec& x) const {
  if (x.size() != dim) return false;
  return !domain_check || domain_check(x);
}

Vec OperatorSpec::apply(const Vec& x) const {
  if (x.size() != dim) {
    throw DomainError(fmt::format("{}: expected a point of dimension {}, got {}", name, dim, x.size()));
  }
  if (domain_check && !domain_check(x)) throw DomainError(fmt::format("{}: point outside the domain", name));
  return eval(x);
}

double OperatorSpec::residual_norm(const Vec& x, const Vec& tx) const {
  if (residual) return residual(x, tx);
  return distance(norm, x, tx);
}

OperatorSpec rotation_contraction(double rho, double theta) {
  if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("rotation_contraction needs rho in (0,1]");
  if (!std::isfinite(theta)) throw std::invalid_argument("rotation angle must be finite");
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double scale = rho / (std::abs(c) + std::abs(s));
  OperatorSpec op;
  op.name = fmt::format("rotation_contraction(rho={}, theta={})", rho, theta);
  op.dim = 2;
  op.rho = rho;
  op.norm = NormKind::LInf;
  op.eval = [a = scale * c, b = scale * s](const Vec& x) { return Vec{a * x[0] - b * x[1], b * x[0] + a * x[1]}; };
  op.fixed_point = Vec{0.0, 0.0};
  return op;
}

OperatorSpec cyclic_shift(double rho, std::size_t d, NormKind norm_kind) {
  if (!(rho > 0.0)) throw std::invalid_argument("cyclic_shift needs rho > 0");
  if (d < 2) throw std::invalid_argument("cyclic_shift needs dimension >= 2");
  OperatorSpec op;
  op.name = fmt::format("cyclic_shift(rho={}, d={})", rho, d);
  op.dim = d;
  op.rho = rho;
  op.norm = norm_kind;
  op.eval = [rho, d](const Vec& x) {
    Vec y(d);
    y[0] = rho * x[d - 1];
    for (std::size_t i = 1; i < d; ++i) y[i] = rho * x[i - 1];
    return y;
  };
  op.fixed_point = Vec(d, 0.0);
  return op;
}

OperatorSpec goebel_map(double rho, std::size_t grid) {
  if (!(rho > 1.0) || !std::isfinite(rho)) throw std::invalid_argument("goebel_map needs rho > 1");
  if (grid < 2) throw std::invalid_argument("goebel_map needs at least the two endpoints t=0 and t=1");
  constexpr double kTol = 1e-12;
  const double a = 1.0 - 1.0 / rho;

  OperatorSpec op;
  op.name = fmt::format("goebel(rho={}, grid={})", rho, grid);
  op.dim = grid;
  op.rho = rho;
  op.norm = NormKind::LInf;
  // rho (x - 1 + 1/rho) written as rho (x - 1) + 1 keeps T(1) = 1 exact.
  op.eval = [rho](const Vec& x) {
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::max(rho * (x[i] - 1.0) + 1.0, 0.0);
    return y;
  };
  op.domain_check = [](const Vec& x) {
    if (std::abs(x.front()) > kTol || std::abs(x.back() - 1.0) > kTol) return false;
    return std::all_of(x.begin(), x.end(), [](double v) { return v >= -kTol && v <= 1.0 + kTol; });
  };
  // sup over t of |x(t) - Tx(t)| for the piecewise-linear interpolant of x.
  // g(v) = |v - rho max{v - a, 0}| is piecewise linear in v with its single
  // kink (and maximum a) at v = a, so each segment contributes either a or
  // the larger endpoint value.
  op.residual = [rho, a](const Vec& x, const Vec&) {
    auto g = [&](double v) { return std::abs(v - std::max(rho * (v - 1.0) + 1.0, 0.0)); };
    double sup = g(x[0]);
    for (std::size_t i = 0; i + 1 < x.size(); ++i) {
      const double lo = std::min(x[i], x[i + 1]);
      const double hi = std::max(x[i], x[i + 1]);
      sup = std::max(sup, (lo <= a && a <= hi) ? a : std::max(g(x[i]), g(x[i + 1])));
    }
    return sup;
  };
  return op;
}

OperatorSpec l1_right_shift(double rho, std::size_t trunc) {
  if (!(rho > 0.0)) throw std::invalid_argument("l1_right_shift needs rho > 0");
  if (trunc < 2) throw std::invalid_argument("l1_right_shift needs at least two coordinates");
  OperatorSpec op;
  op.name = fmt::format("l1_right_shift(rho={}, trunc={})", rho, trunc);
  op.dim = trunc;
  op.rho = rho;
  op.norm = NormKind::L1;
  op.eval = [rho, trunc](const Vec& x) {
    Vec y(trunc, 0.0);
    for (std::size_t i = 1; i < trunc; ++i) y[i] = rho * x[i - 1];
    return y;
  };
  op.fixed_point = Vec(trunc, 0.0);
  return op;
}

double operator_norm(const Matrix& a, NormKind kind) {
  double best = 0.0;
  if (kind == NormKind::LInf) {
    for (std::size_t i = 0; i < a.rows; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < a.cols; ++j) s += std::abs(a(i, j));
      best = std::max(best, s);
    }
  } else if (kind == NormKind::L1) {
    for (std::size_t j = 0; j < a.cols; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < a.rows; ++i) s += std::abs(a(i, j));
      best = std::max(best, s);
    }
  } else {
    throw std::invalid_argument("exact operator norm is only available for linf and l1");
  }
  return best;
}

OperatorSpec affine_operator(const Matrix& a, const Vec& b, double rho, NormKind norm_kind) {
  if (a.rows != a.cols || a.rows != b.size() || a.rows == 0) {
    throw std::invalid_argument("affine_operator needs a square matrix matching the offset vector");
  }
  if (!(rho > 0.0)) throw std::invalid_argument("affine_operator needs rho > 0");
  if (norm_kind != NormKind::L2) {
    const double exact = operator_norm(a, norm_kind);
    if (exact > rho * (1.0 + 1e-12)) {
      throw std::invalid_argument(fmt::format("declared rho = {} is below the {} operator norm {}", rho,
                                              to_string(norm_kind), exact));
    }
  }
  const std::size_t n = a.rows;
  OperatorSpec op;
  op.name = fmt::format("affine(dim={}, rho={})", n, rho);
  op.dim = n;
  op.rho = rho;
  op.norm = norm_kind;
  op.eval = [a, b](const Vec& x) {
    Vec y(b);
    for (std::size_t i = 0; i < a.rows; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < a.cols; ++j) s += a(i, j) * x[j];
      y[i] += s;
    }
    return y;
  };

  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd rhs(n);
  for (std::size_t i = 0; i < n; ++i) {
    rhs(i) = b[i];
    for (std::size_t j = 0; j < n; ++j) m(i, j) -= a(i, j);
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  if (lu.isInvertible()) {
    Eigen::VectorXd sol = lu.solve(rhs);
    op.fixed_point = Vec(sol.data(), sol.data() + n);
  }
  return op;
}

double beta_product(std::span<const double> betas, long i, long n) {
  if (i <= 0) return 0.0;
  if (i > n) return 1.0;
  if (static_cast<std::size_t>(n) >= betas.size()) throw std::out_of_range("beta_product: n beyond the schedule");
  double p = 1.0;
  for (long j = i; j <= n; ++j) p *= betas[static_cast<std::size_t>(j)];
  return p;
}

Vec sign_init_x0(double /*rho*/, std::span<const double> betas, std::size_t n) {
  if (betas.size() < n + 1) throw std::invalid_argument("sign_init_x0: schedule must define beta_0..beta_n");
  const long nn = static_cast<long>(n);
  Vec x(n + 2);
  x.front() = -1.0;
  x.back() = 1.0;
  for (long i = 1; i <= nn; ++i) {
    const double coef =
        -beta_product(betas, i + 1, nn) + 2.0 * beta_product(betas, i, nn) - beta_product(betas, i - 1, nn);
    x[static_cast<std::size_t>(i)] = coef >= 0.0 ? 1.0 : -1.0;
  }
  return x;
}

double uniform_pm1(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + (index + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  z ^= z >> 31;
  const double u = static_cast<double>(z >> 11) * 0x1.0p-53;
  return 2.0 * u - 1.0;
}

Vec random_pm1(std::size_t dim, std::uint64_t seed) {
  Vec x(dim);
  for (std::size_t i = 0; i < dim; ++i) x[i] = uniform_pm1(seed, i);
  return x;
}

Vec random_goebel_point(std::size_t grid, std::uint64_t seed) {
  Vec x(grid);
  for (std::size_t i = 0; i < grid; ++i) x[i] = 0.5 * (uniform_pm1(seed, i) + 1.0);
  x.front() = 0.0;
  x.back() = 1.0;
  return x;
}

LipschitzAudit audit_lipschitz(const OperatorSpec& op, const std::function<Vec(std::uint64_t)>& sampler,
                               std::size_t pairs, double rel_tol) {
  LipschitzAudit out;
  out.pairs = pairs;
  for (std::size_t k = 0; k < pairs; ++k) {
    const Vec x = sampler(2 * k);
    const Vec y = sampler(2 * k + 1);
    const double dx = op.dist(x, y);
    const double dt = op.dist(op.apply(x), op.apply(y));
    if (dx > 0.0) out.worst_ratio = std::max(out.worst_ratio, dt / dx);
    if (dt > op.rho * dx * (1.0 + rel_tol)) out.ok = false;
  }
  return out;
}

} // namespace halpern
