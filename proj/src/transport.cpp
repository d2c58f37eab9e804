#include "halpern/transport.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

namespace halpern {

namespace {

constexpr double kMarginalTol = 1e-12;
constexpr double kDualTol = 1e-9;
constexpr std::size_t kMaxPivots = 100'000;
// Consecutive degenerate pivots after which pricing switches to Bland's rule.
constexpr std::size_t kBlandAfter = 50;

// Transportation simplex on a balanced p x q problem. Basic cells form a
// spanning tree of the bipartite row/column graph; zero-valued basic cells
// are kept so the tree stays connected under degeneracy.
class TransportSimplex {
public:
  TransportSimplex(std::vector<double> supply, std::vector<double> demand, Matrix cost)
      : p_(supply.size()), q_(demand.size()), supply_(std::move(supply)), demand_(std::move(demand)),
        cost_(std::move(cost)) {
    northwest_corner();
    compute_flows();
  }

  std::size_t solve() {
    double scale = 1.0;
    for (double c : cost_.data) scale = std::max(scale, std::abs(c));
    const double tol = 1e-13 * scale;
    const double total = std::accumulate(supply_.begin(), supply_.end(), 0.0);
    std::size_t pivots = 0;
    std::size_t degenerate_run = 0;
    for (;;) {
      compute_potentials();
      const bool bland = degenerate_run >= kBlandAfter;
      long best_i = -1;
      long best_j = -1;
      double best = -tol;
      for (std::size_t i = 0; i < p_ && !(bland && best_i >= 0); ++i) {
        for (std::size_t j = 0; j < q_; ++j) {
          const double rc = cost_(i, j) - ru_[i] - cv_[j];
          if (rc < best) {
            best = rc;
            best_i = static_cast<long>(i);
            best_j = static_cast<long>(j);
            if (bland) break;
          }
        }
      }
      if (best_i < 0) return pivots;
      if (++pivots > kMaxPivots) throw std::runtime_error("transportation simplex exceeded its pivot cap");

      const auto path = tree_path(static_cast<std::size_t>(best_i), p_ + static_cast<std::size_t>(best_j));
      // Cells on the path alternate -, +, -, ... starting next to the entering cell.
      std::size_t leave = path.front();
      double theta = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < path.size(); k += 2) {
        const std::size_t e = path[k];
        const double f = flow_[e];
        if (f < theta || (f == theta && cell_index(e) < cell_index(leave))) {
          theta = f;
          leave = e;
        }
      }
      basis_[leave] = {static_cast<std::size_t>(best_i), static_cast<std::size_t>(best_j)};
      compute_flows();
      degenerate_run = theta <= 1e-15 * total ? degenerate_run + 1 : 0;
    }
  }

  const std::vector<std::pair<std::size_t, std::size_t>>& basis() const { return basis_; }
  const std::vector<double>& flows() const { return flow_; }
  const std::vector<double>& col_potentials() const { return cv_; }

private:
  std::size_t cell_index(std::size_t e) const { return basis_[e].first * q_ + basis_[e].second; }

  void northwest_corner() {
    auto a = supply_;
    auto b = demand_;
    std::size_t i = 0;
    std::size_t j = 0;
    for (;;) {
      basis_.push_back({i, j});
      const double x = std::min(a[i], b[j]);
      a[i] -= x;
      b[j] -= x;
      if (i == p_ - 1 && j == q_ - 1) break;
      if (i == p_ - 1) ++j;
      else if (j == q_ - 1) ++i;
      else if (a[i] <= b[j]) ++i;
      else ++j;
    }
  }

  // Flows are determined by the tree: peel leaves, each leaf's remaining
  // supply or demand goes through its only edge.
  void compute_flows() {
    const std::size_t nodes = p_ + q_;
    std::vector<std::vector<std::size_t>> adj(nodes);
    for (std::size_t e = 0; e < basis_.size(); ++e) {
      adj[basis_[e].first].push_back(e);
      adj[p_ + basis_[e].second].push_back(e);
    }
    std::vector<double> rem(nodes);
    for (std::size_t i = 0; i < p_; ++i) rem[i] = supply_[i];
    for (std::size_t j = 0; j < q_; ++j) rem[p_ + j] = demand_[j];
    std::vector<std::size_t> degree(nodes);
    std::deque<std::size_t> leaves;
    for (std::size_t v = 0; v < nodes; ++v) {
      degree[v] = adj[v].size();
      if (degree[v] == 1) leaves.push_back(v);
    }
    std::vector<bool> done(basis_.size(), false);
    flow_.assign(basis_.size(), 0.0);
    while (!leaves.empty()) {
      const std::size_t v = leaves.front();
      leaves.pop_front();
      if (degree[v] != 1) continue;
      std::size_t e = 0;
      for (std::size_t cand : adj[v]) {
        if (!done[cand]) e = cand;
      }
      done[e] = true;
      const std::size_t w = v < p_ ? p_ + basis_[e].second : basis_[e].first;
      flow_[e] = rem[v];
      rem[w] -= rem[v];
      degree[v] = 0;
      if (--degree[w] == 1) leaves.push_back(w);
    }
  }

  void compute_potentials() {
    const std::size_t nodes = p_ + q_;
    std::vector<std::vector<std::size_t>> adj(nodes);
    for (std::size_t e = 0; e < basis_.size(); ++e) {
      adj[basis_[e].first].push_back(e);
      adj[p_ + basis_[e].second].push_back(e);
    }
    ru_.assign(p_, 0.0);
    cv_.assign(q_, 0.0);
    std::vector<bool> seen(nodes, false);
    std::deque<std::size_t> queue{0};
    seen[0] = true;
    while (!queue.empty()) {
      const std::size_t v = queue.front();
      queue.pop_front();
      for (std::size_t e : adj[v]) {
        const auto [i, j] = basis_[e];
        const std::size_t w = v < p_ ? p_ + j : i;
        if (seen[w]) continue;
        seen[w] = true;
        if (w >= p_) cv_[j] = cost_(i, j) - ru_[i];
        else ru_[i] = cost_(i, j) - cv_[j];
        queue.push_back(w);
      }
    }
  }

  // Basic edges on the tree path from node `from` to node `to`.
  std::vector<std::size_t> tree_path(std::size_t from, std::size_t to) const {
    const std::size_t nodes = p_ + q_;
    std::vector<std::vector<std::size_t>> adj(nodes);
    for (std::size_t e = 0; e < basis_.size(); ++e) {
      adj[basis_[e].first].push_back(e);
      adj[p_ + basis_[e].second].push_back(e);
    }
    constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> via(nodes, kNone);
    std::vector<bool> seen(nodes, false);
    std::deque<std::size_t> queue{from};
    seen[from] = true;
    while (!queue.empty()) {
      const std::size_t v = queue.front();
      queue.pop_front();
      if (v == to) break;
      for (std::size_t e : adj[v]) {
        const std::size_t w = v < p_ ? p_ + basis_[e].second : basis_[e].first;
        if (seen[w]) continue;
        seen[w] = true;
        via[w] = e;
        queue.push_back(w);
      }
    }
    if (!seen[to]) throw std::logic_error("transport basis is not a spanning tree");
    std::vector<std::size_t> path;
    for (std::size_t v = to; v != from;) {
      const std::size_t e = via[v];
      path.push_back(e);
      v = v < p_ ? p_ + basis_[e].second : basis_[e].first;
    }
    std::reverse(path.begin(), path.end());
    return path;
  }

  std::size_t p_;
  std::size_t q_;
  std::vector<double> supply_;
  std::vector<double> demand_;
  Matrix cost_;
  std::vector<std::pair<std::size_t, std::size_t>> basis_;
  std::vector<double> flow_;
  std::vector<double> ru_;
  std::vector<double> cv_;
};

Vec padded(const Vec& v, std::size_t k) {
  Vec out(k, 0.0);
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

} // namespace

TransportSolution solve_transport(const Vec& pi_m, const Vec& pi_n, const Matrix& cost) {
  if (cost.rows != cost.cols) throw std::invalid_argument("transport cost must be square");
  const std::size_t k = cost.rows;
  if (pi_m.size() > k || pi_n.size() > k) throw std::invalid_argument("marginal longer than the cost matrix");
  for (std::size_t i = 0; i < k; ++i) {
    if (cost(i, i) != 0.0) throw std::invalid_argument("transport cost needs a zero diagonal");
    for (std::size_t j = 0; j < k; ++j) {
      if (!std::isfinite(cost(i, j)) || cost(i, j) < 0.0) {
        throw std::invalid_argument(fmt::format("transport cost ({}, {}) = {} is not finite and >= 0", i, j, cost(i, j)));
      }
    }
  }
  const Vec a = padded(pi_m, k);
  const Vec b = padded(pi_n, k);
  for (std::size_t i = 0; i < k; ++i) {
    if (!(a[i] >= 0.0) || !(b[i] >= 0.0)) throw std::invalid_argument("marginals must be non-negative");
  }
  const double sa = std::accumulate(a.begin(), a.end(), 0.0);
  const double sb = std::accumulate(b.begin(), b.end(), 0.0);
  if (std::abs(sa - sb) > kMarginalTol) {
    throw std::invalid_argument(fmt::format("marginal masses differ: {} vs {}", sa, sb));
  }

  TransportSolution sol;
  sol.plan = Matrix(k, k);
  sol.u.assign(k, 0.0);
  std::vector<std::size_t> rows;
  std::vector<std::size_t> cols;
  std::vector<double> supply;
  std::vector<double> demand;
  for (std::size_t i = 0; i < k; ++i) {
    const double z = std::min(a[i], b[i]);
    sol.plan(i, i) = z;
    if (a[i] - z > 0.0) {
      rows.push_back(i);
      supply.push_back(a[i] - z);
    }
    if (b[i] - z > 0.0) {
      cols.push_back(i);
      demand.push_back(b[i] - z);
    }
  }

  if (!rows.empty() && !cols.empty()) {
    Matrix sub(rows.size(), cols.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < cols.size(); ++c) sub(r, c) = cost(rows[r], cols[c]);
    }
    TransportSimplex simplex(supply, demand, sub);
    sol.pivots = simplex.solve();
    const auto& basis = simplex.basis();
    const auto& flows = simplex.flows();
    for (std::size_t e = 0; e < basis.size(); ++e) {
      double f = flows[e];
      if (f < 0.0) {
        if (f < -kMarginalTol) throw std::runtime_error(fmt::format("transport plan has negative mass {}", f));
        f = 0.0;
      }
      sol.plan(rows[basis[e].first], cols[basis[e].second]) += f;
    }
    // c-transform of the column potentials: a single potential that is
    // 1-Lipschitz for the metric cost and tight on the support.
    const auto& v = simplex.col_potentials();
    for (std::size_t i = 0; i < k; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < cols.size(); ++c) best = std::min(best, cost(i, cols[c]) - v[c]);
      sol.u[i] = best;
    }
  }

  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      sol.value += sol.plan(i, j) * cost(i, j);
      if (std::abs(sol.u[i] - sol.u[j]) > cost(i, j) + kDualTol) {
        throw std::runtime_error(fmt::format("dual potential violates |u_{} - u_{}| <= cost ({} > {}); cost not metric?",
                                             i, j, std::abs(sol.u[i] - sol.u[j]), cost(i, j)));
      }
    }
    sol.dual_value += sol.u[i] * (a[i] - b[i]);
  }
  return sol;
}

BoundTable::BoundTable(double rho, std::size_t n) : rho_(rho), n_(n), d_(n + 2, n + 2), c_(n + 2, n + 2) {
  R.assign(n + 1, 0.0);
  duals.resize((n + 1) * (n + 1));
  duality_gaps.assign((n + 1) * (n + 1), 0.0);
}

BoundTable ot_bounds(Rho rho, const MannArray& pi, std::size_t n_max) {
  if (pi.size() < n_max + 1) throw std::invalid_argument("Mann array must define rows 0..N");
  if (n_max > 128) throw std::invalid_argument("transport bounds are limited to N <= 128");
  BoundTable t(rho, n_max);
  const long N = static_cast<long>(n_max);
  t.d(-1, -1) = 0.0;
  t.c(-1, -1) = 0.0;
  for (long n = 0; n <= N; ++n) {
    t.d(-1, n) = t.d(n, -1) = 1.0 / rho;
    t.c(-1, n) = t.c(n, -1) = 1.0;
  }
  for (long n = 0; n <= N; ++n) {
    const std::size_t k = static_cast<std::size_t>(n) + 1;
    Matrix cost(k, k);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) cost(i, j) = t.c(static_cast<long>(i) - 1, static_cast<long>(j) - 1);
    }
    const std::size_t slot_base = static_cast<std::size_t>(n);
    t.d(n, n) = 0.0;
    t.c(n, n) = 0.0;
    t.duals[slot_base * (n_max + 1) + slot_base] = Vec(k, 0.0);
    for (long m = 0; m < n; ++m) {
      const auto sol = solve_transport(pi.row(static_cast<std::size_t>(m)), pi.row(static_cast<std::size_t>(n)), cost);
      t.d(m, n) = t.d(n, m) = sol.value;
      t.c(m, n) = t.c(n, m) = std::min(1.0, rho * sol.value);
      const std::size_t slot = static_cast<std::size_t>(m) * (n_max + 1) + static_cast<std::size_t>(n);
      t.duals[slot] = sol.u;
      t.duality_gaps[slot] = sol.value - sol.dual_value;
    }
    const auto& w = pi.row(static_cast<std::size_t>(n));
    double r = 0.0;
    for (long i = 0; i <= n; ++i) r += w[static_cast<std::size_t>(i)] * t.c(i - 1, n);
    t.R[static_cast<std::size_t>(n)] = r;
  }
  return t;
}

AdversarialInstance build_adversarial_instance(const BoundTable& table, double kappa, const MannArray& pi) {
  if (!(kappa > 0.0) || !std::isfinite(kappa)) throw std::invalid_argument("kappa must be positive");
  const long N = static_cast<long>(table.horizon());
  if (pi.size() < table.horizon() + 1) throw std::invalid_argument("Mann array must define rows 0..N");

  AdversarialInstance inst;
  inst.rho = table.rho();
  inst.kappa = kappa;
  inst.horizon = table.horizon();
  for (long m = -1; m <= N; ++m) {
    for (long n = m; n <= N; ++n) inst.index_set.push_back({m, n});
  }
  const std::size_t dim = inst.index_set.size();
  const std::size_t count = table.horizon() + 2; // y^0 .. y^{N+1}
  inst.y.assign(count, Vec(dim, 0.0));

  for (std::size_t q = 0; q < dim; ++q) {
    const auto [m, n] = inst.index_set[q];
    if (m < 0) {
      for (std::size_t k = 0; k < count; ++k) inst.y[k][q] = kappa * table.c(static_cast<long>(k) - 1, n);
      continue;
    }
    // McShane-Whitney extension of u^{m,n} from 0..n to 0..N+1.
    Vec u = table.dual(m, n);
    u.resize(count);
    for (long i = n + 1; i < static_cast<long>(count); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (long k = 0; k <= n; ++k) best = std::min(best, u[static_cast<std::size_t>(k)] + table.c(k - 1, i - 1));
      u[static_cast<std::size_t>(i)] = best;
    }
    for (long i = 0; i < static_cast<long>(count); ++i) {
      for (long j = 0; j < static_cast<long>(count); ++j) {
        const double gap = std::abs(u[static_cast<std::size_t>(i)] - u[static_cast<std::size_t>(j)]);
        if (gap > table.c(i - 1, j - 1) + kDualTol) {
          throw std::runtime_error(fmt::format("dual infeasible at cell ({}, {}): |u_{} - u_{}| = {} > c = {}", m, n, i,
                                               j, gap, table.c(i - 1, j - 1)));
        }
      }
    }
    const double lo = *std::min_element(u.begin(), u.end());
    for (std::size_t k = 0; k < count; ++k) inst.y[k][q] = kappa * (u[k] - lo);
  }

  for (std::size_t k = 0; k <= table.horizon(); ++k) {
    const auto& w = pi.row(k);
    Vec x(dim, 0.0);
    for (std::size_t i = 0; i <= k; ++i) {
      if (w[i] == 0.0) continue;
      for (std::size_t q = 0; q < dim; ++q) x[q] += w[i] * inst.y[i][q];
    }
    inst.x.push_back(std::move(x));
  }
  return inst;
}

AdversarialInstance build_adversarial_instance(Rho rho, double kappa, const MannArray& pi, std::size_t n) {
  return build_adversarial_instance(ot_bounds(rho, pi, n), kappa, pi);
}

double TightnessCheck::abs_diff() const { return std::abs(lhs - rhs); }

bool TightnessReport::all_ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const TightnessCheck& c) { return c.ok; });
}

std::size_t TightnessReport::failures() const {
  return static_cast<std::size_t>(
      std::count_if(checks.begin(), checks.end(), [](const TightnessCheck& c) { return !c.ok; }));
}

TightnessReport verify_tightness(const AdversarialInstance& inst, const BoundTable& table) {
  constexpr double kTol = 1e-9;
  if (inst.horizon != table.horizon()) throw std::invalid_argument("instance and table horizons differ");
  const double kappa = inst.kappa;
  const double abs_tol = kTol * std::max(1.0, kappa);
  const long N = static_cast<long>(inst.horizon);
  auto sup = [](const Vec& a, const Vec& b) { return distance(NormKind::LInf, a, b); };
  auto idx = [](long k) { return static_cast<std::size_t>(k); };

  TightnessReport report;
  auto equal = [&](std::string name, long m, long n, double lhs, double rhs) {
    report.checks.push_back({std::move(name), m, n, lhs, rhs, std::abs(lhs - rhs) <= abs_tol});
  };
  for (long n = 0; n <= N; ++n) {
    for (long m = 0; m <= n; ++m) {
      const double dx = sup(inst.x[idx(m)], inst.x[idx(n)]);
      const double dy = sup(inst.y[idx(m + 1)], inst.y[idx(n + 1)]);
      equal("distance", m, n, dx, kappa * table.d(m, n));
      equal("image_distance", m, n, dy, kappa * table.c(m, n));
      report.checks.push_back({"orbit_lipschitz", m, n, dy, inst.rho * dx, dy <= inst.rho * dx * (1.0 + kTol)});
    }
    equal("residual", n, n, sup(inst.x[idx(n)], inst.y[idx(n + 1)]), kappa * table.R[idx(n)]);
    equal("anchor_bound", -1, n, sup(inst.y[0], inst.y[idx(n + 1)]), kappa);
  }
  return report;
}

} // namespace halpern
