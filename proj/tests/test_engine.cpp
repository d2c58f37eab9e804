#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "halpern/engine.hpp"
#include "halpern/transport.hpp"

using namespace halpern;

TEST_CASE("beta one reproduces banach-picard") {
  const auto op = rotation_contraction(0.98, std::numbers::pi / 4);
  const Vec x0{1.0, -0.3};
  const auto h = halpern_run(op, x0, banach_picard_betas(100), 100);
  const auto bp = banach_picard_run(op, x0, 100);
  REQUIRE(h.steps.size() == 101);
  for (std::size_t n = 0; n <= 100; ++n) CHECK(h.steps[n].residual == bp.steps[n].residual);
}

TEST_CASE("beta zero stays at the anchor") {
  const auto op = cyclic_shift(1.3, 5);
  const Vec x0 = random_pm1(5, 9);
  const auto t = halpern_run(op, x0, std::vector<double>(21, 0.0), 20);
  for (const auto& s : t.steps) {
    CHECK(s.residual == t.steps[0].residual);
    CHECK(s.dist_x0 == 0.0);
  }
  CHECK(t.last_iterate == x0);
}

TEST_CASE("goebel residual is constant for any betas") {
  const auto op = goebel_map(2.0, 101);
  const Vec x0 = random_goebel_point(101, 5);
  for (const auto& betas : {betas_of(m_opt_schedule(Rho(2), 50)), std::vector<double>(51, 0.3)}) {
    const auto t = halpern_run(op, x0, betas, 50);
    for (const auto& s : t.steps) CHECK(std::abs(s.residual - 0.5) <= 1e-14);
  }
}

TEST_CASE("banach-picard examples") {
  const auto rot = rotation_contraction(0.98, std::numbers::pi / 2);
  const auto t = banach_picard_run(rot, {1.0, 0.0}, 200);
  for (std::size_t n = 0; n <= 200; ++n) {
    CHECK(t.steps[n].residual <= std::pow(0.98, static_cast<double>(n)) * t.steps[0].residual * (1 + 1e-12));
  }
  Matrix zero(2, 2, 0.0);
  const auto constant = affine_operator(zero, {0.4, 0.1}, 1e-3, NormKind::LInf);
  const auto c = banach_picard_run(constant, {1.0, 1.0}, 3);
  CHECK(c.steps[1].residual == 0.0);
  const auto iso = cyclic_shift(1.0, 4);
  const auto p = banach_picard_run(iso, {1.0, 0.0, 0.0, 0.0}, 20);
  for (const auto& s : p.steps) CHECK(s.residual == p.steps[0].residual);
}

TEST_CASE("schedule validation") {
  const auto op = cyclic_shift(0.5, 3);
  CHECK_THROWS_AS(halpern_run(op, {1.0, 0.0, 0.0}, std::vector<double>{0.0, 0.5}, 3), std::invalid_argument);
  CHECK_THROWS_AS(halpern_run(op, {1.0, 0.0, 0.0}, std::vector<double>{0.0, 1.5}, 1), std::invalid_argument);
  CHECK_THROWS_AS(halpern_run(op, {1.0, 0.0}, std::vector<double>{0.0, 0.5}, 1), DomainError);
  const auto g = goebel_map(2.0, 11);
  CHECK_THROWS_AS(halpern_run(g, Vec(11, 0.5), std::vector<double>{0.0, 0.5}, 1), DomainError);
}

TEST_CASE("freeze steps copy the previous iterate") {
  const auto op = cyclic_shift(3.0, 4);
  const Vec x0 = random_pm1(4, 2);
  const std::vector<StepAction> acts{{0.0, false}, {0.5, false}, {0.0, true}, {0.0, true}};
  const auto t = halpern_run(op, x0, std::span<const StepAction>(acts), 3);
  CHECK(t.steps[2].frozen);
  CHECK(t.steps[3].residual == t.steps[1].residual);
  CHECK(t.steps[3].step_len == 0.0);
}

TEST_CASE("adaptive run") {
  for (double theta : {std::numbers::pi / 2, std::numbers::pi / 4}) {
    const auto op = rotation_contraction(0.98, theta);
    const auto t = ada_halpern_run(op, {1.0, 0.0}, 2000);
    REQUIRE(t.steps.size() == 2001);
    const Rho rho(0.98);
    double r_star = 1.0;
    for (std::size_t n = 1; n <= 2000; ++n) {
      const double r = *t.steps[n].bound;
      const double prev = *t.steps[n - 1].bound;
      r_star = v_opt(rho, r_star);
      CHECK(t.steps[n].beta >= t.steps[n - 1].beta - 1e-12);
      CHECK(r >= r_limit(rho) - 1e-12);
      CHECK(r <= v_opt(rho, prev) + 1e-12);
      CHECK(v_opt(rho, prev) <= r_star + 1e-12);
      CHECK(t.steps[n].residual <= t.steps[n].kappa_hat * r * (1.0 + 1e-9) + 1e-300);
    }
  }
  // The adaptive run reaches beta = 1 before m-opt on the pi/4 rotation.
  const auto t = ada_halpern_run(rotation_contraction(0.98, std::numbers::pi / 4), {1.0, 0.0}, 500);
  const auto rows = m_opt_schedule(Rho(0.98), 500);
  std::size_t ada_switch = 0, mopt_switch = 0;
  while (t.steps[ada_switch].beta < 1.0) ++ada_switch;
  while (rows[mopt_switch].beta < 1.0) ++mopt_switch;
  CHECK(ada_switch < mopt_switch);

  const auto fixed = ada_halpern_run(cyclic_shift(0.5, 3), Vec(3, 0.0), 10);
  CHECK(fixed.converged);
  CHECK(fixed.steps.size() == 1);
}

TEST_CASE("mann arrays") {
  CHECK_THROWS_AS(MannArray({{1.0}, {0.7, 0.2}}), std::invalid_argument);
  CHECK_THROWS_AS(MannArray({{1.0}, {1.0, 0.0}}), std::invalid_argument);
  CHECK_THROWS_AS(MannArray({{1.0}, {0.5}}), std::invalid_argument);
  CHECK_THROWS_AS(MannArray({{1.0}, {1.5, -0.5}}), std::invalid_argument);

  const auto op = cyclic_shift(1.2, 6);
  const Vec x0 = random_pm1(6, 4);
  const auto betas = betas_of(m_opt_schedule(Rho(1.2), 40));
  const auto h = halpern_run(op, x0, betas, 40);
  const auto m = mann_run(op, x0, MannArray::halpern(betas), 40);
  for (std::size_t n = 0; n <= 40; ++n) CHECK(h.steps[n].residual == m.steps[n].residual);
  const auto bp = mann_run(op, x0, MannArray::banach_picard(40), 40);
  const auto direct = banach_picard_run(op, x0, 40);
  for (std::size_t n = 0; n <= 40; ++n) CHECK(bp.steps[n].residual == direct.steps[n].residual);
}

TEST_CASE("uniform mann residuals under the transport bound") {
  const std::size_t n = 12;
  const auto op = cyclic_shift(0.7, 6);
  const auto pi = MannArray::uniform(n);
  const auto table = ot_bounds(Rho(0.7), pi, n);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Vec x0 = random_pm1(6, seed);
    const double kappa = orbit_diameter(op, mann_orbit(op, x0, pi, n));
    const auto t = mann_run(op, x0, pi, n);
    for (std::size_t k = 0; k <= n; ++k) CHECK(t.steps[k].residual <= kappa * table.R[k] * (1.0 + 1e-9));
  }
}

TEST_CASE("bound checks") {
  const std::size_t n = 200;
  const Rho rho(1.5);
  const auto op = cyclic_shift(rho, 10);
  const auto rows = m_opt_schedule(rho, n);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Vec x0 = random_pm1(10, seed);
    const double kappa = orbit_diameter(op, mann_orbit(op, x0, MannArray::halpern(betas_of(rows)), n));
    CHECK(check_bounds(halpern_run(op, x0, betas_of(rows), n), rows, kappa).all_ok());
  }
  // Halving the scale must produce failures.
  const Vec x0 = random_pm1(10, 0);
  const double kappa = orbit_diameter(op, mann_orbit(op, x0, MannArray::halpern(betas_of(rows)), n));
  CHECK(check_bounds(halpern_run(op, x0, betas_of(rows), n), rows, 0.5 * kappa).failures() > 0);

  const auto l1 = l1_right_shift(0.8, 62);
  Vec e1(62, 0.0);
  e1[0] = 1.0;
  const auto flat = flat_schedule(Rho(0.8), 60);
  const auto report = check_bounds(halpern_run(l1, e1, betas_of(flat), 60), flat, 1.0);
  CHECK(report.all_ok());
  std::size_t kinds[4] = {0, 0, 0, 0};
  for (const auto& c : report.checks) ++kinds[static_cast<int>(c.kind)];
  for (auto k : kinds) CHECK(k == 61);

  const auto zeros = halpern_recursive_bounds(Rho(0.8), std::vector<double>(11, 0.0));
  const auto t = halpern_run(l1, e1, betas_of(zeros), 10);
  CHECK(check_bounds(t, zeros, t.steps[0].residual).all_ok());
}

TEST_CASE("orbit bound from the fixed point") {
  for (double r : {0.5, 0.98, 1.0}) {
    const auto op = rotation_contraction(r, std::numbers::pi / 3);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Vec x0 = random_pm1(2, seed);
      const double delta0 = op.dist(x0, *op.fixed_point);
      const auto t = halpern_run(op, x0, betas_of(m_opt_schedule(Rho(r), 100)), 100);
      for (const auto& s : t.steps) CHECK(s.kappa_hat <= (1.0 + r) * delta0 + 1e-9);
    }
  }
}

TEST_CASE("flat convergence envelope") {
  const auto op = cyclic_shift(2.0, 5);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto rep = flat_convergence_check(op, random_pm1(5, seed), seed < 5 ? 500 : 50);
    CHECK(rep.remark_ok);
    CHECK(rep.all_ok());
    CHECK(rep.initial_gap <= (std::sqrt(2.0) + 1.0) * rep.delta0 / 2.0 * (1 + 1e-12) + 1e-12);
  }
  // The limit point moves with the anchor; only x* is its own limit.
  const auto at_fixed = flat_convergence_check(op, Vec(5, 0.0), 100);
  CHECK(at_fixed.initial_gap <= 1e-12);
  CHECK(at_fixed.all_ok());
  const auto moved = flat_convergence_check(op, random_pm1(5, 1), 10);
  CHECK(flat_convergence_check(op, moved.limit_point, 10).initial_gap > 1e-3);
  CHECK_THROWS_AS(flat_convergence_check(cyclic_shift(0.9, 5), random_pm1(5, 1), 10), std::invalid_argument);
  CHECK_THROWS_AS(flat_convergence_check(cyclic_shift(3.0, 5), random_pm1(5, 1), 10), std::invalid_argument);
}

TEST_CASE("trace csv") {
  const auto t = halpern_run(cyclic_shift(0.5, 3), {1.0, 0.0, 0.0}, std::vector<double>{0.0, 0.5}, 1);
  std::ostringstream os;
  write_trace_csv(os, t);
  const auto text = os.str();
  CHECK(text.rfind("n,beta,residual", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
}
