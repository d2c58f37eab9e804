#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "halpern/analysis.hpp"

using namespace halpern;

TEST_CASE("pr bound") {
  // delta0 rho^n (1 - rho^2) / (1 - rho^{n+1})
  CHECK(std::abs(pr_bound(Rho(0.5), 1, 1.0) - 0.5) <= 1e-15);
  CHECK(std::abs(pr_bound(Rho(0.5), 0, 1.0) - 1.5) <= 1e-15);
  CHECK(std::abs(pr_bound(Rho(0.5), 3, 2.0) - 2.0 * 0.125 * 0.75 / (1.0 - 0.0625)) <= 1e-15);
  for (std::size_t n : {1u, 5u, 40u}) {
    const double limit = 2.0 / (n + 1.0);
    CHECK(std::abs(pr_bound(Rho(1.0 - 1e-8), n, 1.0) - limit) <= 1e-6 * limit);
  }
  CHECK_THROWS_AS(pr_bound(Rho(1.0), 1, 1.0), std::invalid_argument);
}

TEST_CASE("q_n") {
  for (double r : {0.1, 0.5, 0.9, 0.999}) CHECK(std::abs(q_n(Rho(r), 0) - 1.0) <= 1e-15);
  for (std::size_t n = 0; n <= 64; ++n) CHECK(q_n(Rho(1.0 - 1e-6), n) <= 4.0);
  const auto q = q_n_all(Rho(0.9), 200);
  for (std::size_t n = 1; n <= 200; ++n) CHECK(q[n] >= q[n - 1]);
  for (std::size_t n = 0; n <= 200; n += 17) CHECK(std::abs(q[n] - q_n(Rho(0.9), n)) <= 1e-12 * q[n]);
}

TEST_CASE("transition index") {
  for (double r : {0.1, 0.3, 0.5}) CHECK(n0_transition(Rho(r)) == 0);
  CHECK(n0_transition(Rho(0.625)) == 1);
  for (double r : {0.55, 0.7, 0.9, 0.98, 0.999}) CHECK(n0_transition(Rho(r)) == n0_transition_bracket(Rho(r)));
}

TEST_CASE("q_inf") {
  CHECK(std::abs(q_inf(Rho(0.625)) - 2.56) <= 1e-12);
  const auto seq = rho_z_sequences(30);
  for (std::size_t n = 0; n <= 30; ++n) {
    const double rn = seq.rho[n];
    CHECK(std::abs(q_inf(Rho(rn)) * std::pow(rn, n + 1.0) - 1.0) <= 1e-12);
  }
  double prev = 0.0;
  for (int k = 1; k <= 2000; ++k) {
    const double v = q_inf(Rho(k / 2001.0));
    CHECK(v >= prev);
    prev = v;
  }
  CHECK(std::abs(q_inf(Rho(1.0 - 1e-6)) - kESquared) <= 0.02 * kESquared);
}

TEST_CASE("q_inf has no jumps beyond the local slope") {
  const std::size_t pts = 2000;
  const double h = 0.9999 / pts;
  std::vector<double> v(pts);
  for (std::size_t k = 0; k < pts; ++k) v[k] = q_inf(Rho(h * (k + 1)));
  for (std::size_t k = 2; k + 1 < pts; ++k) {
    const double slope = std::max({v[k - 1] - v[k - 2], v[k + 1] - v[k], 1e-12 * h});
    CHECK(v[k] - v[k - 1] <= 10.0 * std::max(slope, (v[k + 1] - v[k - 1]) / 2.0) + 1e-12);
  }
}

TEST_CASE("normed over hilbert ratio stays below e squared") {
  double worst = 0.0;
  for (std::size_t k = 1; k <= 500; ++k) {
    const Rho rho(k / 501.0);
    const auto q = q_n_all(rho, 500);
    const double qi = q_inf(rho);
    for (double v : q) CHECK(v <= qi * (1.0 + 1e-12));
    worst = std::max(worst, qi);
  }
  CHECK(worst <= kESquared + 1e-9);
}

TEST_CASE("rho and z sequences") {
  const auto s = rho_z_sequences(1'000'000);
  CHECK(s.z[1] == 0.25);
  CHECK(s.rho[1] == 0.625);
  CHECK(s.z[2] == 25.0 / 64.0);
  CHECK(s.rho[2] == 89.0 / 128.0);
  for (std::size_t n = 2; n < s.rho_pow.size(); ++n) REQUIRE(s.rho_pow[n] < s.rho_pow[n - 1]);
  CHECK(std::abs(s.rho_pow.back() - 1.0 / kESquared) <= 1e-3);
  for (std::size_t n = 0; n <= 60; ++n) CHECK(std::abs(s.gap[n] - (1.0 - s.rho[n])) <= 1e-15);
}

TEST_CASE("logistic envelope") {
  const auto rows = logistic_sandwich(10'000);
  CHECK(rows[0].e == 0.25);
  CHECK(rows[0].lower == doctest::Approx(1.0 / (3.0 + std::log(3.0))));
  CHECK(rows[0].upper == doctest::Approx(1.0 / 3.0));
  CHECK(rows[1].e == 3.0 / 16.0);
  CHECK(rows[1000].e >= 1.0 / (1003.0 + std::log(1003.0)));
  CHECK(rows[1000].e <= 1.0 / 1003.0);
  for (const auto& r : rows) {
    CHECK(r.ok);
    CHECK(r.lower <= r.e);
    CHECK(r.e <= r.upper);
  }
  for (double r : {1.5, 2.0, 2.4}) CHECK(logistic_identity_gap(Rho(r), 10'000) <= 1e-12);
}

TEST_CASE("minimal displacement") {
  CHECK(minimal_displacement(Rho(2), 1.0) == 0.5);
  CHECK(minimal_displacement(Rho(1), 7.0) == 0.0);
  CHECK(minimal_displacement(Rho(3), 2.0) == doctest::Approx(2.0 * r_limit(Rho(3))));
  CHECK_THROWS_AS(minimal_displacement(Rho(0.5), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(minimal_displacement(Rho(2), 0.0), std::invalid_argument);
  CHECK(std::abs(m_opt_schedule(Rho(2), 10'000).back().bound - 0.5) <= 1e-3);
}

TEST_CASE("speedup certificate") {
  const auto half = speedup_certificate(Rho(0.5));
  CHECK(half.n0 == 0);
  CHECK(half.ratio == 1.0);
  CHECK(half.all_ok());
  const auto nine = speedup_certificate(Rho(0.9));
  CHECK(nine.ratio > nine.transition_bound * (1 - 1e-12));
  CHECK(nine.all_ok());
  const auto close = speedup_certificate(Rho(0.999));
  CHECK(close.ratio >= 0.999 / kESquared / 0.001);
  CHECK(close.ratio > 100.0);
  CHECK(close.all_ok());
  for (int k = 1; k < 1000; ++k) CHECK(speedup_certificate(Rho(k / 1000.0)).all_ok());
}

TEST_CASE("comparison rows and the ratio figure data") {
  const std::vector<std::size_t> ns{0, 5, 50};
  const auto rows = comparison_rows(Rho(0.9), ns);
  REQUIRE(rows.size() == 4);
  CHECK(rows[1].n == 5u);
  CHECK_FALSE(rows.back().n.has_value());
  CHECK(rows[1].r_star == doctest::Approx(m_opt_schedule(Rho(0.9), 5).back().bound));

  CHECK(fig2_indices() == std::vector<std::size_t>{0, 1, 2, 3, 4, 6, 9, 13, 19, 32, 64});
  const auto grid = fig2_grid(100);
  CHECK(grid.size() == 100);
  CHECK(grid.front() > 0.0);
  CHECK(grid.back() == doctest::Approx(0.9999));
  std::ostringstream os;
  write_fig2_csv(os, grid, fig2_indices());
  const auto text = os.str();
  CHECK(text.rfind("rho,n,q_n,q_inf\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 100 * 11);
}
