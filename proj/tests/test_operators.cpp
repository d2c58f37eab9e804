#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "halpern/operators.hpp"

using namespace halpern;

namespace {

Vec sampler_pm1(std::size_t dim, std::uint64_t seed) { return random_pm1(dim, seed); }

} // namespace

TEST_CASE("norms") {
  const Vec x{3.0, -4.0};
  CHECK(norm(NormKind::LInf, x) == 4.0);
  CHECK(norm(NormKind::L1, x) == 7.0);
  CHECK(norm(NormKind::L2, x) == 5.0);
  CHECK(parse_norm_kind(to_string(NormKind::L1)) == NormKind::L1);
  CHECK_THROWS_AS(parse_norm_kind("l7"), std::invalid_argument);
}

TEST_CASE("norm axioms on random vectors") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (auto kind : {NormKind::LInf, NormKind::L1, NormKind::L2}) {
    for (int t = 0; t < 500; ++t) {
      Vec x(6), y(6), s(6);
      for (std::size_t i = 0; i < 6; ++i) x[i] = u(gen), y[i] = u(gen), s[i] = x[i] + y[i];
      const double a = u(gen);
      Vec ax(6);
      for (std::size_t i = 0; i < 6; ++i) ax[i] = a * x[i];
      CHECK(norm(kind, x) >= 0.0);
      CHECK(norm(kind, s) <= norm(kind, x) + norm(kind, y) + 1e-12);
      CHECK(std::abs(norm(kind, ax) - std::abs(a) * norm(kind, x)) <= 1e-12 * (1.0 + norm(kind, ax)));
      CHECK(distance(kind, x, y) == doctest::Approx(distance(kind, y, x)));
    }
    CHECK(norm(kind, Vec(4, 0.0)) == 0.0);
  }
}

TEST_CASE("rotation contraction") {
  const auto op = rotation_contraction(0.98, std::numbers::pi / 2);
  const auto y = op.apply({1.0, 0.0});
  CHECK(std::abs(y[0]) <= 1e-15);
  CHECK(std::abs(y[1] - 0.98) <= 1e-15);
  REQUIRE(op.fixed_point);
  CHECK(norm(NormKind::LInf, *op.fixed_point) == 0.0);

  const auto id = rotation_contraction(1.0, 0.0);
  const Vec p{0.3, -0.7};
  CHECK(id.apply(p) == p);

  // At theta = pi/4 the map is rho/sqrt2 times a rotation in the Euclidean norm.
  const auto quarter = rotation_contraction(0.98, std::numbers::pi / 4);
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Vec a = random_pm1(2, s);
    const Vec b = random_pm1(2, s + 1000);
    const double ratio = distance(NormKind::L2, quarter.apply(a), quarter.apply(b)) / distance(NormKind::L2, a, b);
    CHECK(std::abs(ratio - 0.98 / std::sqrt(2.0)) <= 1e-12);
  }
}

TEST_CASE("cyclic shift") {
  const auto op = cyclic_shift(0.98, 3);
  const auto y = op.apply({1.0, 2.0, 3.0});
  CHECK(std::abs(y[0] - 0.98 * 3) <= 1e-15);
  CHECK(std::abs(y[1] - 0.98 * 1) <= 1e-15);
  CHECK(std::abs(y[2] - 0.98 * 2) <= 1e-15);
  const auto two = cyclic_shift(2.0, 2);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Vec x = random_pm1(2, s);
    CHECK(norm(NormKind::LInf, two.apply(x)) == 2.0 * norm(NormKind::LInf, x));
  }
  CHECK_THROWS_AS(cyclic_shift(1.0, 1), std::invalid_argument);
}

TEST_CASE("goebel map") {
  const auto op = goebel_map(2.0, 11);
  Vec ramp(11);
  for (std::size_t i = 0; i < 11; ++i) ramp[i] = i / 10.0;
  const auto y = op.apply(ramp);
  for (std::size_t i = 0; i < 11; ++i) CHECK(std::abs(y[i] - 2.0 * std::max(ramp[i] - 0.5, 0.0)) <= 1e-15);
  CHECK(y.front() == 0.0);
  CHECK(y.back() == 1.0);
  CHECK_THROWS_AS(op.apply(Vec(11, 0.5)), DomainError);
  CHECK_THROWS_AS(goebel_map(1.0, 11), std::invalid_argument);

  for (double rho : {1.2, 2.0, 5.0}) {
    const auto g = goebel_map(rho, 101);
    for (std::uint64_t s = 0; s < 100; ++s) {
      const Vec x = random_goebel_point(101, s);
      REQUIRE(g.in_domain(x));
      CHECK(std::abs(g.residual_norm(x, g.apply(x)) - (1.0 - 1.0 / rho)) <= 1e-14);
    }
  }
}

TEST_CASE("l1 right shift") {
  const auto op = l1_right_shift(0.5, 3);
  const auto y = op.apply({1.0, 0.0, 0.0});
  CHECK(y == Vec{0.0, 0.5, 0.0});
  REQUIRE(op.fixed_point);
  CHECK(op.dist({1.0, 0.0, 0.0}, *op.fixed_point) == 1.0);
  CHECK(op.norm == NormKind::L1);
}

TEST_CASE("affine operator") {
  Matrix zero(3, 3, 0.0);
  const Vec v{1.0, -2.0, 0.5};
  const auto op = affine_operator(zero, v, 0.0 + 1e-3, NormKind::LInf);
  REQUIRE(op.fixed_point);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs((*op.fixed_point)[i] - v[i]) <= 1e-15);

  Matrix perm(4, 4, 0.0);
  perm(0, 3) = 0.9, perm(1, 0) = 0.9, perm(2, 1) = 0.9, perm(3, 2) = 0.9;
  const auto aff = affine_operator(perm, Vec(4, 0.0), 0.9, NormKind::LInf);
  const auto cyc = cyclic_shift(0.9, 4);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Vec x = random_pm1(4, s);
    const auto a = aff.apply(x);
    const auto c = cyc.apply(x);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(a[i] - c[i]) <= 1e-15);
  }
  CHECK(operator_norm(perm, NormKind::LInf) == doctest::Approx(0.9));
  // Declared constant below the operator norm is a configuration error.
  CHECK_THROWS_AS(affine_operator(perm, Vec(4, 0.0), 0.5, NormKind::LInf), std::invalid_argument);
}

TEST_CASE("beta products and the sign start") {
  const std::vector<double> betas{0.0, 0.5, 0.25};
  CHECK(beta_product(betas, 0, 2) == 0.0);
  CHECK(beta_product(betas, 1, 2) == 0.125);
  CHECK(beta_product(betas, 2, 2) == 0.25);
  CHECK(beta_product(betas, 3, 2) == 1.0);
  const auto x0 = sign_init_x0(0.7, betas, 2);
  REQUIRE(x0.size() == 4);
  CHECK(x0.front() == -1.0);
  CHECK(x0.back() == 1.0);
  for (double v : x0) CHECK(std::abs(v) == 1.0);
}

TEST_CASE("counter-based random draws") {
  CHECK(uniform_pm1(42, 7) == uniform_pm1(42, 7));
  CHECK(uniform_pm1(42, 7) != uniform_pm1(43, 7));
  const auto a = random_pm1(100, 42);
  const auto b = random_pm1(200, 42);
  for (std::size_t i = 0; i < 100; ++i) {
    CHECK(a[i] == b[i]);
    CHECK(a[i] >= -1.0);
    CHECK(a[i] <= 1.0);
  }
  double mean = 0.0;
  const auto big = random_pm1(100'000, 1);
  for (double v : big) mean += v;
  CHECK(std::abs(mean / 100'000.0) < 0.01);
}

TEST_CASE("lipschitz audit on every built-in map") {
  const auto audit = [](const OperatorSpec& op, const std::function<Vec(std::uint64_t)>& sampler) {
    const auto a = audit_lipschitz(op, sampler, 10'000);
    CHECK(a.pairs == 10'000);
    CHECK(a.ok);
    CHECK(a.worst_ratio <= op.rho * (1.0 + 1e-12));
  };
  audit(rotation_contraction(0.98, std::numbers::pi / 2), [](std::uint64_t s) { return sampler_pm1(2, s); });
  audit(rotation_contraction(0.98, std::numbers::pi / 4), [](std::uint64_t s) { return sampler_pm1(2, s); });
  audit(cyclic_shift(1.5, 10), [](std::uint64_t s) { return sampler_pm1(10, s); });
  audit(cyclic_shift(0.7, 10, NormKind::L1), [](std::uint64_t s) { return sampler_pm1(10, s); });
  audit(l1_right_shift(0.8, 12), [](std::uint64_t s) { return sampler_pm1(12, s); });
  audit(goebel_map(2.0, 101), [](std::uint64_t s) { return random_goebel_point(101, s); });

  // A misdeclared constant is caught.
  auto wrong = cyclic_shift(1.5, 10);
  wrong.rho = 1.0;
  CHECK_FALSE(audit_lipschitz(wrong, [](std::uint64_t s) { return sampler_pm1(10, s); }, 100).ok);
}
