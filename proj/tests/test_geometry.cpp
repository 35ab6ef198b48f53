#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "oracles.hpp"
#include "scanmap/errors.hpp"
#include "scanmap/geometry.hpp"

using namespace scanmap;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_SUITE_BEGIN("geometry");

TEST_CASE("scan transform matches the direct substitutions") {
  ScannerPose origin_pose{0, 0, 0, 0};

  SUBCASE("beam along +z") {
    const Point3 p = transform_scan_sample(origin_pose, {0.0, 1.0, 0.0, 0.0});
    CHECK(std::abs(p.x) < 1e-12);
    CHECK(std::abs(p.y) < 1e-12);
    CHECK(p.z == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("horizontal beam at quarter revolution") {
    const Point3 p = transform_scan_sample(origin_pose, {kPi / 2, 2.0, 0.0, 0.0});
    CHECK(std::abs(p.x) < 1e-12);
    CHECK(p.y == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(std::abs(p.z) < 1e-12);
  }
  SUBCASE("translated and rotated pose") {
    const Point3 p = transform_scan_sample({1, 1, kPi / 2, 0}, {kPi / 2, 1.0, 0.0, 0.0});
    CHECK(std::abs(p.x) < 1e-12);
    CHECK(p.y == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(p.z) < 1e-12);
  }
  SUBCASE("second half-revolution sees the pending step") {
    const Point3 p = transform_scan_sample(origin_pose, {3 * kPi / 2, 1.0, 0.0, kPi});
    CHECK(std::abs(p.x) < 1e-12);
    CHECK(p.y == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(p.z) < 1e-12);
  }
}

TEST_CASE("scan transform agrees with a rotation-matrix oracle") {
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> coord(-5.0, 5.0);
  std::uniform_real_distribution<double> angle(0.0, 2 * kPi);
  std::uniform_real_distribution<double> range(0.05, 12.0);

  for (int i = 0; i < 10000; ++i) {
    ScannerPose pose{coord(rng), coord(rng), angle(rng), coord(rng)};
    ScanSample sample{angle(rng), range(rng), 0.0, angle(rng) / 4};
    const Point3 got = transform_scan_sample(pose, sample);
    const Point3 want = oracles::transform_by_rotation_matrix(pose, sample);
    CHECK(std::abs(got.x - want.x) < 1e-9);
    CHECK(std::abs(got.y - want.y) < 1e-9);
    CHECK(std::abs(got.z - want.z) < 1e-9);
  }
}

TEST_CASE("scan transform preserves range and ignores the branch when step is zero") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> angle(0.0, 2 * kPi);
  std::uniform_real_distribution<double> range(0.01, 20.0);
  for (int i = 0; i < 2000; ++i) {
    const double theta = angle(rng);
    const double L = range(rng);
    const Point3 p = transform_scan_sample({0, 0, 0, 0}, {theta, L, 0.0, 0.0});
    CHECK(norm(p) == doctest::Approx(L).epsilon(1e-9));

    // With no pending step the branch choice is unobservable.
    const double yaw = angle(rng);
    const Point3 a = transform_scan_sample({1, 2, yaw, 0.5}, {theta, L, 0.0, 0.0});
    const double s = std::sin(theta);
    const Point3 b{1 - L * s * std::sin(yaw), 2 + L * s * std::cos(yaw),
                   L * std::cos(theta) + 0.5};
    CHECK(std::abs(a.x - b.x) < 1e-12);
    CHECK(std::abs(a.y - b.y) < 1e-12);
    CHECK(std::abs(a.z - b.z) < 1e-12);
  }
}

TEST_CASE("scan transform rejects bad input") {
  CHECK_THROWS_AS(transform_scan_sample({0, 0, 0, 0}, {0.0, 0.0, 0.0, 0.0}), InputDomainError);
  CHECK_THROWS_AS(transform_scan_sample({0, 0, 0, 0}, {0.0, -1.0, 0.0, 0.0}), InputDomainError);
  CHECK_THROWS_AS(transform_scan_sample({std::nan(""), 0, 0, 0}, {0.0, 1.0, 0.0, 0.0}),
                  InputDomainError);
  CHECK_THROWS_AS(transform_scan_sample({0, 0, 0, 0}, {0.0, 1.0, 0.0, -0.1}), InputDomainError);
}

TEST_CASE("motor yaw accumulates modulo a full turn") {
  const ScannerPose base{3, -2, 0, 0.4};
  CHECK(advance_motor_yaw(base, 0.0).yaw == 0.0);

  ScannerPose p = base;
  p.yaw = 3 * kPi / 2;
  const ScannerPose stepped = advance_motor_yaw(p, kPi);
  CHECK(stepped.yaw == doctest::Approx(kPi / 2).epsilon(1e-12));
  CHECK(stepped.x == base.x);
  CHECK(stepped.y == base.y);

  // Closing the loop in N equal steps lands back at the start angle.
  for (int n : {5, 12, 36}) {
    ScannerPose q = base;
    for (int i = 0; i < n; ++i) q = advance_motor_yaw(q, 2 * kPi / n);
    CHECK(std::abs(wrap_pi(q.yaw)) < 1e-9);
  }

  CHECK_THROWS_AS(advance_motor_yaw(base, -0.1), InputDomainError);
}

TEST_CASE("covariance intersection weight selection") {
  CHECK(select_omega(0.1, 0.1) == doctest::Approx(0.5));
  CHECK(select_omega(0.3, 0.1) == doctest::Approx(0.25));
  CHECK(select_omega(1e9, 1.0) == doctest::Approx(1.0 / (1e9 + 1.0)));
  CHECK(select_omega(1e-6, 1.0) == 0.5);  // capped
  CHECK_THROWS_AS(select_omega(0.0, 1.0), InputDomainError);
  CHECK_THROWS_AS(select_omega(1.0, -1.0), InputDomainError);
}

TEST_CASE("covariance intersection fusion") {
  SUBCASE("identical inputs are a fixed point") {
    const GaussianScalarEstimate e{0.3, 0.04, 1.5};
    const auto fused = ci_fuse(e, e, 0.5);
    CHECK(fused.mean == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(fused.variance == doctest::Approx(0.04).epsilon(1e-12));
    CHECK(fused.timestamp == 1.5);
  }
  SUBCASE("equal weights average the means") {
    const auto fused = ci_fuse({0.0, 1.0, 0.0}, {1.0, 1.0, 0.0}, 0.5);
    CHECK(fused.mean == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(fused.variance == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("vanishing weight returns the first source") {
    const auto fused = ci_fuse({0.2, 0.5, 0.0}, {1.0, 0.5, 0.0}, 1e-12);
    CHECK(fused.mean == doctest::Approx(0.2).epsilon(1e-9));
    CHECK(fused.variance == doctest::Approx(0.5).epsilon(1e-9));
  }
  SUBCASE("means fuse on the circle, not the line") {
    const auto fused = ci_fuse({0.1, 0.01, 0.0}, {2 * kPi - 0.1, 0.01, 0.0}, 0.5);
    CHECK(std::abs(wrap_pi(fused.mean)) < 1e-12);  // midpoint is 0, not pi
  }
  SUBCASE("parameter validation") {
    const GaussianScalarEstimate e{0.0, 1.0, 0.0};
    CHECK_THROWS_AS(ci_fuse(e, e, 0.0), ParameterError);
    CHECK_THROWS_AS(ci_fuse(e, e, 0.6), ParameterError);
    CHECK_THROWS_AS(ci_fuse({0.0, 0.0, 0.0}, e, 0.5), InputDomainError);
    CHECK_THROWS_AS(ci_fuse(e, {0.0, -2.0, 0.0}, 0.5), InputDomainError);
  }
}

TEST_CASE("fused variance stays between the input variances") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> var(1e-4, 10.0);
  std::uniform_real_distribution<double> mean(-kPi, kPi);
  std::uniform_real_distribution<double> omega(1e-6, 0.5);
  for (int i = 0; i < 5000; ++i) {
    const GaussianScalarEstimate a{mean(rng), var(rng), 0.0};
    const GaussianScalarEstimate b{mean(rng), var(rng), 0.0};
    const auto fused = ci_fuse(a, b, omega(rng));
    CHECK(fused.variance >= std::min(a.variance, b.variance) - 1e-12);
    CHECK(fused.variance <= std::max(a.variance, b.variance) + 1e-12);
  }
}

TEST_CASE("fusion is symmetric under swapping sources and weight") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> var(1e-3, 4.0);
  std::uniform_real_distribution<double> mean(-kPi, kPi);
  std::uniform_real_distribution<double> omega(0.01, 0.99);
  for (int i = 0; i < 5000; ++i) {
    const GaussianScalarEstimate a{mean(rng), var(rng), 0.0};
    const GaussianScalarEstimate b{mean(rng), var(rng), 0.0};
    const double w = omega(rng);
    const auto ab = detail::ci_fuse_convex(a, b, w);
    const auto ba = detail::ci_fuse_convex(b, a, 1.0 - w);
    CHECK(std::abs(wrap_pi(ab.mean - ba.mean)) < 1e-9);
    CHECK(ab.variance == doctest::Approx(ba.variance).epsilon(1e-9));
  }
}

TEST_CASE("stream matching handles the worked examples") {
  SUBCASE("single close pair") {
    const std::vector<double> a{1.0}, b{1.01};
    const auto pairs = match_streams(a, b, 0.05);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].a_index == 0);
    CHECK(pairs[0].b_index == 0);
    CHECK(pairs[0].skew == doctest::Approx(-0.01));
  }
  SUBCASE("skew exceeded") {
    const std::vector<double> a{1.0}, b{2.0};
    CHECK(match_streams(a, b, 0.05).empty());
  }
  SUBCASE("nearest assignment with exclusivity") {
    const std::vector<double> a{1.0, 1.1}, b{0.99, 1.09, 1.2};
    const auto pairs = match_streams(a, b, 0.05);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].b_index == 0);
    CHECK(pairs[1].b_index == 1);
  }
  SUBCASE("unsorted input rejected") {
    const std::vector<double> bad{2.0, 1.0}, ok{1.0};
    CHECK_THROWS_AS(match_streams(bad, ok, 0.1), InputDomainError);
    CHECK_THROWS_AS(match_streams(ok, bad, 0.1), InputDomainError);
  }
}

TEST_CASE("stream matching agrees with exhaustive search") {
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> dt(0.0, 0.2);
  std::uniform_real_distribution<double> skew_dist(0.01, 0.3);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> a, b;
    double t = 0.0;
    const int na = static_cast<int>(rng() % 20);
    const int nb = static_cast<int>(rng() % 20);
    for (int i = 0; i < na; ++i) a.push_back(t += dt(rng));
    t = 0.05;
    for (int i = 0; i < nb; ++i) b.push_back(t += dt(rng));
    const double max_skew = skew_dist(rng);

    const auto got = match_streams(a, b, max_skew);
    const auto want = oracles::brute_match(a, b, max_skew);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].a_index == want[i].a);
      CHECK(got[i].b_index == want[i].b);
    }

    CHECK(got.size() <= std::min(a.size(), b.size()));
    std::set<std::size_t> used;
    for (const auto& p : got) {
      CHECK(std::abs(p.skew) <= max_skew);
      CHECK(used.insert(p.b_index).second);
    }
    for (std::size_t i = 1; i < got.size(); ++i) {
      CHECK(a[got[i - 1].a_index] <= a[got[i].a_index]);
    }
  }
}

TEST_SUITE_END();
