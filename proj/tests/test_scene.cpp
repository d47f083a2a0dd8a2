#include <doctest.h>

#include <cmath>
#include <random>

#include "uvtdoa/scene.hpp"

using namespace uvtdoa;

namespace
{

Scene exp1()
{
  return make_scene({30.2, 53.9}, {0.0, 0.0}, {60.7, 0.0}, {30.2, 20.0});
}

Point2 rotate(const Point2& p, double angle, const Point2& shift)
{
  const double c = std::cos(angle), s = std::sin(angle);
  return Point2(c * p.x() - s * p.y(), s * p.x() + c * p.y()) + shift;
}

} // namespace

TEST_CASE("ranges of coincident and symmetric points")
{
  const Scene s = make_scene({0.0, 0.0}, {2.0, 0.0}, {1.0, 3.0}, {0.0, 0.0});
  CHECK(ranges(s, {0.0, 0.0}).r1 == 0.0);
  const Ranges r = ranges(s, {1.0, 5.0});
  CHECK(r.r1 == doctest::Approx(std::sqrt(26.0)).epsilon(1e-15));
  CHECK(r.r2 == doctest::Approx(std::sqrt(26.0)).epsilon(1e-15));
}

TEST_CASE("ranges match independent distance oracle for layout-1 anchors")
{
  // tests/oracles/frozen_values.py
  const Ranges r = ranges(exp1(), {30.2, 20.0});
  CHECK(r.r1 == doctest::Approx(33.899999999999998579).epsilon(1e-14));
  CHECK(r.r2 == doctest::Approx(36.222092705971585775).epsilon(1e-14));
  CHECK(r.r3 == doctest::Approx(36.472592449673771671).epsilon(1e-14));
}

TEST_CASE("collinear or non-finite scenes are rejected")
{
  CHECK_THROWS_AS(make_scene({0, 0}, {1, 1}, {2, 2}, {0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(make_scene({0, 0}, {1e-6, 0}, {0, 1e-6}, {0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(make_scene({0, 0}, {1, 0}, {0, NAN}, {0, 1}), std::invalid_argument);
  CHECK_NOTHROW(make_scene({0, 0}, {1, 0}, {0, 1}, {0.2, 0.2}));
}

TEST_CASE("inside_triangle")
{
  const double h = std::sqrt(3.0) / 2.0;
  const Scene eq = make_scene({0, 0}, {1, 0}, {0.5, h}, {0.5, h / 3});
  CHECK(inside_triangle(eq, eq.centroid()));
  const double circumradius = 1.0 / std::sqrt(3.0);
  CHECK_FALSE(inside_triangle(eq, eq.centroid() + Point2(10 * circumradius, 0)));
  CHECK(inside_triangle(eq, {0.5, 0.0})); // on an edge
  CHECK(inside_triangle(eq, {0.0, 0.0})); // vertex

  // layout-2, cross-product signs (1890, 1948.36, 1952.6) all positive.
  const Scene e2 = make_scene({0, 0}, {75.6, 0}, {32.2, 76.6}, {36, 25});
  CHECK(inside_triangle(e2, {36, 25}));
}

TEST_CASE("inside_triangle is invariant under vertex permutation")
{
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int i = 0; i < 200; ++i)
  {
    const Point2 a(u(rng), u(rng)), b(u(rng), u(rng)), c(u(rng), u(rng)), p(u(rng), u(rng));
    Scene s{a, b, c, p};
    if (s.triangle_area() < 1e-3)
      continue;
    const bool ref = inside_triangle(s, p);
    CHECK(inside_triangle(Scene{b, a, c, p}, p) == ref);
    CHECK(inside_triangle(Scene{c, b, a, p}, p) == ref);
    CHECK(inside_triangle(Scene{b, c, a, p}, p) == ref);
  }
}

TEST_CASE("ranges are invariant under rigid motion")
{
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-100, 100);
  std::uniform_real_distribution<double> ang(0, 2 * M_PI);
  const Scene s = exp1();
  for (int i = 0; i < 100; ++i)
  {
    const double th = ang(rng);
    const Point2 shift(u(rng), u(rng));
    const Point2 p(u(rng), u(rng));
    Scene m{rotate(s.tx_a, th, shift), rotate(s.tx_b, th, shift), rotate(s.tx_c, th, shift), rotate(p, th, shift)};
    const Ranges r0 = ranges(s, p);
    const Ranges r1 = ranges(m, m.rx_true);
    CHECK(std::abs(r0.r1 - r1.r1) < 1e-9);
    CHECK(std::abs(r0.r2 - r1.r2) < 1e-9);
    CHECK(std::abs(r0.r3 - r1.r3) < 1e-9);
  }
}

TEST_CASE("grid layout and default grid")
{
  GridSpec g{0, 8, 0, 4, 9, 5};
  const auto pts = g.points();
  REQUIRE(pts.size() == 45);
  CHECK(pts.front() == Point2(0, 0));
  CHECK(pts[1] == Point2(1, 0));
  CHECK(pts.back() == Point2(8, 4));
  CHECK_THROWS(GridSpec{1, 0, 0, 1, 2, 2}.validate());
  CHECK_THROWS(GridSpec{0, 1, 0, 1, 0, 2}.validate());

  const GridSpec d = default_grid(exp1());
  CHECK(d.size() == 81);
  CHECK(d.x_min == doctest::Approx(6.07));
  CHECK(d.x_max == doctest::Approx(54.63));
  CHECK(d.y_min == doctest::Approx(5.39));
  CHECK(d.y_max == doctest::Approx(48.51));
}
