#include <doctest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "uvtdoa/errortheory.hpp"
#include "uvtdoa/sync.hpp"

using namespace uvtdoa;

namespace
{

const Scene kLayout1 = make_scene({30.2, 53.9}, {0, 0}, {60.7, 0}, {30.2, 20});
const Scene kLayout2 = make_scene({0, 0}, {75.6, 0}, {32.2, 76.6}, {36, 25});

SyncBoundParams defaults(double lambda_s, double lambda_b)
{
  SyncBoundParams p;
  p.lambda_s = lambda_s;
  p.lambda_b = lambda_b;
  return p;
}

SignalParams reference_signal()
{
  SignalParams s;
  s.sequence = generate_pilot(256, 1);
  return s;
}

Point2 rot(const Point2& p, double th, const Point2& sh)
{
  return Point2(std::cos(th) * p.x() - std::sin(th) * p.y(), std::sin(th) * p.x() + std::cos(th) * p.y()) + sh;
}

} // namespace

TEST_CASE("clock variance closed form")
{
  CHECK(clock_variance(ClockModel::degenerate()) == 0.0);
  const double v100 = clock_variance(ClockModel::uniform(0, 100e-9));
  CHECK(v100 == doctest::Approx(1e-14 / 12).epsilon(1e-12));
  CHECK(std::sqrt(v100) == doctest::Approx(28.8675e-9).epsilon(1e-5));
  CHECK(clock_variance(ClockModel::uniform(0, 50e-9)) == doctest::Approx(v100 / 4).epsilon(1e-12));
  CHECK_THROWS(ClockModel::uniform(1e-9, 0.0));

  // Sample variance of 1e6 draws.
  const ClockModel m = ClockModel::uniform(0, 100e-9);
  Rng rng = make_rng(3);
  double s = 0, s2 = 0;
  const int draws = 1000000;
  for (int i = 0; i < draws; ++i)
  {
    const double x = m.sample(rng);
    CHECK_FALSE((x < 0 || x > 100e-9));
    s += x;
    s2 += x * x;
  }
  const double var = s2 / draws - (s / draws) * (s / draws);
  CHECK(var == doctest::Approx(v100).epsilon(5e-3));
  CHECK(ClockModel::degenerate().sample(rng) == 0.0);
}

TEST_CASE("normal_cdf")
{
  CHECK(normal_cdf(0.0) == 0.5);
  CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-14));
  CHECK(normal_cdf(-8.0) == doctest::Approx(6.22096057427178e-16).epsilon(1e-10));
  CHECK(normal_cdf(-37.0) > 0.0);
}

TEST_CASE("gauss_legendre integrates polynomials exactly")
{
  for (int order : {1, 2, 5, 8, 16})
  {
    const QuadratureRule r = gauss_legendre(order);
    for (int deg = 0; deg <= 2 * order - 1; ++deg)
    {
      double acc = 0.0;
      for (int i = 0; i < order; ++i)
        acc += r.weights[i] * std::pow(r.nodes[i], deg);
      const double exact = deg % 2 ? 0.0 : 2.0 / (deg + 1);
      CHECK(acc == doctest::Approx(exact).epsilon(1e-13));
    }
  }
  CHECK_THROWS(gauss_legendre(0));
}

TEST_CASE("misdetection probabilities match the independent oracle")
{
  // Values from tests/oracles/frozen_values.py (50-digit arithmetic).
  const SyncBoundParams p = defaults(5.0, 1.0);
  CHECK(misdetect_prob_within_symbol(p, 1, 0.0) == doctest::Approx(0.065661894487423656477).epsilon(1e-12));
  CHECK(misdetect_prob_within_symbol(p, 3, 0.5e-8) == doctest::Approx(0.040760909762019476801).epsilon(1e-12));
  CHECK(misdetect_prob_cross_symbol(p, 1, 0, 0.0) == doctest::Approx(1.5883782824772124537e-52).epsilon(1e-10));

  SyncBoundParams q = defaults(2.0, 0.5);
  q.L = 64;
  CHECK(misdetect_prob_cross_symbol(q, 1, -100, 0.0) == doctest::Approx(4.8048867977366011771e-7).epsilon(1e-10));
}

TEST_CASE("misdetection probability limits, domain and monotonicity")
{
  const SyncBoundParams strong = defaults(1e6, 1.0);
  for (int k : {1, 2, 50, 99})
    CHECK(misdetect_prob_within_symbol(strong, k, 0.0) < 1e-300);
  for (int m : {1, 2, 8})
    CHECK(misdetect_prob_cross_symbol(strong, m, 0, 0.0) < 1e-300);

  const SyncBoundParams p = defaults(5.0, 1.0);
  CHECK(misdetect_prob_within_symbol(p, 1, 0.5e-8) > misdetect_prob_within_symbol(p, 1, -0.5e-8));
  CHECK(misdetect_prob_within_symbol(p, -1, 0.3e-8) == misdetect_prob_within_symbol(p, 1, -0.3e-8));
  // Decreasing in m wherever 1 - 2(k/n - eps/T_s) > 0; for k > n/2 the printed
  // expression grows with m (at magnitudes around 1e-51 for these rates).
  for (int k : {-100, -7, 0, 13, 49})
  {
    double prev = 1.0;
    for (int m = 1; m <= 8; ++m)
    {
      const double v = misdetect_prob_cross_symbol(p, m, k, 0.0);
      CHECK(v >= 0.0);
      CHECK(v <= prev);
      prev = v;
    }
  }
  CHECK(misdetect_prob_cross_symbol(p, 3, 0, 0.0) <= misdetect_prob_cross_symbol(p, 1, 0, 0.0));
  CHECK(misdetect_prob_cross_symbol(p, 2, 99, 0.0) > misdetect_prob_cross_symbol(p, 1, 99, 0.0));
  CHECK(misdetect_prob_cross_symbol(p, 2, 99, 0.0) < 1e-50);

  CHECK_THROWS(misdetect_prob_within_symbol(p, 0, 0.0));
  CHECK_THROWS(misdetect_prob_within_symbol(p, 100, 0.0));
  CHECK_THROWS(misdetect_prob_cross_symbol(p, 0, 0, 0.0));
  CHECK_THROWS(misdetect_prob_cross_symbol(p, 1, -101, 0.0));
  CHECK_THROWS(misdetect_prob_cross_symbol(p, 1, 100, 0.0));

  for (int k = 1; k < 100; k += 7)
    for (double eps : {-0.5e-8, -0.2e-8, 0.0, 0.49e-8})
    {
      const double v = misdetect_prob_within_symbol(p, k, eps);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
}

TEST_CASE("sync bound limits and monotonicity")
{
  const double tc = 1e-8;
  const SyncBound strong = sync_mse_bound(defaults(1e6, 0.0));
  INFO("strong-signal bound " << strong.mse_s2 << " vs " << tc * tc / 12);
  CHECK(strong.mse_s2 == doctest::Approx(tc * tc / 12).epsilon(0.01));
  CHECK(strong.converged);

  const SyncBound base = sync_mse_bound(defaults(5.0, 1.0));
  CHECK(base.mse_s2 >= tc * tc / 12);
  CHECK(base.converged);

  SyncBoundParams shorter = defaults(5.0, 1.0);
  shorter.L = 128;
  CHECK(sync_mse_bound(shorter).mse_s2 > base.mse_s2);

  double prev = std::numeric_limits<double>::infinity();
  for (double ls : {2.0, 5.0, 10.0, 50.0, 100.0})
  {
    const double v = sync_mse_bound(defaults(ls, 1.0)).mse_s2;
    CHECK(v <= prev);
    prev = v;
  }

  SyncBoundParams bad = defaults(5.0, 1.0);
  bad.eps_quadrature_points = 12;
  CHECK_THROWS(sync_mse_bound(bad));
  bad = defaults(5.0, 1.0);
  bad.T_c = 2e-8;
  CHECK_THROWS(sync_mse_bound(bad));
}

TEST_CASE("sync bound quadrature converges")
{
  for (double ls : {2.0, 5.0, 100.0})
  {
    SyncBoundParams p = defaults(ls, 1.0);
    const double a = sync_mse_bound(p).mse_s2;
    p.eps_quadrature_points = 128;
    const double b = sync_mse_bound(p).mse_s2;
    CAPTURE(ls);
    CHECK(std::abs(a - b) / b < 1e-4);
  }
}

TEST_CASE("positioning MSE basics")
{
  CHECK(positioning_mse(kLayout2, 0, 0, 0).e_p == 0.0);
  CHECK_THROWS_AS(positioning_mse(kLayout2, -1, 0, 0), std::invalid_argument);

  // Receiver on an anchor and receiver on the extension of an anchor edge.
  CHECK_THROWS_AS(positioning_mse(with_receiver(kLayout2, kLayout2.tx_b), 1e-16, 1e-16, 1e-16), SingularGeometryError);
  try
  {
    positioning_mse(with_receiver(kLayout2, {200.0, 0.0}), 1e-16, 1e-16, 1e-16);
    FAIL("expected singular geometry");
  }
  catch (const SingularGeometryError& e)
  {
    CHECK(e.condition_number() > kSingularConditionThreshold);
  }
}

TEST_CASE("MSE matrix is symmetric PSD and e_p is monotone in each variance")
{
  Rng rng = make_rng(12);
  std::uniform_real_distribution<double> u(0.0, 1e-15);
  for (int i = 0; i < 100; ++i)
  {
    const Point2 p(5 + 60 * (i % 10) / 10.0, 5 + 60 * (i / 10) / 10.0);
    const Scene s = with_receiver(kLayout2, p);
    const double a = u(rng), b = u(rng), c = u(rng);
    ErrorBudget e;
    try
    {
      e = positioning_mse(s, a, b, c);
    }
    catch (const SingularGeometryError&)
    {
      continue;
    }
    CHECK((e.mse_matrix - e.mse_matrix.transpose()).norm() == 0.0);
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(e.mse_matrix);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-9 * eig.eigenvalues().maxCoeff());
    CHECK(e.e_p == doctest::Approx(std::sqrt(e.mse_matrix.trace())));
    CHECK(positioning_mse(s, a + 1e-16, b, c).e_p >= e.e_p);
    CHECK(positioning_mse(s, a, b + 1e-16, c).e_p >= e.e_p);
    CHECK(positioning_mse(s, a, b, c + 1e-16).e_p >= e.e_p);
  }
}

TEST_CASE("e_p is invariant under rigid motions and equilateral rotations")
{
  const double a2 = 3e-16, b2 = 7e-16, c2 = 5e-16;
  const double ref = positioning_mse(kLayout1, a2, b2, c2).e_p;
  for (int i = 0; i < 12; ++i)
  {
    const double th = 0.55 * i;
    const Point2 sh(-500.0 + 90.0 * i, 1000.0 - 33.0 * i);
    const Scene m = make_scene(rot(kLayout1.tx_a, th, sh), rot(kLayout1.tx_b, th, sh), rot(kLayout1.tx_c, th, sh),
                               rot(kLayout1.rx_true, th, sh));
    CHECK(positioning_mse(m, a2, b2, c2).e_p == doctest::Approx(ref).epsilon(1e-9));
  }

  const double r = 40.0;
  auto vertex = [&](int k) { return Point2(r * std::cos(2 * M_PI * k / 3), r * std::sin(2 * M_PI * k / 3)); };
  const Scene eq = make_scene(vertex(0), vertex(1), vertex(2), {0, 0});
  const Scene eq_rot = make_scene(vertex(1), vertex(2), vertex(0), {0, 0});
  const double v = 4e-16;
  CHECK(positioning_mse(eq, v, v, v).e_p == doctest::Approx(positioning_mse(eq_rot, v, v, v).e_p).epsilon(1e-12));
}

TEST_CASE("theory grid equals pointwise evaluation and is lower in the centre")
{
  const SignalParams sig = reference_signal();
  LinkBudget b;
  const GridSpec g = default_grid(kLayout2, 5, 5, 0.10);
  const auto grid = theory_grid(kLayout2, g, b, sig, ClockModel::degenerate());
  REQUIRE(grid.size() == 25);
  const auto pts = g.points();
  for (std::size_t i = 0; i < pts.size(); ++i)
  {
    const Scene s = with_receiver(kLayout2, pts[i]);
    const Ranges r = ranges(s, pts[i]);
    const std::array<double, 3> d{r.r1, r.r2, r.r3};
    std::array<double, 3> sig2{};
    for (int k = 0; k < 3; ++k)
    {
      const double ls = los_photon_rate(b, d[k], sig.symbol_duration());
      sig2[k] = sync_mse_bound(sync_bound_params(sig, ls, b.lambda_b)).mse_s2;
      CHECK(grid[i].lambda_s[k] == ls);
    }
    CHECK(grid[i].e_p == doctest::Approx(positioning_mse(s, sig2[0], sig2[1], sig2[2]).e_p).epsilon(1e-14));
    CHECK(grid[i].inside == inside_triangle(kLayout2, pts[i]));
  }

  // High power, ideal clocks: the centre is better than the corners of the grid.
  b.power_w = 1.0;
  const auto hp = theory_grid(kLayout2, g, b, sig, ClockModel::degenerate());
  const double centre = hp[12].e_p;
  for (std::size_t corner : {0u, 4u, 20u, 24u})
    CHECK(centre < hp[corner].e_p);

  // Infinite-rate proxy: every anchor is at the quantization floor.
  b.lambda_clip = 1e12;
  b.power_w = 1e9;
  b.lambda_b = 0.0;
  const auto zero = theory_points(kLayout2, {{30, 20}}, b, sig, ClockModel::degenerate());
  const double q = 1e-16 / 12; // only chip quantization remains
  CHECK(zero[0].e_p == doctest::Approx(positioning_mse(with_receiver(kLayout2, {30, 20}), q, q, q).e_p).epsilon(0.01));

  // Anchors and degenerate loci are flagged, not thrown.
  const auto flagged = theory_points(kLayout2, {kLayout2.tx_a, {200.0, 0.0}}, LinkBudget{}, sig, ClockModel::degenerate());
  CHECK(flagged[0].singular);
  CHECK(std::isnan(flagged[0].e_p));
  CHECK(flagged[1].singular);
}

TEST_CASE("clock-dominated magnitude at the layout-2 centroid")
{
  LinkBudget b;
  b.power_w = 0.15;
  const auto tp =
      theory_points(kLayout2, {kLayout2.centroid()}, b, reference_signal(), ClockModel::uniform(0, 100e-9));
  INFO("e_p at centroid = " << tp[0].e_p);
  CHECK(tp[0].e_p > 5.0);
  CHECK(tp[0].e_p < 20.0);
}
