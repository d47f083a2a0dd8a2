#include "uvtdoa/errortheory.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <random>

#include <Eigen/Dense>

namespace uvtdoa
{

ClockModel ClockModel::uniform(double lo_s, double hi_s)
{
  ClockModel m{Kind::uniform, lo_s, hi_s};
  m.validate();
  return m;
}

void ClockModel::validate() const
{
  if (kind == Kind::uniform && !(std::isfinite(lo_s) && std::isfinite(hi_s) && lo_s <= hi_s))
    throw std::invalid_argument("clock model: uniform bounds must be finite with lo <= hi");
}

double ClockModel::sample(Rng& rng) const
{
  if (kind == Kind::degenerate || lo_s == hi_s)
    return kind == Kind::degenerate ? 0.0 : lo_s;
  return std::uniform_real_distribution<double>(lo_s, hi_s)(rng);
}

double clock_variance(const ClockModel& model)
{
  model.validate();
  if (model.kind == ClockModel::Kind::degenerate)
    return 0.0;
  const double w = model.hi_s - model.lo_s;
  return w * w / 12.0;
}

void SyncBoundParams::validate() const
{
  if (!(lambda_s >= 0.0 && lambda_b >= 0.0))
    throw std::invalid_argument("sync bound: rates must be non-negative");
  if (L < 2 || n < 1)
    throw std::invalid_argument("sync bound: require L >= 2 and n >= 1");
  if (!(T_s > 0.0 && T_c > 0.0) || std::abs(T_s - n * T_c) > 1e-9 * T_s)
    throw std::invalid_argument("sync bound: require T_s = n * T_c > 0");
  if (m_max < 1)
    throw std::invalid_argument("sync bound: m_max must be >= 1");
  if (eps_quadrature_points < 8 || eps_quadrature_points % 8 != 0)
    throw std::invalid_argument("sync bound: quadrature points must be a positive multiple of 8");
}

SyncBoundParams sync_bound_params(const SignalParams& signal, double lambda_s, double lambda_b, int m_max,
                                  int quadrature_points)
{
  SyncBoundParams p;
  p.lambda_s = lambda_s;
  p.lambda_b = lambda_b;
  p.L = static_cast<int>(signal.length());
  p.n = signal.chips_per_symbol;
  p.T_s = signal.symbol_duration();
  p.T_c = signal.chip_duration();
  p.m_max = m_max;
  p.eps_quadrature_points = quadrature_points;
  return p;
}

double normal_cdf(double x)
{
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

QuadratureRule gauss_legendre(int order)
{
  if (order < 1)
    throw std::invalid_argument("gauss_legendre: order must be positive");
  QuadratureRule rule;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  for (int i = 0; i < order; ++i)
  {
    double x = std::cos(M_PI * (i + 0.75) / (order + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter)
    {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= order; ++k)
      {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      dp = order * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16)
        break;
    }
    rule.nodes[i] = x;
    rule.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return rule;
}

namespace
{

// Phi(num / sqrt(radicand)), taking the limit when the radicand vanishes.
double phi_ratio(double num, double radicand)
{
  if (!(radicand > 0.0))
    return num > 0.0 ? 1.0 : (num < 0.0 ? 0.0 : 0.5);
  return normal_cdf(num / std::sqrt(radicand));
}

} // namespace

double misdetect_prob_within_symbol(const SyncBoundParams& p, int k, double eps)
{
  if (k == 0 || std::abs(k) > p.n - 1)
    throw std::invalid_argument("misdetect_prob_within_symbol: require 1 <= |k| <= n-1");
  if (k < 0)
  {
    k = -k;
    eps = -eps;
  }
  const double half_s = 0.5 * p.lambda_s;
  const double kn = static_cast<double>(k) / p.n;
  const double e = eps / p.T_s;
  const double num = half_s * (2.0 * e - kn) * (p.L - 1);
  const double rad = 2.0 * kn * (half_s + p.lambda_b) * (p.L - 1) + e * p.lambda_s;
  return phi_ratio(num, rad);
}

double misdetect_prob_cross_symbol(const SyncBoundParams& p, int m, int k, double eps)
{
  if (m < 1 || k < -p.n || k > p.n - 1)
    throw std::invalid_argument("misdetect_prob_cross_symbol: require m >= 1 and -n <= k <= n-1");
  const double half_s = 0.5 * p.lambda_s;
  const double kn = static_cast<double>(k) / p.n;
  const double e = eps / p.T_s;
  const double two_m = -2.0 * m;
  const double num = two_m * half_s * (1.0 - 2.0 * (kn - e)) - p.L * half_s * (1.0 - e) - half_s * (2.0 * e - kn);
  const double rad = 2.0 * (half_s + p.lambda_b) * ((p.L - m) - two_m * (1.0 - 2.0 * kn) - kn) + e * p.lambda_s;
  return phi_ratio(num, rad);
}

SyncBound sync_mse_bound(const SyncBoundParams& p)
{
  p.validate();
  static const QuadratureRule panel_rule = gauss_legendre(8);
  const int panels = p.eps_quadrature_points / 8;
  const double lo = -0.5 * p.T_c;
  const double width = p.T_c / panels;

  double total = 0.0;
  double tail = 0.0;
  for (int q = 0; q < panels; ++q)
  {
    const double mid = lo + (q + 0.5) * width;
    for (std::size_t g = 0; g < panel_rule.nodes.size(); ++g)
    {
      const double eps = mid + 0.5 * width * panel_rule.nodes[g];
      const double w = 0.5 * width * panel_rule.weights[g] / p.T_c; // includes p(eps) = 1/T_c

      const double p01 = p.n > 1 ? misdetect_prob_within_symbol(p, 1, eps) : 0.0;
      const double p00 = std::max(0.0, 1.0 - p01);
      double f = eps * eps * p00;
      for (int k = 1; k <= p.n - 1; ++k)
      {
        const double e = k * p.T_c - eps;
        f += 2.0 * e * e * misdetect_prob_within_symbol(p, k, eps);
      }
      double last_m = 0.0;
      for (int m = 1; m <= p.m_max; ++m)
      {
        double term = 0.0;
        for (int k = -p.n; k <= p.n - 1; ++k)
        {
          const double e = (2.0 * m * p.n + k) * p.T_c - eps;
          term += 2.0 * e * e * misdetect_prob_cross_symbol(p, m, k, eps);
        }
        f += term;
        last_m = term;
      }
      total += w * f;
      tail += w * last_m;
    }
  }
  SyncBound out;
  out.mse_s2 = total;
  out.tail_s2 = tail;
  out.converged = tail <= 1e-6 * total;
  return out;
}

Eigen::Matrix2d geometry_matrix(const Scene& scene, const Point2& p)
{
  const Ranges r = ranges(scene, p);
  const double x0 = p.x(), y0 = p.y();
  Eigen::Matrix2d G;
  G(0, 0) = (scene.tx_a.x() - x0) / r.r1 - (scene.tx_b.x() - x0) / r.r2;
  G(0, 1) = (scene.tx_a.y() - y0) / r.r1 - (scene.tx_b.y() - y0) / r.r2;
  G(1, 0) = (scene.tx_b.x() - x0) / r.r2 - (scene.tx_c.x() - x0) / r.r3;
  G(1, 1) = (scene.tx_b.y() - y0) / r.r2 - (scene.tx_c.y() - y0) / r.r3;
  return G;
}

ErrorBudget positioning_mse(const Scene& scene, double sigma2_a, double sigma2_b, double sigma2_c)
{
  if (!(sigma2_a >= 0.0 && sigma2_b >= 0.0 && sigma2_c >= 0.0))
    throw std::invalid_argument("positioning_mse: variances must be non-negative");
  ErrorBudget out;
  out.sigma2_a = sigma2_a;
  out.sigma2_b = sigma2_b;
  out.sigma2_c = sigma2_c;

  const Eigen::Matrix2d G = geometry_matrix(scene, scene.rx_true);
  if (!G.allFinite())
    throw SingularGeometryError("positioning_mse: receiver coincides with an anchor",
                                std::numeric_limits<double>::infinity());
  const Eigen::JacobiSVD<Eigen::Matrix2d> svd(G);
  const auto sv = svd.singularValues();
  out.condition_number = sv(1) > 0.0 ? sv(0) / sv(1) : std::numeric_limits<double>::infinity();
  if (!(out.condition_number <= kSingularConditionThreshold))
    throw SingularGeometryError("positioning_mse: geometry matrix is near-singular", out.condition_number);

  const double c2 = scene.c * scene.c;
  Eigen::Matrix2d hh;
  hh << sigma2_a + sigma2_b, -sigma2_b, -sigma2_b, sigma2_b + sigma2_c;
  hh *= c2;
  const Eigen::Matrix2d Ginv = G.inverse();
  Eigen::Matrix2d mse = Ginv * hh * Ginv.transpose();
  mse = (0.5 * (mse + mse.transpose())).eval();
  out.mse_matrix = mse;
  out.e_p = std::sqrt(std::max(0.0, mse.trace()));
  return out;
}

std::vector<TheoryPoint> theory_points(const Scene& scene, const std::vector<Point2>& points, const LinkBudget& budget,
                                       const SignalParams& signal, const ClockModel& clock,
                                       const TheoryOptions& options)
{
  budget.validate();
  const double clock_var = clock_variance(clock);
  std::map<double, double> bound_cache;
  auto sync_var = [&](double lambda_s) {
    auto it = bound_cache.find(lambda_s);
    if (it != bound_cache.end())
      return it->second;
    const auto params = sync_bound_params(signal, lambda_s, budget.lambda_b, options.m_max, options.quadrature_points);
    const double v = sync_mse_bound(params).mse_s2;
    bound_cache.emplace(lambda_s, v);
    return v;
  };

  std::vector<TheoryPoint> out;
  out.reserve(points.size());
  for (const Point2& p : points)
  {
    TheoryPoint tp;
    tp.position = p;
    const Scene s = with_receiver(scene, p);
    tp.inside = inside_triangle(s, p);
    const Ranges r = ranges(s, p);
    const std::array<double, 3> dist{r.r1, r.r2, r.r3};
    bool at_anchor = false;
    for (int i = 0; i < 3; ++i)
    {
      if (!(dist[i] > 0.0))
      {
        at_anchor = true;
        tp.lambda_s[i] = budget.lambda_clip;
      }
      else
      {
        tp.lambda_s[i] = los_photon_rate(budget, dist[i], signal.symbol_duration());
      }
      tp.sigma2[i] = clock_var + sync_var(tp.lambda_s[i]);
    }
    if (at_anchor)
    {
      tp.singular = true;
      tp.e_p = std::numeric_limits<double>::quiet_NaN();
      tp.condition_number = std::numeric_limits<double>::infinity();
    }
    else
    {
      try
      {
        const ErrorBudget b = positioning_mse(s, tp.sigma2[0], tp.sigma2[1], tp.sigma2[2]);
        tp.e_p = b.e_p;
        tp.condition_number = b.condition_number;
      }
      catch (const SingularGeometryError& e)
      {
        tp.singular = true;
        tp.e_p = std::numeric_limits<double>::quiet_NaN();
        tp.condition_number = e.condition_number();
      }
    }
    out.push_back(tp);
  }
  return out;
}

std::vector<TheoryPoint> theory_grid(const Scene& scene, const GridSpec& grid, const LinkBudget& budget,
                                     const SignalParams& signal, const ClockModel& clock, const TheoryOptions& options)
{
  return theory_points(scene, grid.points(), budget, signal, clock, options);
}

} // namespace uvtdoa
