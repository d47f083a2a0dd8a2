#include "uvtdoa/tdoa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace uvtdoa
{

namespace
{

Eigen::Vector2d unit_from(const Point2& anchor, const Point2& p)
{
  const Eigen::Vector2d d = p - anchor;
  const double n = d.norm();
  if (n < 1e-12)
    return Eigen::Vector2d::Zero();
  return d / n;
}

double clamp_range(double raw, double bound, double tol, bool& flagged)
{
  if (std::abs(raw) > bound + tol)
    flagged = true;
  return std::clamp(raw, -bound, bound);
}

struct SearchRegion
{
  Point2 centre;
  double radius;
};

SearchRegion search_region(const Scene& scene, const SolverOptions& opt)
{
  const auto a = scene.anchors();
  Point2 lo = a[0], hi = a[0];
  for (const auto& q : a)
  {
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  return {0.5 * (lo + hi), opt.search_radius_factor * (hi - lo).norm()};
}

PositionFix damped_gauss_newton(const Scene& scene, const TdoaMeasurement& meas, const Point2& start,
                                const SolverOptions& opt, const SearchRegion& region)
{
  PositionFix fix;
  Point2 p = start;
  Eigen::Vector2d f = tdoa_residual(scene, meas, p);
  double cost = f.squaredNorm();
  double mu = 1e-6;
  int it = 0;
  for (; it < opt.max_iterations; ++it)
  {
    const Eigen::Matrix2d J = tdoa_jacobian(scene, p);
    const Eigen::Matrix2d A = J.transpose() * J + mu * Eigen::Matrix2d::Identity();
    const Eigen::Vector2d step = -A.ldlt().solve(J.transpose() * f);
    if (!step.allFinite())
    {
      mu *= 10.0;
      continue;
    }
    const Point2 candidate = p + step;
    if ((candidate - region.centre).norm() > region.radius)
    {
      mu *= 4.0;
      if (mu > 1e12)
      {
        ++it;
        break;
      }
      continue;
    }
    const Eigen::Vector2d f_new = tdoa_residual(scene, meas, candidate);
    const double cost_new = f_new.squaredNorm();
    if (cost_new <= cost)
    {
      p = candidate;
      f = f_new;
      cost = cost_new;
      mu = std::max(mu / 3.0, 1e-15);
      if (step.norm() < opt.step_tolerance_m)
      {
        ++it;
        break;
      }
    }
    else
    {
      mu *= 4.0;
      if (mu > 1e12 || step.norm() < opt.step_tolerance_m)
      {
        ++it;
        break;
      }
    }
  }
  fix.position = p;
  fix.residual_norm = std::sqrt(cost);
  fix.iterations = it;
  fix.converged = fix.residual_norm < opt.residual_tolerance_m;
  return fix;
}

} // namespace

TdoaMeasurement measurement_from_times(const Scene& scene, double t_ba_s, double t_cb_s, double tolerance_m)
{
  TdoaMeasurement m;
  m.t_ba_s = t_ba_s;
  m.t_cb_s = t_cb_s;
  const double ab = (scene.tx_b - scene.tx_a).norm();
  const double bc = (scene.tx_c - scene.tx_b).norm();
  m.r21_m = clamp_range(scene.c * t_ba_s, ab, tolerance_m, m.clamped);
  m.r32_m = clamp_range(scene.c * t_cb_s, bc, tolerance_m, m.clamped);
  return m;
}

TdoaMeasurement exact_measurement(const Scene& scene, const Point2& p)
{
  const Ranges r = ranges(scene, p);
  TdoaMeasurement m;
  m.r21_m = r.r2 - r.r1;
  m.r32_m = r.r3 - r.r2;
  m.t_ba_s = m.r21_m / scene.c;
  m.t_cb_s = m.r32_m / scene.c;
  return m;
}

Eigen::Vector2d tdoa_residual(const Scene& scene, const TdoaMeasurement& meas, const Point2& p)
{
  const Ranges r = ranges(scene, p);
  return {r.r2 - r.r1 - meas.r21_m, r.r3 - r.r2 - meas.r32_m};
}

Eigen::Matrix2d tdoa_jacobian(const Scene& scene, const Point2& p)
{
  const Eigen::Vector2d ua = unit_from(scene.tx_a, p);
  const Eigen::Vector2d ub = unit_from(scene.tx_b, p);
  const Eigen::Vector2d uc = unit_from(scene.tx_c, p);
  Eigen::Matrix2d J;
  J.row(0) = (ub - ua).transpose();
  J.row(1) = (uc - ub).transpose();
  return J;
}

Point2 default_init(const Scene& scene)
{
  return scene.centroid();
}

PositionFix solve_position(const Scene& scene, const TdoaMeasurement& meas, std::optional<Point2> init,
                           const SolverOptions& options)
{
  const Point2 start = init.value_or(default_init(scene));
  const SearchRegion region = search_region(scene, options);
  std::vector<PositionFix> candidates{damped_gauss_newton(scene, meas, start, options, region)};

  // Two hyperbolas can cross twice with zero residual, so exact fits found from
  // other starts are compared too rather than accepting the first convergence.
  const auto a = scene.anchors();
  double x0 = a[0].x(), x1 = a[0].x(), y0 = a[0].y(), y1 = a[0].y();
  for (const auto& q : a)
  {
    x0 = std::min(x0, q.x());
    x1 = std::max(x1, q.x());
    y0 = std::min(y0, q.y());
    y1 = std::max(y1, q.y());
  }
  const int g = std::max(options.multistart_grid, 2);
  int total_iterations = candidates.front().iterations;
  for (int iy = 0; iy < g; ++iy)
    for (int ix = 0; ix < g; ++ix)
    {
      const Point2 s(x0 + (x1 - x0) * ix / (g - 1), y0 + (y1 - y0) * iy / (g - 1));
      candidates.push_back(damped_gauss_newton(scene, meas, s, options, region));
      total_iterations += candidates.back().iterations;
    }

  // Converged fits tie on residual; pick the one nearest the start. Otherwise
  // take the smallest residual.
  const PositionFix* chosen = nullptr;
  double best_dist = std::numeric_limits<double>::infinity();
  for (const auto& c : candidates)
  {
    if (!c.converged)
      continue;
    const double d = (c.position - start).norm();
    if (d < best_dist)
    {
      best_dist = d;
      chosen = &c;
    }
  }
  if (chosen == nullptr)
  {
    chosen = &candidates.front();
    for (const auto& c : candidates)
      if (c.residual_norm < chosen->residual_norm)
        chosen = &c;
  }
  PositionFix out = *chosen;
  out.iterations = total_iterations;
  return out;
}

} // namespace uvtdoa
