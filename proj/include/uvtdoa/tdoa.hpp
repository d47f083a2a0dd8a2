#pragma once

#include <optional>

#include <Eigen/Core>

#include "uvtdoa/scene.hpp"

namespace uvtdoa
{

/// Flying-time differences and the corresponding range differences.
/// r21 = c * t_ba and r32 = c * t_cb unless `clamped` is set, in which case the
/// range difference was pulled back onto the feasible interval [-|AB|, |AB|]
/// (resp. |BC|).
struct TdoaMeasurement
{
  double t_ba_s = 0.0;
  double t_cb_s = 0.0;
  double r21_m = 0.0;
  double r32_m = 0.0;
  bool clamped = false; // a raw value exceeded its bound by more than the tolerance
};

struct PositionFix
{
  Point2 position = Point2::Zero();
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct SolverOptions
{
  double step_tolerance_m = 1e-9;
  double residual_tolerance_m = 1e-6;
  int max_iterations = 100;
  int multistart_grid = 5;
  // Iterates stay within this many anchor-bounding-box diagonals of the box
  // centre; without it an inconsistent measurement runs off along an asymptote.
  double search_radius_factor = 10.0;
};

// Default feasibility slack: two chips of propagation.
inline double feasibility_tolerance(double c, double chip_s) { return 2.0 * c * chip_s; }

TdoaMeasurement measurement_from_times(const Scene& scene, double t_ba_s, double t_cb_s, double tolerance_m);

// Range differences of an exact (noise-free) measurement at p.
TdoaMeasurement exact_measurement(const Scene& scene, const Point2& p);

// [r2 - r1 - r21, r3 - r2 - r32] at p.
Eigen::Vector2d tdoa_residual(const Scene& scene, const TdoaMeasurement& meas, const Point2& p);

// Partial derivatives of (r2 - r1, r3 - r2) with respect to (x, y) at p.
Eigen::Matrix2d tdoa_jacobian(const Scene& scene, const Point2& p);

Point2 default_init(const Scene& scene);

/// Damped Gauss-Newton (Levenberg-style) on the two hyperbola residuals, run
/// from `init` (default: centroid) and from a multi-start grid over the anchor
/// bounding box. Among converged fits the one nearest to `init` wins (the
/// hyperbolas may intersect twice); if none converged, the smallest residual.
PositionFix solve_position(const Scene& scene, const TdoaMeasurement& meas, std::optional<Point2> init = std::nullopt,
                           const SolverOptions& options = {});

} // namespace uvtdoa
