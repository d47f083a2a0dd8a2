#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace uvtdoa
{

using Point2 = Eigen::Vector2d;

// Speed of light in vacuum, m/s.
inline constexpr double kSpeedOfLight = 299792458.0;

// Minimum anchor-triangle area (m^2) below which a scene is treated as collinear.
inline constexpr double kMinTriangleArea = 1e-9;

struct Ranges
{
  double r1 = 0.0; // receiver to A
  double r2 = 0.0; // receiver to B
  double r3 = 0.0; // receiver to C
};

/// Anchor geometry plus the true receiver position. All lengths in meters.
///
/// Construct through make_scene() (or call validate()) so the collinearity and
/// finiteness invariants are enforced before any solver sees the geometry.
struct Scene
{
  Point2 tx_a = Point2::Zero();
  Point2 tx_b = Point2::Zero();
  Point2 tx_c = Point2::Zero();
  Point2 rx_true = Point2::Zero();
  double c = kSpeedOfLight;

  // Throws std::invalid_argument if anchors are collinear or anything is non-finite.
  void validate() const;

  std::array<Point2, 3> anchors() const { return {tx_a, tx_b, tx_c}; }
  Point2 centroid() const { return (tx_a + tx_b + tx_c) / 3.0; }
  double triangle_area() const;
};

Scene make_scene(const Point2& a, const Point2& b, const Point2& c, const Point2& rx, double speed = kSpeedOfLight);

/// Axis-aligned evaluation grid, row-major over y then x (x varies fastest).
struct GridSpec
{
  double x_min = 0.0;
  double x_max = 1.0;
  double y_min = 0.0;
  double y_max = 1.0;
  int steps_x = 9;
  int steps_y = 9;

  void validate() const;
  std::size_t size() const { return static_cast<std::size_t>(steps_x) * static_cast<std::size_t>(steps_y); }
  std::vector<Point2> points() const;
};

// Bounding box of the anchor triangle shrunk by `inset_fraction` of its extent on every side.
GridSpec default_grid(const Scene& scene, int steps_x = 9, int steps_y = 9, double inset_fraction = 0.10);

Ranges ranges(const Scene& scene, const Point2& p);

// True if p lies inside or on the anchor triangle.
bool inside_triangle(const Scene& scene, const Point2& p);

// Returns a copy of the scene with `p` as receiver, keeping anchors and c.
Scene with_receiver(const Scene& scene, const Point2& p);

} // namespace uvtdoa
