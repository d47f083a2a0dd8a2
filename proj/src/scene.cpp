#include "uvtdoa/scene.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace uvtdoa
{

namespace
{

bool finite(const Point2& p)
{
  return std::isfinite(p.x()) && std::isfinite(p.y());
}

double signed_area(const Point2& a, const Point2& b, const Point2& c)
{
  return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x()));
}

} // namespace

double Scene::triangle_area() const
{
  return std::abs(signed_area(tx_a, tx_b, tx_c));
}

void Scene::validate() const
{
  if (!finite(tx_a) || !finite(tx_b) || !finite(tx_c) || !finite(rx_true))
    throw std::invalid_argument("scene: non-finite coordinate");
  if (!(std::isfinite(c) && c > 0.0))
    throw std::invalid_argument("scene: propagation speed must be positive");
  if (triangle_area() <= kMinTriangleArea)
    throw std::invalid_argument("scene: anchors are collinear (triangle area " + std::to_string(triangle_area()) + " m^2)");
}

Scene make_scene(const Point2& a, const Point2& b, const Point2& c, const Point2& rx, double speed)
{
  Scene s{a, b, c, rx, speed};
  s.validate();
  return s;
}

Scene with_receiver(const Scene& scene, const Point2& p)
{
  Scene s = scene;
  s.rx_true = p;
  return s;
}

void GridSpec::validate() const
{
  if (!(std::isfinite(x_min) && std::isfinite(x_max) && std::isfinite(y_min) && std::isfinite(y_max)))
    throw std::invalid_argument("grid: non-finite bounds");
  if (!(x_min < x_max) || !(y_min < y_max))
    throw std::invalid_argument("grid: require x_min < x_max and y_min < y_max");
  if (steps_x < 1 || steps_y < 1)
    throw std::invalid_argument("grid: steps must be positive");
}

std::vector<Point2> GridSpec::points() const
{
  validate();
  std::vector<Point2> out;
  out.reserve(size());
  auto axis = [](double lo, double hi, int steps, int i) {
    if (steps == 1)
      return 0.5 * (lo + hi);
    return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1);
  };
  for (int iy = 0; iy < steps_y; ++iy)
    for (int ix = 0; ix < steps_x; ++ix)
      out.emplace_back(axis(x_min, x_max, steps_x, ix), axis(y_min, y_max, steps_y, iy));
  return out;
}

GridSpec default_grid(const Scene& scene, int steps_x, int steps_y, double inset_fraction)
{
  const auto a = scene.anchors();
  double x0 = a[0].x(), x1 = a[0].x(), y0 = a[0].y(), y1 = a[0].y();
  for (const auto& p : a)
  {
    x0 = std::min(x0, p.x());
    x1 = std::max(x1, p.x());
    y0 = std::min(y0, p.y());
    y1 = std::max(y1, p.y());
  }
  const double dx = (x1 - x0) * inset_fraction;
  const double dy = (y1 - y0) * inset_fraction;
  GridSpec g{x0 + dx, x1 - dx, y0 + dy, y1 - dy, steps_x, steps_y};
  g.validate();
  return g;
}

Ranges ranges(const Scene& scene, const Point2& p)
{
  return {(p - scene.tx_a).norm(), (p - scene.tx_b).norm(), (p - scene.tx_c).norm()};
}

bool inside_triangle(const Scene& scene, const Point2& p)
{
  const double area = signed_area(scene.tx_a, scene.tx_b, scene.tx_c);
  // Barycentric weights; orientation-independent after dividing by the signed area.
  const double wa = signed_area(p, scene.tx_b, scene.tx_c) / area;
  const double wb = signed_area(scene.tx_a, p, scene.tx_c) / area;
  const double wc = signed_area(scene.tx_a, scene.tx_b, p) / area;
  constexpr double tol = -1e-12;
  return wa >= tol && wb >= tol && wc >= tol;
}

} // namespace uvtdoa
