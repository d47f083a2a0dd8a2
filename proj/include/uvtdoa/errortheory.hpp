#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "uvtdoa/channel.hpp"
#include "uvtdoa/rng.hpp"
#include "uvtdoa/scene.hpp"

namespace uvtdoa
{

/// Transmitter clock-edge error, either a point mass at zero or uniform on [lo, hi].
struct ClockModel
{
  enum class Kind
  {
    degenerate,
    uniform
  };

  Kind kind = Kind::degenerate;
  double lo_s = 0.0;
  double hi_s = 0.0;

  static ClockModel degenerate() { return {}; }
  static ClockModel uniform(double lo_s, double hi_s);

  void validate() const;
  double sample(Rng& rng) const;
};

double clock_variance(const ClockModel& model);

/// Inputs of the synchronization-MSE bound for one anchor.
struct SyncBoundParams
{
  double lambda_s = 0.0;
  double lambda_b = 0.0;
  int L = 256;
  int n = 100;
  double T_s = 1e-6;
  double T_c = 1e-8;
  int m_max = 8;
  int eps_quadrature_points = 64;

  void validate() const;
};

SyncBoundParams sync_bound_params(const SignalParams& signal, double lambda_s, double lambda_b, int m_max = 8,
                                  int quadrature_points = 64);

// Standard normal CDF via the complementary error function.
double normal_cdf(double x);

// Gauss-Legendre nodes and weights on [-1, 1].
struct QuadratureRule
{
  std::vector<double> nodes;
  std::vector<double> weights;
};
QuadratureRule gauss_legendre(int order);

/// Upper bound on P(estimate = true start + k chips) for 1 <= |k| <= n-1 at
/// fractional offset eps. Negative k is mirrored as (|k|, -eps).
double misdetect_prob_within_symbol(const SyncBoundParams& p, int k, double eps);

/// Upper bound on P(estimate lands 2m symbols plus k chips away), m >= 1, -n <= k <= n-1.
double misdetect_prob_cross_symbol(const SyncBoundParams& p, int m, int k, double eps);

struct SyncBound
{
  double mse_s2 = 0.0;  // upper bound on E[(estimate - true arrival)^2]
  double tail_s2 = 0.0; // contribution of the last retained m term
  bool converged = true; // tail_s2 <= 1e-6 * mse_s2
};

/// Integrates the error-weighted misdetection bounds over eps ~ U(-T_c/2, T_c/2)
/// with composite 8-point Gauss-Legendre panels (eps_quadrature_points / 8 panels).
SyncBound sync_mse_bound(const SyncBoundParams& p);

class SingularGeometryError : public std::runtime_error
{
public:
  SingularGeometryError(const std::string& what, double condition_number)
    : std::runtime_error(what), condition_number_(condition_number)
  {
  }
  double condition_number() const { return condition_number_; }

private:
  double condition_number_;
};

inline constexpr double kSingularConditionThreshold = 1e8;

struct ErrorBudget
{
  double sigma2_a = 0.0; // s^2
  double sigma2_b = 0.0;
  double sigma2_c = 0.0;
  Eigen::Matrix2d mse_matrix = Eigen::Matrix2d::Zero(); // m^2
  double e_p = 0.0;                                     // m
  double condition_number = 1.0;
};

// Linearized TDOA geometry matrix at p: rows d(r2 - r1)/d(x, y) and d(r3 - r2)/d(x, y).
Eigen::Matrix2d geometry_matrix(const Scene& scene, const Point2& p);

/// Linearized positioning MSE at scene.rx_true given per-anchor timing variances.
/// Throws SingularGeometryError if the geometry matrix condition number exceeds 1e8.
ErrorBudget positioning_mse(const Scene& scene, double sigma2_a, double sigma2_b, double sigma2_c);

struct TheoryOptions
{
  int m_max = 8;
  int quadrature_points = 64;
};

struct TheoryPoint
{
  Point2 position = Point2::Zero();
  std::array<double, 3> lambda_s{};
  std::array<double, 3> sigma2{};
  double e_p = 0.0;
  double condition_number = 0.0;
  bool singular = false;
  bool inside = false;
};

/// Distance -> clipped rate -> sync bound -> sigma^2 -> e_p for each point.
/// Singular points are flagged (e_p = NaN) instead of throwing.
std::vector<TheoryPoint> theory_points(const Scene& scene, const std::vector<Point2>& points, const LinkBudget& budget,
                                       const SignalParams& signal, const ClockModel& clock,
                                       const TheoryOptions& options = {});

std::vector<TheoryPoint> theory_grid(const Scene& scene, const GridSpec& grid, const LinkBudget& budget,
                                     const SignalParams& signal, const ClockModel& clock,
                                     const TheoryOptions& options = {});

} // namespace uvtdoa
