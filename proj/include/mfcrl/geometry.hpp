#ifndef MFCRL_GEOMETRY_HPP_
#define MFCRL_GEOMETRY_HPP_

#include <cmath>
#include <numbers>

#include "mfcrl/errors.hpp"

namespace mfcrl {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Slack used by the closed-form region tests. Regions are authored in config
// files, so anything tighter than this is noise from decimal round-trips.
inline constexpr double kRegionEps = 1e-9;

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  if (a > -kPi && a <= kPi) return a;
  a = std::fmod(a + kPi, kTwoPi);
  if (a <= 0.0) a += kTwoPi;
  return a - kPi;
}

/// Absolute angular distance in [0, pi].
inline double angular_distance(double a, double b) { return std::abs(wrap_angle(a - b)); }

struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
};

/// Disc of positions times a closed heading interval. A pose is a member iff
/// it lies within `position_radius` of the center and within
/// `heading_tolerance` of `heading`.
struct PoseRegion {
  double center_x = 0.0;
  double center_y = 0.0;
  double position_radius = 1.0;
  double heading = 0.0;
  double heading_tolerance = kPi;

  void validate() const {
    if (!(position_radius > 0.0) || !std::isfinite(position_radius)) {
      throw MalformedRegion("position_radius must be positive and finite");
    }
    if (!(heading_tolerance > 0.0) || heading_tolerance > kPi + kRegionEps) {
      throw MalformedRegion("heading_tolerance must lie in (0, pi]");
    }
    if (!std::isfinite(center_x) || !std::isfinite(center_y) || !std::isfinite(heading)) {
      throw MalformedRegion("region fields must be finite");
    }
  }

  [[nodiscard]] double distance_to_center(double x, double y) const {
    return std::hypot(x - center_x, y - center_y);
  }

  [[nodiscard]] bool contains(const Pose2& p) const {
    return distance_to_center(p.x, p.y) <= position_radius &&
           angular_distance(p.heading, heading) <= heading_tolerance;
  }
};

namespace detail {

inline bool heading_arc_contains(const PoseRegion& inner, const PoseRegion& outer) {
  if (outer.heading_tolerance >= kPi - kRegionEps) return true;
  return angular_distance(inner.heading, outer.heading) + inner.heading_tolerance <=
         outer.heading_tolerance + kRegionEps;
}

// Two closed arcs on the circle are disjoint iff both gaps between them are
// non-negative (touching counts as disjoint, mirroring the disc test).
inline bool heading_arcs_disjoint(const PoseRegion& a, const PoseRegion& b) {
  const double d = angular_distance(a.heading, b.heading);
  const double span = a.heading_tolerance + b.heading_tolerance;
  return d >= span - kRegionEps && (kTwoPi - d) >= span - kRegionEps;
}

}  // namespace detail

/// True iff every pose of `inner` is a pose of `outer`.
inline bool region_contains(const PoseRegion& inner, const PoseRegion& outer) {
  inner.validate();
  outer.validate();
  const double d = std::hypot(inner.center_x - outer.center_x, inner.center_y - outer.center_y);
  return d + inner.position_radius <= outer.position_radius + kRegionEps &&
         detail::heading_arc_contains(inner, outer);
}

/// True iff the regions share no pose (boundary contact counts as disjoint).
inline bool regions_disjoint(const PoseRegion& a, const PoseRegion& b) {
  a.validate();
  b.validate();
  const double d = std::hypot(a.center_x - b.center_x, a.center_y - b.center_y);
  return d >= a.position_radius + b.position_radius - kRegionEps ||
         detail::heading_arcs_disjoint(a, b);
}

/// Field-wise equality with kRegionEps slack; headings compare modulo 2*pi.
inline bool regions_equal(const PoseRegion& a, const PoseRegion& b) {
  return std::abs(a.center_x - b.center_x) <= kRegionEps &&
         std::abs(a.center_y - b.center_y) <= kRegionEps &&
         std::abs(a.position_radius - b.position_radius) <= kRegionEps &&
         angular_distance(a.heading, b.heading) <= kRegionEps &&
         std::abs(a.heading_tolerance - b.heading_tolerance) <= kRegionEps;
}

}  // namespace mfcrl

#endif  // MFCRL_GEOMETRY_HPP_
