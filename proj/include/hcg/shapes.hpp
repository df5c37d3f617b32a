#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <vector>

namespace hcg {

using Vec2 = Eigen::Vector2d;

struct Disk {
  Vec2 center = Vec2::Zero();
  double radius = 0.0;
};

struct Segment2 {
  Vec2 a = Vec2::Zero();
  Vec2 b = Vec2::Zero();
};

inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 <= 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

// Strict interior crossing: the open disk intersects the segment.
inline bool segment_crosses_disk(const Vec2& a, const Vec2& b, const Disk& d,
                                 double slack = 1e-9) {
  return point_segment_distance(d.center, a, b) < d.radius - slack;
}

// Capsule (segment with radius) against a disk.
inline bool capsule_intersects_disk(const Segment2& seg, double capsule_radius,
                                    const Disk& d) {
  return point_segment_distance(d.center, seg.a, seg.b) < capsule_radius + d.radius;
}

inline bool point_in_disk(const Vec2& p, const Disk& d) {
  return (p - d.center).norm() < d.radius;
}

inline double segment_length(const Segment2& s) { return (s.b - s.a).norm(); }

// Polyline arc-length resampling to exactly n points (endpoints preserved).
inline std::vector<Vec2> resample_polyline(const std::vector<Vec2>& pts, int n) {
  std::vector<double> cum{0.0};
  for (std::size_t i = 1; i < pts.size(); ++i) {
    cum.push_back(cum.back() + (pts[i] - pts[i - 1]).norm());
  }
  const double total = cum.back();
  std::vector<Vec2> out;
  out.reserve(n);
  std::size_t seg = 0;
  for (int k = 0; k < n; ++k) {
    const double s = total * static_cast<double>(k) / static_cast<double>(n - 1);
    while (seg + 2 < pts.size() && cum[seg + 1] < s) ++seg;
    const double seg_len = cum[seg + 1] - cum[seg];
    const double t = seg_len > 0.0 ? (s - cum[seg]) / seg_len : 0.0;
    out.push_back(pts[seg] + t * (pts[seg + 1] - pts[seg]));
  }
  out.front() = pts.front();
  out.back() = pts.back();
  return out;
}

}  // namespace hcg
