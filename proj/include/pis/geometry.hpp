#pragma once

// Toroidal charts U = N x R^{k-m} x T^m. Coordinates are always ordered as
// (base r^A, cylinder t^a, angles phi^i).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pis/error.hpp"

namespace pis {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Reduces an angle to [0, 2pi).
inline double wrap_angle(double a) {
  double r = std::fmod(a, two_pi);
  if (r < 0.0) r += two_pi;
  // fmod of a value just below a multiple of 2pi can round up to 2pi.
  if (r >= two_pi) r = 0.0;
  return r;
}

/// Signed shortest-arc difference a - b in (-pi, pi].
inline double angle_difference(double a, double b) {
  double d = wrap_angle(a - b);
  return d > std::numbers::pi ? d - two_pi : d;
}

struct Interval {
  double lower = 0.0;
  double upper = 1.0;

  double width() const { return upper - lower; }
  double midpoint() const { return 0.5 * (lower + upper); }
  bool contains(double x) const { return x >= lower && x <= upper; }
};

class ChartDomain {
 public:
  ChartDomain() = default;

  std::size_t dim_base() const { return dim_base_; }
  std::size_t k() const { return k_; }
  std::size_t m() const { return m_; }
  std::size_t dim() const { return dim_base_ + k_; }
  std::size_t cylinder_dim() const { return k_ - m_; }

  /// First index of the fiber coordinates y^lambda = (t^a, phi^i).
  std::size_t fiber_offset() const { return dim_base_; }
  std::size_t angle_offset() const { return dim_base_ + k_ - m_; }
  bool is_angle(std::size_t i) const { return i >= angle_offset() && i < dim(); }

  const std::vector<Interval>& base_bounds() const { return base_bounds_; }
  const Interval& cylinder_box() const { return cylinder_box_; }
  const std::vector<std::string>& coordinate_names() const { return names_; }

  /// Index of a coordinate name, or -1.
  int index_of(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    return it == names_.end() ? -1 : static_cast<int>(it - names_.begin());
  }

  friend ChartDomain make_domain(std::size_t, std::size_t, std::size_t, std::vector<Interval>,
                                 std::vector<std::string>, Interval);

 private:
  std::size_t dim_base_ = 0;
  std::size_t k_ = 0;
  std::size_t m_ = 0;
  std::vector<Interval> base_bounds_;
  Interval cylinder_box_{-1.0, 1.0};
  std::vector<std::string> names_;
};

/// Default coordinate names r1.., t1.., phi1...
inline std::vector<std::string> default_coordinate_names(std::size_t dim_base, std::size_t k,
                                                         std::size_t m) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < dim_base; ++i) names.push_back("r" + std::to_string(i + 1));
  for (std::size_t i = 0; i + m < k; ++i) names.push_back("t" + std::to_string(i + 1));
  for (std::size_t i = 0; i < m; ++i) names.push_back("phi" + std::to_string(i + 1));
  return names;
}

/// Validates and builds a chart domain. Empty `names` selects the defaults.
inline ChartDomain make_domain(std::size_t dim_base, std::size_t k, std::size_t m,
                               std::vector<Interval> bounds, std::vector<std::string> names = {},
                               Interval cylinder_box = {-1.0, 1.0}) {
  if (k == 0) throw ConstructionError("make_domain: algebra dimension k must be positive");
  if (m > k) {
    throw ConstructionError("make_domain: torus rank m = " + std::to_string(m) +
                            " exceeds algebra dimension k = " + std::to_string(k));
  }
  if (bounds.size() != dim_base) {
    throw ConstructionError("make_domain: expected " + std::to_string(dim_base) +
                            " base bounds, got " + std::to_string(bounds.size()));
  }
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    const auto& b = bounds[i];
    if (!std::isfinite(b.lower) || !std::isfinite(b.upper) || !(b.lower < b.upper)) {
      throw ConstructionError("make_domain: base bound " + std::to_string(i) +
                              " must be finite with lower < upper");
    }
  }
  if (!std::isfinite(cylinder_box.lower) || !std::isfinite(cylinder_box.upper) ||
      !(cylinder_box.lower < cylinder_box.upper)) {
    throw ConstructionError("make_domain: cylinder box must be finite with lower < upper");
  }
  if (names.empty()) names = default_coordinate_names(dim_base, k, m);
  if (names.size() != dim_base + k) {
    throw ConstructionError("make_domain: expected " + std::to_string(dim_base + k) +
                            " coordinate names, got " + std::to_string(names.size()));
  }
  std::set<std::string> unique(names.begin(), names.end());
  if (unique.size() != names.size()) throw ConstructionError("make_domain: coordinate names must be unique");

  ChartDomain d;
  d.dim_base_ = dim_base;
  d.k_ = k;
  d.m_ = m;
  d.base_bounds_ = std::move(bounds);
  d.cylinder_box_ = cylinder_box;
  d.names_ = std::move(names);
  return d;
}

/// A point of a chart. Angle components are kept in [0, 2pi).
class Point {
 public:
  Point() = default;

  /// Builds a point from flat chart coordinates, wrapping the angles.
  Point(const ChartDomain& domain, Eigen::VectorXd coords)
      : coords_(std::move(coords)),
        dim_base_(domain.dim_base()),
        cylinder_dim_(domain.cylinder_dim()),
        m_(domain.m()) {
    if (static_cast<std::size_t>(coords_.size()) != domain.dim()) {
      throw PreconditionError("Point: coordinate vector has wrong length");
    }
    reduce();
  }

  const Eigen::VectorXd& coords() const { return coords_; }
  std::size_t dim() const { return static_cast<std::size_t>(coords_.size()); }
  double operator[](std::size_t i) const { return coords_[static_cast<Eigen::Index>(i)]; }

  auto base() const { return coords_.head(static_cast<Eigen::Index>(dim_base_)); }
  auto cylinder() const {
    return coords_.segment(static_cast<Eigen::Index>(dim_base_), static_cast<Eigen::Index>(cylinder_dim_));
  }
  auto angles() const { return coords_.tail(static_cast<Eigen::Index>(m_)); }

  std::size_t angle_offset() const { return dim_base_ + cylinder_dim_; }
  std::size_t m() const { return m_; }

  /// Same layout, new coordinates (wrapped).
  Point with_coords(Eigen::VectorXd coords) const {
    Point p = *this;
    p.coords_ = std::move(coords);
    p.reduce();
    return p;
  }

  bool in_domain(const ChartDomain& domain) const {
    for (std::size_t i = 0; i < dim_base_; ++i) {
      if (!domain.base_bounds()[i].contains(coords_[static_cast<Eigen::Index>(i)])) return false;
    }
    return true;
  }

 private:
  void reduce() {
    for (std::size_t i = angle_offset(); i < dim(); ++i) {
      auto& a = coords_[static_cast<Eigen::Index>(i)];
      a = wrap_angle(a);
    }
  }

  Eigen::VectorXd coords_;
  std::size_t dim_base_ = 0;
  std::size_t cylinder_dim_ = 0;
  std::size_t m_ = 0;
};

inline Point wrap(const Point& p) { return p.with_coords(p.coords()); }

/// Euclidean distance with angle components measured along the shortest arc.
inline double distance(const Point& a, const Point& b) {
  if (a.dim() != b.dim()) throw PreconditionError("distance: points of different charts");
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    double d = i >= a.angle_offset() ? angle_difference(a[i], b[i]) : a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

/// Coordinate difference a - b with angle components on (-pi, pi].
inline Eigen::VectorXd chart_difference(const ChartDomain& domain, const Eigen::VectorXd& a,
                                        const Eigen::VectorXd& b) {
  Eigen::VectorXd d = a - b;
  for (std::size_t i = domain.angle_offset(); i < domain.dim(); ++i) {
    auto j = static_cast<Eigen::Index>(i);
    d[j] = angle_difference(a[j], b[j]);
  }
  return d;
}

/// Partition of the base indices into action coordinates (I or J) and
/// transverse coordinates z.
struct CoordinateSplit {
  std::vector<std::size_t> action_indices;
  std::vector<std::size_t> transverse_indices;
};

inline CoordinateSplit make_split(const ChartDomain& domain, std::vector<std::size_t> action_indices) {
  std::vector<bool> used(domain.dim_base(), false);
  for (auto i : action_indices) {
    if (i >= domain.dim_base()) throw ConstructionError("make_split: action index outside the base");
    if (used[i]) throw ConstructionError("make_split: duplicate action index");
    used[i] = true;
  }
  CoordinateSplit s;
  s.action_indices = std::move(action_indices);
  for (std::size_t i = 0; i < domain.dim_base(); ++i) {
    if (!used[i]) s.transverse_indices.push_back(i);
  }
  return s;
}

/// The first k base coordinates are the actions.
inline CoordinateSplit leading_split(const ChartDomain& domain) {
  if (domain.dim_base() < domain.k()) throw ConstructionError("leading_split: dim_base < k");
  std::vector<std::size_t> idx(domain.k());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return make_split(domain, idx);
}

namespace detail {

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace detail

/// Deterministic uniform samples over base bounds x cylinder box x [0, 2pi)^m.
inline std::vector<Point> sample(const ChartDomain& domain, std::size_t count, std::uint64_t seed) {
  if (count == 0) throw PreconditionError("sample: count must be at least 1");
  std::mt19937_64 rng(seed);
  std::vector<Point> out;
  out.reserve(count);
  const auto n = static_cast<Eigen::Index>(domain.dim());
  for (std::size_t c = 0; c < count; ++c) {
    Eigen::VectorXd x(n);
    for (std::size_t i = 0; i < domain.dim(); ++i) {
      double u = detail::unit_uniform(rng);
      Interval iv = i < domain.dim_base() ? domain.base_bounds()[i]
                    : domain.is_angle(i)  ? Interval{0.0, two_pi}
                                          : domain.cylinder_box();
      x[static_cast<Eigen::Index>(i)] = iv.lower + u * iv.width();
    }
    out.emplace_back(domain, std::move(x));
  }
  return out;
}

}  // namespace pis
