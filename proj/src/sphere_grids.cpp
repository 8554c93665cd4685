#include "hrtfgraph/sphere_grids.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "hrtfgraph/error.hpp"

namespace hrtfgraph {

namespace {

using Eigen::Matrix3d;
using Eigen::Vector3d;

std::vector<Vector3d> icosahedron_vertices() {
  const double phi = std::numbers::phi;
  std::vector<Vector3d> v;
  for (double a : {-1.0, 1.0}) {
    for (double b : {-phi, phi}) {
      v.emplace_back(0.0, a, b);
      v.emplace_back(a, b, 0.0);
      v.emplace_back(b, 0.0, a);
    }
  }
  for (auto& x : v) x.normalize();
  return v;
}

// Rotations of the icosahedron plus their negatives (the full group, 120 elements).
std::vector<Matrix3d> icosahedral_group() {
  const double phi = std::numbers::phi;
  const Vector3d vertex = Vector3d(0.0, 1.0, phi).normalized();
  const Vector3d face = (Vector3d(0.0, 1.0, phi) + Vector3d(0.0, -1.0, phi) + Vector3d(phi, 0.0, 1.0)).normalized();
  const std::vector<Matrix3d> gens{Eigen::AngleAxisd(2.0 * std::numbers::pi / 5.0, vertex).toRotationMatrix(),
                                   Eigen::AngleAxisd(2.0 * std::numbers::pi / 3.0, face).toRotationMatrix()};
  std::vector<Matrix3d> group{Matrix3d::Identity()};
  for (std::size_t k = 0; k < group.size(); ++k) {
    for (const auto& g : gens) {
      const Matrix3d m = g * group[k];
      const bool known = std::any_of(group.begin(), group.end(), [&](const Matrix3d& x) { return (x - m).norm() < 1e-9; });
      if (!known) group.push_back(m);
    }
  }
  const std::size_t rotations = group.size();
  for (std::size_t k = 0; k < rotations; ++k) group.push_back(-group[k]);
  return group;
}

double legendre6(double t) {
  const double t2 = t * t;
  return (((231.0 * t2 - 315.0) * t2 + 105.0) * t2 - 5.0) / 16.0;
}

// Spans the one-dimensional space of degree-6 invariants.
double invariant6(const Vector3d& x, const std::vector<Vector3d>& vertices) {
  double s = 0.0;
  for (const auto& v : vertices) s += legendre6(v.dot(x));
  return s;
}

Vector3d slerp(const Vector3d& a, const Vector3d& b, double t) { return ((1.0 - t) * a + t * b).normalized(); }

std::vector<Vector3d> zero_orbit(const Vector3d& hi, const Vector3d& lo, const std::vector<Matrix3d>& group,
                                 const std::vector<Vector3d>& vertices) {
  double a = 0.0;
  double b = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double m = 0.5 * (a + b);
    if (invariant6(slerp(hi, lo, m), vertices) > 0.0) {
      a = m;
    } else {
      b = m;
    }
  }
  const Vector3d p = slerp(hi, lo, 0.5 * (a + b));
  std::vector<Vector3d> orbit;
  for (const auto& g : group) orbit.push_back(g * p);
  return orbit;
}

}  // namespace

std::vector<Direction> fibonacci_sphere(Eigen::Index n) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "need at least one point");
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Direction> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double a = golden * static_cast<double>(i);
    out.push_back(Direction::normalized({r * std::cos(a), r * std::sin(a), z}));
  }
  return out;
}

std::vector<Direction> icosahedral_design_240() {
  const auto vertices = icosahedron_vertices();
  const auto group = icosahedral_group();
  if (group.size() != 120) throw Error(ErrorCode::SolverFailure, "icosahedral group closure failed");
  // The invariant peaks at the vertices. Walk towards spiral points where it
  // is negative and keep zero crossings whose orbits are free (120 points).
  const Vector3d top = vertices.front();
  std::vector<Vector3d> points;
  int found = 0;
  for (const auto& seed : fibonacci_sphere(97)) {
    if (found == 2) break;
    if (!(invariant6(seed.vec(), vertices) < -0.5)) continue;
    const auto orbit = zero_orbit(top, seed.vec(), group, vertices);
    bool free_orbit = true;
    for (std::size_t i = 0; i < orbit.size() && free_orbit; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if ((orbit[i] - orbit[j]).norm() < 1e-3) free_orbit = false;
      }
      for (const auto& q : points) {
        if ((orbit[i] - q).norm() < 1e-3) free_orbit = false;
      }
    }
    if (!free_orbit) continue;
    points.insert(points.end(), orbit.begin(), orbit.end());
    ++found;
  }
  if (found != 2) throw Error(ErrorCode::SolverFailure, "could not place the design orbits");
  std::vector<Direction> out;
  for (const auto& p : points) out.push_back(Direction::normalized(p));
  return out;
}

}  // namespace hrtfgraph
