#pragma once

#include <vector>

#include "hrtfgraph/hrir_core.hpp"

namespace hrtfgraph {

/// Golden-angle spiral with z = 1 - (2i + 1) / n.
std::vector<Direction> fibonacci_sphere(Eigen::Index n);

/// 240 points forming two orbits of the full icosahedral group, chosen so
/// every real spherical harmonic of degree 1..9 sums to zero over the set.
/// Equal-weight quadrature is exact up to degree 9.
std::vector<Direction> icosahedral_design_240();

}  // namespace hrtfgraph
