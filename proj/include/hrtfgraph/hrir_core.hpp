#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace hrtfgraph {

/// Measurement direction on the unit sphere.
///
/// Stored as a unit vector. Azimuth is counterclockwise from +x in the
/// xy-plane, colatitude is measured from +z; both are derived for display.
class Direction {
 public:
  Direction() = default;
  /// Throws NonUnitDirection unless |v| = 1 within 1e-9.
  explicit Direction(const Eigen::Vector3d& v);

  /// Normalizes `v`; throws DegenerateInput on a zero vector.
  static Direction normalized(const Eigen::Vector3d& v);
  static Direction from_az_colat_deg(double azimuth_deg, double colatitude_deg);

  const Eigen::Vector3d& vec() const { return v_; }
  double azimuth_deg() const;
  double colatitude_deg() const;

  /// Great-circle angle to `other`, radians.
  double angle_to(const Direction& other) const;
  /// Reflection through the plane y = 0.
  Direction mirrored_y() const;

 private:
  Eigen::Vector3d v_ = Eigen::Vector3d::UnitX();
};

enum class Ear { Left = 0, Right = 1 };
enum class EarSelector { Left, Right, Both };

inline constexpr double kUnitNormTolerance = 1e-9;
inline constexpr double kDuplicateAngleTolerance = 1e-6;

/// One subject's HRIRs: N directions, two N x T impulse-response matrices.
struct HrirSet {
  std::string name;
  double sample_rate_hz = 0.0;
  std::vector<Direction> directions;
  Eigen::MatrixXd left;   // N x T
  Eigen::MatrixXd right;  // N x T

  Eigen::Index num_directions() const { return static_cast<Eigen::Index>(directions.size()); }
  Eigen::Index num_samples() const { return left.cols(); }

  const Eigen::MatrixXd& ear(Ear e) const { return e == Ear::Left ? left : right; }
  Eigen::MatrixXd& ear(Ear e) { return e == Ear::Left ? left : right; }

  /// Throws on any broken invariant (shape, N >= 4, T >= 8, unit norms,
  /// duplicate directions).
  void validate() const;
};

/// Index of the direction nearest to `target`.
Eigen::Index nearest_direction(const std::vector<Direction>& directions, const Direction& target);

/// Reads `meta.json` + `data.f32le` from `dir`.
HrirSet load_container(const std::filesystem::path& dir);

/// Writes the container; creates `dir` if needed. Samples are rounded to
/// single precision.
void save_container(const HrirSet& set, const std::filesystem::path& dir);

}  // namespace hrtfgraph
