#include "hrtfgraph/hrir_core.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "hrtfgraph/error.hpp"

namespace hrtfgraph {

namespace fs = std::filesystem;
using json = nlohmann::json;

Direction::Direction(const Eigen::Vector3d& v) : v_(v) {
  if (!v.allFinite() || std::abs(v.norm() - 1.0) > kUnitNormTolerance) {
    throw Error(ErrorCode::NonUnitDirection,
                "direction norm " + std::to_string(v.norm()) + " is not 1");
  }
}

Direction Direction::normalized(const Eigen::Vector3d& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::DegenerateInput, "cannot normalize a zero direction");
  }
  return Direction(v / n);
}

Direction Direction::from_az_colat_deg(double azimuth_deg, double colatitude_deg) {
  const double az = azimuth_deg * std::numbers::pi / 180.0;
  const double col = colatitude_deg * std::numbers::pi / 180.0;
  return normalized(Eigen::Vector3d(std::sin(col) * std::cos(az), std::sin(col) * std::sin(az),
                                    std::cos(col)));
}

double Direction::azimuth_deg() const {
  double az = std::atan2(v_.y(), v_.x()) * 180.0 / std::numbers::pi;
  if (az < 0.0) az += 360.0;
  return az;
}

double Direction::colatitude_deg() const {
  return std::acos(std::clamp(v_.z(), -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

double Direction::angle_to(const Direction& other) const {
  // atan2 form stays accurate for nearly parallel vectors.
  return std::atan2(v_.cross(other.v_).norm(), v_.dot(other.v_));
}

Direction Direction::mirrored_y() const {
  Direction d;
  d.v_ = Eigen::Vector3d(v_.x(), -v_.y(), v_.z());
  return d;
}

void HrirSet::validate() const {
  const auto n = num_directions();
  if (n < 4) {
    throw Error(ErrorCode::ShapeMismatch, "need at least 4 directions, got " + std::to_string(n));
  }
  if (left.rows() != n || right.rows() != n || left.cols() != right.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "left/right must both be N x T with N = #directions");
  }
  if (left.cols() < 8) {
    throw Error(ErrorCode::ShapeMismatch, "need at least 8 samples per response");
  }
  if (!(sample_rate_hz > 0.0)) {
    throw Error(ErrorCode::MalformedMeta, "sample rate must be positive");
  }
  for (const auto& d : directions) {
    if (std::abs(d.vec().norm() - 1.0) > kUnitNormTolerance) {
      throw Error(ErrorCode::NonUnitDirection, "direction is not unit norm");
    }
  }
  // Sort by z so the duplicate scan only compares nearby candidates.
  std::vector<Eigen::Index> order(directions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) {
    return directions[a].vec().z() < directions[b].vec().z();
  });
  for (std::size_t a = 0; a < order.size(); ++a) {
    for (std::size_t b = a + 1; b < order.size(); ++b) {
      const auto& da = directions[order[a]];
      const auto& db = directions[order[b]];
      if (db.vec().z() - da.vec().z() > kDuplicateAngleTolerance) break;
      if (da.angle_to(db) <= kDuplicateAngleTolerance) {
        throw Error(ErrorCode::DuplicateDirection,
                    "directions " + std::to_string(order[a]) + " and " + std::to_string(order[b]) +
                        " coincide");
      }
    }
  }
}

Eigen::Index nearest_direction(const std::vector<Direction>& directions, const Direction& target) {
  Eigen::Index best = 0;
  double best_dot = -2.0;
  for (std::size_t i = 0; i < directions.size(); ++i) {
    const double d = directions[i].vec().dot(target.vec());
    if (d > best_dot) {
      best_dot = d;
      best = static_cast<Eigen::Index>(i);
    }
  }
  return best;
}

namespace {

std::uint32_t to_little_endian(std::uint32_t x) {
  if constexpr (std::endian::native == std::endian::big) {
    x = ((x & 0xFF000000u) >> 24) | ((x & 0x00FF0000u) >> 8) | ((x & 0x0000FF00u) << 8) |
        ((x & 0x000000FFu) << 24);
  }
  return x;
}

json read_meta(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedMeta, std::string("meta.json: ") + e.what());
  }
}

}  // namespace

HrirSet load_container(const fs::path& dir) {
  const fs::path meta_path = dir / "meta.json";
  const fs::path data_path = dir / "data.f32le";
  if (!fs::exists(meta_path)) throw Error(ErrorCode::MissingFile, meta_path.string());
  if (!fs::exists(data_path)) throw Error(ErrorCode::MissingFile, data_path.string());

  const json meta = read_meta(meta_path);
  HrirSet set;
  Eigen::Index n = 0;
  Eigen::Index t = 0;
  try {
    if (!meta.is_object()) throw Error(ErrorCode::MalformedMeta, "meta.json must be an object");
    set.name = meta.at("name").get<std::string>();
    set.sample_rate_hz = meta.at("sample_rate_hz").get<double>();
    const auto& jn = meta.at("num_directions");
    const auto& jt = meta.at("num_samples");
    if (!jn.is_number_integer() || !jt.is_number_integer()) {
      throw Error(ErrorCode::MalformedMeta, "num_directions/num_samples must be integers");
    }
    n = jn.get<Eigen::Index>();
    t = jt.get<Eigen::Index>();
    const auto& dirs = meta.at("directions");
    if (!dirs.is_array() || static_cast<Eigen::Index>(dirs.size()) != n) {
      throw Error(ErrorCode::MalformedMeta, "directions must be an array of num_directions entries");
    }
    set.directions.reserve(dirs.size());
    for (const auto& d : dirs) {
      if (!d.is_array() || d.size() != 3) {
        throw Error(ErrorCode::MalformedMeta, "each direction must have 3 components");
      }
      set.directions.emplace_back(
          Eigen::Vector3d(d[0].get<double>(), d[1].get<double>(), d[2].get<double>()));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedMeta, e.what());
  }
  if (n <= 0 || t <= 0) throw Error(ErrorCode::MalformedMeta, "empty shape");

  const auto expected = static_cast<std::uintmax_t>(n) * 2u * static_cast<std::uintmax_t>(t) * 4u;
  const auto actual = fs::file_size(data_path);
  if (actual != expected) {
    throw Error(ErrorCode::ShapeMismatch, "data.f32le has " + std::to_string(actual) +
                                              " bytes, expected " + std::to_string(expected));
  }
  std::ifstream in(data_path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, data_path.string());
  std::vector<std::uint32_t> raw(static_cast<std::size_t>(n * 2 * t));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(expected));
  if (!in) throw Error(ErrorCode::IoFailure, "short read on " + data_path.string());

  set.left.resize(n, t);
  set.right.resize(n, t);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int e = 0; e < 2; ++e) {
      auto& m = e == 0 ? set.left : set.right;
      for (Eigen::Index s = 0; s < t; ++s) {
        const std::uint32_t bits = to_little_endian(raw[static_cast<std::size_t>((i * 2 + e) * t + s)]);
        m(i, s) = static_cast<double>(std::bit_cast<float>(bits));
      }
    }
  }
  set.validate();
  return set;
}

void save_container(const HrirSet& set, const fs::path& dir) {
  set.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());

  json meta;
  meta["name"] = set.name;
  meta["sample_rate_hz"] = set.sample_rate_hz;
  meta["num_directions"] = set.num_directions();
  meta["num_samples"] = set.num_samples();
  json dirs = json::array();
  for (const auto& d : set.directions) dirs.push_back({d.vec().x(), d.vec().y(), d.vec().z()});
  meta["directions"] = std::move(dirs);

  {
    std::ofstream out(dir / "meta.json");
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write meta.json in " + dir.string());
    out << meta.dump(2) << '\n';
    if (!out) throw Error(ErrorCode::IoFailure, "write failed for meta.json");
  }

  const Eigen::Index n = set.num_directions();
  const Eigen::Index t = set.num_samples();
  std::vector<std::uint32_t> raw(static_cast<std::size_t>(n * 2 * t));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int e = 0; e < 2; ++e) {
      const auto& m = e == 0 ? set.left : set.right;
      for (Eigen::Index s = 0; s < t; ++s) {
        raw[static_cast<std::size_t>((i * 2 + e) * t + s)] =
            to_little_endian(std::bit_cast<std::uint32_t>(static_cast<float>(m(i, s))));
      }
    }
  }
  std::ofstream out(dir / "data.f32le", std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write data.f32le in " + dir.string());
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * sizeof(std::uint32_t)));
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for data.f32le");
}

}  // namespace hrtfgraph
