#include "hrtfgraph/synth.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>
#include <numbers>
#include <random>

#include "hrtfgraph/dsp.hpp"
#include "hrtfgraph/error.hpp"
#include "hrtfgraph/sphere_grids.hpp"

namespace hrtfgraph {

namespace {

using Eigen::Index;
using Eigen::VectorXd;

VectorXd prototype(Index length) {
  VectorXd raw = VectorXd::Zero(length);
  const Index support = std::min<Index>(length, 64);
  for (Index t = 0; t < support; ++t) {
    const double x = static_cast<double>(t);
    raw(t) = std::exp(-x / 7.0) * std::cos(2.0 * std::numbers::pi * 0.11 * x) +
             0.6 * std::exp(-x / 4.0) * std::cos(2.0 * std::numbers::pi * 0.29 * x + 0.4) +
             0.3 * std::exp(-x / 11.0) * std::sin(2.0 * std::numbers::pi * 0.05 * x);
  }
  VectorXd h = dsp::minimum_phase(raw);
  return h / h.cwiseAbs().maxCoeff();
}

// Half-Hann fade over 75-90% of the length, silent after. Fractional delays
// otherwise leave 1/t sinc leakage in the tail.
VectorXd tail_window(Index length) {
  VectorXd w = VectorXd::Ones(length);
  const Index start = (3 * length) / 4;
  const Index stop = length - std::max<Index>(1, length / 10);
  for (Index t = start; t < length; ++t) {
    if (t >= stop) {
      w(t) = 0.0;
    } else {
      const double x = static_cast<double>(t - start) / static_cast<double>(stop - start);
      w(t) = 0.5 * (1.0 + std::cos(std::numbers::pi * x));
    }
  }
  return w;
}

}  // namespace

double woodworth_delay_s(double angle, double head_radius_m, double speed_of_sound_mps) {
  const double a = std::clamp(angle, 0.0, std::numbers::pi);
  const double scale = head_radius_m / speed_of_sound_mps;
  if (a < 0.5 * std::numbers::pi) return -scale * std::cos(a);
  return scale * (a - 0.5 * std::numbers::pi);
}

SynthSet make_rigid_sphere_set(const SynthConfig& config) {
  if (config.num_samples < 8 || !(config.sample_rate_hz > 0.0) || config.head_radius_m < 0.0 ||
      !(config.speed_of_sound_mps > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "invalid synthetic set parameters");
  }
  SynthSet out;
  out.set.name = "rigid-sphere";
  out.set.sample_rate_hz = config.sample_rate_hz;
  if (config.grid == SynthGrid::Design240) {
    out.set.directions = icosahedral_design_240();
  } else {
    if (config.num_directions < 4) throw Error(ErrorCode::InvalidArgument, "need at least 4 directions");
    out.set.directions = fibonacci_sphere(config.num_directions);
  }
  const Index n = out.set.num_directions();
  const Index t = config.num_samples;
  const VectorXd proto = prototype(t);
  const VectorXd window = tail_window(t);
  out.set.left.resize(n, t);
  out.set.right.resize(n, t);
  out.tau_left_s.resize(n);
  out.tau_right_s.resize(n);
  const Direction left_ear(Eigen::Vector3d::UnitY());
  const Direction right_ear(-Eigen::Vector3d::UnitY());
  for (Index i = 0; i < n; ++i) {
    const auto& d = out.set.directions[static_cast<std::size_t>(i)];
    for (Ear ear : {Ear::Left, Ear::Right}) {
      const double angle = d.angle_to(ear == Ear::Left ? left_ear : right_ear);
      const double tau = config.base_delay_s + woodworth_delay_s(angle, config.head_radius_m, config.speed_of_sound_mps);
      const double gain = std::pow(10.0, -config.shadow_db / 20.0 * (1.0 - std::cos(angle)) / 2.0);
      out.set.ear(ear).row(i) =
          gain * dsp::fractional_delay(proto, -tau * config.sample_rate_hz).cwiseProduct(window).transpose();
      (ear == Ear::Left ? out.tau_left_s : out.tau_right_s)(i) = tau;
    }
  }
  if (std::isfinite(config.snr_db)) {
    const Index front = front_direction(out.set.directions);
    out.noise_sigma = noise_sigma_for_snr(out.set, front, config.snr_db);
    out.set = add_white_noise(out.set, out.noise_sigma, config.seed);
  }
  return out;
}

namespace {

// Both ears pooled.
std::vector<double> pooled_magnitudes(const HrirSet& set, Index direction) {
  std::vector<double> mag;
  mag.reserve(static_cast<std::size_t>(2 * set.num_samples()));
  for (Index k = 0; k < set.num_samples(); ++k) {
    mag.push_back(std::abs(set.left(direction, k)));
    mag.push_back(std::abs(set.right(direction, k)));
  }
  return mag;
}

Index decile_count(Index samples) { return std::max<Index>(1, samples / 10); }

}  // namespace

double signal_power(const HrirSet& set, Index direction) {
  auto mag = pooled_magnitudes(set, direction);
  const auto k = static_cast<std::size_t>(decile_count(static_cast<Index>(mag.size())));
  std::partial_sort(mag.begin(), mag.begin() + static_cast<std::ptrdiff_t>(k), mag.end(), std::greater<>());
  double p = 0.0;
  for (std::size_t i = 0; i < k; ++i) p += mag[i] * mag[i];
  return p / static_cast<double>(k);
}

double measurement_snr_db(const HrirSet& set, Index direction) {
  const Index t = set.num_samples();
  const Index k = decile_count(t);
  const double noise = (set.left.row(direction).tail(k).squaredNorm() + set.right.row(direction).tail(k).squaredNorm()) /
                       static_cast<double>(2 * k);
  if (noise == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(signal_power(set, direction) / noise);
}

HrirSet add_white_noise(const HrirSet& set, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  HrirSet out = set;
  for (Index i = 0; i < set.num_directions(); ++i) {
    for (Ear ear : {Ear::Left, Ear::Right}) {
      for (Index k = 0; k < set.num_samples(); ++k) out.ear(ear)(i, k) += sigma * g(rng);
    }
  }
  return out;
}

double noise_sigma_for_snr(const HrirSet& clean, Index direction, double target_db) {
  const double p = signal_power(clean, direction);
  if (!(p > 0.0)) throw Error(ErrorCode::ZeroEnergySignal, "probed direction is silent");
  return std::sqrt(p / std::pow(10.0, target_db / 10.0));
}

Index front_direction(const std::vector<Direction>& directions) {
  return nearest_direction(directions, Direction(Eigen::Vector3d::UnitX()));
}

}  // namespace hrtfgraph
