#pragma once

#include <cstdint>
#include <limits>
#include <string>

#include <Eigen/Core>

#include "hrtfgraph/hrir_core.hpp"

namespace hrtfgraph {

enum class SynthGrid { Fibonacci, Design240 };

struct SynthConfig {
  SynthGrid grid = SynthGrid::Fibonacci;
  Eigen::Index num_directions = 256;  // Fibonacci only
  double head_radius_m = 0.0875;
  double speed_of_sound_mps = 343.0;
  double sample_rate_hz = 44100.0;
  Eigen::Index num_samples = 256;
  double base_delay_s = 1e-3;
  double shadow_db = 20.0;  // contralateral attenuation
  double snr_db = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 1;
};

/// Rigid-sphere path delay relative to the head centre for a source at
/// `angle` radians from the ear axis.
double woodworth_delay_s(double angle, double head_radius_m, double speed_of_sound_mps);

struct SynthSet {
  HrirSet set;
  Eigen::VectorXd tau_left_s;  // ground-truth onset delays
  Eigen::VectorXd tau_right_s;
  double noise_sigma = 0.0;
};

/// A shared minimum-phase prototype, delayed per ear by base + rigid-sphere
/// delay and attenuated on the far side, then faded out so the last 10% of
/// samples is silent. Left ear on +y, right ear on -y.
SynthSet make_rigid_sphere_set(const SynthConfig& config);

/// Mean square of the top-decile-magnitude samples of one direction, both
/// ears pooled.
double signal_power(const HrirSet& set, Eigen::Index direction);

/// Measurement SNR of one direction in dB: signal_power over the mean square
/// of the last 10% of samples in time (the tail), both ears pooled.
double measurement_snr_db(const HrirSet& set, Eigen::Index direction);

/// Adds white Gaussian noise of standard deviation `sigma` to every sample.
HrirSet add_white_noise(const HrirSet& set, double sigma, std::uint64_t seed);

/// Noise level whose power sits `target_db` below signal_power of the clean
/// set at `direction`. Once the noise dominates the tail, the measured SNR
/// tracks the target.
double noise_sigma_for_snr(const HrirSet& clean, Eigen::Index direction, double target_db);

/// Direction nearest to azimuth 0, colatitude 90 degrees.
Eigen::Index front_direction(const std::vector<Direction>& directions);

}  // namespace hrtfgraph
