#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hrtfgraph/hrir_core.hpp"
#include "hrtfgraph/phase_unwrap.hpp"
#include "hrtfgraph/toa.hpp"

namespace hrtfgraph {

inline constexpr double kShRegularization = 1e-5;

/// Real orthonormal spherical harmonics without the Condon-Shortley phase.
/// Column l*l + l + m holds Y_l^m; m > 0 uses cos(m az), m < 0 sin(|m| az).
struct ShField {
  int order = 0;
  Eigen::MatrixXd coeffs;  // (order+1)^2 x C
};

Eigen::Index sh_basis_size(int order);

/// N x (order+1)^2 design matrix.
Eigen::MatrixXd sh_matrix(const std::vector<Direction>& directions, int order);

/// Regularized least squares (Y^T Y + reg I)^-1 Y^T values. Throws
/// RankDeficient when reg is 0 and the design is rank deficient.
ShField sh_encode(const Eigen::MatrixXd& values, const std::vector<Direction>& directions, int order,
                  double reg = kShRegularization);

Eigen::MatrixXd sh_decode(const ShField& field, const std::vector<Direction>& directions);

/// Mean absolute difference (same unit as the inputs, microseconds for ITDs).
double itd_distortion(const Eigen::VectorXd& reference, const Eigen::VectorXd& reconstructed);

/// Band of bins used by lsd: frequencies in [lo_hz, hi_hz]. The default is
/// bin 1 up to Nyquist.
struct LsdBand {
  double lo_hz = -1.0;  // negative: first bin above DC
  double hi_hz = std::numeric_limits<double>::infinity();
};

/// RMS over in-band bins of the dB magnitude difference, per direction and
/// ear, then averaged over directions and both ears.
double lsd(const HrirSet& reference, const HrirSet& reconstructed, Eigen::Index fft_size, const LsdBand& band = {});

/// Per-direction LSD averaged over the two ears.
Eigen::VectorXd lsd_per_direction(const HrirSet& reference, const HrirSet& reconstructed, Eigen::Index fft_size,
                                  const LsdBand& band = {});

struct ExperimentOptions {
  double reg = kShRegularization;
  Eigen::Index fft_size = 0;  // 0: response length
  LsdBand band;
  int jobs = 1;
};

struct MetricReport {
  std::string experiment;
  std::string dataset;
  ToaConfig config;
  int sh_order = 0;
  double snr_db = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;
  double itd_distortion_us = 0.0;
  double lsd_db = 0.0;
  Eigen::VectorXd itd_error_us;   // per direction
  Eigen::VectorXd lsd_direction;  // per direction, both ears averaged
  double solve_seconds = 0.0;
  Eigen::Index fft_size = 0;
};

/// SH round trip of one TOA solution. ITDs are compared with
/// `reference_itd_us`; decoded aligned responses with `reference_aligned`.
MetricReport evaluate_solution(const ToaSolution& solution, const Eigen::VectorXd& reference_itd_us,
                               const HrirSet& reference_aligned, int sh_order, const ExperimentOptions& options = {});

/// estimate_toa, then evaluate_solution against the solution itself.
MetricReport run_alignment_experiment(const HrirSet& set, const ToaConfig& config, int sh_order,
                                      const ExperimentOptions& options = {});

/// For each SNR (infinity: no noise) one noise realization from `seed` is
/// added; every config solves the noisy set. References: ITDs of the same
/// config on the clean set, and the clean set aligned by the noisy TOAs.
std::vector<MetricReport> run_noise_experiment(const HrirSet& set, const std::vector<double>& snr_grid_db,
                                               const std::vector<ToaConfig>& configs,
                                               const std::vector<int>& sh_orders, std::uint64_t seed,
                                               const ExperimentOptions& options = {});

struct PhaseDelayRow {
  UnwrapMethod method = UnwrapMethod::Joint;
  bool prealigned = false;
  int sh_order = 0;
  double freq_hz = 0.0;
  double error_us = 0.0;  // mean over directions of |decoded - unwrapped| phase delay
  double objective = 0.0;
};

struct PhaseMethod {
  UnwrapMethod method = UnwrapMethod::Joint;
  bool prealign = false;
};

/// Left ear by default. Pre-alignment delays come from estimate_toa with
/// `toa_config`.
std::vector<PhaseDelayRow> run_phase_delay_experiment(const HrirSet& set, const std::vector<PhaseMethod>& methods,
                                                      const std::vector<int>& sh_orders,
                                                      const ExperimentOptions& options = {},
                                                      const ToaConfig& toa_config = {}, Ear ear = Ear::Left);

/// experiment,dataset,algorithm,weighting,minphase,cross,oversample,method,
/// prealigned,snr_db,sh_order,freq_hz,metric,value
void write_metric_csv(const std::vector<MetricReport>& reports, const std::filesystem::path& path,
                      const std::string& header_comment = {});
void write_phase_csv(const std::vector<PhaseDelayRow>& rows, const std::string& dataset,
                     const std::filesystem::path& path, const std::string& header_comment = {});

/// {"config": <config_json>, "rows": [...]}; `config_json` must be JSON text.
std::string metric_json(const std::vector<MetricReport>& reports, const std::string& config_json = "{}");
std::string phase_json(const std::vector<PhaseDelayRow>& rows, const std::string& dataset,
                       const std::string& config_json = "{}");

}  // namespace hrtfgraph
