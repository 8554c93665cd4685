#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Core>

#include "hrtfgraph/hrir_core.hpp"
#include "hrtfgraph/l1_flow_solver.hpp"
#include "hrtfgraph/spherical_graph.hpp"

namespace hrtfgraph {

struct ToaSolution;

/// Wrapped phases psi_i[f] of one ear, N directions x F bins.
struct PhaseField {
  Eigen::MatrixXd wrapped;       // N x F, in [-pi, pi)
  Eigen::VectorXd bin_freqs_hz;  // F
  Eigen::Index fft_size = 0;
  double sample_rate_hz = 0.0;
  Ear ear = Ear::Left;

  Eigen::Index num_directions() const { return wrapped.rows(); }
  Eigen::Index num_bins() const { return wrapped.cols(); }

  /// Throws ShapeMismatch or InvalidArgument.
  void validate() const;
};

enum class UnwrapMethod { FreqOnly, SphericalOnly, Joint };

std::string to_string(UnwrapMethod method);
/// Accepts "freq", "spherical", "joint" (case-insensitive).
UnwrapMethod parse_unwrap_method(const std::string& name);

struct UnwrappedField {
  Eigen::MatrixXd phase;  // N x F; phase - wrapped = 2 pi residual_L
  IntMatrix residual_l;
  UnwrapMethod method = UnwrapMethod::FreqOnly;
  bool prealigned = false;
  double objective = 0.0;  // sum w |K| of the graph solve(s); 0 for FreqOnly
  Eigen::VectorXd bin_freqs_hz;
};

/// [x]_{2pi} in [-pi, pi).
double wrap(double x);

/// Phase field of one ear at `fft_size` (>= T); bins 0..fft_size/2.
PhaseField phase_field(const HrirSet& set, Ear ear, Eigen::Index fft_size);

/// Field of pure delays, phi_i[k] = -2 pi k tau_i / fft_size for bins
/// 0..fft_size/2, wrapped. The true phase goes to `true_phase` if given.
PhaseField pure_delay_field(const Eigen::VectorXd& delays_samples, Eigen::Index fft_size, double sample_rate_hz,
                            Eigen::MatrixXd* true_phase = nullptr);

/// Integrates wrapped differences along frequency per direction. F >= 2.
UnwrappedField unwrap_frequency(const PhaseField& field);

struct JointOptions {
  L1Formulation formulation = L1Formulation::Edgelist;
  /// Per-direction delays in samples whose linear phase is removed before
  /// the solve and restored afterwards. Empty: no pre-alignment.
  Eigen::VectorXd prealign_samples;
};

/// Joint sphere x frequency unwrapping on the stacked hull graph, all
/// weights one. Vertex (direction 0, bin 0) has L = 0.
UnwrappedField unwrap_joint(const PhaseField& field, const HullTriangulation& hull,
                            const JointOptions& options = {});

/// Delays in samples of the field's ear taken from a TOA solution.
Eigen::VectorXd prealign_samples(const ToaSolution& toa, Ear ear);

/// Per-bin spherical solves, then per-bin global offsets chosen in order so
/// the summed |jump| to the previous bin is smallest (ties: smallest |c|).
UnwrappedField unwrap_spherical_sim(const PhaseField& field, const HullTriangulation& hull,
                                    int jobs = 1);

/// Integer edge datum for a directed pair: L_v - L_u when the wrapped
/// difference is taken as the true one. The flag is set when the raw
/// difference sits within 1e-9 of +-pi.
std::int64_t phase_edge_gamma(double psi_u, double psi_v, bool* ambiguous = nullptr);

/// -phi[f] / (2 pi f_hz) for bins 1..F-1, seconds. N x (F-1).
Eigen::MatrixXd phase_delay(const UnwrappedField& u);

/// Long format: direction_index,freq_hz,value. `values` has one column per
/// entry of `freqs_hz`.
void write_long_csv(const Eigen::MatrixXd& values, const Eigen::VectorXd& freqs_hz,
                    const std::filesystem::path& path, const std::string& header_comment = {});

}  // namespace hrtfgraph
