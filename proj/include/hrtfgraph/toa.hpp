#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "hrtfgraph/hrir_core.hpp"
#include "hrtfgraph/spherical_graph.hpp"

namespace hrtfgraph {

enum class Algorithm { Simp, Edgy, Ls };
enum class Weighting { None, Exp, Corr };

std::string to_string(Algorithm a);
std::string to_string(Weighting w);
/// Case-insensitive; throws InvalidArgument on unknown names.
Algorithm parse_algorithm(const std::string& name);
Weighting parse_weighting(const std::string& name);

struct ToaConfig {
  Algorithm algorithm = Algorithm::Edgy;
  Weighting weighting = Weighting::Exp;
  bool use_minphase = false;
  bool use_cross = false;
  int oversample_factor = 10;
  double sigma_deg = 8.0;
  double delta_weight = 0.1;
  double lambda = 0.1;
  long max_lag = -1;  // fine samples; < 0 searches the full overlap

  void validate() const;
  /// e.g. "edgy-exp-min-cross"
  std::string label() const;
};

/// Integer lags in fine (oversampled) samples and their correlation peaks.
struct EdgeMeasurement {
  IntVector gamma;
  Eigen::VectorXd peak;
};

/// Per hull edge (i, j), i < j: lag of h_j relative to h_i on the fine grid.
EdgeMeasurement measure_intra_gammas(const HrirSet& set, const HullTriangulation& hull, EarSelector ear,
                                     int factor, long max_lag = -1);

/// Per direction: lag of the right HRIR relative to the left one.
EdgeMeasurement measure_cross_gammas(const HrirSet& set, int factor, long max_lag = -1);

/// Per direction: lag of the HRIR relative to its minimum-phase version,
/// an estimate of the absolute delay.
EdgeMeasurement measure_minphase_gammas(const HrirSet& set, EarSelector ear, int factor, long max_lag = -1);

/// Weights for one edge kind. Intra: one per hull edge; InterAural and
/// AbsoluteDelta: one per direction. `peaks` is required for CORR.
Eigen::VectorXd compute_weights(Weighting scheme, EdgeKind kind, const HullTriangulation& hull,
                                const std::vector<Direction>& directions, const Eigen::VectorXd* peaks,
                                const ToaConfig& config);

struct ToaFeatures {
  EdgeMeasurement intra_left;
  EdgeMeasurement intra_right;
  std::optional<EdgeMeasurement> cross;
  std::optional<EdgeMeasurement> minphase_left;
  std::optional<EdgeMeasurement> minphase_right;
};

ToaFeatures measure_features(const HrirSet& set, const HullTriangulation& hull, const ToaConfig& config);

struct ToaDiagnostics {
  double objective = 0.0;
  std::map<long, long> residual_histogram;  // rounded residual -> edge count
  double solve_seconds = 0.0;
  std::string gauge;
  Eigen::Index num_vertices = 0;
  Eigen::Index num_edges = 0;
};

struct ToaSolution {
  Eigen::VectorXd tau_left;   // fine samples
  Eigen::VectorXd tau_right;  // fine samples
  Eigen::VectorXd itd_us;     // positive: left ear later
  HrirSet aligned;
  ToaConfig config;
  ToaDiagnostics diagnostics;
};

/// Assembles the configured graph from measured features, solves it and
/// applies the gauge: absolute with a delta vertex, otherwise zero mean per
/// ear (over both ears when they are joined). Aligned HRIRs are advanced by
/// (tau - min over both ears) / factor samples.
ToaSolution solve_toa(const HrirSet& set, const HullTriangulation& hull, const ToaFeatures& features,
                      const ToaConfig& config);

ToaSolution estimate_toa(const HrirSet& set, const ToaConfig& config);

/// Advances each response by (tau - min over both ears) / factor samples,
/// capped at T/2 - 1 (wild estimates from heavy noise would not fit).
HrirSet align_set(const HrirSet& set, const Eigen::VectorXd& tau_left, const Eigen::VectorXd& tau_right,
                  int factor);

/// (tau_left - tau_right) / (factor * fs) * 1e6.
Eigen::VectorXd itd_of(const ToaSolution& solution, double sample_rate_hz);

/// The assembled graph for `config`, exposed for dumps and tests.
DifferenceGraph assemble_graph(const HullTriangulation& hull, const std::vector<Direction>& directions,
                               const ToaFeatures& features, const ToaConfig& config, Ear ear);

/// index,az_deg,colat_deg,tau_left_us,tau_right_us,itd_us
void write_toa_csv(const ToaSolution& solution, const HrirSet& set, const std::filesystem::path& path,
                   const std::string& header_comment = {});

}  // namespace hrtfgraph
