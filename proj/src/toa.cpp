#include "hrtfgraph/toa.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>

#include "hrtfgraph/dsp.hpp"
#include "hrtfgraph/error.hpp"
#include "hrtfgraph/l1_flow_solver.hpp"
#include "hrtfgraph/ls_solver.hpp"

namespace hrtfgraph {

namespace {

using Eigen::Index;
using Eigen::VectorXd;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

Ear single_ear(EarSelector ear) {
  if (ear == EarSelector::Both) throw Error(ErrorCode::InvalidArgument, "select a single ear");
  return ear == EarSelector::Left ? Ear::Left : Ear::Right;
}

std::vector<dsp::CorrelationOperand> operands(const Eigen::MatrixXd& h, int factor, Index fft_size) {
  std::vector<dsp::CorrelationOperand> out;
  out.reserve(static_cast<std::size_t>(h.rows()));
  for (Index i = 0; i < h.rows(); ++i) {
    const VectorXd row = h.row(i).transpose();
    out.emplace_back(dsp::oversample(row, factor), fft_size);
  }
  return out;
}

Index fine_fft_size(const HrirSet& set, int factor) {
  return dsp::correlation_fft_size(set.num_samples() * factor);
}

void check_factor(int factor) {
  if (factor < 1) throw Error(ErrorCode::InvalidArgument, "oversample factor must be >= 1");
}

}  // namespace

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Simp: return "simp";
    case Algorithm::Edgy: return "edgy";
    case Algorithm::Ls: return "ls";
  }
  return "?";
}

std::string to_string(Weighting w) {
  switch (w) {
    case Weighting::None: return "none";
    case Weighting::Exp: return "exp";
    case Weighting::Corr: return "corr";
  }
  return "?";
}

Algorithm parse_algorithm(const std::string& name) {
  const auto n = lower(name);
  if (n == "simp") return Algorithm::Simp;
  if (n == "edgy") return Algorithm::Edgy;
  if (n == "ls") return Algorithm::Ls;
  throw Error(ErrorCode::InvalidArgument, "unknown algorithm '" + name + "'");
}

Weighting parse_weighting(const std::string& name) {
  const auto n = lower(name);
  if (n == "none") return Weighting::None;
  if (n == "exp") return Weighting::Exp;
  if (n == "corr") return Weighting::Corr;
  throw Error(ErrorCode::InvalidArgument, "unknown weighting '" + name + "'");
}

void ToaConfig::validate() const {
  if (!(sigma_deg > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma_deg must be positive");
  if (!(delta_weight > 0.0 && delta_weight <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "delta_weight must be in (0, 1]");
  }
  if (oversample_factor < 1) throw Error(ErrorCode::InvalidArgument, "oversample_factor must be >= 1");
  if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be nonnegative");
}

std::string ToaConfig::label() const {
  std::string s = to_string(algorithm) + "-" + to_string(weighting);
  if (use_minphase) s += "-min";
  if (use_cross) s += "-cross";
  return s;
}

EdgeMeasurement measure_intra_gammas(const HrirSet& set, const HullTriangulation& hull, EarSelector ear,
                                     int factor, long max_lag) {
  check_factor(factor);
  const auto ops = operands(set.ear(single_ear(ear)), factor, fine_fft_size(set, factor));
  const auto m = static_cast<Index>(hull.edges.size());
  EdgeMeasurement out{IntVector(m), VectorXd(m)};
  for (Index e = 0; e < m; ++e) {
    const auto [i, j] = hull.edges[static_cast<std::size_t>(e)];
    const auto r = dsp::xcorr_lag(ops[static_cast<std::size_t>(i)], ops[static_cast<std::size_t>(j)], max_lag);
    out.gamma(e) = r.lag;
    out.peak(e) = r.peak;
  }
  return out;
}

EdgeMeasurement measure_cross_gammas(const HrirSet& set, int factor, long max_lag) {
  check_factor(factor);
  const Index fft = fine_fft_size(set, factor);
  const auto left = operands(set.left, factor, fft);
  const auto right = operands(set.right, factor, fft);
  const Index n = set.num_directions();
  EdgeMeasurement out{IntVector(n), VectorXd(n)};
  for (Index i = 0; i < n; ++i) {
    const auto r = dsp::xcorr_lag(left[static_cast<std::size_t>(i)], right[static_cast<std::size_t>(i)], max_lag);
    out.gamma(i) = r.lag;
    out.peak(i) = r.peak;
  }
  return out;
}

EdgeMeasurement measure_minphase_gammas(const HrirSet& set, EarSelector ear, int factor, long max_lag) {
  check_factor(factor);
  const auto& h = set.ear(single_ear(ear));
  const Index n = set.num_directions();
  EdgeMeasurement out{IntVector(n), VectorXd(n)};
  for (Index i = 0; i < n; ++i) {
    const VectorXd row = h.row(i).transpose();
    // Circular: the periodic interpolant of the min-phase onset rings into
    // the end of the buffer, where a linear correlation cannot match it.
    // A single 8 T pass; the residual cepstral aliasing is far below a fine sample.
    const auto r = dsp::circular_xcorr_lag(dsp::oversample(dsp::minimum_phase(row, nullptr, 1), factor),
                                           dsp::oversample(row, factor), max_lag);
    out.gamma(i) = r.lag;
    out.peak(i) = r.peak;
  }
  return out;
}

VectorXd compute_weights(Weighting scheme, EdgeKind kind, const HullTriangulation& hull,
                         const std::vector<Direction>& directions, const VectorXd* peaks, const ToaConfig& config) {
  const Index count = kind == EdgeKind::IntraAural ? static_cast<Index>(hull.edges.size())
                                                   : static_cast<Index>(directions.size());
  switch (scheme) {
    case Weighting::None:
      return VectorXd::Ones(count);
    case Weighting::Corr: {
      if (peaks == nullptr) throw Error(ErrorCode::MissingPeaks, "CORR weighting needs correlation peaks");
      if (peaks->size() != count) throw Error(ErrorCode::LengthMismatch, "one peak per edge expected");
      return peaks->cwiseMax(kWeightFloor);
    }
    case Weighting::Exp: {
      if (kind == EdgeKind::AbsoluteDelta) return VectorXd::Constant(count, config.delta_weight);
      const double sigma = config.sigma_deg * std::numbers::pi / 180.0;
      VectorXd w(count);
      for (Index e = 0; e < count; ++e) {
        double angle = 0.0;
        if (kind == EdgeKind::IntraAural) {
          const auto [i, j] = hull.edges[static_cast<std::size_t>(e)];
          angle = directions[static_cast<std::size_t>(i)].angle_to(directions[static_cast<std::size_t>(j)]);
        } else {
          const auto& d = directions[static_cast<std::size_t>(e)];
          angle = d.angle_to(d.mirrored_y());
        }
        w(e) = std::max(std::exp(-angle / sigma), kWeightFloor);
      }
      return w;
    }
  }
  return VectorXd::Ones(count);
}

ToaFeatures measure_features(const HrirSet& set, const HullTriangulation& hull, const ToaConfig& config) {
  config.validate();
  const int f = config.oversample_factor;
  ToaFeatures out;
  out.intra_left = measure_intra_gammas(set, hull, EarSelector::Left, f, config.max_lag);
  out.intra_right = measure_intra_gammas(set, hull, EarSelector::Right, f, config.max_lag);
  if (config.use_cross) out.cross = measure_cross_gammas(set, f, config.max_lag);
  if (config.use_minphase) {
    out.minphase_left = measure_minphase_gammas(set, EarSelector::Left, f, config.max_lag);
    out.minphase_right = measure_minphase_gammas(set, EarSelector::Right, f, config.max_lag);
  }
  return out;
}

DifferenceGraph assemble_graph(const HullTriangulation& hull, const std::vector<Direction>& directions,
                               const ToaFeatures& features, const ToaConfig& config, Ear ear) {
  const Weighting ws = config.weighting;
  auto intra = [&](const EdgeMeasurement& m) {
    return build_intra_graph(hull, m.gamma,
                             compute_weights(ws, EdgeKind::IntraAural, hull, directions, &m.peak, config));
  };
  auto delta_weights = [&](const EdgeMeasurement& m) {
    return compute_weights(ws, EdgeKind::AbsoluteDelta, hull, directions, &m.peak, config);
  };
  if (config.use_minphase && (!features.minphase_left || !features.minphase_right)) {
    throw Error(ErrorCode::InvalidArgument, "minimum-phase features were not measured");
  }
  if (config.use_cross) {
    if (!features.cross) throw Error(ErrorCode::InvalidArgument, "inter-aural features were not measured");
    DifferenceGraph g = join_ears(
        intra(features.intra_left), intra(features.intra_right), features.cross->gamma,
        compute_weights(ws, EdgeKind::InterAural, hull, directions, &features.cross->peak, config));
    if (config.use_minphase) {
      const Index n = static_cast<Index>(directions.size());
      IntVector gammas(2 * n);
      gammas << features.minphase_left->gamma, features.minphase_right->gamma;
      VectorXd weights(2 * n);
      weights << delta_weights(*features.minphase_left), delta_weights(*features.minphase_right);
      g = add_delta(g, gammas, weights);
    }
    return g;
  }
  const EdgeMeasurement& m = ear == Ear::Left ? features.intra_left : features.intra_right;
  DifferenceGraph g = intra(m);
  if (config.use_minphase) {
    const EdgeMeasurement& mp = ear == Ear::Left ? *features.minphase_left : *features.minphase_right;
    g = add_delta(g, mp.gamma, delta_weights(mp));
  }
  return g;
}

namespace {

struct SolvedGraph {
  VectorXd values;
  double objective = 0.0;
  VectorXd residuals;
};

SolvedGraph solve_graph(const DifferenceGraph& g, const ToaConfig& config) {
  SolvedGraph out;
  if (config.algorithm == Algorithm::Ls) {
    const auto s = solve_ls({g, config.lambda});
    out.values = s.node_values;
    out.objective = s.objective;
    out.residuals = s.residuals;
  } else {
    const auto formulation =
        config.algorithm == Algorithm::Simp ? L1Formulation::Simplices : L1Formulation::Edgelist;
    const auto s = solve_l1({g, formulation});
    out.values = s.node_values.cast<double>();
    out.objective = s.objective;
    out.residuals = s.residuals.cast<double>();
  }
  return out;
}

void accumulate(ToaDiagnostics& d, const DifferenceGraph& g, const SolvedGraph& s) {
  d.objective += s.objective;
  d.num_vertices += g.num_vertices;
  d.num_edges += g.num_edges();
  for (Index e = 0; e < s.residuals.size(); ++e) ++d.residual_histogram[std::lround(s.residuals(e))];
}

}  // namespace

ToaSolution solve_toa(const HrirSet& set, const HullTriangulation& hull, const ToaFeatures& features,
                      const ToaConfig& config) {
  config.validate();
  const Index n = set.num_directions();
  ToaSolution sol;
  sol.config = config;
  const auto start = std::chrono::steady_clock::now();
  if (config.use_cross) {
    const auto g = assemble_graph(hull, set.directions, features, config, Ear::Left);
    const auto s = solve_graph(g, config);
    accumulate(sol.diagnostics, g, s);
    VectorXd both = s.values.head(2 * n);
    if (config.use_minphase) {
      sol.diagnostics.gauge = "delta vertex pinned to 0 (absolute)";
    } else {
      both.array() -= both.mean();
      sol.diagnostics.gauge = "zero mean over both ears";
    }
    sol.tau_left = both.head(n);
    sol.tau_right = both.tail(n);
  } else {
    for (Ear ear : {Ear::Left, Ear::Right}) {
      const auto g = assemble_graph(hull, set.directions, features, config, ear);
      const auto s = solve_graph(g, config);
      accumulate(sol.diagnostics, g, s);
      VectorXd tau = s.values.head(n);
      if (!config.use_minphase) tau.array() -= tau.mean();
      (ear == Ear::Left ? sol.tau_left : sol.tau_right) = tau;
    }
    sol.diagnostics.gauge =
        config.use_minphase ? "delta vertex pinned to 0 (absolute)" : "zero mean per ear";
  }
  sol.diagnostics.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  sol.itd_us = itd_of(sol, set.sample_rate_hz);

  sol.aligned = align_set(set, sol.tau_left, sol.tau_right, config.oversample_factor);
  return sol;
}

HrirSet align_set(const HrirSet& set, const VectorXd& tau_left, const VectorXd& tau_right, int factor) {
  check_factor(factor);
  const Index n = set.num_directions();
  if (tau_left.size() != n || tau_right.size() != n) {
    throw Error(ErrorCode::ShapeMismatch, "one TOA per direction and ear expected");
  }
  HrirSet out = set;
  const double lowest = std::min(tau_left.minCoeff(), tau_right.minCoeff());
  const double limit = 0.5 * static_cast<double>(set.num_samples()) - 1.0;
  auto shift = [&](double tau) { return std::min((tau - lowest) / static_cast<double>(factor), limit); };
  for (Index i = 0; i < n; ++i) {
    out.left.row(i) = dsp::fractional_delay(VectorXd(set.left.row(i).transpose()), shift(tau_left(i))).transpose();
    out.right.row(i) = dsp::fractional_delay(VectorXd(set.right.row(i).transpose()), shift(tau_right(i))).transpose();
  }
  return out;
}

ToaSolution estimate_toa(const HrirSet& set, const ToaConfig& config) {
  config.validate();
  set.validate();
  const auto hull = convex_hull_graph(set.directions);
  return solve_toa(set, hull, measure_features(set, hull, config), config);
}

VectorXd itd_of(const ToaSolution& solution, double sample_rate_hz) {
  const double scale = 1e6 / (static_cast<double>(solution.config.oversample_factor) * sample_rate_hz);
  return (solution.tau_left - solution.tau_right) * scale;
}

void write_toa_csv(const ToaSolution& solution, const HrirSet& set, const std::filesystem::path& path,
                   const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out.precision(10);
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "index,az_deg,colat_deg,tau_left_us,tau_right_us,itd_us\n";
  const double us = 1e6 / (static_cast<double>(solution.config.oversample_factor) * set.sample_rate_hz);
  for (Index i = 0; i < set.num_directions(); ++i) {
    const auto& d = set.directions[static_cast<std::size_t>(i)];
    out << i << ',' << d.azimuth_deg() << ',' << d.colatitude_deg() << ',' << solution.tau_left(i) * us << ','
        << solution.tau_right(i) * us << ',' << solution.itd_us(i) << '\n';
  }
  if (!out) throw Error(ErrorCode::IoFailure, "failed writing " + path.string());
}

}  // namespace hrtfgraph
