#include "hrtfgraph/sh_eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <tuple>

#include <Eigen/Cholesky>
#include <nlohmann/json.hpp>

#include "hrtfgraph/dsp.hpp"
#include "hrtfgraph/error.hpp"
#include "hrtfgraph/parallel.hpp"
#include "hrtfgraph/synth.hpp"

namespace hrtfgraph {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double normalization(int l, int m) {
  return std::sqrt((2.0 * l + 1.0) / (4.0 * std::numbers::pi) *
                   std::exp(std::lgamma(l - m + 1.0) - std::lgamma(l + m + 1.0)));
}

Index resolved_fft(const HrirSet& set, const ExperimentOptions& options) {
  return options.fft_size > 0 ? options.fft_size : set.num_samples();
}

void check_same_shape(const HrirSet& a, const HrirSet& b) {
  if (a.num_directions() != b.num_directions() || a.num_samples() != b.num_samples() ||
      b.left.rows() != b.right.rows() || b.left.cols() != b.right.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "HRIR sets differ in shape");
  }
}

HrirSet sh_round_trip(const HrirSet& set, int order, double reg) {
  HrirSet out = set;
  for (Ear ear : {Ear::Left, Ear::Right}) {
    out.ear(ear) = sh_decode(sh_encode(set.ear(ear), set.directions, order, reg), set.directions);
  }
  return out;
}

std::string format_number(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "";
  std::ostringstream s;
  s.precision(12);
  s << x;
  return s.str();
}

std::ofstream open_csv(const std::filesystem::path& path, const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  out << "experiment,dataset,algorithm,weighting,minphase,cross,oversample,method,prealigned,snr_db,sh_order,"
         "freq_hz,metric,value\n";
  return out;
}

nlohmann::json json_number(double x) {
  if (std::isfinite(x)) return x;
  return format_number(x);  // JSON has no infinity
}

}  // namespace

Index sh_basis_size(int order) {
  if (order < 0) throw Error(ErrorCode::InvalidArgument, "SH order must be >= 0");
  return static_cast<Index>(order + 1) * (order + 1);
}

MatrixXd sh_matrix(const std::vector<Direction>& directions, int order) {
  const Index b = sh_basis_size(order);
  MatrixXd y(static_cast<Index>(directions.size()), b);
  for (std::size_t i = 0; i < directions.size(); ++i) {
    const Eigen::Vector3d& v = directions[i].vec();
    const double z = std::clamp(v.z(), -1.0, 1.0);
    const double az = std::atan2(v.y(), v.x());
    const auto row = static_cast<Index>(i);
    for (int l = 0; l <= order; ++l) {
      y(row, l * l + l) = normalization(l, 0) * std::assoc_legendre(l, 0, z);
      for (int m = 1; m <= l; ++m) {
        const double p = std::sqrt(2.0) * normalization(l, m) * std::assoc_legendre(l, m, z);
        y(row, l * l + l + m) = p * std::cos(m * az);
        y(row, l * l + l - m) = p * std::sin(m * az);
      }
    }
  }
  return y;
}

ShField sh_encode(const MatrixXd& values, const std::vector<Direction>& directions, int order, double reg) {
  if (!(reg >= 0.0)) throw Error(ErrorCode::InvalidArgument, "regularization must be >= 0");
  if (values.rows() != static_cast<Index>(directions.size())) {
    throw Error(ErrorCode::ShapeMismatch, "one row of values per direction expected");
  }
  const MatrixXd y = sh_matrix(directions, order);
  const Index b = y.cols();
  if (reg == 0.0 && y.rows() < b) {
    throw Error(ErrorCode::RankDeficient, std::to_string(y.rows()) + " directions cannot determine " +
                                              std::to_string(b) + " coefficients");
  }
  MatrixXd a = y.transpose() * y;
  a.diagonal().array() += reg;
  const Eigen::LDLT<MatrixXd> ldlt(a);
  const VectorXd d = ldlt.vectorD().cwiseAbs();
  if (ldlt.info() != Eigen::Success || d.minCoeff() <= 1e-12 * d.maxCoeff()) {
    throw Error(ErrorCode::RankDeficient, "SH design is rank deficient");
  }
  const MatrixXd rhs = y.transpose() * values;
  ShField field;
  field.order = order;
  field.coeffs = ldlt.solve(rhs);
  const double scale = rhs.norm();
  if (scale > 0.0 && (a * field.coeffs - rhs).norm() > 1e-10 * scale) {
    throw Error(ErrorCode::SingularSystem, "SH normal equations not solved to 1e-10");
  }
  return field;
}

MatrixXd sh_decode(const ShField& field, const std::vector<Direction>& directions) {
  if (field.coeffs.rows() != sh_basis_size(field.order)) {
    throw Error(ErrorCode::ShapeMismatch, "coefficient count does not match the order");
  }
  return sh_matrix(directions, field.order) * field.coeffs;
}

double itd_distortion(const VectorXd& reference, const VectorXd& reconstructed) {
  if (reference.size() != reconstructed.size()) throw Error(ErrorCode::LengthMismatch, "ITD vectors differ in length");
  if (reference.size() == 0) throw Error(ErrorCode::EmptySignal, "no ITDs");
  return (reference - reconstructed).cwiseAbs().mean();
}

VectorXd lsd_per_direction(const HrirSet& reference, const HrirSet& reconstructed, Index fft_size,
                           const LsdBand& band) {
  check_same_shape(reference, reconstructed);
  if (fft_size < reference.num_samples()) throw Error(ErrorCode::BadFftSize, "fft size smaller than response");
  const Index bins = fft_size / 2 + 1;
  const double fs = reference.sample_rate_hz;
  std::vector<Index> used;
  for (Index k = 0; k < bins; ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(fft_size);
    const bool above = band.lo_hz < 0.0 ? k >= 1 : f >= band.lo_hz;
    if (above && f <= band.hi_hz) used.push_back(k);
  }
  if (used.empty()) throw Error(ErrorCode::EmptyBand, "no frequency bins inside the LSD band");
  VectorXd out = VectorXd::Zero(reference.num_directions());
  for (Index i = 0; i < reference.num_directions(); ++i) {
    for (Ear ear : {Ear::Left, Ear::Right}) {
      const VectorXd a = dsp::magnitude_db(reference.ear(ear).row(i).transpose(), fft_size);
      const VectorXd b = dsp::magnitude_db(reconstructed.ear(ear).row(i).transpose(), fft_size);
      double sum = 0.0;
      for (Index k : used) sum += (a(k) - b(k)) * (a(k) - b(k));
      out(i) += 0.5 * std::sqrt(sum / static_cast<double>(used.size()));
    }
  }
  return out;
}

double lsd(const HrirSet& reference, const HrirSet& reconstructed, Index fft_size, const LsdBand& band) {
  return lsd_per_direction(reference, reconstructed, fft_size, band).mean();
}

MetricReport evaluate_solution(const ToaSolution& solution, const VectorXd& reference_itd_us,
                               const HrirSet& reference_aligned, int sh_order, const ExperimentOptions& options) {
  const auto& dirs = solution.aligned.directions;
  MetricReport r;
  r.config = solution.config;
  r.sh_order = sh_order;
  r.dataset = solution.aligned.name;
  r.solve_seconds = solution.diagnostics.solve_seconds;
  r.fft_size = resolved_fft(solution.aligned, options);

  const VectorXd itd_rec = sh_decode(sh_encode(solution.itd_us, dirs, sh_order, options.reg), dirs).col(0);
  r.itd_error_us = (itd_rec - reference_itd_us).cwiseAbs();
  r.itd_distortion_us = itd_distortion(reference_itd_us, itd_rec);

  const HrirSet decoded = sh_round_trip(solution.aligned, sh_order, options.reg);
  r.lsd_direction = lsd_per_direction(reference_aligned, decoded, r.fft_size, options.band);
  r.lsd_db = r.lsd_direction.mean();
  return r;
}

MetricReport run_alignment_experiment(const HrirSet& set, const ToaConfig& config, int sh_order,
                                      const ExperimentOptions& options) {
  const ToaSolution sol = estimate_toa(set, config);
  MetricReport r = evaluate_solution(sol, sol.itd_us, sol.aligned, sh_order, options);
  r.experiment = "recon";
  return r;
}

std::vector<MetricReport> run_noise_experiment(const HrirSet& set, const std::vector<double>& snr_grid_db,
                                               const std::vector<ToaConfig>& configs,
                                               const std::vector<int>& sh_orders, std::uint64_t seed,
                                               const ExperimentOptions& options) {
  if (snr_grid_db.empty() || configs.empty() || sh_orders.empty()) {
    throw Error(ErrorCode::InvalidArgument, "noise experiment needs nonempty grids");
  }
  for (const auto& c : configs) c.validate();
  set.validate();
  const auto hull = convex_hull_graph(set.directions);

  // Features are shared by configs with the same lag grid.
  using FeatureKey = std::tuple<int, long>;
  auto union_configs = [&] {
    std::map<FeatureKey, ToaConfig> out;
    for (const auto& c : configs) {
      auto [it, fresh] = out.try_emplace(FeatureKey{c.oversample_factor, c.max_lag}, c);
      it->second.use_cross = it->second.use_cross || c.use_cross;
      it->second.use_minphase = it->second.use_minphase || c.use_minphase;
    }
    return out;
  }();
  auto measure_all = [&](const HrirSet& s) {
    std::map<FeatureKey, ToaFeatures> out;
    for (const auto& [key, c] : union_configs) out.emplace(key, measure_features(s, hull, c));
    return out;
  };
  auto solve = [&](const HrirSet& s, const std::map<FeatureKey, ToaFeatures>& features, const ToaConfig& c) {
    return solve_toa(s, hull, features.at(FeatureKey{c.oversample_factor, c.max_lag}), c);
  };

  const auto clean_features = measure_all(set);
  std::vector<ToaSolution> clean;
  clean.reserve(configs.size());
  for (const auto& c : configs) clean.push_back(solve(set, clean_features, c));

  const Index front = front_direction(set.directions);
  std::vector<MetricReport> reports;
  for (double snr : snr_grid_db) {
    const bool noisy = std::isfinite(snr);
    const HrirSet measured = noisy ? add_white_noise(set, noise_sigma_for_snr(set, front, snr), seed) : set;
    const auto features = noisy ? measure_all(measured) : clean_features;
    for (std::size_t c = 0; c < configs.size(); ++c) {
      ToaSolution sol = noisy ? solve(measured, features, configs[c]) : clean[c];
      const double factor = static_cast<double>(configs[c].oversample_factor);
      const HrirSet reference = noisy ? align_set(set, sol.tau_left, sol.tau_right, static_cast<int>(factor))
                                      : clean[c].aligned;
      std::vector<MetricReport> cell(sh_orders.size());
      parallel_for(static_cast<std::int64_t>(sh_orders.size()), options.jobs, [&](std::int64_t k) {
        cell[static_cast<std::size_t>(k)] =
            evaluate_solution(sol, clean[c].itd_us, reference, sh_orders[static_cast<std::size_t>(k)], options);
      });
      for (auto& r : cell) {
        r.experiment = "noise";
        r.snr_db = snr;
        r.seed = seed;
        r.dataset = set.name;
        reports.push_back(std::move(r));
      }
    }
  }
  return reports;
}

std::vector<PhaseDelayRow> run_phase_delay_experiment(const HrirSet& set, const std::vector<PhaseMethod>& methods,
                                                      const std::vector<int>& sh_orders,
                                                      const ExperimentOptions& options, const ToaConfig& toa_config,
                                                      Ear ear) {
  set.validate();
  const auto hull = convex_hull_graph(set.directions);
  const PhaseField field = phase_field(set, ear, resolved_fft(set, options));
  VectorXd prealign;
  std::vector<PhaseDelayRow> rows;
  for (const auto& pm : methods) {
    if (pm.prealign && pm.method != UnwrapMethod::Joint) {
      throw Error(ErrorCode::InvalidArgument, "pre-alignment applies to the joint method only");
    }
    UnwrappedField u;
    switch (pm.method) {
      case UnwrapMethod::FreqOnly:
        u = unwrap_frequency(field);
        break;
      case UnwrapMethod::SphericalOnly:
        u = unwrap_spherical_sim(field, hull, options.jobs);
        break;
      case UnwrapMethod::Joint: {
        JointOptions jo;
        if (pm.prealign) {
          if (prealign.size() == 0) prealign = prealign_samples(estimate_toa(set, toa_config), ear);
          jo.prealign_samples = prealign;
        }
        u = unwrap_joint(field, hull, jo);
        break;
      }
    }
    const MatrixXd pd = phase_delay(u);
    for (int order : sh_orders) {
      const MatrixXd rec = sh_decode(sh_encode(pd, set.directions, order, options.reg), set.directions);
      const VectorXd err = (rec - pd).cwiseAbs().colwise().mean().transpose() * 1e6;
      for (Index f = 0; f < err.size(); ++f) {
        rows.push_back({pm.method, pm.prealign, order, field.bin_freqs_hz(f + 1), err(f), u.objective});
      }
    }
  }
  return rows;
}

void write_metric_csv(const std::vector<MetricReport>& reports, const std::filesystem::path& path,
                      const std::string& header_comment) {
  auto out = open_csv(path, header_comment);
  for (const auto& r : reports) {
    const std::string prefix = r.experiment + ',' + r.dataset + ',' + to_string(r.config.algorithm) + ',' +
                               to_string(r.config.weighting) + ',' + (r.config.use_minphase ? "1" : "0") + ',' +
                               (r.config.use_cross ? "1" : "0") + ',' + std::to_string(r.config.oversample_factor) +
                               ",,," + format_number(r.snr_db) + ',' + std::to_string(r.sh_order) + ",,";
    out << prefix << "itd_distortion_us," << format_number(r.itd_distortion_us) << '\n';
    out << prefix << "lsd_db," << format_number(r.lsd_db) << '\n';
  }
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

void write_phase_csv(const std::vector<PhaseDelayRow>& rows, const std::string& dataset,
                     const std::filesystem::path& path, const std::string& header_comment) {
  auto out = open_csv(path, header_comment);
  for (const auto& r : rows) {
    out << "phase," << dataset << ",,,,,," << to_string(r.method) << ',' << (r.prealigned ? 1 : 0) << ",,"
        << r.sh_order << ',' << format_number(r.freq_hz) << ",phase_delay_error_us," << format_number(r.error_us)
        << '\n';
  }
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

std::string metric_json(const std::vector<MetricReport>& reports, const std::string& config_json) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : reports) {
    rows.push_back({{"experiment", r.experiment},
                    {"dataset", r.dataset},
                    {"config", r.config.label()},
                    {"sh_order", r.sh_order},
                    {"snr_db", json_number(r.snr_db)},
                    {"seed", r.seed},
                    {"itd_distortion_us", r.itd_distortion_us},
                    {"lsd_db", r.lsd_db},
                    {"fft_size", r.fft_size}});
  }
  return nlohmann::json{{"config", nlohmann::json::parse(config_json)}, {"rows", rows}}.dump(2);
}

std::string phase_json(const std::vector<PhaseDelayRow>& rows, const std::string& dataset,
                       const std::string& config_json) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"method", to_string(r.method)},
                   {"prealigned", r.prealigned},
                   {"sh_order", r.sh_order},
                   {"freq_hz", r.freq_hz},
                   {"phase_delay_error_us", r.error_us},
                   {"objective", r.objective}});
  }
  return nlohmann::json{{"config", nlohmann::json::parse(config_json)}, {"dataset", dataset}, {"rows", out}}.dump(2);
}

}  // namespace hrtfgraph
