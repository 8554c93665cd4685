#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hrtfgraph/error.hpp"
#include "hrtfgraph/hrir_core.hpp"
#include "hrtfgraph/parallel.hpp"
#include "hrtfgraph/phase_unwrap.hpp"
#include "hrtfgraph/sh_eval.hpp"
#include "hrtfgraph/spherical_graph.hpp"
#include "hrtfgraph/synth.hpp"
#include "hrtfgraph/toa.hpp"

namespace hrtfgraph::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Eigen::Index;

// Flag combination problems found after CLI11 has parsed.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  fs::path out = "out";
  std::uint64_t seed = 1;
  int jobs = 1;
  int oversample = 10;
};

struct ToaFlags {
  std::string algo = "edgy";
  std::string weight = "exp";
  bool minphase = false;
  bool cross = false;
  double sigma_deg = 8.0;
  double delta_weight = 0.1;
  double lambda = 0.1;
  long max_lag = -1;
};

struct EvalFlags {
  std::vector<int> orders{4};
  double reg = kShRegularization;
  Index fft = 0;
  double band_lo_hz = -1.0;
  double band_hi_hz = std::numeric_limits<double>::infinity();
};

json number_or_inf(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

double number_from_json(const json& j) {
  if (j.is_string()) return j.get<std::string>() == "-inf" ? -std::numeric_limits<double>::infinity()
                                                            : std::numeric_limits<double>::infinity();
  return j.get<double>();
}

json toa_to_json(const ToaConfig& c) {
  return {{"algorithm", to_string(c.algorithm)},
          {"weighting", to_string(c.weighting)},
          {"minphase", c.use_minphase},
          {"cross", c.use_cross},
          {"oversample", c.oversample_factor},
          {"sigma_deg", c.sigma_deg},
          {"delta_weight", c.delta_weight},
          {"lambda", c.lambda},
          {"max_lag", c.max_lag}};
}

ToaConfig toa_from_json(const json& j) {
  ToaConfig c;
  c.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
  c.weighting = parse_weighting(j.at("weighting").get<std::string>());
  c.use_minphase = j.at("minphase").get<bool>();
  c.use_cross = j.at("cross").get<bool>();
  c.oversample_factor = j.at("oversample").get<int>();
  c.sigma_deg = j.at("sigma_deg").get<double>();
  c.delta_weight = j.at("delta_weight").get<double>();
  c.lambda = j.at("lambda").get<double>();
  c.max_lag = j.at("max_lag").get<long>();
  return c;
}

ToaConfig resolve(const ToaFlags& f, const GlobalOptions& g) {
  ToaConfig c;
  c.algorithm = parse_algorithm(f.algo);
  c.weighting = parse_weighting(f.weight);
  c.use_minphase = f.minphase;
  c.use_cross = f.cross;
  c.oversample_factor = g.oversample;
  c.sigma_deg = f.sigma_deg;
  c.delta_weight = f.delta_weight;
  c.lambda = f.lambda;
  c.max_lag = f.max_lag;
  c.validate();
  return c;
}

ExperimentOptions resolve(const EvalFlags& f, const GlobalOptions& g) {
  if (f.orders.empty()) throw UsageError("--orders needs at least one order");
  for (int o : f.orders) {
    if (o < 0) throw UsageError("SH orders must be nonnegative");
  }
  ExperimentOptions opts;
  opts.reg = f.reg;
  opts.fft_size = f.fft;
  opts.band = {f.band_lo_hz, f.band_hi_hz};
  opts.jobs = g.jobs;
  return opts;
}

json eval_to_json(const EvalFlags& f) {
  return {{"sh_orders", f.orders},
          {"reg", f.reg},
          {"fft_size", f.fft},
          {"band_lo_hz", f.band_lo_hz},
          {"band_hi_hz", number_or_inf(f.band_hi_hz)}};
}

json base_config(const std::string& command, const GlobalOptions& g) {
  return {{"command", command}, {"seed", g.seed}, {"oversample", g.oversample}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

// Write then rename, so an interrupted sweep never leaves half a cell.
void write_atomically(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  write_text(tmp, text);
  fs::rename(tmp, path);
}

void make_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
}

std::string header(const json& config) { return "config: " + config.dump(); }

HrirSet load_input(const fs::path& input) {
  if (!fs::is_directory(input)) throw UsageError("input container not found: " + input.string());
  return load_container(input);
}

void add_toa_flags(CLI::App* cmd, ToaFlags& f) {
  cmd->add_option("--algo", f.algo, "simp, edgy or ls")
      ->check(CLI::IsMember({"simp", "edgy", "ls"}, CLI::ignore_case))
      ->capture_default_str();
  cmd->add_option("--weight", f.weight, "none, exp or corr")
      ->check(CLI::IsMember({"none", "exp", "corr"}, CLI::ignore_case))
      ->capture_default_str();
  cmd->add_flag("--minphase", f.minphase, "add the minimum-phase absolute-delay edges");
  cmd->add_flag("--cross", f.cross, "join the ears with inter-aural edges");
  cmd->add_option("--sigma-deg", f.sigma_deg, "EXP weight width")->capture_default_str();
  cmd->add_option("--delta-weight", f.delta_weight, "weight of absolute-delay edges")->capture_default_str();
  cmd->add_option("--lambda", f.lambda, "LS ridge on the gauge")->capture_default_str();
  cmd->add_option("--max-lag", f.max_lag, "lag search bound in fine samples, <0 for full overlap")
      ->capture_default_str();
}

void add_eval_flags(CLI::App* cmd, EvalFlags& f) {
  cmd->add_option("--orders", f.orders, "SH orders")->delimiter(',')->capture_default_str();
  cmd->add_option("--reg", f.reg, "SH ridge")->capture_default_str();
  cmd->add_option("--fft", f.fft, "LSD FFT size, 0 for the response length")->capture_default_str();
  cmd->add_option("--band-lo", f.band_lo_hz, "LSD band start in Hz, <0 for the first bin above DC");
  cmd->add_option("--band-hi", f.band_hi_hz, "LSD band end in Hz");
}

// inspect ------------------------------------------------------------------

int cmd_inspect(const fs::path& input, const GlobalOptions& g) {
  const HrirSet set = load_input(input);
  const auto hull = convex_hull_graph(set.directions);
  const Index front = front_direction(set.directions);
  const auto& fd = set.directions[static_cast<std::size_t>(front)];
  json config = base_config("inspect", g);
  config["input"] = input.string();
  const json report = {
      {"config", config},
      {"name", set.name},
      {"sample_rate_hz", set.sample_rate_hz},
      {"num_directions", set.num_directions()},
      {"num_samples", set.num_samples()},
      {"hull",
       {{"edges", hull.edges.size()},
        {"triangles", hull.triangles.size()},
        {"max_violation", hull_max_violation(hull, set.directions)}}},
      {"front_direction", {{"index", front}, {"azimuth_deg", fd.azimuth_deg()}, {"colatitude_deg", fd.colatitude_deg()}}},
      {"measurement_snr_db", number_or_inf(measurement_snr_db(set, front))},
      {"peak_abs", std::max(set.left.cwiseAbs().maxCoeff(), set.right.cwiseAbs().maxCoeff())}};
  make_out_dir(g.out);
  write_text(g.out / "inspect.json", report.dump(2) + "\n");
  std::cout << set.name << ": " << set.num_directions() << " directions x " << set.num_samples() << " samples at "
            << set.sample_rate_hz << " Hz, " << hull.edges.size() << " hull edges\n";
  return kExitOk;
}

// toa / align --------------------------------------------------------------

json diagnostics_json(const ToaDiagnostics& d, const json& config) {
  json hist = json::object();
  for (const auto& [k, v] : d.residual_histogram) hist[std::to_string(k)] = v;
  return {{"config", config},
          {"objective", d.objective},
          {"gauge", d.gauge},
          {"num_vertices", d.num_vertices},
          {"num_edges", d.num_edges},
          {"residual_histogram", hist}};
}

void write_timings(const fs::path& path, const json& config, const json& entries) {
  write_text(path, json{{"config", config}, {"timings", entries}}.dump(2) + "\n");
}

int cmd_toa(const fs::path& input, const ToaFlags& flags, bool dump_graph, bool align_only, const GlobalOptions& g) {
  const ToaConfig config = resolve(flags, g);
  const HrirSet set = load_input(input);
  json cfg = base_config(align_only ? "align" : "toa", g);
  cfg["input"] = input.string();
  cfg["toa"] = toa_to_json(config);

  const auto t0 = std::chrono::steady_clock::now();
  const auto hull = convex_hull_graph(set.directions);
  const auto features = measure_features(set, hull, config);
  const auto t1 = std::chrono::steady_clock::now();
  const ToaSolution sol = solve_toa(set, hull, features, config);

  make_out_dir(g.out);
  save_container(sol.aligned, g.out / "aligned");
  write_text(g.out / "aligned" / "config.json", json{{"config", cfg}}.dump(2) + "\n");
  if (!align_only) {
    write_toa_csv(sol, set, g.out / "toa.csv", header(cfg));
    write_text(g.out / "diagnostics.json", diagnostics_json(sol.diagnostics, cfg).dump(2) + "\n");
  }
  if (dump_graph) {
    // The joint graph holds both ears; independent ears get one file each.
    std::vector<std::pair<std::string, Ear>> graphs;
    if (config.use_cross) {
      graphs = {{"graph.json", Ear::Left}};
    } else {
      graphs = {{"graph_left.json", Ear::Left}, {"graph_right.json", Ear::Right}};
    }
    for (const auto& [name, ear] : graphs) {
      json dump = json::parse(graph_to_json(assemble_graph(hull, set.directions, features, config, ear)));
      dump["config"] = cfg;
      write_text(g.out / name, dump.dump() + "\n");
    }
  }
  write_timings(g.out / "timings.json", cfg,
                {{"features_seconds", std::chrono::duration<double>(t1 - t0).count()},
                 {"solve_seconds", sol.diagnostics.solve_seconds}});
  std::cout << config.label() << ": objective " << sol.diagnostics.objective << ", " << sol.diagnostics.num_edges
            << " edges, solve " << sol.diagnostics.solve_seconds << " s\n";
  return kExitOk;
}

// unwrap -------------------------------------------------------------------

int cmd_unwrap(const fs::path& input, const std::vector<std::string>& method_names, bool prealign,
               const std::string& ear_name, Index fft, const ToaFlags& flags, const GlobalOptions& g) {
  std::vector<UnwrapMethod> methods;
  for (const auto& m : method_names) methods.push_back(parse_unwrap_method(m));
  if (methods.empty()) throw UsageError("--method needs at least one method");
  const bool has_joint = std::find(methods.begin(), methods.end(), UnwrapMethod::Joint) != methods.end();
  if (prealign && !has_joint) throw UsageError("--prealign applies to the joint method only");
  const Ear ear = ear_name == "right" ? Ear::Right : Ear::Left;
  const ToaConfig toa_config = resolve(flags, g);
  const HrirSet set = load_input(input);
  const Index fft_size = fft == 0 ? set.num_samples() : fft;

  json cfg = base_config("unwrap", g);
  cfg["input"] = input.string();
  cfg["methods"] = method_names;
  cfg["prealign"] = prealign;
  cfg["ear"] = ear == Ear::Left ? "left" : "right";
  cfg["fft_size"] = fft_size;
  if (prealign) cfg["toa"] = toa_to_json(toa_config);

  const PhaseField field = phase_field(set, ear, fft_size);
  const auto hull = convex_hull_graph(set.directions);
  make_out_dir(g.out);
  json results = json::array();
  json timings = json::object();
  for (UnwrapMethod m : methods) {
    const auto t0 = std::chrono::steady_clock::now();
    UnwrappedField u;
    switch (m) {
      case UnwrapMethod::FreqOnly:
        u = unwrap_frequency(field);
        break;
      case UnwrapMethod::SphericalOnly:
        u = unwrap_spherical_sim(field, hull, g.jobs);
        break;
      case UnwrapMethod::Joint: {
        JointOptions opts;
        if (prealign) opts.prealign_samples = prealign_samples(estimate_toa(set, toa_config), ear);
        u = unwrap_joint(field, hull, opts);
        break;
      }
    }
    const std::string name = to_string(m);
    timings[name + "_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json row_cfg = cfg;
    row_cfg["method"] = name;
    write_long_csv(u.phase, u.bin_freqs_hz, g.out / ("phase_" + name + ".csv"), header(row_cfg));
    write_long_csv(phase_delay(u) * 1e6, u.bin_freqs_hz.tail(u.bin_freqs_hz.size() - 1),
                   g.out / ("phase_delay_us_" + name + ".csv"), header(row_cfg));
    results.push_back({{"method", name},
                       {"prealigned", u.prealigned},
                       {"objective", u.objective},
                       {"sum_abs_residual", u.residual_l.cwiseAbs().cast<double>().sum()},
                       {"num_bins", field.num_bins()}});
    std::cout << name << (u.prealigned ? " (prealigned)" : "") << ": objective " << u.objective << "\n";
  }
  write_text(g.out / "unwrap.json", json{{"config", cfg}, {"results", results}}.dump(2) + "\n");
  write_timings(g.out / "timings.json", cfg, timings);
  return kExitOk;
}

// experiment ---------------------------------------------------------------

struct Cell {
  json key;
  std::string label;
};

struct CellResult {
  json rows;
  double seconds = 0.0;
};

// Computes cells not yet on disk; a cell file whose stored key differs from
// the wanted one (hash collision or edited file) is recomputed.
std::vector<json> run_cells(const std::vector<Cell>& cells, const fs::path& out, int jobs,
                            const std::function<CellResult(const Cell&, int inner_jobs)>& compute, json& timings) {
  const fs::path dir = out / "cells";
  make_out_dir(dir);
  std::vector<json> rows(cells.size());
  std::vector<double> seconds(cells.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<char> reused(cells.size(), 0);
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const std::string hash = content_hash(cells[i].key.dump());
    const fs::path file = dir / (hash + ".json");
    if (fs::exists(file)) {
      std::ifstream in(file);
      const json stored = json::parse(in, nullptr, false);
      if (!stored.is_discarded() && stored.contains("key") && stored["key"] == cells[i].key) {
        rows[i] = stored.at("rows");
        reused[i] = 1;
        const fs::path tfile = dir / (hash + ".timing.json");
        if (fs::exists(tfile)) {
          std::ifstream tin(tfile);
          const json t = json::parse(tin, nullptr, false);
          if (!t.is_discarded() && t.contains("seconds")) seconds[i] = t["seconds"].get<double>();
        }
        continue;
      }
    }
    todo.push_back(i);
  }
  const int outer = todo.size() > 1 ? jobs : 1;
  const int inner = todo.size() > 1 ? 1 : jobs;
  parallel_for(static_cast<std::int64_t>(todo.size()), outer, [&](std::int64_t k) {
    const std::size_t i = todo[static_cast<std::size_t>(k)];
    const std::string hash = content_hash(cells[i].key.dump());
    CellResult r = compute(cells[i], inner);
    write_atomically(dir / (hash + ".json"), json{{"key", cells[i].key}, {"rows", r.rows}}.dump(2) + "\n");
    write_atomically(dir / (hash + ".timing.json"), json{{"seconds", r.seconds}}.dump() + "\n");
    rows[i] = std::move(r.rows);
    seconds[i] = r.seconds;
  });
  for (std::size_t i = 0; i < cells.size(); ++i) {
    timings.push_back({{"cell", content_hash(cells[i].key.dump())},
                       {"label", cells[i].label},
                       {"seconds", std::isnan(seconds[i]) ? json(nullptr) : json(seconds[i])}});
    std::cout << cells[i].label << ": " << (reused[i] ? "reused" : "done") << "\n";
  }
  return rows;
}

json metric_rows(const std::vector<MetricReport>& reports) {
  json rows = json::array();
  for (const auto& r : reports) {
    rows.push_back({{"experiment", r.experiment},
                    {"dataset", r.dataset},
                    {"toa", toa_to_json(r.config)},
                    {"sh_order", r.sh_order},
                    {"snr_db", number_or_inf(r.snr_db)},
                    {"seed", r.seed},
                    {"itd_distortion_us", r.itd_distortion_us},
                    {"lsd_db", r.lsd_db},
                    {"fft_size", r.fft_size}});
  }
  return rows;
}

std::vector<MetricReport> reports_from(const std::vector<json>& cell_rows) {
  std::vector<MetricReport> out;
  for (const auto& rows : cell_rows) {
    for (const auto& j : rows) {
      MetricReport r;
      r.experiment = j.at("experiment").get<std::string>();
      r.dataset = j.at("dataset").get<std::string>();
      r.config = toa_from_json(j.at("toa"));
      r.sh_order = j.at("sh_order").get<int>();
      r.snr_db = number_from_json(j.at("snr_db"));
      r.seed = j.at("seed").get<std::uint64_t>();
      r.itd_distortion_us = j.at("itd_distortion_us").get<double>();
      r.lsd_db = j.at("lsd_db").get<double>();
      r.fft_size = j.at("fft_size").get<Index>();
      out.push_back(std::move(r));
    }
  }
  return out;
}

// All 36 combinations: 3 algorithms x 3 weightings x minphase x cross.
std::vector<ToaConfig> full_grid(const ToaConfig& base) {
  std::vector<ToaConfig> grid;
  for (Algorithm a : {Algorithm::Simp, Algorithm::Edgy, Algorithm::Ls}) {
    for (Weighting w : {Weighting::None, Weighting::Exp, Weighting::Corr}) {
      for (bool minphase : {false, true}) {
        for (bool cross : {false, true}) {
          ToaConfig c = base;
          c.algorithm = a;
          c.weighting = w;
          c.use_minphase = minphase;
          c.use_cross = cross;
          grid.push_back(c);
        }
      }
    }
  }
  return grid;
}

std::vector<double> parse_snr_list(const std::vector<std::string>& items) {
  std::vector<double> out;
  for (const auto& s : items) {
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw UsageError("bad SNR value: " + s);
    }
    if (std::isnan(v)) throw UsageError("bad SNR value: " + s);
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("--snr needs at least one value");
  return out;
}

struct ExperimentFlags {
  fs::path input;
  bool grid = false;
  ToaFlags toa;
  EvalFlags eval;
  std::vector<std::string> snr{"6", "12", "18", "24", "48"};
  std::vector<std::string> methods{"freq", "spherical", "joint"};
  bool prealign = false;
};

int cmd_recon_or_noise(const std::string& kind, const ExperimentFlags& f, const GlobalOptions& g) {
  const ToaConfig base = resolve(f.toa, g);
  const ExperimentOptions opts = resolve(f.eval, g);
  const std::vector<ToaConfig> configs = f.grid ? full_grid(base) : std::vector<ToaConfig>{base};
  const std::vector<double> snrs = kind == "noise" ? parse_snr_list(f.snr) : std::vector<double>{};
  const HrirSet set = load_input(f.input);

  json cfg = base_config("experiment " + kind, g);
  cfg["input"] = f.input.string();
  cfg["dataset"] = set.name;
  cfg["eval"] = eval_to_json(f.eval);
  json grid_json = json::array();
  for (const auto& c : configs) grid_json.push_back(toa_to_json(c));
  cfg["toa_grid"] = grid_json;
  if (kind == "noise") {
    json s = json::array();
    for (double v : snrs) s.push_back(number_or_inf(v));
    cfg["snr_db"] = s;
  }

  // recon: one cell per config; noise: one cell per SNR level holding every
  // config, so features of the noisy set are shared.
  std::vector<Cell> cells;
  if (kind == "recon") {
    for (const auto& c : configs) {
      json key = {{"experiment", "recon"}, {"input", f.input.string()}, {"dataset", set.name},
                  {"toa", toa_to_json(c)}, {"eval", eval_to_json(f.eval)}};
      cells.push_back({key, "recon " + c.label()});
    }
  } else {
    for (double snr : snrs) {
      json key = {{"experiment", "noise"}, {"input", f.input.string()}, {"dataset", set.name},
                  {"seed", g.seed},        {"snr_db", number_or_inf(snr)}, {"toa_grid", grid_json},
                  {"eval", eval_to_json(f.eval)}};
      std::ostringstream label;
      label << "noise " << snr << " dB";
      cells.push_back({key, label.str()});
    }
  }

  json timings = json::array();
  make_out_dir(g.out);
  const auto rows = run_cells(
      cells, g.out, g.jobs,
      [&](const Cell& cell, int inner_jobs) {
        ExperimentOptions o = opts;
        o.jobs = inner_jobs;
        std::vector<MetricReport> reports;
        double seconds = 0.0;
        if (kind == "recon") {
          const ToaConfig c = toa_from_json(cell.key.at("toa"));
          for (int order : f.eval.orders) {
            reports.push_back(run_alignment_experiment(set, c, order, o));
            seconds = reports.back().solve_seconds;
          }
        } else {
          const double snr = number_from_json(cell.key.at("snr_db"));
          const auto t0 = std::chrono::steady_clock::now();
          reports = run_noise_experiment(set, {snr}, configs, f.eval.orders, g.seed, o);
          seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
        return CellResult{metric_rows(reports), seconds};
      },
      timings);

  const auto reports = reports_from(rows);
  write_metric_csv(reports, g.out / (kind + ".csv"), header(cfg));
  write_text(g.out / (kind + ".json"), metric_json(reports, cfg.dump()) + "\n");
  write_timings(g.out / "timings.json", cfg, timings);
  return kExitOk;
}

int cmd_phase(const ExperimentFlags& f, const GlobalOptions& g) {
  std::vector<PhaseMethod> methods;
  for (const auto& m : f.methods) methods.push_back({parse_unwrap_method(m), false});
  if (methods.empty()) throw UsageError("--method needs at least one method");
  if (f.prealign) {
    bool found = false;
    for (auto& m : methods) {
      if (m.method == UnwrapMethod::Joint) {
        m.prealign = true;
        found = true;
      }
    }
    if (!found) throw UsageError("--prealign applies to the joint method only");
  }
  const ToaConfig toa_config = resolve(f.toa, g);
  const ExperimentOptions opts = resolve(f.eval, g);
  const HrirSet set = load_input(f.input);

  json cfg = base_config("experiment phase", g);
  cfg["input"] = f.input.string();
  cfg["dataset"] = set.name;
  cfg["eval"] = eval_to_json(f.eval);
  cfg["methods"] = f.methods;
  cfg["prealign"] = f.prealign;
  if (f.prealign) cfg["toa"] = toa_to_json(toa_config);

  std::vector<Cell> cells;
  for (const auto& m : methods) {
    json key = {{"experiment", "phase"}, {"input", f.input.string()}, {"dataset", set.name},
                {"method", to_string(m.method)}, {"prealign", m.prealign}, {"eval", eval_to_json(f.eval)}};
    if (m.prealign) key["toa"] = toa_to_json(toa_config);
    cells.push_back({key, "phase " + to_string(m.method) + (m.prealign ? " prealigned" : "")});
  }
  json timings = json::array();
  make_out_dir(g.out);
  const auto cell_rows = run_cells(
      cells, g.out, g.jobs,
      [&](const Cell& cell, int inner_jobs) {
        ExperimentOptions o = opts;
        o.jobs = inner_jobs;
        const PhaseMethod pm{parse_unwrap_method(cell.key.at("method").get<std::string>()),
                             cell.key.at("prealign").get<bool>()};
        const auto t0 = std::chrono::steady_clock::now();
        const auto rows = run_phase_delay_experiment(set, {pm}, f.eval.orders, o, toa_config);
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        json out = json::array();
        for (const auto& r : rows) {
          out.push_back({{"method", to_string(r.method)},
                         {"prealigned", r.prealigned},
                         {"sh_order", r.sh_order},
                         {"freq_hz", r.freq_hz},
                         {"error_us", r.error_us},
                         {"objective", r.objective}});
        }
        return CellResult{out, seconds};
      },
      timings);

  std::vector<PhaseDelayRow> rows;
  for (const auto& cr : cell_rows) {
    for (const auto& j : cr) {
      rows.push_back({parse_unwrap_method(j.at("method").get<std::string>()), j.at("prealigned").get<bool>(),
                      j.at("sh_order").get<int>(), j.at("freq_hz").get<double>(), j.at("error_us").get<double>(),
                      j.at("objective").get<double>()});
    }
  }
  write_phase_csv(rows, set.name, g.out / "phase.csv", header(cfg));
  write_text(g.out / "phase.json", phase_json(rows, set.name, cfg.dump()) + "\n");
  write_timings(g.out / "timings.json", cfg, timings);
  return kExitOk;
}

// synth --------------------------------------------------------------------

struct SynthFlags {
  std::string grid = "fibonacci:256";
  double radius_m = 0.0875;
  double fs_hz = 44100.0;
  Index samples = 256;
  std::string snr = "inf";
  double base_delay_ms = 1.0;
  double shadow_db = 20.0;
};

SynthConfig parse_synth(const SynthFlags& f, const GlobalOptions& g) {
  SynthConfig c;
  if (f.grid == "design240") {
    c.grid = SynthGrid::Design240;
  } else if (f.grid.rfind("fibonacci:", 0) == 0) {
    c.grid = SynthGrid::Fibonacci;
    const std::string count = f.grid.substr(10);
    try {
      std::size_t used = 0;
      c.num_directions = std::stol(count, &used);
      if (used != count.size()) throw std::invalid_argument(count);
    } catch (const std::exception&) {
      throw UsageError("bad grid spec: " + f.grid);
    }
    if (c.num_directions < 4) throw UsageError("fibonacci grid needs at least 4 directions");
  } else {
    throw UsageError("grid must be fibonacci:N or design240, got " + f.grid);
  }
  c.head_radius_m = f.radius_m;
  c.sample_rate_hz = f.fs_hz;
  c.num_samples = f.samples;
  c.snr_db = parse_snr_list({f.snr}).front();
  c.base_delay_s = f.base_delay_ms * 1e-3;
  c.shadow_db = f.shadow_db;
  c.seed = g.seed;
  return c;
}

int cmd_synth(const SynthFlags& flags, const GlobalOptions& g) {
  const SynthConfig c = parse_synth(flags, g);
  const SynthSet s = make_rigid_sphere_set(c);
  json cfg = base_config("synth", g);
  cfg["synth"] = {{"grid", flags.grid},
                  {"head_radius_m", c.head_radius_m},
                  {"sample_rate_hz", c.sample_rate_hz},
                  {"num_samples", c.num_samples},
                  {"snr_db", number_or_inf(c.snr_db)},
                  {"base_delay_s", c.base_delay_s},
                  {"shadow_db", c.shadow_db},
                  {"speed_of_sound_mps", c.speed_of_sound_mps}};
  save_container(s.set, g.out);

  std::ofstream truth(g.out / "truth.csv");
  if (!truth) throw Error(ErrorCode::IoFailure, "cannot write truth.csv");
  truth.precision(10);
  truth << "# " << header(cfg) << "\n";
  truth << "index,az_deg,colat_deg,tau_left_us,tau_right_us,itd_us\n";
  for (Index i = 0; i < s.set.num_directions(); ++i) {
    const auto& d = s.set.directions[static_cast<std::size_t>(i)];
    const double l = s.tau_left_s(i) * 1e6;
    const double r = s.tau_right_s(i) * 1e6;
    truth << i << ',' << d.azimuth_deg() << ',' << d.colatitude_deg() << ',' << l << ',' << r << ',' << l - r << '\n';
  }
  if (!truth) throw Error(ErrorCode::IoFailure, "failed writing truth.csv");

  const Index front = front_direction(s.set.directions);
  write_text(g.out / "synth.json", json{{"config", cfg},
                                        {"noise_sigma", s.noise_sigma},
                                        {"measured_snr_db", number_or_inf(measurement_snr_db(s.set, front))}}
                                           .dump(2) + "\n");
  std::cout << "wrote " << s.set.num_directions() << " directions to " << g.out.string() << "\n";
  return kExitOk;
}

}  // namespace

std::string content_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"HRIR time-of-arrival estimation and HRTF phase unwrapping on spherical graphs", "hrtfgraph"};
  app.fallthrough();
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_option("--seed", g.seed, "RNG seed")->capture_default_str();
  app.add_option("--jobs", g.jobs, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--oversample", g.oversample, "oversampling factor")->check(CLI::PositiveNumber)->capture_default_str();

  fs::path input;
  ToaFlags toa_flags;
  bool dump_graph = false;

  auto* inspect = app.add_subcommand("inspect", "summarize a container");
  inspect->add_option("input", input, "container directory")->required();

  auto* toa = app.add_subcommand("toa", "estimate TOAs and ITDs");
  toa->add_option("input", input, "container directory")->required();
  add_toa_flags(toa, toa_flags);
  toa->add_flag("--dump-graph", dump_graph, "write the assembled difference graph as JSON");

  auto* align = app.add_subcommand("align", "write the TOA-aligned container");
  align->add_option("input", input, "container directory")->required();
  add_toa_flags(align, toa_flags);

  std::vector<std::string> methods{"freq", "spherical", "joint"};
  bool prealign = false;
  std::string ear = "left";
  Index fft = 0;
  auto* unwrap = app.add_subcommand("unwrap", "unwrap HRTF phase");
  unwrap->add_option("input", input, "container directory")->required();
  unwrap->add_option("--method", methods, "freq, spherical, joint")
      ->delimiter(',')
      ->check(CLI::IsMember({"freq", "spherical", "joint"}, CLI::ignore_case))
      ->capture_default_str();
  unwrap->add_flag("--prealign", prealign, "remove TOA linear phase before the joint solve");
  unwrap->add_option("--ear", ear, "left or right")->check(CLI::IsMember({"left", "right"}))->capture_default_str();
  unwrap->add_option("--fft", fft, "FFT size, 0 for the response length")->capture_default_str();
  add_toa_flags(unwrap, toa_flags);

  ExperimentFlags ef;
  auto* experiment = app.add_subcommand("experiment", "run an evaluation grid");
  experiment->require_subcommand(1);
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("input", ef.input, "container directory")->required();
    add_toa_flags(cmd, ef.toa);
    add_eval_flags(cmd, ef.eval);
  };
  auto* recon = experiment->add_subcommand("recon", "SH reconstruction of aligned HRIRs and ITDs");
  add_common(recon);
  recon->add_flag("--grid", ef.grid, "run all 36 TOA configurations");
  auto* noise = experiment->add_subcommand("noise", "white-noise robustness sweep");
  add_common(noise);
  noise->add_flag("--grid", ef.grid, "run all 36 TOA configurations");
  noise->add_option("--snr", ef.snr, "SNR levels in dB, inf for clean")->delimiter(',')->capture_default_str();
  auto* phase = experiment->add_subcommand("phase", "SH phase-delay distortion per unwrapping method");
  add_common(phase);
  phase->add_option("--method", ef.methods, "freq, spherical, joint")
      ->delimiter(',')
      ->check(CLI::IsMember({"freq", "spherical", "joint"}, CLI::ignore_case))
      ->capture_default_str();
  phase->add_flag("--prealign", ef.prealign, "pre-align the joint method");

  SynthFlags sf;
  auto* synth = app.add_subcommand("synth", "generate a rigid-sphere synthetic set");
  synth->add_option("--grid", sf.grid, "fibonacci:N or design240")->capture_default_str();
  synth->add_option("--radius", sf.radius_m, "head radius in m")->capture_default_str();
  synth->add_option("--fs", sf.fs_hz, "sample rate in Hz")->capture_default_str();
  synth->add_option("--samples", sf.samples, "response length")->capture_default_str();
  synth->add_option("--snr", sf.snr, "measurement SNR in dB, inf for clean")->capture_default_str();
  synth->add_option("--base-delay-ms", sf.base_delay_ms, "delay at the head centre")->capture_default_str();
  synth->add_option("--shadow-db", sf.shadow_db, "contralateral attenuation")->capture_default_str();

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*inspect) return cmd_inspect(input, g);
    if (*toa) return cmd_toa(input, toa_flags, dump_graph, false, g);
    if (*align) return cmd_toa(input, toa_flags, false, true, g);
    if (*unwrap) return cmd_unwrap(input, methods, prealign, ear, fft, toa_flags, g);
    if (*recon) return cmd_recon_or_noise("recon", ef, g);
    if (*noise) return cmd_recon_or_noise("noise", ef, g);
    if (*phase) return cmd_phase(ef, g);
    if (*synth) return cmd_synth(sf, g);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitModuleError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitModuleError;
  }
  return kExitUsage;
}

}  // namespace hrtfgraph::cli
