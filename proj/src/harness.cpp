#include "biosense/harness.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include "biosense/errors.hpp"
#include "biosense/estimation.hpp"
#include "biosense/io.hpp"
#include "json.hpp"

namespace biosense {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

constexpr double kMm = 1e-3;
constexpr double kUlPerMin = 1e-9 / 60.0;  // m^3/s

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

void check_keys(const YAML::Node& node, const std::string& path,
                const std::set<std::string>& allowed) {
  if (!node.IsMap()) fail(path.empty() ? "<root>" : path, "expected a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) fail(path.empty() ? key : path + "." + key, "unknown key");
  }
}

template <class T>
T scalar(const YAML::Node& node, const std::string& path, const char* type_name) {
  if (!node.IsScalar()) fail(path, std::string("expected ") + type_name);
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    fail(path, std::string("expected ") + type_name + ", got '" + node.Scalar() + "'");
  }
}

double number(const YAML::Node& node, const std::string& path) {
  const double v = scalar<double>(node, path, "a number");
  if (!std::isfinite(v)) fail(path, "expected a finite number");
  return v;
}

double positive(const YAML::Node& node, const std::string& path) {
  const double v = number(node, path);
  if (!(v > 0.0)) fail(path, "must be > 0");
  return v;
}

double nonnegative(const YAML::Node& node, const std::string& path) {
  const double v = number(node, path);
  if (!(v >= 0.0)) fail(path, "must be >= 0");
  return v;
}

int integer(const YAML::Node& node, const std::string& path, int min) {
  const long long v = scalar<long long>(node, path, "an integer");
  if (v < min || v > 1'000'000'000) fail(path, "must be an integer >= " + std::to_string(min));
  return static_cast<int>(v);
}

template <class Fn>
void maybe(const YAML::Node& parent, const std::string& path, const char* key, Fn&& fn) {
  const YAML::Node n = parent[key];
  if (n) fn(n, path + "." + std::string(key));
}

RateVector rate_list(const YAML::Node& node, const std::string& path) {
  if (!node.IsSequence() || node.size() != kReactionCount) fail(path, "expected a list of 7 numbers");
  RateVector r{};
  for (std::size_t j = 0; j < kReactionCount; ++j)
    r[j] = positive(node[j], path + "[" + std::to_string(j) + "]");
  return r;
}

AdvectionMode parse_mode(const std::string& s, const std::string& path) {
  if (s == "strict") return AdvectionMode::Strict;
  if (s == "relaxed") return AdvectionMode::Relaxed;
  fail(path, "expected 'strict' or 'relaxed', got '" + s + "'");
}

const char* mode_name(AdvectionMode m) { return m == AdvectionMode::Strict ? "strict" : "relaxed"; }

void parse_chamber(const YAML::Node& n, ExperimentConfig& cfg) {
  const std::string p = "chamber";
  check_keys(n, p,
             {"height_mm", "width_mm", "length_mm", "sensor_length_mm", "sensor_spacing_mm",
              "lead_position_mm", "sensor_count", "diffusivity", "flow_rate_ul_min",
              "peak_velocity", "alpha_override"});
  auto& c = cfg.chamber;
  maybe(n, p, "height_mm", [&](const YAML::Node& v, const std::string& q) { c.height = positive(v, q) * kMm; });
  maybe(n, p, "width_mm", [&](const YAML::Node& v, const std::string& q) { c.width = positive(v, q) * kMm; });
  maybe(n, p, "length_mm", [&](const YAML::Node& v, const std::string& q) { c.length = positive(v, q) * kMm; });
  maybe(n, p, "sensor_length_mm", [&](const YAML::Node& v, const std::string& q) { c.sensor_length = positive(v, q) * kMm; });
  maybe(n, p, "sensor_spacing_mm",
        [&](const YAML::Node& v, const std::string& q) { c.sensor_spacing = nonnegative(v, q) * kMm; });
  maybe(n, p, "lead_position_mm",
        [&](const YAML::Node& v, const std::string& q) { c.lead_position = nonnegative(v, q) * kMm; });
  maybe(n, p, "sensor_count", [&](const YAML::Node& v, const std::string& q) { c.sensor_count = integer(v, q, 1); });
  maybe(n, p, "diffusivity", [&](const YAML::Node& v, const std::string& q) { c.diffusivity = positive(v, q); });
  maybe(n, p, "alpha_override", [&](const YAML::Node& v, const std::string& q) {
    const double a = positive(v, q);
    if (!(a <= 1.0)) fail(q, "must lie in (0, 1]");
    cfg.alpha_override = a;
  });
  const bool has_flow = static_cast<bool>(n["flow_rate_ul_min"]);
  const bool has_vel = static_cast<bool>(n["peak_velocity"]);
  if (has_flow && has_vel) fail(p, "give exactly one of flow_rate_ul_min and peak_velocity");
  if (has_vel) {
    cfg.flow_rate_ul_min.reset();
    c.peak_velocity = positive(n["peak_velocity"], p + ".peak_velocity");
  } else if (has_flow) {
    cfg.flow_rate_ul_min = positive(n["flow_rate_ul_min"], p + ".flow_rate_ul_min");
  }
}

void parse_chemistry(const YAML::Node& n, ExperimentConfig& cfg) {
  const std::string p = "chemistry";
  check_keys(n, p, {"forward", "reverse", "B0", "C_total", "S_total", "matrix"});
  auto& c = cfg.chemistry;
  maybe(n, p, "forward", [&](const YAML::Node& v, const std::string& q) { c.rates.forward = rate_list(v, q); });
  maybe(n, p, "reverse", [&](const YAML::Node& v, const std::string& q) { c.rates.reverse = rate_list(v, q); });
  maybe(n, p, "B0", [&](const YAML::Node& v, const std::string& q) { c.totals.B0 = positive(v, q); });
  maybe(n, p, "C_total", [&](const YAML::Node& v, const std::string& q) { c.totals.C_total = positive(v, q); });
  maybe(n, p, "S_total", [&](const YAML::Node& v, const std::string& q) { c.totals.S_total = positive(v, q); });
  maybe(n, p, "matrix", [&](const YAML::Node& v, const std::string& q) {
    const auto s = scalar<std::string>(v, q, "a string");
    if (s == "corrected") c.variant = MatrixVariant::Corrected;
    else if (s == "as_printed") c.variant = MatrixVariant::AsPrinted;
    else fail(q, "expected 'corrected' or 'as_printed'");
  });
}

void parse_run(const YAML::Node& n, ExperimentConfig& cfg) {
  const std::string p = "run";
  check_keys(n, p, {"A_star", "horizon", "sample_dt", "P", "Q", "mode", "snapshots"});
  auto& r = cfg.run;
  maybe(n, p, "A_star", [&](const YAML::Node& v, const std::string& q) { r.A_star = nonnegative(v, q); });
  maybe(n, p, "horizon", [&](const YAML::Node& v, const std::string& q) { r.horizon = positive(v, q); });
  maybe(n, p, "sample_dt", [&](const YAML::Node& v, const std::string& q) { r.sample_dt = positive(v, q); });
  maybe(n, p, "P", [&](const YAML::Node& v, const std::string& q) { r.P = integer(v, q, 4); });
  maybe(n, p, "Q", [&](const YAML::Node& v, const std::string& q) { r.Q = integer(v, q, 4); });
  maybe(n, p, "mode", [&](const YAML::Node& v, const std::string& q) { r.mode = parse_mode(scalar<std::string>(v, q, "a string"), q); });
  maybe(n, p, "snapshots", [&](const YAML::Node& v, const std::string& q) { r.snapshots = scalar<bool>(v, q, "a boolean"); });
}

void parse_estimation(const YAML::Node& n, ExperimentConfig& cfg) {
  const std::string p = "estimation";
  check_keys(n, p, {"sigma", "snr_db", "samples", "dt", "sensors", "trials", "master_seed",
                    "bracket", "source"});
  auto& e = cfg.estimation;
  if (n["sigma"] && n["snr_db"]) fail(p, "give exactly one of sigma and snr_db");
  maybe(n, p, "sigma", [&](const YAML::Node& v, const std::string& q) { e.sigma = nonnegative(v, q); });
  maybe(n, p, "snr_db", [&](const YAML::Node& v, const std::string& q) { e.snr_db = number(v, q); });
  maybe(n, p, "samples", [&](const YAML::Node& v, const std::string& q) { e.samples = integer(v, q, 1); });
  maybe(n, p, "dt", [&](const YAML::Node& v, const std::string& q) { e.dt = positive(v, q); });
  maybe(n, p, "sensors", [&](const YAML::Node& v, const std::string& q) { e.sensors = integer(v, q, 1); });
  maybe(n, p, "trials", [&](const YAML::Node& v, const std::string& q) { e.trials = integer(v, q, 0); });
  maybe(n, p, "master_seed", [&](const YAML::Node& v, const std::string& q) {
    e.master_seed = scalar<std::uint64_t>(v, q, "an unsigned 64-bit integer");
  });
  maybe(n, p, "bracket", [&](const YAML::Node& v, const std::string& q) {
    if (!v.IsSequence() || v.size() != 2) fail(q, "expected [lower, upper]");
    e.lower = positive(v[0], q + "[0]");
    e.upper = positive(v[1], q + "[1]");
    if (!(e.upper > e.lower)) fail(q, "upper must exceed lower");
  });
  maybe(n, p, "source", [&](const YAML::Node& v, const std::string& q) {
    e.source = scalar<std::string>(v, q, "a string");
    if (e.source != "ode" && e.source != "pde") fail(q, "expected 'ode' or 'pde'");
  });
}

void parse_design(const YAML::Node& n, ExperimentConfig& cfg) {
  const std::string p = "design";
  check_keys(n, p, {"A_min", "A_max", "points"});
  auto& d = cfg.design;
  maybe(n, p, "A_min", [&](const YAML::Node& v, const std::string& q) { d.A_min = positive(v, q); });
  maybe(n, p, "A_max", [&](const YAML::Node& v, const std::string& q) { d.A_max = positive(v, q); });
  maybe(n, p, "points", [&](const YAML::Node& v, const std::string& q) { d.points = integer(v, q, 2); });
}

void parse_outputs(const YAML::Node& n, ExperimentConfig& cfg) {
  const std::string p = "outputs";
  check_keys(n, p, {"directory", "formats"});
  auto& o = cfg.outputs;
  maybe(n, p, "directory", [&](const YAML::Node& v, const std::string& q) { o.directory = scalar<std::string>(v, q, "a string"); });
  maybe(n, p, "formats", [&](const YAML::Node& v, const std::string& q) {
    if (!v.IsSequence() || v.size() == 0) fail(q, "expected a nonempty list of 'csv'/'json'");
    o.csv = o.json = false;
    for (std::size_t k = 0; k < v.size(); ++k) {
      const auto s = scalar<std::string>(v[k], q + "[" + std::to_string(k) + "]", "a string");
      if (s == "csv") o.csv = true;
      else if (s == "json") o.json = true;
      else fail(q + "[" + std::to_string(k) + "]", "expected 'csv' or 'json'");
    }
  });
}

// ---- output helpers --------------------------------------------------------

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

void write_json(const fs::path& path, const Json& j) { io::write_text(path, j.dump(2) + "\n"); }

void write_table(const ExperimentConfig& cfg, const fs::path& dir, const std::string& stem,
                 const std::vector<std::string>& header,
                 const std::vector<std::vector<double>>& rows) {
  if (cfg.outputs.csv) {
    io::CsvWriter w(dir / (stem + ".csv"), header);
    for (const auto& r : rows) w.row(r);
  }
  if (cfg.outputs.json) {
    Json j;
    j["columns"] = header;
    Json data = Json::array();
    for (const auto& r : rows) {
      Json row = Json::array();
      for (double v : r) row.push_back(number_or_null(v));
      data.push_back(std::move(row));
    }
    j["rows"] = std::move(data);
    write_json(dir / (stem + ".json"), j);
  }
}

std::vector<std::string> species_header(const SurfaceChemistry& chem) {
  std::vector<std::string> h;
  for (std::size_t s = 0; s < chem.species_count(); ++s) h.emplace_back(species_name(s));
  return h;
}

Json resolved_parameters(const ExperimentConfig& cfg, const CompartmentModel& model) {
  const auto& c = cfg.chamber;
  Json j;
  j["schema_version"] = cfg.schema_version;
  Json input;
  input["height_mm"] = c.height / kMm;
  input["width_mm"] = c.width / kMm;
  input["length_mm"] = c.length / kMm;
  input["sensor_length_mm"] = c.sensor_length / kMm;
  input["sensor_spacing_mm"] = c.sensor_spacing / kMm;
  input["lead_position_mm"] = c.lead_position / kMm;
  input["flow_rate_ul_min"] = cfg.flow_rate_ul_min ? Json(*cfg.flow_rate_ul_min) : Json(nullptr);
  j["chamber_input_units"] = input;
  Json si;
  si["height"] = c.height;
  si["width"] = c.width;
  si["length"] = c.length;
  si["sensor_length"] = c.sensor_length;
  si["sensor_spacing"] = c.sensor_spacing;
  si["lead_position"] = c.lead_position;
  si["sensor_count"] = c.sensor_count;
  si["diffusivity"] = c.diffusivity;
  si["peak_velocity"] = c.peak_velocity;
  si["flow_rate"] = cfg.flow_rate_ul_min ? Json(*cfg.flow_rate_ul_min * kUlPerMin) : Json(nullptr);
  j["chamber_si"] = si;
  j["h0"] = model.h0();
  j["alpha"] = model.alpha();
  j["alpha_source"] = cfg.alpha_override ? "override" : "formula";
  j["arrival_times"] = model.arrivals();
  j["peclet_peak"] = peclet(c, c.height / 2.0);
  Json chem;
  chem["forward"] = cfg.chemistry.rates.forward;
  chem["reverse"] = cfg.chemistry.rates.reverse;
  chem["matrix"] = cfg.chemistry.variant == MatrixVariant::Corrected ? "corrected" : "as_printed";
  Json u0;
  const auto init = model.chemistry().initial_state();
  for (std::size_t s = 0; s < init.size(); ++s) u0[std::string(species_name(s))] = init[s];
  chem["u0"] = u0;
  chem["D0"] = model.chemistry().response(init);
  j["chemistry"] = chem;
  j["warnings"] = c.warnings();
  return j;
}

fs::path out_dir(const ExperimentConfig& cfg) {
  fs::path d(cfg.outputs.directory);
  fs::create_directories(d);
  return d;
}

PdeRun run_pde(const ExperimentConfig& cfg, const PdeSolver& solver, double horizon,
               bool snapshots) {
  PdeOptions opt;
  opt.keep_snapshots = snapshots;
  return solver.integrate(solver.initial_state(), horizon, cfg.run.sample_dt, opt);
}

Json run_metadata(const PdeSolver& s, const PdeRun& run) {
  Json j;
  j["P"] = s.grid().P;
  j["Q"] = s.grid().Q;
  j["dy"] = s.grid().dy;
  j["dz"] = s.grid().dz;
  j["mode"] = mode_name(s.grid().mode);
  Json nodes = Json::array();
  for (const auto& v : s.grid().sensor_nodes) nodes.push_back({v.front(), v.back()});
  j["sensor_node_ranges"] = nodes;
  j["min_bulk"] = run.min_bulk;
  j["min_surface"] = run.min_surface;
  j["positivity_violation"] = run.positivity_violation;
  j["accepted_steps"] = run.stats.accepted;
  j["rejected_steps"] = run.stats.rejected;
  return j;
}

}  // namespace

// ---- config ----------------------------------------------------------------

std::shared_ptr<IcsChemistry> ExperimentConfig::make_chemistry() const {
  const auto& t = chemistry.totals;
  return std::make_shared<IcsChemistry>(
      IcsChemistry::from_totals(chemistry.rates, t.B0, t.C_total, t.S_total, chemistry.variant));
}

CompartmentOptions ExperimentConfig::compartment_options() const {
  CompartmentOptions o;
  o.alpha_override = alpha_override;
  return o;
}

CompartmentModel ExperimentConfig::make_model() const {
  return CompartmentModel(chamber, make_chemistry(), compartment_options());
}

double ExperimentConfig::noise_sigma() const {
  if (estimation.sigma) return *estimation.sigma;
  const auto chem = make_chemistry();
  return sigma_from_snr(chem->response(chem->initial_state()), estimation.snr_db.value_or(10.0));
}

void ExperimentConfig::validate() const {
  if (schema_version != kSchemaVersion) {
    fail("schema_version", "unsupported version " + std::to_string(schema_version) +
                               " (expected " + std::to_string(kSchemaVersion) + ")");
  }
  chamber.validate();
  try {
    chemistry.rates.validate();
  } catch (const DomainError& e) {
    fail("chemistry", e.what());
  }
  if (estimation.sensors > chamber.sensor_count) {
    fail("estimation.sensors", "exceeds chamber.sensor_count");
  }
  if (!(design.A_max > design.A_min)) fail("design.A_max", "must exceed design.A_min");
  if (run.sample_dt > run.horizon) fail("run.sample_dt", "must not exceed run.horizon");
}

ExperimentConfig parse_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("malformed configuration: ") + e.what());
  }
  if (!root || root.IsNull()) throw ConfigError("empty configuration document");
  check_keys(root, "", {"schema_version", "chamber", "chemistry", "run", "estimation", "design", "outputs"});
  ExperimentConfig cfg;
  if (!root["schema_version"]) fail("schema_version", "required key is missing");
  cfg.schema_version = integer(root["schema_version"], "schema_version", 0);
  if (root["chamber"]) parse_chamber(root["chamber"], cfg);
  if (root["chemistry"]) parse_chemistry(root["chemistry"], cfg);
  if (root["run"]) parse_run(root["run"], cfg);
  if (root["estimation"]) parse_estimation(root["estimation"], cfg);
  if (root["design"]) parse_design(root["design"], cfg);
  if (root["outputs"]) parse_outputs(root["outputs"], cfg);
  if (cfg.flow_rate_ul_min) {
    cfg.chamber.peak_velocity = peak_velocity_from_flow(*cfg.flow_rate_ul_min * kUlPerMin,
                                                        cfg.chamber.width, cfg.chamber.height);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read configuration file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_overrides(ExperimentConfig& cfg, const CommandOverrides& ov) {
  if (ov.out) cfg.outputs.directory = *ov.out;
  if (ov.seed) cfg.estimation.master_seed = *ov.seed;
  if (ov.trials) {
    if (*ov.trials < 0) throw ConfigError("--trials must be >= 0");
    cfg.estimation.trials = *ov.trials;
  }
  if (ov.mode) cfg.run.mode = *ov.mode;
}

// ---- commands --------------------------------------------------------------

void cmd_simulate_ode(const ExperimentConfig& cfg) {
  const auto dir = out_dir(cfg);
  const auto model = cfg.make_model();
  const auto traj = model.simulate_array(cfg.run.A_star, cfg.run.horizon, cfg.run.sample_dt);
  auto header = species_header(model.chemistry());
  header.insert(header.begin(), {"t", "a_bar"});
  header.push_back("g");
  for (const auto& s : traj.sensors) {
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < s.time.size(); ++k) {
      std::vector<double> r{s.time[k], s.inner[k]};
      r.insert(r.end(), s.species[k].begin(), s.species[k].end());
      r.push_back(s.response[k]);
      rows.push_back(std::move(r));
    }
    write_table(cfg, dir, "ode_sensor_" + std::to_string(s.sensor + 1), header, rows);
  }
  Json meta = resolved_parameters(cfg, model);
  meta["command"] = "simulate-ode";
  meta["A_star"] = cfg.run.A_star;
  meta["horizon"] = cfg.run.horizon;
  meta["sample_dt"] = cfg.run.sample_dt;
  Json outer = Json::array();
  for (const auto& s : traj.sensors) outer.push_back(s.outer);
  meta["outer_concentrations"] = outer;
  write_json(dir / "run_metadata.json", meta);
}

void cmd_simulate_pde(const ExperimentConfig& cfg) {
  const auto dir = out_dir(cfg);
  const auto model = cfg.make_model();
  const auto grid = build_grid(cfg.chamber, cfg.run.P, cfg.run.Q, cfg.run.mode);
  const PdeSolver solver(cfg.chamber, grid, model.chemistry_ptr(), cfg.run.A_star);
  const auto run = run_pde(cfg, solver, cfg.run.horizon, cfg.run.snapshots);

  std::vector<std::string> header{"t"};
  for (int k = 0; k < cfg.chamber.sensor_count; ++k) header.push_back("D_" + std::to_string(k + 1));
  std::vector<std::vector<double>> rows;
  for (std::size_t n = 0; n < run.times.size(); ++n) {
    std::vector<double> r{run.times[n]};
    for (const auto& d : run.dimer) r.push_back(d[n]);
    rows.push_back(std::move(r));
  }
  write_table(cfg, dir, "pde_dimer", header, rows);

  if (cfg.run.snapshots) {
    const auto snap_dir = dir / "snapshots";
    std::vector<std::string> a_header{"i", "y"};
    for (int j = 0; j <= grid.Q; ++j) a_header.push_back("A_" + std::to_string(j));
    auto s_header = species_header(model.chemistry());
    s_header.insert(s_header.begin(), {"sensor", "i", "y"});
    for (std::size_t n = 0; n < run.snapshots.size(); ++n) {
      const auto& f = run.snapshots[n];
      char tag[32];
      std::snprintf(tag, sizeof tag, "%06zu", n);
      io::CsvWriter wa(snap_dir / (std::string("A_") + tag + ".csv"), a_header);
      for (int i = 0; i <= f.P; ++i) {
        std::vector<double> r{static_cast<double>(i), i * grid.dy};
        for (int j = 0; j <= f.Q; ++j) r.push_back(f.at(i, j));
        wa.row(r);
      }
      io::CsvWriter ws(snap_dir / (std::string("surface_") + tag + ".csv"), s_header);
      for (std::size_t k = 0; k < f.U.size(); ++k) {
        for (std::size_t a = 0; a < f.U[k].size(); ++a) {
          const int i = grid.sensor_nodes[k][a];
          std::vector<double> r{static_cast<double>(k + 1), static_cast<double>(i), i * grid.dy};
          r.insert(r.end(), f.U[k][a].begin(), f.U[k][a].end());
          ws.row(r);
        }
      }
    }
  }

  Json meta = resolved_parameters(cfg, model);
  meta["command"] = "simulate-pde";
  meta["A_star"] = cfg.run.A_star;
  meta["horizon"] = cfg.run.horizon;
  meta["sample_dt"] = cfg.run.sample_dt;
  meta["grid"] = run_metadata(solver, run);
  meta["snapshot_count"] = run.snapshots.size();
  write_json(dir / "pde_metadata.json", meta);
  if (run.positivity_violation) {
    std::cerr << "warning: the PDE state went negative (min bulk " << run.min_bulk
              << ", min surface " << run.min_surface << ")\n";
  }
}

void cmd_compare(const ExperimentConfig& cfg) {
  const auto dir = out_dir(cfg);
  const auto model = cfg.make_model();
  const auto grid = build_grid(cfg.chamber, cfg.run.P, cfg.run.Q, cfg.run.mode);
  const PdeSolver solver(cfg.chamber, grid, model.chemistry_ptr(), cfg.run.A_star);
  const auto run = run_pde(cfg, solver, cfg.run.horizon, false);
  const int N = cfg.chamber.sensor_count;

  std::vector<std::string> header{"t"};
  for (int k = 0; k < N; ++k) header.push_back("e_" + std::to_string(k + 1));
  std::vector<std::vector<double>> rows(run.times.size(), std::vector<double>(N + 1));
  std::vector<double> emax(N, 0.0), tmax(N, 0.0);
  std::vector<int> excluded(N, 0);
  for (std::size_t n = 0; n < run.times.size(); ++n) rows[n][0] = run.times[n];
  for (int k = 0; k < N; ++k) {
    const auto ode = model.sensor_response(k, cfg.run.A_star, run.times);
    for (std::size_t n = 0; n < run.times.size(); ++n) {
      const double d = run.dimer[k][n];
      double e = std::numeric_limits<double>::quiet_NaN();
      if (d == 0.0) {
        ++excluded[k];
      } else {
        e = std::abs(d - ode[n]) / d;
        if (e > emax[k]) {
          emax[k] = e;
          tmax[k] = run.times[n];
        }
      }
      rows[n][k + 1] = e;
    }
  }
  if (cfg.outputs.csv) {
    io::CsvWriter w(dir / "compare.csv", header);
    for (const auto& r : rows) w.row(r);
    std::vector<std::string> summary{"max"};
    for (double e : emax) summary.push_back(io::format_double(e));
    w.text_row(summary);
  }
  Json j = resolved_parameters(cfg, model);
  j["command"] = "compare";
  j["A_star"] = cfg.run.A_star;
  j["grid"] = run_metadata(solver, run);
  Json sensors = Json::array();
  for (int k = 0; k < N; ++k) {
    Json s;
    s["sensor"] = k + 1;
    s["max_error"] = emax[k];
    s["t_at_max"] = tmax[k];
    s["excluded_samples"] = excluded[k];
    sensors.push_back(s);
  }
  j["sensors"] = sensors;
  if (cfg.outputs.json) {
    Json table;
    table["columns"] = header;
    Json data = Json::array();
    for (const auto& r : rows) {
      Json row = Json::array();
      for (double v : r) row.push_back(number_or_null(v));
      data.push_back(std::move(row));
    }
    table["rows"] = std::move(data);
    write_json(dir / "compare.json", table);
  }
  write_json(dir / "compare_summary.json", j);
}

namespace {

Json design_json(const HCurve& c, double A_star) {
  Json j;
  j["alpha"] = c.alpha;
  if (c.interval) {
    j["A_m"] = *c.A_m();
    j["A_n"] = *c.A_n();
  } else {
    j["A_m"] = nullptr;
    j["A_n"] = nullptr;
  }
  if (c.interval && *c.A_m() <= A_star && c.alpha < 1.0) {
    j["n_star"] = n_star(*c.A_m(), A_star, c.alpha);
    j["n_star_note"] = *c.A_n() >= A_star ? "A* inside [A_m, A_n]" : "A* above A_n";
  } else {
    j["n_star"] = nullptr;
    j["n_star_note"] = c.interval ? "A* below A_m" : "no super-1/N interval on the grid";
  }
  return j;
}

}  // namespace

void cmd_estimate(const ExperimentConfig& cfg) {
  const auto dir = out_dir(cfg);
  const auto model = cfg.make_model();
  const auto& e = cfg.estimation;
  const int N = e.sensors;
  const Schedule schedule{e.samples, e.dt};
  const double sigma = cfg.noise_sigma();
  const double A_star = cfg.run.A_star;

  MeasurementSet meas;
  if (e.source == "pde") {
    const auto grid = build_grid(cfg.chamber, cfg.run.P, cfg.run.Q, cfg.run.mode);
    const PdeSolver solver(cfg.chamber, grid, model.chemistry_ptr(), A_star);
    const double need = model.arrivals()[static_cast<std::size_t>(N - 1)] + schedule.span();
    const double horizon = std::ceil(need / cfg.run.sample_dt) * cfg.run.sample_dt;
    const auto run = run_pde(cfg, solver, horizon, false);
    meas = synthesize_from_series(
        run.times, run.dimer,
        std::span<const double>(model.arrivals().data(), static_cast<std::size_t>(N)), schedule,
        sigma, e.master_seed);
  } else {
    meas = synthesize_measurements(model, A_star, N, schedule, sigma, e.master_seed);
  }

  EstimatorOptions eo;
  eo.lower = e.lower;
  eo.upper = e.upper;
  const auto est = nls_estimate(model, meas, eo);
  const auto va = variance_approx(model, A_star, sigma, N, schedule);
  const double gamma = asymptotic_gamma(model, A_star, N, schedule);
  const auto grid = log_grid(cfg.design.A_min, cfg.design.A_max, static_cast<std::size_t>(cfg.design.points));
  const auto curve = h_curve(model, grid, schedule);

  Json j;
  j["command"] = "estimate";
  j["A_star"] = A_star;
  j["sensors"] = N;
  j["samples"] = e.samples;
  j["dt"] = e.dt;
  j["sigma"] = sigma;
  j["snr_db"] = e.sigma ? Json(nullptr) : Json(e.snr_db.value_or(10.0));
  j["master_seed"] = e.master_seed;
  j["source"] = e.source;
  j["A1_hat"] = est.A1_hat;
  j["relative_error"] = A_star > 0.0 ? Json((est.A1_hat - A_star) / A_star) : Json(nullptr);
  j["objective"] = est.objective;
  j["at_boundary"] = est.at_boundary;
  j["bracket"] = {eo.lower, eo.upper};
  Json trace = Json::array();
  for (const auto& tp : est.trace) trace.push_back({{"A", tp.A}, {"objective", tp.objective}});
  j["iteration_trace"] = trace;
  j["gamma"] = gamma;
  j["sigma2_over_gamma"] = sigma * sigma / gamma;
  j["sigma2_approx"] = va.sigma2;
  j["std_approx_rel"] = A_star > 0.0 ? Json(std::sqrt(va.sigma2) / A_star) : Json(nullptr);
  j["d"] = va.d;
  j["design"] = design_json(curve, A_star);
  j["n_star"] = j["design"]["n_star"];
  if (e.trials > 0) {
    MonteCarloOptions mo;
    mo.trials = e.trials;
    mo.master_seed = e.master_seed;
    mo.estimator.lower = e.lower;
    mo.estimator.upper = e.upper;
    const auto mc = monte_carlo_variance(model, A_star, sigma, N, schedule, mo);
    Json m;
    m["trials"] = mc.trials;
    m["excluded"] = mc.excluded;
    m["mean"] = number_or_null(mc.mean);
    m["std"] = number_or_null(mc.std);
    m["std_rel"] = number_or_null(mc.std_rel);
    Json per = Json::array();
    for (double v : mc.estimates) per.push_back(number_or_null(v));
    m["estimates"] = per;
    j["monte_carlo"] = m;
  } else {
    j["monte_carlo"] = nullptr;
  }
  j["parameters"] = resolved_parameters(cfg, model);
  write_json(dir / "estimate_report.json", j);

  std::vector<std::string> header{"t_local"};
  for (int i = 0; i < N; ++i) header.push_back("m_" + std::to_string(i + 1));
  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < meas.local_times.size(); ++k) {
    std::vector<double> r{meas.local_times[k]};
    for (const auto& v : meas.values) r.push_back(v[k]);
    rows.push_back(std::move(r));
  }
  write_table(cfg, dir, "measurements", header, rows);
  if (est.at_boundary) {
    std::cerr << "warning: the estimate sits on the bracket edge; widen estimation.bracket\n";
  }
}

void cmd_design(const ExperimentConfig& cfg) {
  const auto dir = out_dir(cfg);
  const auto model = cfg.make_model();
  const Schedule schedule{cfg.estimation.samples, cfg.estimation.dt};
  const auto grid = log_grid(cfg.design.A_min, cfg.design.A_max, static_cast<std::size_t>(cfg.design.points));
  const auto curve = h_curve(model, grid, schedule);
  if (std::all_of(curve.H.begin(), curve.H.end(), [](double h) { return h == 0.0; })) {
    throw DegenerateDesignError("H(A) vanishes on the whole design grid");
  }
  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < curve.A.size(); ++k) {
    const bool inside = curve.interval && k >= curve.interval->first && k <= curve.interval->second;
    rows.push_back({curve.A[k], curve.H[k], curve.scaled[k], inside ? 1.0 : 0.0});
  }
  write_table(cfg, dir, "h_curve", {"A", "H", "alpha2_H_alphaA", "in_interval"}, rows);

  Json j = design_json(curve, cfg.run.A_star);
  j["command"] = "design";
  j["A_star"] = cfg.run.A_star;
  j["samples"] = schedule.samples;
  j["dt"] = schedule.dt;
  const double sigma = cfg.noise_sigma();
  Json byN = Json::array();
  for (int N = 1; N <= cfg.chamber.sensor_count; ++N) {
    const auto va = variance_approx(model, cfg.run.A_star, sigma, N, schedule);
    byN.push_back({{"N", N}, {"sigma2_approx", va.sigma2}, {"d", va.d}});
  }
  j["variance_by_N"] = byN;
  j["parameters"] = resolved_parameters(cfg, model);
  write_json(dir / "design_summary.json", j);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const DegenerateDesignError*>(&e)) return 4;
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DomainError*>(&e)) return 2;
  return 1;
}

}  // namespace biosense
