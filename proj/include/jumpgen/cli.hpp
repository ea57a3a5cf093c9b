#pragma once

// Batch driver behind the jumpgen executable: JSON experiment configuration
// with schema validation and line-referenced diagnostics, pipeline
// orchestration over the library modules, and report / plot-data emission.
//
// Exit-code convention: 0 = every verdict passed, 1 = at least one verdict
// failed, 2 = invalid configuration or usage.

#include <jumpgen/asymptotics.hpp>
#include <jumpgen/evolution.hpp>
#include <jumpgen/mc.hpp>
#include <jumpgen/schrodinger.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace jumpgen {

// Configuration problems carry a "<file>:<line>: message" text and map to
// exit status 2 in the driver.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

// --- minimal JSON Schema validator -------------------------------------------
//
// Supports the draft-07 subset used by the schemas shipped under schema/:
// type, enum, required, properties, additionalProperties, items, minimum,
// maximum, exclusiveMinimum, maxLength/minLength, minItems.  Violations are
// appended as "<json-pointer>: <message>" strings.

namespace detail_cli {

inline bool type_matches(const nlohmann::json& doc, const std::string& t) {
  if (t == "object") return doc.is_object();
  if (t == "array") return doc.is_array();
  if (t == "string") return doc.is_string();
  if (t == "integer") return doc.is_number_integer() || doc.is_number_unsigned();
  if (t == "number") return doc.is_number();
  if (t == "boolean") return doc.is_boolean();
  if (t == "null") return doc.is_null();
  return false;
}

inline void validate_node(const nlohmann::json& doc, const nlohmann::json& schema,
                          const std::string& where, std::vector<std::string>& out) {
  if (!schema.is_object()) return;
  std::string at = where.empty() ? "/" : where;

  if (schema.contains("type")) {
    const auto& t = schema["type"];
    bool ok = t.is_array()
                  ? [&] {
                      for (const auto& tt : t)
                        if (type_matches(doc, tt.get<std::string>())) return true;
                      return false;
                    }()
                  : type_matches(doc, t.get<std::string>());
    if (!ok) {
      out.push_back(at + ": expected type " + t.dump());
      return;  // further keyword checks would only cascade
    }
  }
  if (schema.contains("enum")) {
    bool ok = false;
    for (const auto& v : schema["enum"])
      if (doc == v) ok = true;
    if (!ok) out.push_back(at + ": value " + doc.dump() + " not in " + schema["enum"].dump());
  }
  if (doc.is_number()) {
    double x = doc.get<double>();
    if (schema.contains("minimum") && x < schema["minimum"].get<double>())
      out.push_back(at + ": value " + doc.dump() + " below minimum " + schema["minimum"].dump());
    if (schema.contains("maximum") && x > schema["maximum"].get<double>())
      out.push_back(at + ": value " + doc.dump() + " above maximum " + schema["maximum"].dump());
    if (schema.contains("exclusiveMinimum") && x <= schema["exclusiveMinimum"].get<double>())
      out.push_back(at + ": value " + doc.dump() + " must exceed " +
                    schema["exclusiveMinimum"].dump());
  }
  if (doc.is_string() && schema.contains("minLength") &&
      doc.get<std::string>().size() < schema["minLength"].get<std::size_t>())
    out.push_back(at + ": string shorter than minLength " + schema["minLength"].dump());
  if (doc.is_object()) {
    if (schema.contains("required"))
      for (const auto& k : schema["required"])
        if (!doc.contains(k.get<std::string>()))
          out.push_back(at + ": missing required key \"" + k.get<std::string>() + "\"");
    const nlohmann::json* props =
        schema.contains("properties") ? &schema["properties"] : nullptr;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
      std::string sub = where + "/" + it.key();
      if (props && props->contains(it.key())) {
        validate_node(it.value(), (*props)[it.key()], sub, out);
      } else if (schema.contains("additionalProperties")) {
        const auto& ap = schema["additionalProperties"];
        if (ap.is_boolean() && !ap.get<bool>())
          out.push_back(at + ": unexpected key \"" + it.key() + "\"");
        else if (ap.is_object())
          validate_node(it.value(), ap, sub, out);
      }
    }
  }
  if (doc.is_array()) {
    if (schema.contains("minItems") && doc.size() < schema["minItems"].get<std::size_t>())
      out.push_back(at + ": fewer than minItems " + schema["minItems"].dump());
    if (schema.contains("items"))
      for (std::size_t i = 0; i < doc.size(); ++i)
        validate_node(doc[i], schema["items"], where + "/" + std::to_string(i), out);
  }
}

}  // namespace detail_cli

// Validates a document against a (subset-)draft-07 schema; returns the list of
// violations, empty when the document conforms.
inline std::vector<std::string> validate_against_schema(const nlohmann::json& doc,
                                                        const nlohmann::json& schema) {
  std::vector<std::string> out;
  detail_cli::validate_node(doc, schema, "", out);
  return out;
}

// --- line references into the raw config text --------------------------------

namespace detail_cli {

inline int line_of_offset(const std::string& text, std::size_t byte) {
  int line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

// 1-based line of the first occurrence of the quoted key token, 1 if absent.
inline int line_of_key(const std::string& text, const std::string& key) {
  std::size_t pos = text.find("\"" + key + "\"");
  if (pos == std::string::npos) return 1;
  return line_of_offset(text, pos);
}

// Deepest named component of a JSON pointer that appears in the text.
inline int line_of_pointer(const std::string& text, const std::string& ptr) {
  std::vector<std::string> parts;
  std::stringstream ss(ptr);
  std::string item;
  while (std::getline(ss, item, '/'))
    if (!item.empty() && item.find_first_not_of("0123456789") != std::string::npos)
      parts.push_back(item);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    std::size_t pos = text.find("\"" + *it + "\"");
    if (pos != std::string::npos) return line_of_offset(text, pos);
  }
  return 1;
}

}  // namespace detail_cli

// --- experiment configuration -------------------------------------------------

enum class ExperimentCommand { resolvent, groundstate, evolve, mc_oracle, verify };

inline const char* command_name(ExperimentCommand c) {
  switch (c) {
    case ExperimentCommand::resolvent: return "resolvent";
    case ExperimentCommand::groundstate: return "groundstate";
    case ExperimentCommand::evolve: return "evolve";
    case ExperimentCommand::mc_oracle: return "mc-oracle";
    case ExperimentCommand::verify: return "verify";
  }
  return "?";
}

inline std::optional<ExperimentCommand> parse_command(const std::string& s) {
  for (ExperimentCommand c :
       {ExperimentCommand::resolvent, ExperimentCommand::groundstate, ExperimentCommand::evolve,
        ExperimentCommand::mc_oracle, ExperimentCommand::verify})
    if (s == command_name(c)) return c;
  return std::nullopt;
}

// Reference describing the evolve source field f: a centered box, a power-law
// profile amplitude*(1+r)^-(dim+alpha1), or a CSV field on the main grid.
template <typename Scalar = double>
struct SourceRef {
  enum class Shape { box, power, csv } shape = Shape::box;
  Scalar height = 1, radius = 1;     // box
  Scalar amplitude = 1, alpha1 = 2;  // power
  std::optional<Field<Scalar>> table;  // csv, loaded at parse time
};

template <typename Scalar>
Field<Scalar> realize_source(const SourceRef<Scalar>& src, const Grid<Scalar>& g) {
  if (src.shape == SourceRef<Scalar>::Shape::csv) {
    require(src.table && src.table->grid == g, "source: CSV field lives on a different grid");
    return *src.table;
  }
  Field<Scalar> f = make_field(g);
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    Scalar r = node_radius(g, j);
    f.values[j] = src.shape == SourceRef<Scalar>::Shape::box
                      ? (r <= src.radius ? src.height : Scalar(0))
                      : src.amplitude * std::pow(Scalar(1) + r, -(Scalar(g.dim) + src.alpha1));
  }
  return f;
}

// Documented defaults for the named numeric knobs of the driver.  fit_lo and
// fit_hi are deliberately absent: when not given, fit windows are chosen
// automatically from the grid.
template <typename Scalar = double>
std::map<std::string, Scalar> default_tolerances() {
  return {{"mass_tol", Scalar(1e-8)},         {"eig_tol", Scalar(1e-8)},
          {"residual_tol", Scalar(1e-6)},     {"stationarity_tol", Scalar(1e-9)},
          {"step_tol", Scalar(1e-6)},         {"coverage", Scalar(0.99)},
          {"window_radius", Scalar(3)},       {"mean_k_rel_tol", Scalar(0.01)},
          {"t_end", Scalar(5)},               {"dt", Scalar(0.01)}};
}

template <typename Scalar = double>
struct ExperimentConfig {
  ExperimentCommand command = ExperimentCommand::resolvent;
  Grid<Scalar> grid;
  KernelSpec<Scalar> spec;
  std::vector<Scalar> lambdas;
  std::optional<Potential<Scalar>> potential;
  std::optional<SourceRef<Scalar>> source;
  std::optional<Scalar> m;
  std::optional<WalkConfig<Scalar>> mc;
  std::string output_dir;
  std::map<std::string, Scalar> tolerances;  // merged over default_tolerances()
  std::string kernel_table_path;             // tabulated kernels: original CSV reference
};

namespace detail_cli {

template <typename Scalar>
Scalar tol(const ExperimentConfig<Scalar>& cfg, const std::string& name) {
  auto it = cfg.tolerances.find(name);
  require(it != cfg.tolerances.end(), "internal: unknown tolerance " + name);
  return it->second;
}

template <typename Scalar>
std::pair<Scalar, Scalar> fit_window_of(const ExperimentConfig<Scalar>& cfg) {
  auto lo = cfg.tolerances.find("fit_lo"), hi = cfg.tolerances.find("fit_hi");
  if (lo == cfg.tolerances.end()) return {Scalar(0), Scalar(0)};  // automatic
  return {lo->second, hi->second};
}

}  // namespace detail_cli

// Parses and validates a config file.  schema_dir may be empty (schema
// cross-validation is then skipped; the built-in checks below are complete on
// their own).  Throws ConfigError with "<file>:<line>:" prefixes.
template <typename Scalar = double>
ExperimentConfig<Scalar> parse_experiment_config(const std::string& path,
                                                 const std::string& schema_dir = "") {
  namespace fs = std::filesystem;
  std::ifstream in(path);
  if (!in.good()) throw ConfigError(path + ": cannot open config file");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  auto fail = [&](const std::string& key, const std::string& msg) -> ConfigError {
    return ConfigError(path + ":" + std::to_string(detail_cli::line_of_key(text, key)) + ": " +
                       msg);
  };

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ":" + std::to_string(detail_cli::line_of_offset(text, e.byte)) +
                      ": JSON parse error: " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path + ":1: config must be a JSON object");

  if (!schema_dir.empty()) {
    std::ifstream sin((fs::path(schema_dir) / "experiment.json").string());
    if (sin.good()) {
      nlohmann::json schema = nlohmann::json::parse(sin);
      std::vector<std::string> bad = validate_against_schema(j, schema);
      if (!bad.empty()) {
        std::string ptr = bad[0].substr(0, bad[0].find(':'));
        throw ConfigError(path + ":" +
                          std::to_string(detail_cli::line_of_pointer(text, ptr)) +
                          ": schema violation at " + bad[0]);
      }
    }
  }

  ExperimentConfig<Scalar> cfg;
  std::string config_dir = fs::path(path).has_parent_path()
                               ? fs::path(path).parent_path().string()
                               : std::string(".");

  // command / grid / kernel / output_dir (presence is also schema-checked)
  for (const char* k : {"command", "grid", "kernel", "output_dir"})
    if (!j.contains(k)) throw fail("command", std::string("missing required key \"") + k + "\"");
  auto cmd = parse_command(j["command"].get<std::string>());
  if (!cmd)
    throw fail("command", "unknown command \"" + j["command"].get<std::string>() +
                              "\" (expected resolvent, groundstate, evolve, mc-oracle, verify)");
  cfg.command = *cmd;

  try {
    const auto& gj = j["grid"];
    for (const char* k : {"dim", "extent", "points_per_axis"})
      if (!gj.contains(k)) throw Error(std::string("grid: missing \"") + k + "\"");
    cfg.grid = make_grid<Scalar>(gj["dim"].get<int>(), gj["extent"].get<Scalar>(),
                                 gj["points_per_axis"].get<Eigen::Index>());
  } catch (const Error& e) {
    throw fail("grid", e.what());
  }

  try {
    cfg.spec = kernel_from_json<Scalar>(j["kernel"], config_dir);
    if (cfg.spec.family == Family::tabulated)
      cfg.kernel_table_path = j["kernel"].value("values", "");
  } catch (const Error& e) {
    throw fail("kernel", e.what());
  } catch (const nlohmann::json::exception& e) {
    throw fail("kernel", std::string("kernel: ") + e.what());
  }
  if (cfg.spec.dim != cfg.grid.dim)
    throw fail("kernel", "kernel dimension does not match the grid dimension");

  if (j.contains("lambdas")) {
    for (const auto& v : j["lambdas"]) {
      if (!v.is_number() || v.get<Scalar>() <= 0)
        throw fail("lambdas", "lambdas must be strictly positive numbers");
      cfg.lambdas.push_back(v.get<Scalar>());
    }
  }

  if (j.contains("potential")) {
    try {
      cfg.potential = potential_from_json<Scalar>(j["potential"], config_dir);
    } catch (const Error& e) {
      throw fail("potential", e.what());
    } catch (const nlohmann::json::exception& e) {
      throw fail("potential", std::string("potential: ") + e.what());
    }
    if (cfg.potential->profile == PotentialProfile::tabulated &&
        !(cfg.potential->table->grid == cfg.grid))
      throw fail("potential", "tabulated potential lives on a different grid");
  }

  if (j.contains("source")) {
    const auto& sj = j["source"];
    SourceRef<Scalar> src;
    std::string shape = sj.value("shape", "");
    auto need = [&](const char* k) {
      if (!sj.contains(k))
        throw fail("source", "source shape \"" + shape + "\" needs \"" + k + "\"");
    };
    if (shape == "box") {
      src.shape = SourceRef<Scalar>::Shape::box;
      need("height"), need("radius");
      src.height = sj["height"].get<Scalar>();
      src.radius = sj["radius"].get<Scalar>();
    } else if (shape == "power") {
      src.shape = SourceRef<Scalar>::Shape::power;
      need("amplitude"), need("alpha1");
      src.amplitude = sj["amplitude"].get<Scalar>();
      src.alpha1 = sj["alpha1"].get<Scalar>();
    } else if (shape == "csv") {
      src.shape = SourceRef<Scalar>::Shape::csv;
      need("values");
      std::string p = sj["values"].get<std::string>();
      if (!p.empty() && p[0] != '/') p = config_dir + "/" + p;
      try {
        src.table = read_field_csv(cfg.grid, p);
      } catch (const Error& e) {
        throw fail("source", e.what());
      }
    } else {
      throw fail("source", "unknown source shape \"" + shape + "\"");
    }
    if (src.height <= 0 || src.radius <= 0 || src.amplitude <= 0 || src.alpha1 <= 0)
      throw fail("source", "source parameters must be strictly positive");
    cfg.source = std::move(src);
  }

  if (j.contains("m")) {
    Scalar m = j["m"].get<Scalar>();
    if (!(m > 0)) throw fail("m", "m must be strictly positive");
    cfg.m = m;
  }

  if (j.contains("mc")) {
    const auto& mj = j["mc"];
    if (!mj.contains("n_walks")) throw fail("mc", "mc needs \"n_walks\"");
    WalkConfig<Scalar> wc;
    wc.spec = cfg.spec;
    wc.binning = cfg.grid;
    wc.seed = mj.value("seed", std::uint64_t(0));
    wc.n_walks = mj["n_walks"].get<Eigen::Index>();
    if (wc.n_walks < 1) throw fail("mc", "n_walks must be at least 1");
    cfg.mc = std::move(wc);
  }

  cfg.output_dir = j["output_dir"].get<std::string>();
  if (cfg.output_dir.empty()) throw fail("output_dir", "output_dir must be non-empty");

  cfg.tolerances = default_tolerances<Scalar>();
  if (j.contains("tolerances")) {
    for (auto it = j["tolerances"].begin(); it != j["tolerances"].end(); ++it) {
      bool known = cfg.tolerances.count(it.key()) || it.key() == "fit_lo" || it.key() == "fit_hi";
      if (!known)
        throw fail(it.key(), "unknown tolerance \"" + it.key() +
                                 "\" (see schema/experiment.json for the documented names)");
      Scalar v = it.value().template get<Scalar>();
      if (!(v > 0)) throw fail(it.key(), "tolerance \"" + it.key() + "\" must be positive");
      cfg.tolerances[it.key()] = v;
    }
    bool has_lo = cfg.tolerances.count("fit_lo"), has_hi = cfg.tolerances.count("fit_hi");
    if (has_lo != has_hi)
      throw fail("tolerances", "fit_lo and fit_hi must be given together");
    if (has_lo && !(cfg.tolerances["fit_lo"] < cfg.tolerances["fit_hi"]))
      throw fail("fit_lo", "fit_lo must be smaller than fit_hi");
  }

  // command-specific required sub-objects
  auto demand = [&](bool ok, const std::string& what) {
    if (!ok)
      throw fail("command", std::string("command \"") + command_name(cfg.command) + "\" " + what);
  };
  switch (cfg.command) {
    case ExperimentCommand::resolvent:
    case ExperimentCommand::verify:
      demand(!cfg.lambdas.empty(), "requires a non-empty \"lambdas\" list");
      break;
    case ExperimentCommand::groundstate:
      demand(cfg.potential.has_value(), "requires a \"potential\" object");
      break;
    case ExperimentCommand::evolve:
      demand(cfg.m.has_value(), "requires a positive \"m\"");
      demand(cfg.source.has_value(), "requires a \"source\" object");
      break;
    case ExperimentCommand::mc_oracle:
      demand(cfg.mc.has_value(), "requires an \"mc\" object");
      demand(!cfg.lambdas.empty(), "requires a non-empty \"lambdas\" list");
      break;
  }
  if (cfg.command == ExperimentCommand::verify) {
    TailKind kind = tail_class(cfg.spec).kind;
    if (kind != TailKind::polynomial && kind != TailKind::exponential)
      throw fail("kernel",
                 "verify needs a polynomial- or exponential-class kernel "
                 "(super-exponential tails are outside both theorem suites)");
  }
  return cfg;
}

// --- plot-data emission -------------------------------------------------------

namespace detail_cli {

template <typename Scalar>
void write_xy_csv(const std::string& path, const std::string& header,
                  const std::vector<std::pair<Scalar, Scalar>>& rows) {
  std::ofstream out(path);
  require(out.good(), "plot_data: cannot open " + path);
  out << header << "\n";
  char buf[80];
  for (const auto& [x, y] : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", double(x), double(y));
    out << buf;
  }
  require(out.good(), "plot_data: write failed for " + path);
}

// Profile along the first axis: every node in d=1, the x2 = 0 slice in d=2.
template <typename Scalar>
std::vector<std::pair<Scalar, Scalar>> field_profile(const Field<Scalar>& f) {
  std::vector<std::pair<Scalar, Scalar>> rows;
  const Grid<Scalar>& g = f.grid;
  if (g.dim == 1) {
    rows.reserve(std::size_t(g.size()));
    for (Eigen::Index j = 0; j < g.size(); ++j)
      rows.emplace_back(node_coordinate(g, j, 0), f.values[j]);
  } else {
    Eigen::Index n = g.points_per_axis, mid = n / 2;
    rows.reserve(std::size_t(n));
    for (Eigen::Index i = 0; i < n; ++i)
      rows.emplace_back(node_coordinate(g, i * n + mid, 0), f.values[i * n + mid]);
  }
  return rows;
}

// Emits the three standard views of a nonnegative profile into plot_data/:
//   <stem>.csv          x, value
//   <stem>_semilog.csv  r, log(value)            (x >= 0, value > 0)
//   <stem>_loglog.csv   log(1+r), log(value)     (x >= 0, value > 0)
template <typename Scalar>
void write_profile_views(const Field<Scalar>& f, const std::string& plot_dir,
                         const std::string& stem) {
  namespace fs = std::filesystem;
  auto rows = field_profile(f);
  write_xy_csv((fs::path(plot_dir) / (stem + ".csv")).string(), "x,value", rows);
  std::vector<std::pair<Scalar, Scalar>> semilog, loglog;
  for (const auto& [x, v] : rows)
    if (x >= 0 && v > 0) {
      semilog.emplace_back(x, std::log(v));
      loglog.emplace_back(std::log1p(x), std::log(v));
    }
  write_xy_csv((fs::path(plot_dir) / (stem + "_semilog.csv")).string(), "r,log_value", semilog);
  write_xy_csv((fs::path(plot_dir) / (stem + "_loglog.csv")).string(), "log1p_r,log_value",
               loglog);
}

template <typename Scalar>
nlohmann::ordered_json grid_to_json(const Grid<Scalar>& g) {
  nlohmann::ordered_json j;
  j["dim"] = g.dim;
  j["extent"] = g.extent;
  j["points_per_axis"] = g.points_per_axis;
  return j;
}

}  // namespace detail_cli

// --- pipelines ----------------------------------------------------------------

namespace detail_cli {

template <typename Scalar>
void run_resolvent(const ExperimentConfig<Scalar>& cfg, const std::string& out_dir,
                   const std::string& plot_dir, std::vector<Check<Scalar>>& checks,
                   std::vector<std::string>& notes, nlohmann::ordered_json& details) {
  namespace fs = std::filesystem;
  (void)notes;
  Field<Scalar> a = sample_kernel(cfg.spec, cfg.grid).field;
  for (Scalar lam : cfg.lambdas) {
    ResolventResult<Scalar> res = resolvent_kernel_spectral(a, lam);
    std::string tag = detail::lambda_tag(lam);
    write_resolvent(res, (fs::path(out_dir) / ("g_lambda_" + tag + ".csv")).string());
    write_profile_views(res.g, plot_dir, "g_" + tag);
    Scalar mass_err = std::abs(lam * integrate(res.g) - Scalar(1));
    Scalar bound = tol(cfg, "mass_tol");
    checks.push_back({"mass_identity_lambda_" + tag, mass_err, bound, mass_err <= bound});
  }
  details["files"] = "g_lambda_<lambda>.csv with JSON sidecars; plot_data/g_<lambda>*.csv";
}

template <typename Scalar>
void run_groundstate(const ExperimentConfig<Scalar>& cfg, const std::string& out_dir,
                     const std::string& plot_dir, std::vector<Check<Scalar>>& checks,
                     std::vector<std::string>& notes, nlohmann::ordered_json& details) {
  namespace fs = std::filesystem;
  Field<Scalar> a = sample_kernel(cfg.spec, cfg.grid).field;
  GroundState<Scalar> gs = principal_eigenpair(a, *cfg.potential, tol(cfg, "eig_tol"));
  write_ground_state(gs, (fs::path(out_dir) / "psi.csv").string());
  checks.push_back({"discrete_eigenvalue", gs.lambda, Scalar(0),
                    !gs.edge_detected && gs.lambda > 0});
  Scalar rbound = tol(cfg, "residual_tol");
  checks.push_back({"eigen_residual", gs.residual, rbound, gs.residual <= rbound});
  details["eigenvalue"] = gs.lambda;
  details["iterations"] = gs.iterations;
  details["edge_detected"] = gs.edge_detected;
  if (!gs.edge_detected) {
    TailReport<Scalar> rep = groundstate_tail_report(gs, cfg.spec, fit_window_of(cfg));
    for (const auto& c : rep.verdicts) checks.push_back(c);
    details["tail_fit"] = tail_report_to_json(rep);
    write_profile_views(gs.psi, plot_dir, "psi");
  } else {
    notes.push_back("essential-spectrum edge detected: no tail fit attempted");
  }
}

template <typename Scalar>
void run_evolve(const ExperimentConfig<Scalar>& cfg, const std::string& out_dir,
                const std::string& plot_dir, std::vector<Check<Scalar>>& checks,
                std::vector<std::string>& notes, nlohmann::ordered_json& details) {
  namespace fs = std::filesystem;
  (void)notes;
  Field<Scalar> a = sample_kernel(cfg.spec, cfg.grid).field;
  Field<Scalar> f = realize_source(*cfg.source, cfg.grid);
  const Scalar m = *cfg.m, t_end = tol(cfg, "t_end"), dt = tol(cfg, "dt");

  Field<Scalar> uhat = stationary_solution(a, m, f);
  EvolutionTrace<Scalar> trace = evolve_stepped(a, m, f, t_end, dt);
  Field<Scalar> exact = evolve_exact(a, m, f, t_end);

  write_field_csv(f, (fs::path(out_dir) / "source.csv").string());
  write_field_csv(uhat, (fs::path(out_dir) / "uhat.csv").string());
  std::string trace_dir = (fs::path(out_dir) / "trace").string();
  std::filesystem::create_directories(trace_dir);
  write_trace(trace, trace_dir);

  ComparisonReport<Scalar> comp = comparison_report(trace, uhat);
  for (const auto& c : comp.verdicts) checks.push_back(c);

  Scalar term_err = (trace.snapshots.back().values - exact.values).abs().maxCoeff();
  Scalar sbound = tol(cfg, "step_tol");
  checks.push_back({"terminal_vs_exact", term_err, sbound, term_err <= sbound});

  Field<Scalar> conv = convolve(a, uhat);
  Scalar stat_res =
      ((Scalar(1) + m) * uhat.values - conv.values - f.values).abs().maxCoeff();
  Scalar tbound = tol(cfg, "stationarity_tol");
  checks.push_back({"stationarity_residual", stat_res, tbound, stat_res <= tbound});

  write_profile_views(uhat, plot_dir, "uhat");
  std::vector<std::pair<Scalar, Scalar>> approach;
  for (std::size_t k = 0; k < trace.times.size(); ++k) {
    Scalar dist = (uhat.values - trace.snapshots[k].values).abs().maxCoeff();
    if (dist > 0) approach.emplace_back(trace.times[k], std::log(dist));
  }
  write_xy_csv((fs::path(plot_dir) / "approach.csv").string(), "t,log_distance", approach);

  details["m"] = m;
  details["t_end"] = t_end;
  details["dt"] = dt;
  details["snapshots"] = trace.times.size();
}

template <typename Scalar>
void run_mc_oracle(const ExperimentConfig<Scalar>& cfg, const std::string& out_dir,
                   const std::string& plot_dir, std::vector<Check<Scalar>>& checks,
                   std::vector<std::string>& notes, nlohmann::ordered_json& details) {
  namespace fs = std::filesystem;
  Field<Scalar> a = sample_kernel(cfg.spec, cfg.grid).field;
  const Scalar rad = tol(cfg, "window_radius");
  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  for (Scalar lam : cfg.lambdas) {
    McEstimate<Scalar> est = estimate_resolvent_mc(cfg.spec, lam, *cfg.mc);
    ResolventResult<Scalar> res = resolvent_kernel_spectral(a, lam);
    std::string tag = detail::lambda_tag(lam);
    write_mc_estimate(est, (fs::path(out_dir) / ("mc_lambda_" + tag + ".csv")).string());

    Eigen::Index cells = 0, within = 0;
    std::vector<std::pair<Scalar, Scalar>> zrows;
    for (Eigen::Index jdx = 0; jdx < cfg.grid.size(); ++jdx) {
      if (node_radius(cfg.grid, jdx) > rad) continue;
      ++cells;
      Scalar se = std::max(est.std_error.values[jdx], Scalar(1e-300));
      Scalar z = (est.estimate.values[jdx] - lam * res.g.values[jdx]) / se;
      if (std::abs(z) <= 3) ++within;
      if (cfg.grid.dim == 1) zrows.emplace_back(node_coordinate(cfg.grid, jdx, 0), z);
    }
    require(cells > 0, "mc-oracle: no cells within the comparison window");
    Scalar frac = Scalar(within) / Scalar(cells);
    Scalar cbound = tol(cfg, "coverage");
    checks.push_back({"coverage_lambda_" + tag, frac, cbound, frac >= cbound});

    Scalar mean_k_true = (Scalar(1) + lam) / lam;
    Scalar kdev = std::abs(est.mean_k / mean_k_true - Scalar(1));
    Scalar kbound = tol(cfg, "mean_k_rel_tol");
    checks.push_back({"mean_k_lambda_" + tag, kdev, kbound, kdev <= kbound});

    for (const auto& w : est.warnings) notes.push_back("lambda " + tag + ": " + w);
    write_profile_views(est.estimate, plot_dir, "mc_" + tag);
    if (!zrows.empty())
      write_xy_csv((fs::path(plot_dir) / ("mc_z_" + tag + ".csv")).string(), "x,z_score",
                   zrows);

    nlohmann::ordered_json r;
    r["lambda"] = lam;
    r["seed"] = est.seed;
    r["n_walks"] = est.n_walks;
    r["mean_k"] = est.mean_k;
    r["overflow_fraction"] = est.overflow_fraction;
    runs.push_back(std::move(r));
  }
  details["runs"] = std::move(runs);
}

template <typename Scalar>
void run_verify(const ExperimentConfig<Scalar>& cfg, const std::string& out_dir,
                const std::string& plot_dir, std::vector<Check<Scalar>>& checks,
                std::vector<std::string>& notes, nlohmann::ordered_json& details) {
  (void)out_dir;
  namespace fs = std::filesystem;
  TailClass<Scalar> tc = tail_class(cfg.spec);
  std::vector<Scalar> sweep = cfg.lambdas;
  TheoremReport<Scalar> rep;
  if (tc.kind == TailKind::polynomial) {
    std::sort(sweep.begin(), sweep.end(), std::greater<Scalar>());
    rep = verify_polynomial_theorem(cfg.spec, cfg.grid, sweep);
  } else {
    std::sort(sweep.begin(), sweep.end());
    rep = verify_exponential_theorem(cfg.spec, cfg.grid, sweep, fit_window_of(cfg));
  }
  checks.insert(checks.end(), rep.checks.begin(), rep.checks.end());
  for (const auto& n : rep.notes) notes.push_back(n);
  details["window"] = {rep.window.first, rep.window.second};
  details["lambda_order"] = sweep;

  Field<Scalar> a = sample_kernel(cfg.spec, cfg.grid).field;
  const Scalar dpa = Scalar(cfg.grid.dim) + tc.alpha;
  for (Scalar lam : sweep) {
    ResolventResult<Scalar> res = resolvent_kernel_spectral(a, lam);
    std::string tag = detail::lambda_tag(lam);
    if (tc.kind == TailKind::polynomial) {
      std::vector<std::pair<Scalar, Scalar>> comp, loglog;
      for (const auto& [x, v] : field_profile(res.g))
        if (x >= 0 && v > 0) {
          comp.emplace_back(x, lam * v * std::pow(Scalar(1) + x, dpa));
          loglog.emplace_back(std::log1p(x), std::log(v));
        }
      write_xy_csv((fs::path(plot_dir) / ("compensated_" + tag + ".csv")).string(),
                   "r,compensated_value", comp);
      write_xy_csv((fs::path(plot_dir) / ("loglog_" + tag + ".csv")).string(),
                   "log1p_r,log_value", loglog);
    } else {
      std::vector<std::pair<Scalar, Scalar>> semilog;
      for (const auto& [x, v] : field_profile(res.g))
        if (x >= 0 && v > 0) semilog.emplace_back(x, std::log(v));
      write_xy_csv((fs::path(plot_dir) / ("semilog_" + tag + ".csv")).string(), "r,log_value",
                   semilog);
    }
  }
}

}  // namespace detail_cli

// Executes the configured pipeline: writes field CSVs, plot_data/ two-column
// CSVs, and report.json into cfg.output_dir.  Returns 0 when every check
// passed, 1 otherwise.  All outputs are deterministic for a fixed config and
// seed; reruns overwrite byte-identically.
template <typename Scalar = double>
int run(const ExperimentConfig<Scalar>& cfg, std::ostream& out = std::cout,
        const std::string& schema_dir = "") {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  std::string plot_dir = (fs::path(cfg.output_dir) / "plot_data").string();
  fs::create_directories(plot_dir, ec);
  require(fs::is_directory(cfg.output_dir) && fs::is_directory(plot_dir),
          "output_dir is not writable: " + cfg.output_dir);

  std::vector<Check<Scalar>> checks;
  std::vector<std::string> notes;
  nlohmann::ordered_json details = nlohmann::ordered_json::object();
  switch (cfg.command) {
    case ExperimentCommand::resolvent:
      detail_cli::run_resolvent(cfg, cfg.output_dir, plot_dir, checks, notes, details);
      break;
    case ExperimentCommand::groundstate:
      detail_cli::run_groundstate(cfg, cfg.output_dir, plot_dir, checks, notes, details);
      break;
    case ExperimentCommand::evolve:
      detail_cli::run_evolve(cfg, cfg.output_dir, plot_dir, checks, notes, details);
      break;
    case ExperimentCommand::mc_oracle:
      detail_cli::run_mc_oracle(cfg, cfg.output_dir, plot_dir, checks, notes, details);
      break;
    case ExperimentCommand::verify:
      detail_cli::run_verify(cfg, cfg.output_dir, plot_dir, checks, notes, details);
      break;
  }

  nlohmann::ordered_json report;
  report["command"] = command_name(cfg.command);
  report["kernel"] = kernel_to_json(cfg.spec, cfg.kernel_table_path);
  report["grid"] = detail_cli::grid_to_json(cfg.grid);
  if (!cfg.lambdas.empty()) report["lambda_grid"] = cfg.lambdas;
  report["checks"] = checks_to_json(checks);
  if (!notes.empty()) report["notes"] = notes;
  details["tolerances"] = cfg.tolerances;
  report["details"] = std::move(details);

  if (!schema_dir.empty()) {
    std::ifstream sin((fs::path(schema_dir) / "report.json").string());
    if (sin.good()) {
      nlohmann::json schema = nlohmann::json::parse(sin);
      std::vector<std::string> bad =
          validate_against_schema(nlohmann::json::parse(report.dump()), schema);
      require(bad.empty(), "internal: report does not validate against schema/report.json: " +
                               (bad.empty() ? std::string() : bad[0]));
    }
  }

  std::string report_path = (fs::path(cfg.output_dir) / "report.json").string();
  {
    std::ofstream rout(report_path);
    require(rout.good(), "cannot open " + report_path);
    rout << report.dump(2) << "\n";
    require(rout.good(), "write failed for " + report_path);
  }

  std::vector<std::string> failed;
  for (const auto& c : checks)
    if (!c.pass) failed.push_back(c.name);
  char buf[160];
  out << command_name(cfg.command) << ": " << (checks.size() - failed.size()) << "/"
      << checks.size() << " checks passed\n";
  for (const auto& c : checks) {
    std::snprintf(buf, sizeof buf, "  [%s] %s: measured %.6g (bound %.6g)\n",
                  c.pass ? "PASS" : "FAIL", c.name.c_str(), double(c.measured),
                  double(c.bound));
    out << buf;
  }
  for (const auto& n : notes) out << "  note: " << n << "\n";
  out << "wrote " << report_path << "\n";
  if (!failed.empty()) {
    std::string names;
    for (const auto& n : failed) names += (names.empty() ? "" : ", ") + n;
    std::cerr << "jumpgen: failing checks: " << names << "\n";
    return 1;
  }
  return 0;
}

// --- argument parsing and driver entry ----------------------------------------

namespace detail_cli {

inline std::string find_schema_dir(const char* argv0) {
  namespace fs = std::filesystem;
  auto has_schema = [](const fs::path& p) {
    std::error_code ec;
    return fs::is_regular_file(p / "experiment.json", ec);
  };
  if (const char* env = std::getenv("JUMPGEN_SCHEMA_DIR"))
    if (*env && has_schema(env)) return env;
  fs::path bin = argv0 ? fs::path(argv0) : fs::path();
  for (const fs::path& cand :
       {bin.parent_path() / "schema", bin.parent_path() / ".." / "schema",
        fs::path("schema")})
    if (has_schema(cand)) return cand.string();
  return "";
}

inline const char* usage_text() {
  return "usage: jumpgen <command> --config <file> [--lambda <x>] [--seed <n>] [--out <dir>]\n"
         "\n"
         "commands:\n"
         "  resolvent    spectral resolvent kernels for a lambda sweep + mass checks\n"
         "  groundstate  principal eigenpair of the potential-perturbed generator\n"
         "  evolve       sourced evolution vs. its stationary profile\n"
         "  mc-oracle    random-walk histogram estimate vs. the spectral kernel\n"
         "  verify       tail-theorem suite for the kernel's tail class\n"
         "\n"
         "flags override the config: --lambda replaces the sweep with one value,\n"
         "--seed replaces mc.seed, --out replaces output_dir.\n"
         "The config schema ships as schema/experiment.json; reports validate\n"
         "against schema/report.json.  JUMPGEN_THREADS caps parallelism (0 = auto).\n"
         "exit status: 0 all checks passed, 1 check failure, 2 invalid config/usage.\n";
}

}  // namespace detail_cli

// main() body of the jumpgen tool; separated for testability.
inline int run_main(int argc, char** argv) {
  using detail_cli::usage_text;
  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    if (args.empty() || args[0] == "--help" || args[0] == "-h") {
      std::cout << usage_text();
      return args.empty() ? 2 : 0;
    }
    auto cmd = parse_command(args[0]);
    if (!cmd) {
      std::cerr << "jumpgen: unknown command \"" << args[0] << "\"\n" << usage_text();
      return 2;
    }
    std::string config_path, out_dir;
    std::optional<double> lambda_flag;
    std::optional<std::uint64_t> seed_flag;
    for (std::size_t i = 1; i < args.size(); i += 2) {
      if (i + 1 >= args.size())
        throw ConfigError("flag " + args[i] + " needs a value");
      const std::string &flag = args[i], &val = args[i + 1];
      if (flag == "--config") {
        config_path = val;
      } else if (flag == "--lambda") {
        char* end = nullptr;
        double x = std::strtod(val.c_str(), &end);
        if (end == val.c_str() || *end != '\0' || !(x > 0))
          throw ConfigError("--lambda needs a positive number, got \"" + val + "\"");
        lambda_flag = x;
      } else if (flag == "--seed") {
        char* end = nullptr;
        unsigned long long s = std::strtoull(val.c_str(), &end, 10);
        if (end == val.c_str() || *end != '\0')
          throw ConfigError("--seed needs a nonnegative integer, got \"" + val + "\"");
        seed_flag = s;
      } else if (flag == "--out") {
        if (val.empty()) throw ConfigError("--out needs a non-empty directory");
        out_dir = val;
      } else {
        throw ConfigError("unknown flag \"" + flag + "\"");
      }
    }
    if (config_path.empty()) throw ConfigError("--config <file> is required");

    std::string schema_dir = detail_cli::find_schema_dir(argv[0]);
    ExperimentConfig<double> cfg = parse_experiment_config<double>(config_path, schema_dir);
    if (cfg.command != *cmd)
      throw ConfigError(config_path + ": config command \"" +
                        command_name(cfg.command) + "\" does not match invoked command \"" +
                        args[0] + "\"");
    if (lambda_flag) cfg.lambdas = {*lambda_flag};
    if (seed_flag) {
      if (!cfg.mc) throw ConfigError("--seed given but the config has no \"mc\" object");
      cfg.mc->seed = *seed_flag;
    }
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    return run(cfg, std::cout, schema_dir);
  } catch (const ConfigError& e) {
    std::cerr << "jumpgen: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "jumpgen: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "jumpgen: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace jumpgen
