#include "gmoa/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "gmoa/bilevel.hpp"
#include "gmoa/datagen.hpp"
#include "gmoa/labeling.hpp"
#include "gmoa/separation.hpp"

namespace gmoa::cli {

namespace {

using nlohmann::json;

constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------- schema --

enum class JType { number, integer, unsign, boolean, string, array, object,
                   number_or_array };

struct KeySpec {
  const char* key;
  JType type;
};

bool type_matches(const json& v, JType t) {
  switch (t) {
    case JType::number: return v.is_number();
    case JType::integer: return v.is_number_integer();
    case JType::unsign:
      return v.is_number_unsigned() ||
             (v.is_number_integer() && v.get<long long>() >= 0);
    case JType::boolean: return v.is_boolean();
    case JType::string: return v.is_string();
    case JType::array: return v.is_array();
    case JType::object: return v.is_object();
    case JType::number_or_array: return v.is_number() || v.is_array();
  }
  return false;
}

void check_section(const json& obj, const char* where,
                   std::initializer_list<KeySpec> keys) {
  if (!obj.is_object())
    throw std::invalid_argument(std::string("config: ") + where +
                                " must be an object");
  for (const auto& [key, value] : obj.items()) {
    const KeySpec* found = nullptr;
    for (const auto& spec : keys) {
      if (key == spec.key) {
        found = &spec;
        break;
      }
    }
    if (!found)
      throw std::invalid_argument("config: unknown key '" + key + "' in " +
                                  where);
    if (!type_matches(value, found->type))
      throw std::invalid_argument("config: wrong type for '" + key + "' in " +
                                  where);
  }
}

void validate_config(const json& c) {
  check_section(c, "top level",
                {{"experiment", JType::string},
                 {"dataset", JType::object},
                 {"reducer", JType::object},
                 {"gmoa", JType::object},
                 {"em", JType::object},
                 {"surface", JType::object},
                 {"evaluate", JType::object},
                 {"out", JType::string},
                 {"seed", JType::unsign},
                 {"threads", JType::integer}});
  if (c.contains("dataset")) {
    check_section(c["dataset"], "dataset",
                  {{"preset", JType::string},
                   {"n", JType::integer},
                   {"seed", JType::unsign},
                   {"csv", JType::string},
                   {"noisy_lines", JType::object},
                   {"idx", JType::object},
                   {"per_label", JType::integer}});
    if (c["dataset"].contains("noisy_lines"))
      check_section(c["dataset"]["noisy_lines"], "dataset.noisy_lines",
                    {{"slope", JType::number},
                     {"intercept0", JType::number},
                     {"intercept1", JType::number},
                     {"n_per_line", JType::integer},
                     {"eps", JType::number},
                     {"x_min", JType::number},
                     {"x_max", JType::number}});
    if (c["dataset"].contains("idx"))
      check_section(c["dataset"]["idx"], "dataset.idx",
                    {{"images", JType::string},
                     {"labels", JType::string},
                     {"digits", JType::array},
                     {"limit", JType::integer}});
  }
  if (c.contains("reducer"))
    check_section(c["reducer"], "reducer",
                  {{"kind", JType::string},
                   {"theta0", JType::number_or_array},
                   {"d", JType::integer},
                   {"hidden", JType::array},
                   {"init", JType::string},
                   {"pretrain_epochs", JType::integer},
                   {"pretrain_lr", JType::number},
                   {"normalize_output", JType::boolean},
                   {"matrix", JType::array}});
  if (c.contains("gmoa"))
    check_section(c["gmoa"], "gmoa",
                  {{"eta0", JType::number},
                   {"n_iter", JType::integer},
                   {"delta", JType::number},
                   {"backtrack", JType::boolean},
                   {"carry_eta", JType::boolean},
                   {"k", JType::integer},
                   {"reduce_weights", JType::boolean},
                   {"stop_tol", JType::number},
                   {"manifold_slack", JType::number}});
  if (c.contains("em"))
    check_section(c["em"], "em",
                  {{"max_iters", JType::integer},
                   {"tol", JType::number},
                   {"refine", JType::boolean},
                   {"refine_max_iters", JType::integer}});
  if (c.contains("surface"))
    check_section(c["surface"], "surface",
                  {{"theta_min", JType::number},
                   {"theta_max", JType::number},
                   {"step", JType::number},
                   {"theta1_min", JType::number},
                   {"theta1_max", JType::number},
                   {"theta2_min", JType::number},
                   {"theta2_max", JType::number},
                   {"variances", JType::array},
                   {"weights", JType::array}});
  if (c.contains("evaluate"))
    check_section(c["evaluate"], "evaluate",
                  {{"state", JType::string}, {"use_weights", JType::boolean}});
}

// Typed reads with defaults; validate_config has already rejected bad types.
double num_or(const json& j, const char* key, double def) {
  return j.contains(key) ? j[key].get<double>() : def;
}
int int_or(const json& j, const char* key, int def) {
  return j.contains(key) ? j[key].get<int>() : def;
}
bool bool_or(const json& j, const char* key, bool def) {
  return j.contains(key) ? j[key].get<bool>() : def;
}
std::string str_or(const json& j, const char* key, const std::string& def) {
  return j.contains(key) ? j[key].get<std::string>() : def;
}
json section(const json& j, const char* key) {
  return j.contains(key) ? j[key] : json::object();
}

// ------------------------------------------------------------- json forms --

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw FormatError(std::string(what) + ": expected an array of arrays");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j[0].size());
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (!j[i].is_array() || static_cast<int>(j[i].size()) != cols)
      throw FormatError(std::string(what) + ": ragged rows");
    for (int c = 0; c < cols; ++c) {
      if (!j[i][c].is_number())
        throw FormatError(std::string(what) + ": non-numeric entry");
      m(i, c) = j[i][c].get<double>();
    }
  }
  return m;
}

Vector vector_from_json(const json& j, const char* what) {
  if (!j.is_array())
    throw FormatError(std::string(what) + ": expected an array");
  Vector v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) {
    if (!j[i].is_number())
      throw FormatError(std::string(what) + ": non-numeric entry");
    v(i) = j[i].get<double>();
  }
  return v;
}

json reducer_to_json(const ReducerParams& theta) {
  json j;
  switch (theta.kind) {
    case ReducerParams::Kind::Angle2D:
      j["kind"] = "angle2d";
      j["angle"] = theta.angle;
      break;
    case ReducerParams::Kind::Angle3D:
      j["kind"] = "angle3d";
      j["angle1"] = theta.angle1;
      j["angle2"] = theta.angle2;
      break;
    case ReducerParams::Kind::Linear:
      j["kind"] = "linear";
      j["w"] = matrix_to_json(theta.linear);
      break;
    case ReducerParams::Kind::Mlp: {
      j["kind"] = "mlp";
      json layers = json::array();
      for (const auto& layer : theta.layers) {
        json lj;
        lj["w"] = matrix_to_json(layer.weights);
        lj["b"] = json::array();
        for (int i = 0; i < layer.bias.size(); ++i)
          lj["b"].push_back(layer.bias(i));
        layers.push_back(std::move(lj));
      }
      j["layers"] = std::move(layers);
      break;
    }
  }
  return j;
}

ReducerParams reducer_from_json(const json& j) {
  const std::string kind = j.value("kind", "");
  if (kind == "angle2d")
    return ReducerParams::make_angle2d(j.value("angle", 0.0));
  if (kind == "angle3d")
    return ReducerParams::make_angle3d(j.value("angle1", 0.0),
                                       j.value("angle2", 0.0));
  if (kind == "linear")
    return ReducerParams::make_linear(matrix_from_json(j["w"], "reducer w"));
  if (kind == "mlp") {
    std::vector<MlpLayer> layers;
    for (const auto& lj : j["layers"]) {
      MlpLayer layer;
      layer.weights = matrix_from_json(lj["w"], "mlp layer w");
      layer.bias = vector_from_json(lj["b"], "mlp layer b");
      layers.push_back(std::move(layer));
    }
    return ReducerParams::make_mlp(std::move(layers));
  }
  throw FormatError("state: unknown reducer kind '" + kind + "'");
}

json mixture_to_json(const MixtureParams& u) {
  json j;
  j["means"] = matrix_to_json(u.means);
  j["variances"] = matrix_to_json(u.variances);
  j["weights"] = json::array();
  for (int i = 0; i < u.weights.size(); ++i)
    j["weights"].push_back(u.weights(i));
  return j;
}

MixtureParams mixture_from_json(const json& j) {
  MixtureParams u;
  u.means = matrix_from_json(j.at("means"), "mixture means");
  u.variances = matrix_from_json(j.at("variances"), "mixture variances");
  u.weights = vector_from_json(j.at("weights"), "mixture weights");
  u.validate();
  return u;
}

// ---------------------------------------------------------------- helpers --

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw FormatError("write to '" + path + "' failed");
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const json& config) {
  json m;
  m["command"] = command;
  m["config"] = config;
  write_text(out_dir + "/manifest.json", m.dump(2) + "\n");
}

json load_json_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in)
    throw FormatError(std::string(what) + ": cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw FormatError(std::string(what) + ": " + path + ": " + e.what());
  }
  return j;
}

std::vector<double> read_theta0(const json& reducer) {
  std::vector<double> out;
  if (!reducer.contains("theta0")) return out;
  const json& t = reducer["theta0"];
  if (t.is_number()) {
    out.push_back(t.get<double>());
    return out;
  }
  for (const auto& v : t) {
    if (!v.is_number())
      throw std::invalid_argument("config: theta0 entries must be numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

datagen::Dataset resolve_dataset(const json& config, std::uint64_t seed) {
  if (!config.contains("dataset"))
    throw std::invalid_argument("config: missing dataset section");
  const json& ds = config["dataset"];
  const std::uint64_t ds_seed =
      ds.contains("seed") ? ds["seed"].get<std::uint64_t>() : seed;

  datagen::Dataset out;
  if (ds.contains("csv")) {
    out = datagen::load_csv(ds["csv"].get<std::string>());
  } else if (ds.contains("idx")) {
    const json& idx = ds["idx"];
    if (!idx.contains("images") || !idx.contains("labels"))
      throw std::invalid_argument("config: dataset.idx needs images+labels");
    std::optional<std::set<int>> digits;
    if (idx.contains("digits")) {
      digits.emplace();
      for (const auto& v : idx["digits"]) {
        if (!v.is_number_integer())
          throw std::invalid_argument("config: digits must be integers");
        digits->insert(v.get<int>());
      }
    }
    std::optional<int> limit;
    if (idx.contains("limit")) limit = idx["limit"].get<int>();
    out = datagen::load_idx(idx["images"].get<std::string>(),
                            idx["labels"].get<std::string>(), digits, limit);
  } else if (ds.contains("noisy_lines")) {
    const json& nl = ds["noisy_lines"];
    datagen::NoisyLinesSpec spec;
    spec.slope = num_or(nl, "slope", spec.slope);
    spec.intercept0 = num_or(nl, "intercept0", spec.intercept0);
    spec.intercept1 = num_or(nl, "intercept1", spec.intercept1);
    spec.n_per_line = int_or(nl, "n_per_line", spec.n_per_line);
    spec.eps = num_or(nl, "eps", spec.eps);
    spec.x_min = num_or(nl, "x_min", spec.x_min);
    spec.x_max = num_or(nl, "x_max", spec.x_max);
    spec.seed = ds_seed;
    out = datagen::gen_noisy_lines(spec);
  } else if (ds.contains("preset")) {
    const auto spec = datagen::preset_spec(ds["preset"].get<std::string>(),
                                           int_or(ds, "n", 2000), ds_seed);
    out = datagen::gen_gmm(spec);
  } else {
    throw std::invalid_argument(
        "config: dataset needs one of csv, idx, noisy_lines, preset");
  }
  if (ds.contains("per_label"))
    out = datagen::take_per_label(out, ds["per_label"].get<int>());
  return out;
}

ReducerParams build_reducer(const json& config, const datagen::Dataset& ds,
                            std::uint64_t seed) {
  if (!config.contains("reducer"))
    throw std::invalid_argument("config: missing reducer section");
  const json& r = config["reducer"];
  const std::string kind = str_or(r, "kind", "");
  const std::vector<double> theta0 = read_theta0(r);

  if (kind == "angle2d") {
    if (theta0.size() > 1)
      throw std::invalid_argument("config: angle2d theta0 is one angle");
    return ReducerParams::make_angle2d(theta0.empty() ? 0.0 : theta0[0]);
  }
  if (kind == "angle3d") {
    if (!theta0.empty() && theta0.size() != 2)
      throw std::invalid_argument("config: angle3d theta0 is two angles");
    return theta0.empty() ? ReducerParams::make_angle3d(0.0, 0.0)
                          : ReducerParams::make_angle3d(theta0[0], theta0[1]);
  }
  if (kind == "linear") {
    if (r.contains("matrix"))
      return ReducerParams::make_linear(
          matrix_from_json(r["matrix"], "reducer matrix"));
    const int d = int_or(r, "d", 0);
    if (d < 1)
      throw std::invalid_argument("config: linear reducer needs d or matrix");
    return init_linear_pca(ds.x, d);
  }
  if (kind == "mlp") {
    if (!r.contains("hidden"))
      throw std::invalid_argument("config: mlp reducer needs hidden");
    std::vector<int> hidden;
    for (const auto& v : r["hidden"]) {
      if (!v.is_number_integer() || v.get<int>() < 1)
        throw std::invalid_argument("config: hidden must be positive ints");
      hidden.push_back(v.get<int>());
    }
    const int d = int_or(r, "d", 0);
    if (d < 1) throw std::invalid_argument("config: mlp reducer needs d");
    const std::string init = str_or(r, "init", "pca");

    ReducerParams theta;
    if (init == "random") {
      theta = make_mlp(ds.dim(), hidden, d, seed);
    } else if (init == "pca") {
      const ReducerParams pca = init_linear_pca(ds.x, d);
      const Matrix target = project(pca, ds.x);
      theta = init_mlp_from_embedding(ds.x, target, hidden,
                                      int_or(r, "pretrain_epochs", 200),
                                      num_or(r, "pretrain_lr", 1e-4), seed)
                  .params;
    } else {
      throw std::invalid_argument("config: mlp init must be pca or random");
    }
    if (bool_or(r, "normalize_output", false))
      theta = normalize_output_layer(theta, ds.x);
    return theta;
  }
  throw std::invalid_argument(
      "config: reducer kind must be one of angle2d, angle3d, linear, mlp");
}

bilevel::GmoaConfig build_gmoa_config(const json& config, std::uint64_t seed,
                                      int threads) {
  const json g = section(config, "gmoa");
  const json e = section(config, "em");
  bilevel::GmoaConfig cfg;
  cfg.eta0 = num_or(g, "eta0", cfg.eta0);
  cfg.n_iter = int_or(g, "n_iter", cfg.n_iter);
  cfg.delta = num_or(g, "delta", cfg.delta);
  cfg.backtrack = bool_or(g, "backtrack", cfg.backtrack);
  cfg.carry_eta = bool_or(g, "carry_eta", cfg.carry_eta);
  cfg.k = int_or(g, "k", cfg.k);
  cfg.reduce_weights = bool_or(g, "reduce_weights", cfg.reduce_weights);
  cfg.stop_tol = num_or(g, "stop_tol", cfg.stop_tol);
  cfg.manifold_slack = num_or(g, "manifold_slack", cfg.manifold_slack);
  cfg.em.max_iters = int_or(e, "max_iters", cfg.em.max_iters);
  cfg.em.tol = num_or(e, "tol", cfg.em.tol);
  cfg.em.refine = bool_or(e, "refine", cfg.em.refine);
  cfg.em.refine_max_iters =
      int_or(e, "refine_max_iters", cfg.em.refine_max_iters);
  cfg.seed = seed;
  cfg.n_threads = threads;
  return cfg;
}

void write_labels_csv(const std::string& path, const std::vector<int>& pred,
                      const std::vector<int>& truth) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << (truth.empty() ? "id,pred\n" : "id,pred,truth\n");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    out << i << "," << pred[i];
    if (!truth.empty()) out << "," << truth[i];
    out << "\n";
  }
  if (!out) throw FormatError("write to '" + path + "' failed");
}

// Compacts arbitrary nonnegative labels to 0..T-1; returns the sorted
// original values.
std::pair<std::vector<int>, std::vector<int>> compact_labels(
    const std::vector<int>& labels) {
  std::set<int> values(labels.begin(), labels.end());
  std::map<int, int> to_compact;
  std::vector<int> ordered;
  for (int v : values) {
    to_compact[v] = static_cast<int>(ordered.size());
    ordered.push_back(v);
  }
  std::vector<int> compact(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    compact[i] = to_compact[labels[i]];
  return {compact, ordered};
}

json contingency_json(const std::vector<int>& pred,
                      const std::vector<int>& truth, int k_pred,
                      int k_truth) {
  std::vector<std::vector<long>> counts(
      static_cast<std::size_t>(k_pred),
      std::vector<long>(static_cast<std::size_t>(k_truth), 0));
  for (std::size_t i = 0; i < pred.size(); ++i)
    ++counts[static_cast<std::size_t>(pred[i])]
            [static_cast<std::size_t>(truth[i])];
  json rows = json::array();
  for (const auto& row : counts) rows.push_back(row);
  return rows;
}

// --------------------------------------------------------------- commands --

int cmd_simulate(const json& config, const std::string& out_dir,
                 std::uint64_t seed) {
  const json& ds_cfg = config.contains("dataset") ? config["dataset"]
                                                  : json::object();
  if (ds_cfg.contains("csv") || ds_cfg.contains("idx"))
    throw std::invalid_argument(
        "simulate generates data; dataset must be a preset or noisy_lines");
  const datagen::Dataset ds = resolve_dataset(config, seed);
  datagen::save_csv(ds, out_dir + "/dataset.csv");

  json resolved;
  resolved["name"] = ds.name;
  resolved["n"] = ds.size();
  resolved["p"] = ds.dim();
  resolved["seed"] = ds.seed;
  json manifest_cfg = config;
  manifest_cfg["resolved_dataset"] = resolved;
  write_manifest(out_dir, "simulate", manifest_cfg);
  std::cout << "simulate: wrote " << ds.size() << " points to " << out_dir
            << "/dataset.csv\n";
  return 0;
}

int cmd_train(const json& config, const std::string& out_dir,
              std::uint64_t seed, int threads) {
  const datagen::Dataset ds = resolve_dataset(config, seed);
  const ReducerParams theta0 = build_reducer(config, ds, seed);
  const bilevel::GmoaConfig cfg = build_gmoa_config(config, seed, threads);

  const auto start = std::chrono::steady_clock::now();
  const auto [state, traj] = bilevel::gmoa_run(ds.x, theta0, {}, cfg);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();

  bilevel::write_trajectory_csv(traj, out_dir + "/trajectory.csv");

  json st;
  st["reducer"] = reducer_to_json(state.theta);
  st["mixture"] = mixture_to_json(state.u);
  st["e"] = state.e;
  st["g"] = state.g;
  st["iter"] = state.iter;
  write_text(out_dir + "/state.json", st.dump(2) + "\n");

  const auto& first = traj.records.front();
  const bool converged =
      !traj.records.empty() &&
      traj.records.back().flags.find("converged") != std::string::npos;
  json summary;
  summary["e_initial"] = first.e;
  summary["g_initial"] = first.g;
  summary["e_final"] = state.e;
  summary["g_final"] = state.g;
  summary["iterations"] = state.iter;
  summary["converged"] = converged;
  summary["truncated"] = traj.truncated;
  write_text(out_dir + "/summary.json", summary.dump(2) + "\n");
  write_manifest(out_dir, "train", config);

  std::cout << "train: E=" << format_double(state.e)
            << " g=" << format_double(state.g) << " iters=" << state.iter
            << " wall_s=" << wall << "\n";
  return traj.truncated ? 3 : 0;
}

int cmd_surface(const json& config, const std::string& out_dir,
                std::uint64_t seed, int threads) {
  (void)threads;
  const datagen::Dataset ds = resolve_dataset(config, seed);
  const json& r = config.contains("reducer") ? config["reducer"]
                                             : json::object();
  const std::string kind = str_or(r, "kind", "");
  const json s = section(config, "surface");

  std::vector<ReducerParams> grid;
  if (kind == "angle2d") {
    const double lo = num_or(s, "theta_min", -2.0 * kPi);
    const double hi = num_or(s, "theta_max", 2.0 * kPi);
    const double step = num_or(s, "step", 0.05);
    if (step <= 0.0) throw std::invalid_argument("config: step must be > 0");
    for (double t = lo; t <= hi + 1e-12; t += step)
      grid.push_back(ReducerParams::make_angle2d(t));
  } else if (kind == "angle3d") {
    const double lo1 = num_or(s, "theta1_min", 0.0);
    const double hi1 = num_or(s, "theta1_max", kPi);
    const double lo2 = num_or(s, "theta2_min", 0.0);
    const double hi2 = num_or(s, "theta2_max", 2.0 * kPi);
    const double step = num_or(s, "step", 0.1);
    if (step <= 0.0) throw std::invalid_argument("config: step must be > 0");
    for (double t1 = lo1; t1 <= hi1 + 1e-12; t1 += step)
      for (double t2 = lo2; t2 <= hi2 + 1e-12; t2 += step)
        grid.push_back(ReducerParams::make_angle3d(t1, t2));
  } else {
    throw std::invalid_argument(
        "config: surface needs an angle2d or angle3d reducer");
  }

  Matrix variances(2, 1);
  Vector weights(2);
  if (s.contains("variances")) {
    const Vector v = vector_from_json(s["variances"], "surface variances");
    if (v.size() != 2)
      throw std::invalid_argument("config: surface variances must have 2");
    variances << v(0), v(1);
  } else {
    variances << 2.0, 1.0;
  }
  if (s.contains("weights")) {
    weights = vector_from_json(s["weights"], "surface weights");
    if (weights.size() != 2)
      throw std::invalid_argument("config: surface weights must have 2");
  } else {
    weights << 0.5, 0.5;
  }

  EmConfig em_cfg;
  const json e = section(config, "em");
  em_cfg.max_iters = int_or(e, "max_iters", em_cfg.max_iters);
  em_cfg.tol = num_or(e, "tol", em_cfg.tol);

  const auto rows =
      bilevel::manifold_surface(grid, ds.x, variances, weights, em_cfg);
  bilevel::write_surface_csv(rows, out_dir + "/surface.csv");
  write_manifest(out_dir, "surface", config);

  int ok = 0;
  for (const auto& row : rows) ok += row.ok ? 1 : 0;
  const double ratio = static_cast<double>(ok) / rows.size();
  std::cout << "surface: " << ok << "/" << rows.size()
            << " grid points solved\n";
  return ratio >= 0.95 ? 0 : 3;
}

int cmd_evaluate(const json& config, const std::string& out_dir,
                 std::uint64_t seed) {
  const json ev = section(config, "evaluate");
  const std::string state_path = str_or(ev, "state", "");
  if (state_path.empty())
    throw std::invalid_argument("config: evaluate needs a state file");

  const json st = load_json_file(state_path, "state");
  const ReducerParams theta = reducer_from_json(st.at("reducer"));
  const MixtureParams u = mixture_from_json(st.at("mixture"));
  const datagen::Dataset ds = resolve_dataset(config, seed);

  const Matrix z = project(theta, ds.x);
  const auto gm = labeling::assign_labels(u, z, bool_or(ev, "use_weights",
                                                        false));
  const auto km = labeling::kmeans(z, u.components(), seed);

  write_labels_csv(out_dir + "/labels.csv", gm.labels, ds.labels);

  json metrics;
  metrics["n"] = ds.size();
  metrics["k"] = u.components();
  if (ds.has_labels()) {
    const auto [truth, truth_values] = compact_labels(ds.labels);
    const auto gm_match = labeling::hungarian_accuracy(gm.labels, truth);
    const auto km_match = labeling::hungarian_accuracy(km.labels, truth);
    metrics["gmoa_accuracy"] = gm_match.accuracy;
    metrics["kmeans_accuracy"] = km_match.accuracy;
    metrics["truth_values"] = truth_values;
    const int k_truth = static_cast<int>(truth_values.size());
    metrics["contingency_gmoa"] =
        contingency_json(gm.labels, truth, u.components(), k_truth);
    metrics["contingency_kmeans"] =
        contingency_json(km.labels, truth, u.components(), k_truth);
    metrics["mapping_gmoa"] = gm_match.mapping;
    metrics["mapping_kmeans"] = km_match.mapping;
  }
  write_text(out_dir + "/metrics.json", metrics.dump(2) + "\n");
  write_manifest(out_dir, "evaluate", config);

  std::cout << "evaluate: labeled " << ds.size() << " points";
  if (metrics.contains("gmoa_accuracy"))
    std::cout << ", accuracy " << metrics["gmoa_accuracy"].get<double>()
              << " (kmeans " << metrics["kmeans_accuracy"].get<double>()
              << ")";
  std::cout << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{
      "joint dimension reduction and Gaussian-mixture clustering via "
      "manifold gradient ascent"};
  app.require_subcommand(1);

  std::optional<std::string> config_path, out_flag, preset_flag, state_flag;
  std::optional<std::uint64_t> seed_flag;
  std::optional<int> threads_flag, n_flag, n_iter_flag;
  std::optional<double> eta0_flag, step_flag;
  std::vector<double> theta0_flag;

  const auto add_global = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--seed", seed_flag, "seed override");
    sub->add_option("--out", out_flag, "output directory");
    sub->add_option("--threads", threads_flag, "worker thread count");
  };

  CLI::App* sim = app.add_subcommand("simulate", "generate a dataset CSV");
  add_global(sim);
  sim->add_option("--preset", preset_flag, "dataset preset name");
  sim->add_option("--n", n_flag, "sample count");

  CLI::App* train = app.add_subcommand("train", "run the optimizer");
  add_global(train);
  train->add_option("--n-iter", n_iter_flag, "outer iteration count");
  train->add_option("--eta0", eta0_flag, "initial learning rate");
  train->add_option("--theta0", theta0_flag, "initial reducer angles")
      ->delimiter(',');

  CLI::App* surf =
      app.add_subcommand("surface", "sweep the constrained energy surface");
  add_global(surf);
  surf->add_option("--step", step_flag, "grid step");

  CLI::App* eval =
      app.add_subcommand("evaluate", "label a dataset with a trained state");
  add_global(eval);
  eval->add_option("--state", state_flag, "state.json from train");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    json config = json::object();
    if (config_path) {
      std::ifstream in(*config_path);
      if (!in)
        throw std::invalid_argument("config: cannot open '" + *config_path +
                                    "'");
      try {
        in >> config;
      } catch (const json::parse_error& e) {
        throw std::invalid_argument("config: " + *config_path + ": " +
                                    e.what());
      }
      if (!config.is_object())
        throw std::invalid_argument("config: top level must be an object");
    }

    if (seed_flag) config["seed"] = *seed_flag;
    if (out_flag) config["out"] = *out_flag;
    if (threads_flag) config["threads"] = *threads_flag;
    if (preset_flag) config["dataset"]["preset"] = *preset_flag;
    if (n_flag) config["dataset"]["n"] = *n_flag;
    if (n_iter_flag) config["gmoa"]["n_iter"] = *n_iter_flag;
    if (eta0_flag) config["gmoa"]["eta0"] = *eta0_flag;
    if (state_flag) config["evaluate"]["state"] = *state_flag;
    if (step_flag) config["surface"]["step"] = *step_flag;
    if (!theta0_flag.empty()) config["reducer"]["theta0"] = theta0_flag;

    validate_config(config);

    const std::uint64_t seed =
        config.contains("seed") ? config["seed"].get<std::uint64_t>() : 0;
    const int threads = int_or(config, "threads", 1);
    if (threads < 1)
      throw std::invalid_argument("config: threads must be >= 1");
    const std::string out_dir = str_or(config, "out", ".");
    std::filesystem::create_directories(out_dir);

    if (app.got_subcommand(sim)) return cmd_simulate(config, out_dir, seed);
    if (app.got_subcommand(train))
      return cmd_train(config, out_dir, seed, threads);
    if (app.got_subcommand(surf))
      return cmd_surface(config, out_dir, seed, threads);
    if (app.got_subcommand(eval)) return cmd_evaluate(config, out_dir, seed);
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const StepFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const json::exception& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> full;
  full.reserve(args.size() + 1);
  full.emplace_back("gmoa");
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  argv.reserve(full.size());
  for (const auto& a : full) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace gmoa::cli
