// Acceptance suite. Runs the full pipeline at its target operating points
// and prints one PASS/FAIL line per criterion; the exit status is the number
// of failed criteria. Heavier than the unit tests by design: these are the
// end-to-end checks the library must keep passing.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmoa/bilevel.hpp"
#include "gmoa/cli.hpp"
#include "gmoa/common.hpp"
#include "gmoa/datagen.hpp"
#include "gmoa/em.hpp"
#include "gmoa/labeling.hpp"
#include "gmoa/mixture.hpp"
#include "gmoa/reducer.hpp"
#include "gmoa/rng.hpp"
#include "gmoa/separation.hpp"
#include "support/oracles.hpp"

using json = nlohmann::json;
using namespace gmoa;
using testsupport::TempDir;

namespace {

constexpr double kPi = 3.14159265358979323846;

// ------------------------------------------------------------- reporting --

struct Criterion {
  explicit Criterion(std::string n) : name(std::move(n)) {}

  std::string name;
  std::vector<std::string> failures;
  std::string detail;

  void require(bool ok, const std::string& msg) {
    if (!ok) failures.push_back(msg);
  }
  bool passed() const { return failures.empty(); }
};

int report(const Criterion& c, int index, double seconds) {
  std::ostringstream line;
  line << "criterion " << index << " (" << c.name << "): "
       << (c.passed() ? "PASS" : "FAIL");
  if (!c.detail.empty()) line << "  [" << c.detail << "]";
  line << "  (" << std::fixed << seconds << std::defaultfloat << " s)";
  std::cout << line.str() << "\n";
  for (const auto& f : c.failures) std::cout << "    - " << f << "\n";
  std::cout.flush();
  return c.passed() ? 0 : 1;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --------------------------------------------------------------- helpers --

double ang_dist(double a, double b) {
  return std::abs(std::remainder(a - b, 2.0 * kPi));
}

// Distance of (t1, t2) from the closer of the two direction-equivalent
// target pairs, per-coordinate wrapped.
double ang3_dist(double t1, double t2, double a1, double a2) {
  const double direct = std::max(ang_dist(t1, a1), ang_dist(t2, a2));
  const double mirror =
      std::max(ang_dist(t1, kPi - a1), ang_dist(t2, a2 - kPi));
  return std::min(direct, mirror);
}

double mean_gap(const MixtureParams& u) {
  return (u.means.row(0) - u.means.row(1)).norm();
}

bool has_flag(const std::string& flags, const std::string& token) {
  std::istringstream ss(flags);
  std::string part;
  while (std::getline(ss, part, '|'))
    if (part == token) return true;
  return false;
}

std::vector<int> compact(const std::vector<int>& labels) {
  std::map<int, int> ids;
  for (int v : labels) ids.emplace(v, 0);
  int next = 0;
  for (auto& [value, id] : ids) id = next++;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = ids[labels[i]];
  return out;
}

struct RunArtifacts {
  Matrix x;
  ReducerParams theta0;
  bilevel::GmoaConfig cfg;
  std::string traj_csv;
};

// Runs the optimizer and snapshots everything needed to replay the exact
// configuration later (criterion 8 reruns at a different thread count).
std::pair<bilevel::ManifoldState, bilevel::Trajectory> run_and_record(
    const Matrix& x, const ReducerParams& theta0,
    const bilevel::GmoaConfig& cfg, const TempDir& tmp,
    const std::string& tag, std::vector<RunArtifacts>* store) {
  auto [state, traj] = bilevel::gmoa_run(x, theta0, {}, cfg);
  const std::string path = tmp.file(tag + ".csv");
  bilevel::write_trajectory_csv(traj, path);
  if (store) store->push_back({x, theta0, cfg, read_file(path)});
  return {std::move(state), std::move(traj)};
}

// ------------------------------------------------- image fixture classes --

// Synthetic stand-in for the handwritten-digit files when they are absent:
// 28x28 images whose classes are Gaussian bright spots at class-specific
// positions, plus a filler class that the digit filter must drop. The three
// kept classes reuse the label values 3, 5 and 9 so the loading config is
// identical to the real-data path.
std::vector<unsigned char> render_class(int label, Rng& rng) {
  const double scale = 0.8 + 0.4 * rng.uniform();
  const double jr = 0.7 * rng.normal();
  const double jc = 0.7 * rng.normal();
  double r1 = 14.0, c1 = 14.0, r2 = -1.0, c2 = -1.0;
  if (label == 3) {
    r1 = 8.0;
    c1 = 8.0;
  } else if (label == 5) {
    r1 = 20.0;
    c1 = 20.0;
  } else if (label == 9) {
    r1 = 8.0;
    c1 = 20.0;
    r2 = 20.0;
    c2 = 8.0;
  }
  std::vector<unsigned char> img(28 * 28);
  const auto sq = [](double v) { return v * v; };
  for (int r = 0; r < 28; ++r)
    for (int c = 0; c < 28; ++c) {
      double v;
      if (label == 3 || label == 5 || label == 9) {
        v = 220.0 * scale *
            std::exp(-(sq(r - r1 - jr) + sq(c - c1 - jc)) / 18.0);
        if (r2 >= 0.0)
          v += 170.0 * scale *
               std::exp(-(sq(r - r2 - jr) + sq(c - c2 - jc)) / 18.0);
      } else {
        v = 40.0 * rng.uniform();
      }
      v += 12.0 * rng.normal();
      v = std::min(255.0, std::max(0.0, v));
      img[static_cast<std::size_t>(r * 28 + c)] =
          static_cast<unsigned char>(std::lround(v));
    }
  return img;
}

void write_surrogate_digits(const std::string& images_path,
                            const std::string& labels_path) {
  Rng rng(20260815);
  std::vector<std::vector<unsigned char>> images;
  std::vector<unsigned char> labels;
  const unsigned char classes[3] = {3, 5, 9};
  for (int i = 0; i < 600; ++i) {
    for (unsigned char c : classes) {
      images.push_back(render_class(c, rng));
      labels.push_back(c);
    }
    if (i % 12 == 0) {
      images.push_back(render_class(1, rng));
      labels.push_back(1);
    }
  }
  testsupport::write_idx_pair(images_path, labels_path, images, labels, 28,
                              28);
}

// Uses real IDX training files when present (MNIST_DIR or data/mnist), else
// the synthetic surrogate above. Returns the dataset and its source tag.
std::pair<datagen::Dataset, std::string> digit_dataset(const TempDir& tmp) {
  std::vector<std::string> dirs;
  if (const char* env = std::getenv("MNIST_DIR")) dirs.emplace_back(env);
  dirs.emplace_back("data/mnist");
  for (const auto& dir : dirs) {
    const std::string images = dir + "/train-images-idx3-ubyte";
    const std::string labels = dir + "/train-labels-idx1-ubyte";
    if (std::filesystem::exists(images) && std::filesystem::exists(labels)) {
      auto ds = datagen::load_idx(images, labels, std::set<int>{3, 5, 9},
                                  std::nullopt);
      return {datagen::take_per_label(ds, 500), "mnist"};
    }
  }
  const std::string images = tmp.file("surrogate-images-idx3-ubyte");
  const std::string labels = tmp.file("surrogate-labels-idx1-ubyte");
  write_surrogate_digits(images, labels);
  auto ds =
      datagen::load_idx(images, labels, std::set<int>{3, 5, 9}, std::nullopt);
  return {datagen::take_per_label(ds, 500), "surrogate"};
}

// ------------------------------------------------------------- criteria --

// Two starts on the 2D preset must land on the separating direction with
// the fitted mean gap at the population value.
int criterion_1(const TempDir& tmp, std::vector<RunArtifacts>* store) {
  const auto t0 = std::chrono::steady_clock::now();
  Criterion c{"2d synthetic convergence"};

  const auto ds = datagen::gen_gmm(datagen::preset_spec("paper2d", 2000, 0));
  const double target = std::atan2(5.0, 3.0);
  const double gap_target = std::sqrt(34.0);

  bilevel::GmoaConfig cfg;
  cfg.eta0 = 0.005;
  cfg.n_iter = 300;
  cfg.em.max_iters = 200;
  cfg.em.tol = 1e-9;
  cfg.seed = 0;

  std::ostringstream detail;
  bool first = true;
  for (double theta0 : {2.5, -3.0}) {
    const auto start = std::chrono::steady_clock::now();
    const auto [state, traj] =
        run_and_record(ds.x, ReducerParams::make_angle2d(theta0), cfg, tmp,
                       "c1_" + std::to_string(first), first ? store : nullptr);
    const double elapsed = seconds_since(start);

    const double theta = state.theta.angle;
    const double dist = std::min(
        {ang_dist(theta, target), ang_dist(theta, target + kPi),
         ang_dist(theta, target - kPi)});
    const double gap = mean_gap(state.u);

    std::ostringstream tag;
    tag << "theta0=" << theta0;
    c.require(dist <= 0.15, tag.str() + ": final angle " +
                                std::to_string(theta) + " is " +
                                std::to_string(dist) + " rad from a target");
    c.require(std::abs(gap - gap_target) <= 0.05 * gap_target,
              tag.str() + ": |delta mu| " + std::to_string(gap) +
                  " outside 5% of " + std::to_string(gap_target));
    c.require(!traj.truncated, tag.str() + ": trajectory truncated");
    c.require(elapsed < 30.0,
              tag.str() + ": took " + std::to_string(elapsed) + " s");

    if (!first) detail << "; ";
    detail << tag.str() << ": dist=" << dist << " gap=" << gap;
    first = false;
  }
  c.detail = detail.str();
  return report(c, 1, seconds_since(t0));
}

// Three starts on the 3D preset; the best-conditioned one must converge
// fastest and all must stop within the iteration budget.
int criterion_2(const TempDir& tmp, std::vector<RunArtifacts>* store) {
  const auto t0 = std::chrono::steady_clock::now();
  Criterion c{"3d synthetic convergence"};

  const auto ds = datagen::gen_gmm(datagen::preset_spec("paper3d", 2000, 0));
  const double a1 = std::acos(-3.0 / std::sqrt(134.0));
  const double a2 = std::atan2(10.0, -5.0);
  const double gap_target = std::sqrt(134.0);

  bilevel::GmoaConfig cfg;
  cfg.eta0 = 0.05;
  cfg.n_iter = 40;
  cfg.em.max_iters = 200;
  cfg.em.tol = 1e-9;
  cfg.seed = 0;

  const std::vector<std::pair<double, double>> starts = {
      {3.0, 3.0}, {2.5, 2.5}, {1.6, 1.6}};
  std::vector<int> iters;
  std::ostringstream detail;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const auto [s1, s2] = starts[i];
    const bool keep = i == 2;  // the recorded run for the determinism rerun
    const auto [state, traj] = run_and_record(
        ds.x, ReducerParams::make_angle3d(s1, s2), cfg, tmp,
        "c2_" + std::to_string(i), keep ? store : nullptr);

    const double dist = ang3_dist(state.theta.angle1, state.theta.angle2, a1,
                                  a2);
    const double gap = mean_gap(state.u);
    const bool converged =
        !traj.records.empty() && has_flag(traj.records.back().flags,
                                          "converged");
    std::ostringstream tag;
    tag << "start (" << s1 << "," << s2 << ")";
    c.require(dist <= 0.15, tag.str() + ": angles (" +
                                std::to_string(state.theta.angle1) + "," +
                                std::to_string(state.theta.angle2) + ") are " +
                                std::to_string(dist) + " rad from a target");
    c.require(std::abs(gap - gap_target) <= 0.05 * gap_target,
              tag.str() + ": |delta mu| " + std::to_string(gap) +
                  " outside 5% of " + std::to_string(gap_target));
    c.require(converged && state.iter <= 40,
              tag.str() + ": did not converge within 40 iterations (iter " +
                  std::to_string(state.iter) + ")");
    iters.push_back(state.iter);
    if (i) detail << "; ";
    detail << "iters=" << state.iter;
  }
  c.require(iters[2] < iters[0] && iters[2] < iters[1],
            "start (1.6,1.6) was not the fastest of the three");
  const double total = seconds_since(t0);
  c.require(total < 60.0, "total runtime " + std::to_string(total) + " s");
  c.detail = detail.str();
  return report(c, 2, total);
}

struct SurfaceSample {
  double theta = 0.0;
  double delta_mu = 0.0;
  bool ok = false;
};

std::vector<SurfaceSample> parse_surface_csv(const std::string& text) {
  std::vector<SurfaceSample> out;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string t, dm, e, flags;
    std::getline(row, t, ',');
    std::getline(row, dm, ',');
    std::getline(row, e, ',');
    std::getline(row, flags);
    SurfaceSample s;
    s.theta = std::stod(t);
    s.ok = flags.find("failed") == std::string::npos;
    s.delta_mu = s.ok ? std::stod(dm) : 0.0;
    out.push_back(s);
  }
  return out;
}

// The swept mean-gap curve must peak only at the separating directions and
// negate under antipodal reflection.
int criterion_3(const TempDir& tmp, std::string* surface_config_out,
                std::string* surface_csv_out) {
  const auto t0 = std::chrono::steady_clock::now();
  Criterion c{"manifold surface"};

  const double target = std::atan2(5.0, 3.0);
  const double step = 0.05;
  const json cfg = {
      {"dataset", {{"preset", "paper2d"}, {"n", 2000}, {"seed", 0}}},
      {"reducer", {{"kind", "angle2d"}}},
      {"surface",
       {{"theta_min", -2.0 * kPi},
        {"theta_max", 2.0 * kPi},
        {"step", step},
        {"variances", {2.0, 1.0}},
        {"weights", {0.5, 0.5}}}},
      {"em", {{"max_iters", 300}, {"tol", 1e-10}}},
      {"seed", 0}};
  const std::string cfg_path = tmp.file("surface_cfg.json");
  std::ofstream(cfg_path) << cfg.dump(2) << "\n";
  const std::string out_dir = tmp.file("surface_run");
  const int rc = cli::run_cli({"surface", "--config", cfg_path, "--out",
                               out_dir});
  c.require(rc == 0, "surface command exited " + std::to_string(rc));
  *surface_config_out = cfg_path;

  if (rc == 0) {
    const std::string csv = read_file(out_dir + "/surface.csv");
    *surface_csv_out = csv;
    const auto rows = parse_surface_csv(csv);

    double top = 0.0;
    for (const auto& r : rows)
      if (r.ok) top = std::max(top, std::abs(r.delta_mu));
    c.require(std::abs(top - std::sqrt(34.0)) <= 0.05 * std::sqrt(34.0),
              "peak gap " + std::to_string(top) + " off sqrt(34)");

    const std::vector<double> targets = {target, target + kPi, target - kPi,
                                         target - 2.0 * kPi};
    // Every near-peak local maximizer sits within one grid step of a
    // separating direction, and every direction in range is attained.
    int maximizers = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!rows[i].ok) continue;
      const double v = std::abs(rows[i].delta_mu);
      if (v < 0.95 * top) continue;
      const double prev =
          i > 0 && rows[i - 1].ok ? std::abs(rows[i - 1].delta_mu) : -1.0;
      const double next = i + 1 < rows.size() && rows[i + 1].ok
                              ? std::abs(rows[i + 1].delta_mu)
                              : -1.0;
      if (v < prev || v < next) continue;
      ++maximizers;
      double best = 1e30;
      for (double t : targets) best = std::min(best, std::abs(rows[i].theta - t));
      c.require(best <= step + 1e-9,
                "maximizer at theta " + std::to_string(rows[i].theta) +
                    " is " + std::to_string(best) + " from every target");
    }
    c.require(maximizers >= 4, "expected at least 4 grid maximizers, found " +
                                   std::to_string(maximizers));
    for (double t : targets) {
      bool hit = false;
      for (const auto& r : rows)
        if (r.ok && std::abs(r.theta - t) <= step + 1e-9 &&
            std::abs(r.delta_mu) >= 0.95 * top)
          hit = true;
      c.require(hit, "no near-peak grid point within one step of theta " +
                         std::to_string(t));
    }
    c.detail = "peak=" + std::to_string(top) +
               " maximizers=" + std::to_string(maximizers);
  }

  // Antipodal antisymmetry on exactly paired angles (the default grid step
  // does not divide pi, so the pairs are swept directly).
  {
    const auto ds = datagen::gen_gmm(datagen::preset_spec("paper2d", 2000, 0));
    std::vector<ReducerParams> grid;
    std::vector<double> bases;
    for (int i = 0; i < 16; ++i) {
      const double t = -kPi + 0.2 * i;
      bases.push_back(t);
      grid.push_back(ReducerParams::make_angle2d(t));
      grid.push_back(ReducerParams::make_angle2d(t + kPi));
    }
    Matrix variances(2, 1);
    variances << 2.0, 1.0;
    Vector weights(2);
    weights << 0.5, 0.5;
    EmConfig em_cfg;
    em_cfg.max_iters = 300;
    em_cfg.tol = 1e-10;
    const auto rows =
        bilevel::manifold_surface(grid, ds.x, variances, weights, em_cfg);
    const double floor = 0.1 * std::sqrt(34.0);
    for (std::size_t i = 0; i < bases.size(); ++i) {
      const auto& a = rows[2 * i];
      const auto& b = rows[2 * i + 1];
      if (!a.ok || !b.ok) {
        c.require(false, "antipodal pair failed to solve");
        continue;
      }
      const double rel = std::abs(a.delta_mu + b.delta_mu) /
                         std::max({std::abs(a.delta_mu),
                                   std::abs(b.delta_mu), floor});
      c.require(rel <= 0.10,
                "antisymmetry off by " + std::to_string(rel) + " at theta " +
                    std::to_string(bases[i]));
    }
  }
  return report(c, 3, seconds_since(t0));
}

// A random start on the noisy-lines data must reach high matched accuracy
// within the iteration budget.
int criterion_4(const TempDir& tmp, std::vector<RunArtifacts>* store) {
  const auto t0 = std::chrono::steady_clock::now();
  Criterion c{"noisy-lines robustness"};

  datagen::NoisyLinesSpec spec;  // library defaults
  spec.seed = 0;
  const auto ds = datagen::gen_noisy_lines(spec);

  Rng start_rng(1);
  const double theta0 = -kPi + 2.0 * kPi * start_rng.uniform();

  bilevel::GmoaConfig cfg;
  cfg.eta0 = 0.01;
  cfg.n_iter = 300;
  cfg.em.max_iters = 200;
  cfg.em.tol = 1e-9;
  cfg.seed = 0;

  const auto [state, traj] = run_and_record(
      ds.x, ReducerParams::make_angle2d(theta0), cfg, tmp, "c4", store);
  const auto labels = labeling::assign_labels(state.u, state.theta, ds.x);
  const auto match = labeling::hungarian_accuracy(labels.labels, ds.labels);

  c.require(match.accuracy >= 0.95,
            "accuracy " + std::to_string(match.accuracy) + " below 0.95");
  c.require(state.iter <= 300, "used more than 300 iterations");
  std::ostringstream detail;
  detail << "theta0=" << theta0 << " accuracy=" << match.accuracy
         << " iters=" << state.iter;
  c.detail = detail.str();
  return report(c, 4, seconds_since(t0));
}

// Full image pipeline: PCA-seeded MLP, 50 ascent steps, compared against a
// k-means baseline on the identical projection.
int criterion_5(const TempDir& tmp, std::vector<RunArtifacts>* store) {
  const auto t0 = std::chrono::steady_clock::now();
  Criterion c{"image-subset property run"};

  const auto [ds, source] = digit_dataset(tmp);
  c.require(ds.size() == 1500, "expected 1500 images, got " +
                                   std::to_string(ds.size()));

  const ReducerParams pca = init_linear_pca(ds.x, 2);
  const Matrix target = project(pca, ds.x);
  ReducerParams theta0 =
      init_mlp_from_embedding(ds.x, target, {64}, 200, 1e-4, 0).params;
  theta0 = normalize_output_layer(theta0, ds.x);

  bilevel::GmoaConfig cfg;
  cfg.eta0 = 0.001;
  cfg.n_iter = 50;
  cfg.k = 3;
  cfg.em.max_iters = 200;
  cfg.em.tol = 1e-9;
  cfg.seed = 0;

  const auto [state, traj] =
      run_and_record(ds.x, theta0, cfg, tmp, "c5", store);

  const double g_init = traj.records.front().g;
  c.require(state.g > g_init, "final g " + std::to_string(state.g) +
                                  " does not exceed initial g " +
                                  std::to_string(g_init));

  const Matrix z = project(state.theta, ds.x);
  const auto gm = labeling::assign_labels(state.u, z);
  const auto km = labeling::kmeans(z, 3, 0);
  const std::vector<int> truth = compact(ds.labels);
  const auto gm_match = labeling::hungarian_accuracy(gm.labels, truth);
  const auto km_match = labeling::hungarian_accuracy(km.labels, truth);

  c.require(gm_match.accuracy >= km_match.accuracy,
            "accuracy " + std::to_string(gm_match.accuracy) +
                " below the k-means baseline " +
                std::to_string(km_match.accuracy));
  c.require(gm_match.accuracy >= 0.80,
            "accuracy " + std::to_string(gm_match.accuracy) + " below 0.80");

  const double total = seconds_since(t0);
  c.require(total < 600.0, "runtime " + std::to_string(total) + " s");
  std::ostringstream detail;
  detail << "source=" << source << " accuracy=" << gm_match.accuracy
         << " kmeans=" << km_match.accuracy << " g " << g_init << " -> "
         << state.g;
  c.detail = detail.str();
  return report(c, 5, total);
}

// Analytic derivatives against central differences, plus the implicit step
// against a dense closed form and a re-minimization slope oracle.
int criterion_6() {
  const auto t0 = std::chrono::steady_clock::now();
  Criterion c{"derivative correctness"};

  // Separation gradient.
  {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const int k = 2 + trial % 3;
      const int d = 1 + trial % 3;
      const MixtureParams u = testsupport::random_mixture(k, d, 900 + trial);
      const auto f = [&](const Vector& p) {
        return g_value(unpack(p, k, d)).g;
      };
      const Vector fd = testsupport::fd_gradient(f, pack(u), 1e-6);
      worst = std::max(worst,
                       testsupport::max_rel_err(grad_g(u), fd, 1e-4));
    }
    c.require(worst < 1e-5, "grad_g worst relative error " +
                                std::to_string(worst));
  }

  // Reducer pullback gradient over all four parameterizations.
  {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      Rng rng(4000 + trial);
      const int n = 6 + trial % 5;
      ReducerParams theta;
      int p = 0;
      switch (trial % 4) {
        case 0:
          theta = ReducerParams::make_angle2d(-2.0 + 4.0 * rng.uniform());
          p = 2;
          break;
        case 1:
          theta = ReducerParams::make_angle3d(3.0 * rng.uniform(),
                                              6.0 * rng.uniform());
          p = 3;
          break;
        case 2: {
          Matrix w(4, 2);
          for (int i = 0; i < w.size(); ++i)
            w(i / 2, i % 2) = rng.normal();
          theta = ReducerParams::make_linear(w);
          p = 4;
          break;
        }
        default:
          theta = make_mlp(4, {8}, 2, 77 + trial);
          p = 4;
          break;
      }
      const Matrix x = testsupport::random_points(n, p, 500 + trial);
      const Matrix sens =
          testsupport::random_points(n, theta.output_dim(), 600 + trial);
      const auto loss = [&](const Vector& flat) {
        return (project(theta.with_flat(flat), x).array() * sens.array())
            .sum();
      };
      const Vector fd = testsupport::fd_gradient(loss, theta.flatten(), 1e-6);
      worst = std::max(
          worst, testsupport::max_rel_err(grad_theta(theta, x, sens), fd,
                                          1e-4));
    }
    c.require(worst < 1e-5, "grad_theta worst relative error " +
                                std::to_string(worst));
  }

  // Mixture-likelihood gradient in packed coordinates.
  {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const int k = 2 + trial % 3;
      const int d = 1 + trial % 2;
      const MixtureParams u = testsupport::random_mixture(k, d, 300 + trial);
      const Matrix z = testsupport::random_points(30 + trial % 20, d,
                                                  700 + trial);
      const auto f = [&](const Vector& p) {
        return mixture_nll(unpack(p, k, d), z);
      };
      const Vector fd = testsupport::fd_gradient(f, pack(u), 1e-5);
      worst = std::max(worst, testsupport::max_rel_err(
                                  grad_nll_u_analytic(u, z), fd, 1e-3));
    }
    c.require(worst < 1e-5, "grad_nll_u worst relative error " +
                                std::to_string(worst));
  }

  // Implicit step against the dense closed form on random SPD systems.
  {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      Rng rng(1300 + trial);
      const int m = 2 + trial % 5;
      const int l = 1 + trial % 4;
      Matrix a(m, m);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) a(i, j) = rng.normal();
      const Matrix h = a.transpose() * a +
                       (0.5 + rng.uniform()) * Matrix::Identity(m, m);
      Matrix mixed(m, l);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < l; ++j) mixed(i, j) = rng.normal();
      Vector gg(m);
      for (int i = 0; i < m; ++i) gg(i) = rng.normal();

      const Vector expected = -mixed.transpose() * h.inverse() * gg;
      const Vector got = bilevel::implicit_delta(h, mixed, gg);
      worst = std::max(worst,
                       testsupport::max_rel_err(got, expected, 1e-12));
    }
    c.require(worst < 1e-10, "implicit solve worst relative error " +
                                 std::to_string(worst));
  }

  // Re-minimization oracle: the implicit derivative must match the slope of
  // g along the solution path, measured by refitting at theta +- eps.
  {
    const auto ds = datagen::gen_gmm(datagen::preset_spec("paper2d", 800, 0));
    const double theta_a = 1.6;
    EmConfig em_cfg;
    em_cfg.max_iters = 500;
    em_cfg.tol = 1e-13;

    Matrix means(2, 1), vars(2, 1);
    means << -1.0, 1.0;
    vars << 1.0, 1.0;
    Vector w(2);
    w << 0.5, 0.5;
    const MixtureParams u0 = MixtureParams{means, vars, w};

    const Matrix z = project(ReducerParams::make_angle2d(theta_a), ds.x);
    const auto fr = fit(u0, z, em_cfg);

    bilevel::GmoaConfig cfg;
    const auto ig = bilevel::implicit_grad(
        fr.u, ReducerParams::make_angle2d(theta_a), ds.x, cfg);
    c.require(ig.manifold_residual < 1e-2,
              "re-minimized point off manifold: residual " +
                  std::to_string(ig.manifold_residual));

    const auto g_at = [&](double t) {
      const Matrix zt = project(ReducerParams::make_angle2d(t), ds.x);
      return g_value(fit(fr.u, zt, em_cfg).u).g;
    };
    const double eps = 1e-3;
    const double slope = (g_at(theta_a + eps) - g_at(theta_a - eps)) /
                         (2.0 * eps);
    const double err = std::abs(ig.delta(0) - slope) /
                       std::max(std::abs(slope), 1e-6);
    c.require(err <= 1e-2, "implicit slope " + std::to_string(ig.delta(0)) +
                               " vs refit slope " + std::to_string(slope));
    c.require(ig.delta(0) * slope > 0.0, "implicit slope has the wrong sign");
  }
  return report(c, 6, seconds_since(t0));
}

// Solver-level guarantees: EM monotonicity, assignment optimality, binary
// format rejection of every magic-number corruption.
int criterion_7() {
  const auto t0 = std::chrono::steady_clock::now();
  Criterion c{"solver properties"};

  // EM never increases the NLL.
  {
    int violations = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const int k = 2 + trial % 3;
      const int d = 1 + trial % 2;
      MixtureParams u = testsupport::random_mixture(k, d, 80 + trial);
      const Matrix z = testsupport::random_points(30 + trial % 50, d,
                                                  180 + trial);
      double nll = mixture_nll(u, z);
      for (int step = 0; step < 5; ++step) {
        u = em_step(u, z);
        const double next = mixture_nll(u, z);
        if (next > nll + 1e-10) ++violations;
        nll = next;
      }
    }
    c.require(violations == 0, std::to_string(violations) +
                                   " monotonicity violations");
  }

  // Matched accuracy equals exhaustive permutation search.
  {
    int mismatches = 0;
    for (int trial = 0; trial < 50; ++trial) {
      Rng rng(2100 + trial);
      const int k = 2 + trial % 5;
      const int n = 20 + static_cast<int>(rng.uniform_int(40));
      std::vector<int> pred(n), truth(n);
      for (int i = 0; i < n; ++i) {
        pred[i] = static_cast<int>(rng.uniform_int(k));
        truth[i] = static_cast<int>(rng.uniform_int(k));
      }
      const double fast =
          labeling::hungarian_accuracy(pred, truth, k).accuracy;
      const double brute = testsupport::brute_force_accuracy(pred, truth, k);
      if (std::abs(fast - brute) > 1e-12) ++mismatches;
    }
    c.require(mismatches == 0, std::to_string(mismatches) +
                                   " assignment mismatches vs brute force");
  }

  // Byte-exact fixture plus the full single-byte magic corruption sweep.
  {
    TempDir tmp;
    const std::string images = tmp.file("images-idx3-ubyte");
    const std::string labels = tmp.file("labels-idx1-ubyte");
    std::vector<std::vector<unsigned char>> imgs = {
        std::vector<unsigned char>(4, 0), std::vector<unsigned char>(4, 255)};
    testsupport::write_idx_pair(images, labels, imgs, {3, 5}, 2, 2);

    const auto ds = datagen::load_idx(images, labels, std::nullopt,
                                      std::nullopt);
    c.require(ds.size() == 2 && ds.dim() == 4, "fixture shape wrong");
    c.require(ds.x.row(0).maxCoeff() == 0.0 && ds.x.row(1).minCoeff() == 1.0,
              "fixture pixel scaling wrong");
    c.require(ds.labels == std::vector<int>({3, 5}), "fixture labels wrong");

    const std::string img_bytes = read_file(images);
    const std::string lab_bytes = read_file(labels);
    int accepted = 0;
    for (int which = 0; which < 2; ++which) {
      const std::string& clean = which == 0 ? img_bytes : lab_bytes;
      for (int pos = 0; pos < 4; ++pos) {
        for (int mask = 1; mask < 256; ++mask) {
          std::string bad = clean;
          bad[static_cast<std::size_t>(pos)] =
              static_cast<char>(bad[static_cast<std::size_t>(pos)] ^ mask);
          const std::string path = tmp.file("corrupt");
          std::ofstream(path, std::ios::binary) << bad;
          try {
            if (which == 0)
              datagen::load_idx(path, labels, std::nullopt, std::nullopt);
            else
              datagen::load_idx(images, path, std::nullopt, std::nullopt);
            ++accepted;
          } catch (const FormatError&) {
          }
        }
      }
    }
    c.require(accepted == 0, std::to_string(accepted) +
                                 " corrupted magic numbers were accepted");
  }
  return report(c, 7, seconds_since(t0));
}

// The recorded runs must replay byte-for-byte at a different thread count,
// and the surface sweep likewise.
int criterion_8(const TempDir& tmp, const std::vector<RunArtifacts>& runs,
                const std::string& surface_config,
                const std::string& surface_csv) {
  const auto t0 = std::chrono::steady_clock::now();
  Criterion c{"determinism across thread counts"};

  c.require(runs.size() == 4, "expected 4 recorded runs, have " +
                                  std::to_string(runs.size()));
  for (std::size_t i = 0; i < runs.size(); ++i) {
    bilevel::GmoaConfig cfg = runs[i].cfg;
    cfg.n_threads = 4;
    const auto [state, traj] =
        bilevel::gmoa_run(runs[i].x, runs[i].theta0, {}, cfg);
    const std::string path = tmp.file("replay_" + std::to_string(i) + ".csv");
    bilevel::write_trajectory_csv(traj, path);
    c.require(read_file(path) == runs[i].traj_csv,
              "trajectory " + std::to_string(i) +
                  " differs between 1 and 4 threads");
  }

  if (!surface_config.empty()) {
    const std::string out_dir = tmp.file("surface_replay");
    const int rc = cli::run_cli({"surface", "--config", surface_config,
                                 "--out", out_dir, "--threads", "4"});
    c.require(rc == 0, "surface replay exited " + std::to_string(rc));
    if (rc == 0)
      c.require(read_file(out_dir + "/surface.csv") == surface_csv,
                "surface sweep differs between 1 and 4 threads");
  } else {
    c.require(false, "surface sweep unavailable for replay");
  }
  c.detail = "replayed " + std::to_string(runs.size()) +
             " trajectories + surface at 4 threads";
  return report(c, 8, seconds_since(t0));
}

}  // namespace

int main() {
  std::cout << "acceptance suite\n";
  TempDir tmp;
  std::vector<RunArtifacts> runs;
  std::string surface_config, surface_csv;

  int failures = 0;
  failures += criterion_1(tmp, &runs);
  failures += criterion_2(tmp, &runs);
  failures += criterion_3(tmp, &surface_config, &surface_csv);
  failures += criterion_4(tmp, &runs);
  failures += criterion_5(tmp, &runs);
  failures += criterion_6();
  failures += criterion_7();
  failures += criterion_8(tmp, runs, surface_config, surface_csv);

  std::cout << "acceptance: " << (8 - failures) << "/8 criteria passed\n";
  return failures;
}
