#include "mpsc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mpsc/qcqp.hpp"

namespace mpsc {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;
using nlohmann::ordered_json;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json matrix_to_json(const MatrixXd& M) {
  json rows = json::array();
  for (int i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(row);
  }
  return rows;
}

MatrixXd matrix_from_json(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw ConfigError(field + ": expected a nested array (matrix rows)");
  const std::size_t cols = j[0].size();
  MatrixXd M(j.size(), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols)
      throw ConfigError(field + ": ragged matrix rows");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[i][c].is_number()) throw ConfigError(field + ": non-numeric entry");
      M(i, c) = j[i][c].get<double>();
    }
  }
  return M;
}

VectorXd vector_from_json(const json& j, const std::string& field) {
  if (!j.is_array()) throw ConfigError(field + ": expected an array");
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(field + ": non-numeric entry");
    v(i) = j[i].get<double>();
  }
  return v;
}

VectorXd LearningSignal::eval(int k) const {
  switch (kind) {
    case Kind::sinusoid_sum: {
      VectorXd u = VectorXd::Zero(channels);
      double s = 0.0;
      for (std::size_t i = 0; i < amplitudes.size(); ++i) {
        double ph = i < phases.size() ? phases[i] : 0.0;
        s += amplitudes[i] * std::sin(angular_frequencies[i] * k + ph);
      }
      u(0) = s;
      return u;
    }
    case Kind::csv_replay: {
      if (replay.empty()) throw ConfigError("learning_signal: empty replay data");
      const int idx = std::min<int>(k, static_cast<int>(replay.size()) - 1);
      return replay[idx];
    }
    case Kind::constant:
      return value.size() > 0 ? value : VectorXd::Zero(channels);
  }
  return VectorXd::Zero(channels);
}

namespace {

const json* find(const json& j, const char* key) {
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

LinearModel parse_model(const json& j, const std::string& field) {
  const json* A = find(j, "A");
  const json* B = find(j, "B");
  if (!A || !B) throw ConfigError(field + ": requires A and B matrices");
  try {
    return LinearModel(matrix_from_json(*A, field + ".A"), matrix_from_json(*B, field + ".B"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(field + ": " + e.what());
  }
}

Polytope parse_polytope(const json& j, const std::string& field) {
  const json* A = find(j, "A");
  const json* b = find(j, "b");
  if (!A || !b) throw ConfigError(field + ": requires A matrix and b vector");
  try {
    return Polytope(matrix_from_json(*A, field + ".A"), vector_from_json(*b, field + ".b"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(field + ": " + e.what());
  }
}

LearningSignal parse_signal(const json& j, int channels) {
  LearningSignal sig;
  sig.channels = channels;
  std::string kind = j.value("kind", "constant");
  if (kind == "sinusoid_sum") {
    sig.kind = LearningSignal::Kind::sinusoid_sum;
    const json* amp = find(j, "amplitudes");
    const json* om = find(j, "angular_frequencies");
    if (!amp || !om)
      throw ConfigError("learning_signal: sinusoid_sum requires amplitudes and angular_frequencies");
    for (const auto& a : *amp) sig.amplitudes.push_back(a.get<double>());
    for (const auto& w : *om) sig.angular_frequencies.push_back(w.get<double>());
    if (const json* ph = find(j, "phases"))
      for (const auto& p : *ph) sig.phases.push_back(p.get<double>());
    if (sig.amplitudes.size() != sig.angular_frequencies.size())
      throw ConfigError("learning_signal: amplitudes and angular_frequencies lengths differ");
  } else if (kind == "csv_replay") {
    sig.kind = LearningSignal::Kind::csv_replay;
    const json* path = find(j, "path");
    if (!path) throw ConfigError("learning_signal: csv_replay requires a path");
    sig = signal_from_csv(path->get<std::string>(), channels);
  } else if (kind == "constant") {
    sig.kind = LearningSignal::Kind::constant;
    if (const json* v = find(j, "value"))
      sig.value = vector_from_json(*v, "learning_signal.value");
    else
      sig.value = VectorXd::Zero(channels);
    if (sig.value.size() != channels)
      throw ConfigError("learning_signal.value: dimension must match the input count");
  } else {
    throw ConfigError("learning_signal.kind: unknown kind '" + kind + "'");
  }
  return sig;
}

// Bounding interval of {x : Ax <= b} along each axis via support LPs.
std::pair<VectorXd, VectorXd> polytope_bounding_box(const Polytope& poly) {
  const int n = poly.dim();
  VectorXd lo(n), hi(n);
  for (int i = 0; i < n; ++i) {
    for (int sgn : {-1, +1}) {
      qcqp::Problem p;
      p.Q = MatrixXd::Zero(n, n);
      p.q = VectorXd::Zero(n);
      p.q(i) = -sgn;  // maximize sgn * x_i
      p.E = MatrixXd(0, n);
      p.d = VectorXd(0);
      p.G = poly.A;
      p.h = poly.b;
      qcqp::Solution s = qcqp::solve(p);
      if (!s.ok())
        throw ConfigError("sampling region appears unbounded or degenerate along axis " +
                          std::to_string(i));
      (sgn > 0 ? hi : lo)(i) = s.w(i);
    }
  }
  return {lo, hi};
}

VectorXd rejection_sample(const Polytope& poly, const VectorXd& lo, const VectorXd& hi,
                          Rng& rng) {
  for (int tries = 0; tries < 100000; ++tries) {
    VectorXd x(lo.size());
    for (int i = 0; i < x.size(); ++i) x(i) = rng.uniform(lo(i), hi(i));
    if (poly.contains(x, 1e-12)) return x;
  }
  throw ConfigError("rejection sampling failed (set volume too small within its box?)");
}

std::string csv_header(int n, int m) {
  std::ostringstream os;
  os << "k";
  for (int i = 1; i <= n; ++i) os << ",x" << i;
  if (m == 1)
    os << ",uL,u";
  else {
    for (int i = 1; i <= m; ++i) os << ",uL" << i;
    for (int i = 1; i <= m; ++i) os << ",u" << i;
  }
  os << ",interfered,feasible,branch,kinf,objective";
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open output file " + path.string());
  f << content;
}

// Euclidean projection onto a polytope (actuator saturation).
VectorXd project_to_polytope(const Polytope& set, const VectorXd& u) {
  if (set.contains(u, 0.0)) return u;
  const int m = set.dim();
  qcqp::Problem p;
  p.Q = 2.0 * MatrixXd::Identity(m, m);
  p.q = -2.0 * u;
  p.E = MatrixXd(0, m);
  p.d = VectorXd(0);
  p.G = set.A;
  p.h = set.b;
  qcqp::Solution s = qcqp::solve(p);
  if (!s.ok()) throw std::runtime_error("input projection failed");
  return s.w;
}

json polytope_json(const Polytope& p) {
  json j;
  j["A"] = matrix_to_json(p.A);
  j["b"] = json::array();
  for (int i = 0; i < p.b.size(); ++i) j["b"].push_back(p.b(i));
  return j;
}

json hull_json(const VertexHull& h) {
  json verts = json::array();
  for (const auto& v : h.vertices) {
    json row = json::array();
    for (int i = 0; i < v.size(); ++i) row.push_back(v(i));
    verts.push_back(row);
  }
  json j;
  j["vertices"] = verts;
  return j;
}

// --- SVG plotting -----------------------------------------------------------

struct SvgMapper {
  double x0, x1, y0, y1;  // world window
  double W = 640, H = 560, pad = 45;
  double sx(double x) const { return pad + (x - x0) / (x1 - x0) * (W - 2 * pad); }
  double sy(double y) const { return H - pad - (y - y0) / (y1 - y0) * (H - 2 * pad); }
};

std::string svg_poly_path(const std::vector<std::pair<double, double>>& pts,
                          const SvgMapper& mp, bool close) {
  std::ostringstream os;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    os << (i == 0 ? "M" : "L");
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g %.6g", mp.sx(pts[i].first), mp.sy(pts[i].second));
    os << buf;
  }
  if (close) os << "Z";
  return os.str();
}

std::vector<std::pair<double, double>> box_ring(const VectorXd& lo, const VectorXd& hi) {
  return {{lo(0), lo(1)}, {hi(0), lo(1)}, {hi(0), hi(1)}, {lo(0), hi(1)}};
}

std::vector<std::pair<double, double>> ellipse_ring(const Ellipsoid& om, int npts) {
  std::vector<std::pair<double, double>> ring;
  for (int i = 0; i < npts; ++i) {
    double th = 2.0 * M_PI * i / npts;
    VectorXd d(2);
    d << std::cos(th), std::sin(th);
    VectorXd e = om.shape_map() * d;
    ring.emplace_back(e(0), e(1));
  }
  return ring;
}

// Boundary of hull (+) omega by support points over sampled directions.
std::vector<std::pair<double, double>> sum_ring(const VertexHull& hull, const Ellipsoid& om,
                                                int npts) {
  std::vector<std::pair<double, double>> ring;
  MatrixXd V = hull.matrix();
  for (int i = 0; i < npts; ++i) {
    double th = 2.0 * M_PI * i / npts;
    VectorXd d(2);
    d << std::cos(th), std::sin(th);
    int best = 0;
    double bestv = -1e300;
    for (int j = 0; j < V.cols(); ++j) {
      double val = d.dot(V.col(j));
      if (val > bestv) {
        bestv = val;
        best = j;
      }
    }
    VectorXd pe = om.shape_map() * om.shape_map().transpose() * d;  // P^{-1} d
    double denom = std::sqrt(d.dot(pe));
    VectorXd e = denom > 0 ? (pe / denom).eval() : VectorXd::Zero(2);
    ring.emplace_back(V(0, best) + e(0), V(1, best) + e(1));
  }
  return ring;
}

std::string phase_svg(const ExperimentConfig& cfg, const Ellipsoid& omega,
                      const Polytope& x_bar, const VertexHull& terminal,
                      const ClosedLoopResult& loop, const Trajectory* baseline) {
  auto [lo, hi] = polytope_bounding_box(cfg.state_set);
  SvgMapper mp{lo(0) - 0.15, hi(0) + 0.15, lo(1) - 0.15, hi(1) + 0.15};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << mp.W << "\" height=\""
     << mp.H << "\" viewBox=\"0 0 " << mp.W << " " << mp.H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<path d=\"" << svg_poly_path(box_ring(lo, hi), mp, true)
     << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
  auto [tlo, thi] = polytope_bounding_box(x_bar);
  os << "<path d=\"" << svg_poly_path(box_ring(tlo, thi), mp, true)
     << "\" fill=\"none\" stroke=\"#888\" stroke-dasharray=\"6 4\"/>\n";
  os << "<path d=\"" << svg_poly_path(ellipse_ring(omega, 128), mp, true)
     << "\" fill=\"none\" stroke=\"#1f77b4\"/>\n";
  os << "<path d=\"" << svg_poly_path(sum_ring(terminal, omega, 128), mp, true)
     << "\" fill=\"none\" stroke=\"#2ca02c\"/>\n";
  if (baseline != nullptr) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& s : baseline->states) pts.emplace_back(s(0), s(1));
    os << "<path d=\"" << svg_poly_path(pts, mp, false)
       << "\" fill=\"none\" stroke=\"#555\" stroke-dasharray=\"2 3\"/>\n";
  }
  std::vector<std::pair<double, double>> pts;
  for (const auto& s : loop.trajectory.states) pts.emplace_back(s(0), s(1));
  os << "<path d=\"" << svg_poly_path(pts, mp, false)
     << "\" fill=\"none\" stroke=\"#222\" stroke-width=\"1.2\"/>\n";
  for (std::size_t k = 0; k < loop.decisions.size(); ++k) {
    if (loop.decisions[k].interfered) {
      const auto& s = loop.trajectory.states[k];
      char buf[96];
      std::snprintf(buf, sizeof(buf),
                    "<circle cx=\"%.6g\" cy=\"%.6g\" r=\"2.4\" fill=\"#d62728\"/>\n",
                    mp.sx(s(0)), mp.sy(s(1)));
      os << buf;
    }
  }
  const auto& s0 = loop.trajectory.states.front();
  char buf[96];
  std::snprintf(buf, sizeof(buf),
                "<circle cx=\"%.6g\" cy=\"%.6g\" r=\"4\" fill=\"none\" stroke=\"#222\"/>\n",
                mp.sx(s0(0)), mp.sy(s0(1)));
  os << buf;
  os << "</svg>\n";
  return os.str();
}

std::string input_svg(const ExperimentConfig& cfg, const ClosedLoopResult& loop) {
  const int steps = static_cast<int>(loop.decisions.size());
  double umax = 0.0;
  for (int k = 0; k < steps; ++k) {
    umax = std::max(umax, std::abs(loop.learning_inputs[k](0)));
    umax = std::max(umax, std::abs(loop.decisions[k].applied_input(0)));
  }
  auto [ulo, uhi] = polytope_bounding_box(cfg.input_set);
  umax = std::max(umax, std::max(std::abs(ulo(0)), std::abs(uhi(0)))) * 1.1 + 1e-9;
  SvgMapper mp{0.0, static_cast<double>(std::max(steps, 1)), -umax, umax};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << mp.W << "\" height=\""
     << mp.H << "\" viewBox=\"0 0 " << mp.W << " " << mp.H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (double bound : {uhi(0), ulo(0)}) {
    std::vector<std::pair<double, double>> line{{0.0, bound}, {double(steps), bound}};
    os << "<path d=\"" << svg_poly_path(line, mp, false)
       << "\" fill=\"none\" stroke=\"#bbb\" stroke-dasharray=\"4 4\"/>\n";
  }
  std::vector<std::pair<double, double>> ul, ua;
  for (int k = 0; k < steps; ++k) {
    ul.emplace_back(k, loop.learning_inputs[k](0));
    ua.emplace_back(k, loop.decisions[k].applied_input(0));
  }
  os << "<path d=\"" << svg_poly_path(ul, mp, false)
     << "\" fill=\"none\" stroke=\"#999\"/>\n";
  os << "<path d=\"" << svg_poly_path(ua, mp, false)
     << "\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.2\"/>\n";
  os << "</svg>\n";
  return os.str();
}

std::string trace_csv_content(const ExperimentConfig& cfg, const ClosedLoopResult& loop) {
  const int n = cfg.model.n(), m = cfg.model.m();
  std::ostringstream os;
  os << csv_header(n, m) << "\n";
  for (std::size_t k = 0; k < loop.decisions.size(); ++k) {
    const auto& dec = loop.decisions[k];
    os << k;
    for (int i = 0; i < n; ++i) os << "," << format_double(loop.trajectory.states[k](i));
    for (int i = 0; i < m; ++i) os << "," << format_double(loop.learning_inputs[k](i));
    for (int i = 0; i < m; ++i) os << "," << format_double(dec.applied_input(i));
    os << "," << (dec.interfered ? 1 : 0) << "," << (dec.feasible ? 1 : 0) << ","
       << branch_name(dec.branch) << "," << dec.k_inf << ","
       << format_double(std::isfinite(dec.objective) ? dec.objective : -1.0);
    os << "\n";
  }
  return os.str();
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  const json* model_j = find(j, "model");
  const json* plant_j = find(j, "plant");
  const json* xs_j = find(j, "state_constraints");
  const json* us_j = find(j, "input_constraints");
  const json* gain_j = find(j, "gain");
  if (!model_j) throw ConfigError("model: required");
  if (!xs_j) throw ConfigError("state_constraints: required");
  if (!us_j) throw ConfigError("input_constraints: required");
  if (!gain_j) throw ConfigError("gain: required");

  LinearModel model = parse_model(*model_j, "model");
  LinearModel plant = plant_j ? parse_model(*plant_j, "plant") : model;
  Polytope xs = parse_polytope(*xs_j, "state_constraints");
  Polytope us = parse_polytope(*us_j, "input_constraints");
  MatrixXd K = matrix_from_json(*gain_j, "gain");

  ExperimentConfig cfg(std::move(model), std::move(plant), std::move(xs), std::move(us),
                       std::move(K));
  if (!plant_j) cfg.load_warnings.push_back("plant: missing, defaulting to the belief model");

  if (cfg.state_set.dim() != cfg.model.n())
    throw ConfigError("state_constraints: dimension does not match the model");
  if (cfg.input_set.dim() != cfg.model.m())
    throw ConfigError("input_constraints: dimension does not match the model");
  if (cfg.gain_K.rows() != cfg.model.m() || cfg.gain_K.cols() != cfg.model.n())
    throw ConfigError("gain: must be an m x n matrix");
  if (cfg.plant.n() != cfg.model.n() || cfg.plant.m() != cfg.model.m())
    throw ConfigError("plant: dimensions do not match the model");

  if (const json* h = find(j, "horizon")) {
    cfg.horizon = h->get<int>();
    if (cfg.horizon < 1) throw ConfigError("horizon: must be >= 1");
  } else {
    cfg.load_warnings.push_back("horizon: missing, defaulting to 20");
    cfg.horizon = 20;
  }
  if (const json* s = find(j, "steps")) {
    cfg.steps = s->get<int>();
    if (cfg.steps < 1) throw ConfigError("steps: must be >= 1");
  } else {
    cfg.load_warnings.push_back("steps: missing, defaulting to 500");
    cfg.steps = 500;
  }
  if (const json* x0 = find(j, "initial_state")) {
    cfg.initial_state = vector_from_json(*x0, "initial_state");
    if (cfg.initial_state.size() != cfg.model.n())
      throw ConfigError("initial_state: dimension mismatch");
  } else {
    cfg.initial_state = VectorXd::Zero(cfg.model.n());
    cfg.load_warnings.push_back("initial_state: missing, defaulting to the origin");
  }
  cfg.mode = j.value("mode", std::string("algorithm1"));
  if (cfg.mode != "algorithm1" && cfg.mode != "recursive")
    throw ConfigError("mode: must be algorithm1 or recursive");
  cfg.seed = j.value("seed", 0ull);

  if (const json* sig = find(j, "learning_signal"))
    cfg.signal = parse_signal(*sig, cfg.model.m());
  else {
    cfg.signal.kind = LearningSignal::Kind::constant;
    cfg.signal.channels = cfg.model.m();
    cfg.signal.value = VectorXd::Zero(cfg.model.m());
    cfg.load_warnings.push_back("learning_signal: missing, defaulting to constant zero");
  }

  if (const json* sc = find(j, "scenario")) {
    cfg.scenario.count = sc->value("count", 600);
    cfg.scenario.include_vertex_states = sc->value("include_vertex_states", false);
    cfg.scenario.confidence_target = sc->value("confidence_target", 0.97);
    if (cfg.scenario.count < 1) throw ConfigError("scenario.count: must be >= 1");
  }
  if (const json* d = find(j, "design")) {
    cfg.design.tau_grid = d->value("tau_grid", 50);
    cfg.design.tau_min = d->value("tau_min", 0.01);
    cfg.design.tau_max = d->value("tau_max", 0.99);
    cfg.design.tau_refine_rounds = d->value("refine_rounds", 12);
    cfg.design.feas_tol = d->value("feas_tol", 1e-8);
  }
  if (const json* om = find(j, "omega")) {
    cfg.omega_P = matrix_from_json((*om)["P"], "omega.P");
    if (om->contains("tau")) cfg.omega_tau = (*om)["tau"].get<double>();
  }
  if (const json* t = find(j, "tolerances")) {
    cfg.tolerances.solver_residual = t->value("solver_residual", 1e-8);
    cfg.tolerances.solver_gap = t->value("solver_gap", 1e-10);
    cfg.tolerances.solver_max_iter = t->value("solver_max_iter", 60);
    cfg.tolerances.pass_tol = t->value("pass", 1e-10);
    cfg.tolerances.validate_tol = t->value("validate", 1e-7);
    cfg.tolerances.membership_tol = t->value("membership", 1e-7);
  }
  if (const json* nz = find(j, "noise")) {
    if (nz->contains("amplitude"))
      cfg.noise.amplitude = vector_from_json((*nz)["amplitude"], "noise.amplitude");
    if (cfg.noise.amplitude.size() > 0 && cfg.noise.amplitude.size() != cfg.model.n())
      throw ConfigError("noise.amplitude: dimension mismatch");
    if (cfg.noise.amplitude.size() > 0 && cfg.noise.amplitude.minCoeff() < 0)
      throw ConfigError("noise.amplitude: must be nonnegative");
  }
  if (const json* en = find(j, "enlargement")) {
    cfg.enlargement.enabled = en->value("enabled", false);
    cfg.enlargement.kind = en->value("kind", std::string("nominal"));
    if (cfg.enlargement.kind != "nominal" && cfg.enlargement.kind != "measured")
      throw ConfigError("enlargement.kind: must be nominal or measured");
    cfg.enlargement.cadence = en->value("cadence", 1);
    cfg.enlargement.vertex_warn_threshold = en->value("vertex_warn_threshold", 500);
    if (const json* snaps = find(*en, "snapshot_steps"))
      for (const auto& s : *snaps) cfg.enlargement.snapshot_steps.push_back(s.get<int>());
  }
  if (const json* out = find(j, "output")) cfg.output_dir = out->value("directory", "out");

  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

std::vector<Measurement> sample_measurements(const ExperimentConfig& cfg, int count,
                                             std::uint64_t seed) {
  auto [xlo, xhi] = polytope_bounding_box(cfg.state_set);
  auto [ulo, uhi] = polytope_bounding_box(cfg.input_set);
  Rng rng(seed);
  std::vector<Measurement> data;

  if (cfg.scenario.include_vertex_states) {
    const int n = cfg.model.n();
    if (n > 12) throw ConfigError("scenario.include_vertex_states: state dimension too large");
    VectorXd u0 = VectorXd::Zero(cfg.model.m());
    if (!cfg.input_set.contains(u0, 1e-12)) u0 = rejection_sample(cfg.input_set, ulo, uhi, rng);
    for (int mask = 0; mask < (1 << n); ++mask) {
      VectorXd x(n);
      for (int i = 0; i < n; ++i) x(i) = (mask >> i) & 1 ? xhi(i) : xlo(i);
      if (!cfg.state_set.contains(x, 1e-12)) continue;
      Measurement t;
      t.x = x;
      t.u = u0;
      t.y = cfg.plant.A * x + cfg.plant.B * u0;
      data.push_back(std::move(t));
    }
  }
  for (int i = 0; i < count; ++i) {
    Measurement t;
    t.x = rejection_sample(cfg.state_set, xlo, xhi, rng);
    t.u = rejection_sample(cfg.input_set, ulo, uhi, rng);
    t.y = cfg.plant.A * t.x + cfg.plant.B * t.u;
    data.push_back(std::move(t));
  }
  return data;
}

std::vector<Measurement> load_measurements_csv(const std::filesystem::path& path, int n,
                                               int m) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open data csv " + path.string());
  std::string header;
  if (!std::getline(f, header)) throw ConfigError("data csv is empty");
  std::vector<std::string> cols;
  {
    std::stringstream ss(header);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  auto col_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < cols.size(); ++i)
      if (cols[i] == name) return static_cast<int>(i);
    throw ConfigError("data csv: missing column " + name);
  };
  std::vector<int> xi(n), ui(m), yi(n);
  for (int i = 0; i < n; ++i) xi[i] = col_index("x" + std::to_string(i + 1));
  for (int i = 0; i < m; ++i)
    ui[i] = col_index(m == 1 ? std::string("u") : "u" + std::to_string(i + 1));
  for (int i = 0; i < n; ++i) yi[i] = col_index("y" + std::to_string(i + 1));

  std::vector<Measurement> data;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    Measurement t;
    t.x = VectorXd(n);
    t.u = VectorXd(m);
    t.y = VectorXd(n);
    try {
      for (int i = 0; i < n; ++i) t.x(i) = std::stod(cells.at(xi[i]));
      for (int i = 0; i < m; ++i) t.u(i) = std::stod(cells.at(ui[i]));
      for (int i = 0; i < n; ++i) t.y(i) = std::stod(cells.at(yi[i]));
    } catch (const std::exception&) {
      throw ConfigError("data csv: malformed row '" + line + "'");
    }
    data.push_back(std::move(t));
  }
  if (data.empty()) throw ConfigError("data csv has no rows");
  return data;
}

RpiDesign run_design(const ExperimentConfig& cfg) {
  std::vector<Measurement> data = sample_measurements(cfg, cfg.scenario.count, cfg.seed);
  ScenarioSet scen = build_scenarios(data, cfg.model);
  TubeGain gain(cfg.model, cfg.gain_K);
  return design_rpi(scen, cfg.model, gain, cfg.design, cfg.scenario.confidence_target);
}

RpiDesign run_design_from_data(const ExperimentConfig& cfg,
                               const std::vector<Measurement>& data) {
  ScenarioSet scen = build_scenarios(data, cfg.model);
  TubeGain gain(cfg.model, cfg.gain_K);
  return design_rpi(scen, cfg.model, gain, cfg.design, cfg.scenario.confidence_target);
}

DesignFile design_from_rpi(const RpiDesign& design) {
  DesignFile d;
  d.P = design.omega.P();
  d.tau = design.tau;
  d.worst_residual = design.worst_residual;
  d.bound = design.bound;
  d.log_det_P = design.log_det_P;
  return d;
}

ordered_json design_to_json(const DesignFile& d) {
  ordered_json j;
  j["P"] = matrix_to_json(d.P);
  j["tau"] = d.tau;
  j["worst_residual"] = d.worst_residual;
  j["N_s"] = d.bound.N_s;
  j["n_s"] = d.bound.n_s;
  j["epsilon"] = d.bound.epsilon;
  j["confidence"] = d.bound.confidence;
  j["log_det_P"] = d.log_det_P;
  return j;
}

DesignFile load_design(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open design file " + path.string());
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("design parse error in " + path.string() + ": " + e.what());
  }
  DesignFile d;
  if (!j.contains("P")) throw ConfigError("design: missing P");
  d.P = matrix_from_json(j["P"], "design.P");
  d.tau = j.value("tau", 0.0);
  d.worst_residual = j.value("worst_residual", 0.0);
  d.bound.N_s = j.value("N_s", 0);
  d.bound.n_s = j.value("n_s", 0);
  d.bound.epsilon = j.value("epsilon", 0.0);
  d.bound.confidence = j.value("confidence", 0.0);
  d.log_det_P = j.value("log_det_P", 0.0);
  return d;
}

LearningSignal signal_from_csv(const std::filesystem::path& path, int channels) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open replay csv " + path.string());
  std::string header;
  if (!std::getline(f, header)) throw ConfigError("replay csv is empty");
  std::vector<std::string> cols;
  {
    std::stringstream ss(header);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  std::vector<int> ul_cols;
  for (std::size_t i = 0; i < cols.size(); ++i)
    if (cols[i] == "uL" || cols[i].rfind("uL", 0) == 0) ul_cols.push_back(static_cast<int>(i));
  if (static_cast<int>(ul_cols.size()) != channels)
    throw ConfigError("replay csv: expected " + std::to_string(channels) + " uL column(s)");

  LearningSignal sig;
  sig.kind = LearningSignal::Kind::csv_replay;
  sig.channels = channels;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    VectorXd u(channels);
    for (int c = 0; c < channels; ++c) u(c) = std::stod(cells.at(ul_cols[c]));
    sig.replay.push_back(u);
  }
  if (sig.replay.empty()) throw ConfigError("replay csv has no data rows");
  return sig;
}

ExperimentArtifacts run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);

  TubeGain gain(cfg.model, cfg.gain_K);

  ordered_json omega_info;
  std::optional<RpiDesign> design;
  std::optional<Ellipsoid> omega;
  if (cfg.omega_P.has_value()) {
    omega.emplace(*cfg.omega_P);
    omega_info["source"] = "explicit";
    if (cfg.omega_tau.has_value()) omega_info["tau"] = *cfg.omega_tau;
  } else {
    design = run_design(cfg);
    omega.emplace(design->omega.P());
    omega_info["source"] = "designed";
    omega_info.update(design_to_json(design_from_rpi(*design)));
  }
  omega_info["P"] = matrix_to_json(omega->P());

  TightenResult xt = tighten_state(cfg.state_set, *omega);
  TightenResult ut = tighten_input(cfg.input_set, gain, *omega);
  if (xt.status == TightenStatus::empty)
    throw std::runtime_error("tightening emptied the state constraint set");
  if (ut.status == TightenStatus::empty)
    throw std::runtime_error("tightening emptied the input constraint set");

  auto [hull, ctrl] = init_trivial(*omega, gain);
  MpscConfig mc(cfg.model, gain, *omega, xt.poly, ut.poly, hull, cfg.horizon,
                cfg.tolerances);

  FilterOptions fo;
  fo.mode = cfg.mode == "recursive" ? FilterMode::recursive : FilterMode::algorithm1;
  if (cfg.enlargement.enabled)
    fo.enlargement = cfg.enlargement.kind == "measured" ? EnlargementKind::measured
                                                        : EnlargementKind::nominal;
  fo.enlargement_cadence = cfg.enlargement.cadence;
  fo.vertex_warn_threshold = cfg.enlargement.vertex_warn_threshold;
  FilterState state(mc, ctrl, fo);

  auto verdict = state.classify(cfg.initial_state);
  const char* verdict_name =
      verdict == FilterState::SafeSetVerdict::in_X_N
          ? "in_X_N"
          : (verdict == FilterState::SafeSetVerdict::in_terminal_only ? "in_terminal_only"
                                                                      : "outside");

  NoiseSpec noise;
  noise.amplitude = cfg.noise.amplitude;
  noise.seed = cfg.seed ^ 0x6e6f697365ull;
  ClosedLoopResult loop =
      run_closed_loop(state, cfg.plant, cfg.initial_state, [&](int k) { return cfg.signal.eval(k); },
                      cfg.steps, noise, &cfg.state_set, cfg.enlargement.snapshot_steps);

  // Safety accounting against the original constraint sets.
  const double report_tol = 1e-6;
  int state_viol = 0, input_viol = 0, interference = 0;
  double min_state_slack = std::numeric_limits<double>::infinity();
  double min_input_slack = std::numeric_limits<double>::infinity();
  for (const auto& x : loop.trajectory.states) {
    double slack = (cfg.state_set.b - cfg.state_set.A * x).minCoeff();
    min_state_slack = std::min(min_state_slack, slack);
    if (slack < -report_tol) ++state_viol;
  }
  int branch_cert = 0, branch_backup = 0, branch_term = 0, kinf_max = 0;
  for (const auto& d : loop.decisions) {
    double slack = (cfg.input_set.b - cfg.input_set.A * d.applied_input).minCoeff();
    min_input_slack = std::min(min_input_slack, slack);
    if (slack < -report_tol) ++input_viol;
    if (d.interfered) ++interference;
    kinf_max = std::max(kinf_max, d.k_inf);
    switch (d.branch) {
      case Branch::certified: ++branch_cert; break;
      case Branch::backup_tube: ++branch_backup; break;
      case Branch::terminal_controller: ++branch_term; break;
    }
  }

  ExperimentArtifacts art;
  art.loop = loop;

  ordered_json summary;
  summary["mode"] = cfg.mode;
  summary["steps"] = cfg.steps;
  summary["horizon"] = cfg.horizon;
  summary["seed"] = cfg.seed;
  summary["omega"] = omega_info;
  {
    ordered_json t;
    t["state_interior_slack"] = xt.interior_slack;
    t["input_interior_slack"] = ut.interior_slack;
    t["state_margins"] = matrix_to_json((cfg.state_set.b - xt.poly.b).transpose());
    t["input_margins"] = matrix_to_json((cfg.input_set.b - ut.poly.b).transpose());
    summary["tightening"] = t;
  }
  summary["initial_state_verdict"] = verdict_name;
  summary["interference"] = {{"count", interference},
                             {"fraction", static_cast<double>(interference) /
                                              std::max(1, cfg.steps)}};
  summary["branches"] = {{"certified", branch_cert},
                         {"backup_tube", branch_backup},
                         {"terminal_controller", branch_term}};
  summary["safety"] = {{"state_violations", state_viol},
                       {"input_violations", input_viol},
                       {"min_state_slack", min_state_slack},
                       {"min_input_slack", min_input_slack},
                       {"tolerance", report_tol}};
  summary["k_inf_max"] = kinf_max;
  {
    ordered_json en;
    en["enabled"] = cfg.enlargement.enabled;
    en["final_vertex_count"] = state.terminal_hull().count();
    ordered_json snaps = ordered_json::array();
    for (const auto& [k, h] : loop.hull_snapshots) {
      ordered_json s;
      s["k"] = k;
      s["vertex_count"] = h.count();
      if (h.dim() == 2) s["area_mc"] = hull_area_monte_carlo(h, 200000, 0x41524541ull);
      snaps.push_back(s);
    }
    en["snapshots"] = snaps;
    summary["enlargement"] = en;
  }
  summary["warnings"] = loop.warnings;
  for (const auto& w : cfg.load_warnings) summary["warnings"].push_back(w);

  art.summary = summary;
  art.trace_csv = fs::path(cfg.output_dir) / "trace.csv";
  art.summary_json = fs::path(cfg.output_dir) / "summary.json";
  art.sets_json = fs::path(cfg.output_dir) / "sets.json";
  write_text(art.trace_csv, trace_csv_content(cfg, loop));
  write_text(art.summary_json, summary.dump(2) + "\n");

  ordered_json sets;
  sets["state_constraints"] = polytope_json(cfg.state_set);
  sets["input_constraints"] = polytope_json(cfg.input_set);
  sets["state_tightened"] = polytope_json(xt.poly);
  sets["input_tightened"] = polytope_json(ut.poly);
  sets["omega"] = {{"P", matrix_to_json(omega->P())}};
  sets["terminal_hull"] = hull_json(state.terminal_hull());
  if (state.measured_sets().measured.has_value())
    sets["measured_hull"] = hull_json(*state.measured_sets().measured);
  {
    ordered_json snaps = ordered_json::array();
    for (const auto& [k, h] : loop.hull_snapshots) {
      ordered_json s;
      s["k"] = k;
      s["hull"] = hull_json(h);
      snaps.push_back(s);
    }
    sets["hull_snapshots"] = snaps;
  }
  write_text(art.sets_json, sets.dump(2) + "\n");

  if (cfg.model.n() == 2) {
    // short unfiltered prefix for the phase plot (saturated inputs, no noise)
    Trajectory unfiltered;
    {
      VectorXd x = cfg.initial_state;
      unfiltered.push_state(x);
      for (int k = 0; k < std::min(cfg.steps, 20); ++k) {
        VectorXd u = project_to_polytope(cfg.input_set, cfg.signal.eval(k));
        auto [next, w] = step_plant(cfg.plant, cfg.model, x, u);
        unfiltered.push_input(u);
        unfiltered.push_state(next);
        x = next;
        if (!cfg.state_set.contains(x, 0.0)) break;  // stop once it leaves
      }
    }
    art.phase_svg = fs::path(cfg.output_dir) / "phase.svg";
    write_text(art.phase_svg, phase_svg(cfg, *omega, xt.poly, state.terminal_hull(), loop,
                                        &unfiltered));
  }
  if (cfg.model.m() == 1) {
    art.input_svg = fs::path(cfg.output_dir) / "inputs.svg";
    write_text(art.input_svg, input_svg(cfg, loop));
  }
  return art;
}

BaselineResult run_baseline(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);

  Rng rng(cfg.seed ^ 0x6e6f697365ull);
  const bool noisy =
      cfg.noise.amplitude.size() > 0 && cfg.noise.amplitude.cwiseAbs().maxCoeff() > 0;

  BaselineResult out;
  VectorXd x = cfg.initial_state;
  out.trajectory.push_state(x);
  std::ostringstream csv;
  csv << csv_header(cfg.model.n(), cfg.model.m()) << "\n";
  for (int k = 0; k < cfg.steps; ++k) {
    VectorXd u_L = cfg.signal.eval(k);
    VectorXd u = project_to_polytope(cfg.input_set, u_L);
    VectorXd extra;
    if (noisy) {
      extra = VectorXd(cfg.noise.amplitude.size());
      for (int i = 0; i < extra.size(); ++i)
        extra(i) = rng.uniform(-cfg.noise.amplitude(i), cfg.noise.amplitude(i));
    }
    auto [next, w] = step_plant(cfg.plant, cfg.model, x, u, extra);
    csv << k;
    for (int i = 0; i < cfg.model.n(); ++i) csv << "," << format_double(x(i));
    for (int i = 0; i < cfg.model.m(); ++i) csv << "," << format_double(u_L(i));
    for (int i = 0; i < cfg.model.m(); ++i) csv << "," << format_double(u(i));
    csv << "," << ((u - u_L).norm() > cfg.tolerances.pass_tol ? 1 : 0) << ",0,baseline,0,0\n";
    out.trajectory.push_input(u);
    out.trajectory.push_state(next);
    x = next;
    if (out.first_violation_step < 0 && !cfg.state_set.contains(x, 1e-9))
      out.first_violation_step = k + 1;
  }

  out.trace_csv = fs::path(cfg.output_dir) / "baseline.csv";
  write_text(out.trace_csv, csv.str());

  ordered_json summary;
  summary["mode"] = "baseline";
  summary["steps"] = cfg.steps;
  summary["first_violation_step"] = out.first_violation_step;
  summary["violated"] = out.first_violation_step >= 0;
  out.summary = summary;
  write_text(fs::path(cfg.output_dir) / "baseline_summary.json", summary.dump(2) + "\n");
  return out;
}

DesignValidation validate_design(const ExperimentConfig& cfg, const DesignFile& design,
                                 int trials, std::uint64_t seed) {
  Ellipsoid omega(design.P);
  MatrixXd Acl = cfg.model.A + cfg.model.B * cfg.gain_K;
  auto [xlo, xhi] = polytope_bounding_box(cfg.state_set);
  auto [ulo, uhi] = polytope_bounding_box(cfg.input_set);
  Rng rng(seed);
  DesignValidation out;
  out.trials = trials;
  out.epsilon = design.bound.epsilon;
  for (int i = 0; i < trials; ++i) {
    VectorXd x = rejection_sample(cfg.state_set, xlo, xhi, rng);
    VectorXd u = rejection_sample(cfg.input_set, ulo, uhi, rng);
    VectorXd y = cfg.plant.A * x + cfg.plant.B * u;
    VectorXd w = y - cfg.model.A * x - cfg.model.B * u;
    if (lmi_residual(omega, design.tau, Acl, w) > 1e-12) ++out.violations;
  }
  out.fraction = static_cast<double>(out.violations) / std::max(1, trials);
  out.exceeds_epsilon = out.fraction > out.epsilon;
  return out;
}

ordered_json DesignValidation::to_json() const {
  ordered_json j;
  j["trials"] = trials;
  j["violations"] = violations;
  j["fraction"] = fraction;
  j["epsilon"] = epsilon;
  j["exceeds_epsilon"] = exceeds_epsilon;
  return j;
}

}  // namespace mpsc
