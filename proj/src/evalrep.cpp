#include "nhlnn/evalrep.hpp"

#include <cstdio>
#include <exception>
#include <fstream>

#include "json.hpp"
#include "nhlnn/dataset.hpp"

namespace nhlnn::eval {
namespace {

using nlohmann::json;

constexpr const char* kModes[] = {"lnn", "lnn-nh", "true"};

void check_params(const lagnet::Params& p, const System& sys, const char* which) {
  lagnet::validate(p.net);
  if (p.input_dim() != 2 * sys.dof()) {
    throw DimensionMismatchError(std::string(which) + " parameters take " + std::to_string(p.input_dim()) +
                                 " inputs, system " + sys.name() + " needs " + std::to_string(2 * sys.dof()));
  }
  if (!p.system.empty() && p.system != sys.name()) {
    throw ArgumentError(std::string(which) + " parameters were trained on " + p.system + ", not " + sys.name());
  }
}

template <class L>
ModelSeries series(std::string mode, Rollout r, const L& lagrangian, const System& sys, double true_energy) {
  ModelSeries m;
  m.mode = std::move(mode);
  const auto& states = r.trajectory.states;
  const double model_e0 = states.empty() ? 0.0 : energy(lagrangian, states.front());
  double phi_sum = 0.0, err_sum = 0.0;
  for (const State& s : states) {
    auto phi = sys.constraint_values(s);
    double mean_phi = 0.0;
    for (double v : phi) {
      mean_phi += std::abs(v);
      m.max_abs_constraint = std::max(m.max_abs_constraint, std::abs(v));
    }
    phi_sum += phi.empty() ? 0.0 : mean_phi / static_cast<double>(phi.size());
    m.constraint.push_back(std::move(phi));
    const double ratio = sys.energy(s) / true_energy;
    m.energy_ratio.push_back(ratio);
    m.model_energy_ratio.push_back(energy(lagrangian, s) / model_e0);
    err_sum += std::abs(ratio - 1.0);
  }
  const double count = static_cast<double>(states.size());
  m.mean_abs_constraint = states.empty() ? std::nan("") : phi_sum / count;
  m.mean_rel_energy_error = states.empty() ? std::nan("") : err_sum / count;
  m.rollout = std::move(r);
  return m;
}

Scatter scatter_for(const char* mode, const Model& model, bool constrained, const System& sys,
                    std::span<const ode::Trajectory> source, const ReportOptions& opt) {
  Scatter sc;
  sc.mode = mode;
  std::size_t total = 0;
  for (const auto& t : source) total += t.size();
  const std::size_t stride = total <= opt.scatter_limit ? 1 : (total + opt.scatter_limit - 1) / opt.scatter_limit;
  const auto constraints = constrained ? dyn::linear_constraints_of(sys) : nullptr;
  std::size_t k = 0;
  for (const auto& t : source) {
    for (std::size_t i = 0; i < t.size(); ++i, ++k) {
      if (k % stride != 0) continue;
      const State& s = t.states[i];
      std::vector<double> pred;
      try {
        const auto jet = model.jet(s);
        if (constraints) {
          const auto terms = constraints->terms(s);
          pred = dyn::solve(jet, &terms, opt.jitter).accel;
        } else {
          pred = dyn::solve(jet, nullptr, opt.jitter).accel;
        }
      } catch (const Error&) {
        pred.assign(s.dof(), std::nan(""));
      }
      sc.truth.push_back(t.accels.empty() ? sys.true_accel(s) : t.accels[i]);
      sc.predicted.push_back(std::move(pred));
    }
  }
  return sc;
}

double scatter_mse(const Scatter& sc) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < sc.truth.size(); ++i) {
    for (std::size_t c = 0; c < sc.truth[i].size(); ++c) {
      const double e = sc.predicted[i][c] - sc.truth[i][c];
      sum += e * e;
      ++count;
    }
  }
  return count == 0 ? std::nan("") : sum / static_cast<double>(count);
}

json state_json(const State& s) { return json{{"q", s.q}, {"qd", s.qd}}; }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
}

}  // namespace

void require_admissible_start(const System& sys, const State& s0, double tol) {
  const auto phi = sys.constraint_values(s0);
  for (std::size_t a = 0; a < phi.size(); ++a) {
    if (!(std::abs(phi[a]) <= tol)) {
      throw ArgumentError("initial state violates constraint " + sys.constraint_description(a) + " (residual " +
                          fmt(phi[a]) + ")");
    }
  }
}

const ModeSummary& EvalReport::summary_for(std::string_view mode) const {
  for (const auto& s : summary) {
    if (s.mode == mode) return s;
  }
  throw ArgumentError("no summary for mode " + std::string(mode));
}

EvalReport report(const lagnet::Params& lnn, const lagnet::Params& lnn_nh, const System& sys,
                  const ReportOptions& opt, std::span<const ode::Trajectory> scatter_source) {
  check_params(lnn, sys, "lnn");
  check_params(lnn_nh, sys, "lnn-nh");
  return report(make_model(lagnet::NetworkLagrangian(lnn.net)), make_model(lagnet::NetworkLagrangian(lnn_nh.net)),
                sys, opt, scatter_source);
}

EvalReport report(const Model& l_lnn, const Model& l_nh, const System& sys, const ReportOptions& opt,
                  std::span<const ode::Trajectory> scatter_source) {
  if (opt.n_eval < 1) {
    throw ArgumentError("evaluation needs at least one trajectory");
  }

  data::GenerateOptions g;
  g.trajectories = opt.n_eval;
  g.steps = opt.n_out;
  g.t_span = opt.t_span;
  g.seed = opt.seed;
  g.rtol = opt.rtol;
  g.atol = opt.atol;
  g.parallel = opt.parallel;
  const data::Dataset truth = data::generate(sys, g);

  EvalReport r;
  r.system = sys.name();
  r.options = opt;
  r.trajectories.resize(opt.n_eval);
  for (std::size_t i = 0; i < opt.n_eval; ++i) {
    auto& group = r.trajectories[i];
    group.index = i;
    group.seed = truth.seeds[i];
    group.initial = truth.trajectories[i].states.front();
    group.true_energy = sys.energy(group.initial);
    group.models.resize(3);
  }

  const AnalyticLagrangian l_true{sys};
  RolloutOptions ro;
  ro.rtol = opt.model_tol;
  ro.atol = opt.model_tol;
  ro.jitter = opt.jitter;

  const auto tasks = static_cast<std::ptrdiff_t>(3 * opt.n_eval);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(tasks));
#pragma omp parallel for schedule(dynamic) if (opt.parallel)
  for (std::ptrdiff_t task = 0; task < tasks; ++task) {
    const std::size_t i = static_cast<std::size_t>(task) / 3;
    const std::size_t m = static_cast<std::size_t>(task) % 3;
    auto& group = r.trajectories[i];
    try {
      if (m == 0) {
        group.models[0] = series(kModes[0], rollout(l_lnn, Mode::lnn, sys, group.initial, opt.t_span, opt.n_out, ro),
                                 l_lnn, sys, group.true_energy);
      } else if (m == 1) {
        group.models[1] =
            series(kModes[1], rollout(l_nh, Mode::lnn_nh, sys, group.initial, opt.t_span, opt.n_out, ro), l_nh, sys,
                   group.true_energy);
      } else {
        Rollout gt{truth.trajectories[i], false, opt.t_span, ""};
        group.models[2] = series(kModes[2], std::move(gt), l_true, sys, group.true_energy);
      }
    } catch (...) {
      errors[static_cast<std::size_t>(task)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::span<const ode::Trajectory> source = scatter_source;
  r.scatter_source = "test split";
  if (source.empty()) {
    source = truth.trajectories;
    r.scatter_source = "evaluation trajectories";
  }
  r.scatter.push_back(scatter_for(kModes[0], l_lnn, false, sys, source, opt));
  r.scatter.push_back(scatter_for(kModes[1], l_nh, true, sys, source, opt));

  for (std::size_t m = 0; m < 3; ++m) {
    ModeSummary s;
    s.mode = kModes[m];
    for (const auto& group : r.trajectories) {
      s.mean_abs_constraint += group.models[m].mean_abs_constraint;
      s.mean_rel_energy_error += group.models[m].mean_rel_energy_error;
      s.truncated += group.models[m].rollout.truncated ? 1 : 0;
    }
    s.mean_abs_constraint /= static_cast<double>(opt.n_eval);
    s.mean_rel_energy_error /= static_cast<double>(opt.n_eval);
    s.scatter_mse = m < 2 ? scatter_mse(r.scatter[m]) : 0.0;
    r.summary.push_back(s);
  }
  return r;
}

std::string report_json(const EvalReport& r) {
  json j;
  j["system"] = r.system;
  j["options"] = {{"n_eval", r.options.n_eval}, {"t_span", r.options.t_span}, {"n_out", r.options.n_out},
                  {"seed", r.options.seed},     {"rtol", r.options.rtol},     {"atol", r.options.atol}, {"model_tol", r.options.model_tol},
                  {"jitter", r.options.jitter}, {"scatter_limit", r.options.scatter_limit}};
  j["scatter_source"] = r.scatter_source;
  json groups = json::array();
  for (const auto& g : r.trajectories) {
    json models = json::object();
    for (const auto& m : g.models) {
      models[m.mode] = {{"truncated", m.rollout.truncated},
                        {"reached", m.rollout.reached},
                        {"failure", m.rollout.failure},
                        {"points", m.rollout.trajectory.size()},
                        {"mean_abs_constraint", m.mean_abs_constraint},
                        {"max_abs_constraint", m.max_abs_constraint},
                        {"mean_rel_energy_error", m.mean_rel_energy_error},
                        {"final_energy_ratio", m.energy_ratio.empty() ? std::nan("") : m.energy_ratio.back()}};
    }
    groups.push_back({{"index", g.index},
                      {"seed", g.seed},
                      {"initial_state", state_json(g.initial)},
                      {"true_energy", g.true_energy},
                      {"models", models}});
  }
  j["trajectories"] = groups;
  json summary = json::object();
  for (const auto& s : r.summary) {
    summary[s.mode] = {{"mean_abs_constraint", s.mean_abs_constraint},
                       {"mean_rel_energy_error", s.mean_rel_energy_error},
                       {"truncated", s.truncated}};
    if (s.mode != "true") summary[s.mode]["scatter_mse"] = s.scatter_mse;
  }
  j["summary"] = summary;
  return j.dump(2) + "\n";
}

void write_report(const EvalReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create " + dir.string() + ": " + ec.message());
  }
  write_text(dir / "report.json", report_json(r));
  for (const auto& g : r.trajectories) {
    for (const auto& m : g.models) {
      const auto& t = m.rollout.trajectory;
      const std::string stem = "traj" + std::to_string(g.index) + "_" + m.mode;
      std::string c = "t";
      const std::size_t rank = m.constraint.empty() ? 0 : m.constraint.front().size();
      for (std::size_t a = 0; a < rank; ++a) c += ",phi" + std::to_string(a);
      c += '\n';
      std::string e = "t,energy_ratio,model_energy_ratio\n";
      for (std::size_t k = 0; k < t.size(); ++k) {
        c += fmt(t.times[k]);
        for (double v : m.constraint[k]) c += "," + fmt(v);
        c += '\n';
        e += fmt(t.times[k]) + "," + fmt(m.energy_ratio[k]) + "," + fmt(m.model_energy_ratio[k]) + "\n";
      }
      write_text(dir / (stem + "_constraint.csv"), c);
      write_text(dir / (stem + "_energy.csv"), e);
    }
  }
  for (const auto& sc : r.scatter) {
    const std::size_t n = sc.truth.empty() ? 0 : sc.truth.front().size();
    std::string s = "sample";
    for (std::size_t i = 0; i < n; ++i) s += ",true_qdd" + std::to_string(i);
    for (std::size_t i = 0; i < n; ++i) s += ",pred_qdd" + std::to_string(i);
    s += '\n';
    for (std::size_t k = 0; k < sc.truth.size(); ++k) {
      s += std::to_string(k);
      for (double v : sc.truth[k]) s += "," + fmt(v);
      for (double v : sc.predicted[k]) s += "," + fmt(v);
      s += '\n';
    }
    write_text(dir / ("scatter_" + sc.mode + ".csv"), s);
  }
}

}  // namespace nhlnn::eval
