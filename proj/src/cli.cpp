#include "nhlnn/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <optional>
#include <sstream>

#include <omp.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "nhlnn/dataset.hpp"
#include "nhlnn/evalrep.hpp"
#include "nhlnn/trainer.hpp"

namespace nhlnn::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

/// Bad input detected before any work starts; maps to kExitUsage.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path output_root() {
  const char* root = std::getenv(kOutputRootVariable);
  return root && *root ? fs::path(root) : fs::path(".");
}

fs::path resolve_out(const std::string& given, const std::string& fallback) {
  return given.empty() ? output_root() / fallback : fs::path(given);
}

std::vector<std::size_t> parse_hidden(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t v = 0;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (res.ec != std::errc() || res.ptr != item.data() + item.size() || v == 0) {
      throw UsageError("--hidden expects comma-separated positive widths, got '" + text + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) {
    throw UsageError("--hidden needs at least one width");
  }
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

System make_system(const std::string& name, const std::vector<std::string>& params) {
  try {
    return System::make(name, parse_params(params));
  } catch (const ArgumentError& e) {
    throw UsageError(e.what());
  }
}

lagnet::Mode make_mode(const std::string& name) {
  try {
    return lagnet::parse_mode(name);
  } catch (const ArgumentError& e) {
    throw UsageError(e.what());
  }
}

json params_json(const System& sys) {
  json p;
  for (auto key : SystemParams::kKeys) p[std::string(key)] = sys.params().get(key);
  return p;
}

/// Resolved settings of one command; replaying "command --k=v ..." reproduces the run.
struct Manifest {
  std::string command;
  json config = json::object();
  json inputs = json::object();
  json outputs = json::object();
  std::string started = utc_now();

  void set(const std::string& key, const json& value) { config[key] = value; }

  void write(const fs::path& path) const {
    std::vector<std::string> replay{command};
    for (const auto& [key, value] : config.items()) {
      if (value.is_boolean()) {
        if (value.get<bool>()) replay.push_back("--" + key);
      } else if (value.is_object()) {
        for (const auto& [k, v] : value.items()) replay.push_back("--" + key + "=" + k + "=" + fmt(v.get<double>()));
      } else if (value.is_number_float()) {
        replay.push_back("--" + key + "=" + fmt(value.get<double>()));
      } else if (value.is_string()) {
        replay.push_back("--" + key + "=" + value.get<std::string>());
      } else {
        replay.push_back("--" + key + "=" + value.dump());
      }
    }
    const json m{{"command", command},   {"config", config},       {"inputs", inputs},
                 {"outputs", outputs},   {"replay", replay},       {"version", NHLNN_VERSION},
                 {"started", started},   {"finished", utc_now()}};
    std::ofstream f(path);
    f << m.dump(2) << '\n';
    if (!f) {
      throw IoError("cannot write " + path.string());
    }
  }
};

fs::path sibling(const fs::path& file, const std::string& suffix) {
  return file.parent_path() / (file.stem().string() + suffix);
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(file.parent_path(), ec);
    if (ec) {
      throw IoError("cannot create " + file.parent_path().string() + ": " + ec.message());
    }
  }
}

// ---- subcommands --------------------------------------------------------------

struct GenArgs {
  std::string system;
  std::size_t trajectories = 500;
  std::size_t steps = 1000;
  double tspan = 15.0;
  std::uint64_t seed = 0;
  double rtol = 1e-8;
  double atol = 1e-8;
  double train_fraction = data::kDefaultTrainFraction;
  std::vector<std::string> params;
  std::string out;
};

void do_gen(const GenArgs& a, std::ostream& out) {
  const System sys = make_system(a.system, a.params);
  if (!(a.train_fraction > 0.0 && a.train_fraction < 1.0)) {
    throw UsageError("--train-fraction must lie strictly between 0 and 1");
  }
  data::GenerateOptions o;
  o.trajectories = a.trajectories;
  o.steps = a.steps;
  o.t_span = a.tspan;
  o.seed = a.seed;
  o.rtol = a.rtol;
  o.atol = a.atol;
  const fs::path dir = resolve_out(a.out, "data");
  Manifest m;
  m.command = "gen";
  m.set("system", sys.name());
  m.set("trajectories", a.trajectories);
  m.set("steps", a.steps);
  m.set("tspan", a.tspan);
  m.set("seed", a.seed);
  m.set("rtol", a.rtol);
  m.set("atol", a.atol);
  m.set("train-fraction", a.train_fraction);
  m.set("param", params_json(sys));
  m.set("out", dir.string());

  data::Dataset d = data::generate(sys, o);
  if (d.trajectories.size() >= 2) data::split(d, a.train_fraction);
  data::save(d, dir);
  m.outputs = {{"csv", (dir / "dataset.csv").string()}, {"sidecar", (dir / "dataset.json").string()}};
  m.write(dir / "manifest.json");
  out << "wrote " << d.sample_count() << " samples (" << d.trajectories.size() << " trajectories, " << d.train_count
      << " train / " << d.test().size() << " test) to " << dir.string() << "\n";
}

struct TrainArgs {
  std::string mode = "lnn";
  std::string data;
  std::size_t epochs = 300;
  double lr = 1e-3;
  double lr_final = 1e-4;
  std::size_t batch = 1000;
  std::uint64_t seed = 0;
  double jitter = 1e-6;
  double clip = 1.0;
  std::string hidden = "128,128";
  std::string out;
};

void do_train(const TrainArgs& a, std::ostream& out) {
  train::TrainConfig cfg;
  cfg.mode = make_mode(a.mode);
  cfg.epochs = a.epochs;
  cfg.lr0 = a.lr;
  cfg.lr_final = a.lr_final;
  cfg.batch_size = a.batch;
  cfg.seed = a.seed;
  cfg.jitter = a.jitter;
  cfg.clip_norm = a.clip;
  cfg.hidden = parse_hidden(a.hidden);
  if (a.data.empty()) {
    throw UsageError("train needs --data DIR (a directory written by gen)");
  }
  const fs::path params_path = resolve_out(a.out, "params_" + std::string(lagnet::to_string(cfg.mode)) + ".json");
  Manifest m;
  m.command = "train";
  m.set("mode", std::string(lagnet::to_string(cfg.mode)));
  m.set("data", a.data);
  m.set("epochs", a.epochs);
  m.set("lr", a.lr);
  m.set("lr-final", a.lr_final);
  m.set("batch", a.batch);
  m.set("seed", a.seed);
  m.set("jitter", a.jitter);
  m.set("clip", a.clip);
  m.set("hidden", join(cfg.hidden));
  m.set("out", params_path.string());

  const data::Dataset d = data::load(a.data);
  m.inputs = {{"data", a.data}, {"system", d.system.name()}, {"dataset_seed", d.seed}};
  const std::size_t total = cfg.epochs;
  const auto result = train::train(cfg, d, std::nullopt, [&](const train::EpochRecord& r) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %zu/%zu train %.6e test %.6e lr %.3e (%.1f s)\n", r.epoch + 1, total,
                  r.train_loss, r.test_loss, r.lr, r.wall_seconds);
    out << line << std::flush;
  });
  ensure_parent(params_path);
  lagnet::save(result.params, params_path);
  const fs::path history = sibling(params_path, "_history.csv");
  train::write_history_csv(result.history, history);
  m.outputs = {{"params", params_path.string()},
               {"history", history.string()},
               {"skipped_steps", result.history.skipped_steps}};
  m.write(sibling(params_path, "_manifest.json"));
  out << "wrote " << params_path.string() << " and " << history.string() << "\n";
}

struct EvalArgs {
  std::string system;
  std::string lnn;
  std::string lnn_nh;
  std::size_t n = 5;
  std::uint64_t seed = 1;
  double tspan = 15.0;
  std::size_t steps = 1000;
  double tol = 1e-6;
  double jitter = 1e-6;
  std::string data;
  std::vector<std::string> params;
  std::string out;
};

void do_eval(const EvalArgs& a, std::ostream& out) {
  const System sys = make_system(a.system, a.params);
  if (a.lnn.empty() || a.lnn_nh.empty()) {
    throw UsageError("eval needs --lnn and --lnn-nh parameter files");
  }
  eval::ReportOptions o;
  o.n_eval = a.n;
  o.seed = a.seed;
  o.t_span = a.tspan;
  o.n_out = a.steps;
  o.model_tol = a.tol;
  o.jitter = a.jitter;
  const fs::path dir = resolve_out(a.out, "eval");
  Manifest m;
  m.command = "eval";
  m.set("system", sys.name());
  m.set("lnn", a.lnn);
  m.set("lnn-nh", a.lnn_nh);
  m.set("n", a.n);
  m.set("seed", a.seed);
  m.set("tspan", a.tspan);
  m.set("steps", a.steps);
  m.set("tol", a.tol);
  m.set("jitter", a.jitter);
  if (!a.data.empty()) m.set("data", a.data);
  m.set("param", params_json(sys));
  m.set("out", dir.string());

  const lagnet::Params p_lnn = lagnet::load(a.lnn);
  const lagnet::Params p_nh = lagnet::load(a.lnn_nh);
  std::optional<data::Dataset> d;
  if (!a.data.empty()) d = data::load(a.data, &sys);
  const auto r = eval::report(p_lnn, p_nh, sys, o, d ? d->test() : std::span<const ode::Trajectory>{});
  eval::write_report(r, dir);
  m.inputs = {{"lnn", a.lnn}, {"lnn-nh", a.lnn_nh}};
  m.outputs = {{"report", (dir / "report.json").string()}};
  m.write(dir / "manifest.json");
  for (const auto& s : r.summary) {
    char line[200];
    std::snprintf(line, sizeof line, "%-6s mean |Phi| %.6e  mean rel. energy error %.6e  truncated %zu\n",
                  s.mode.c_str(), s.mean_abs_constraint, s.mean_rel_energy_error, s.truncated);
    out << line;
  }
  out << "wrote " << (dir / "report.json").string() << "\n";
}

struct SimArgs {
  std::string system;
  bool analytic = false;
  std::string params_file;
  std::string mode;
  std::string state;
  double tspan = 15.0;
  std::size_t steps = 1000;
  double tol = 1e-8;
  double jitter = -1.0;  // default: 0 for --analytic, 1e-6 for a network
  std::vector<std::string> params;
  std::string out;
};

int do_simulate(const SimArgs& a, std::ostream& out, std::ostream& err) {
  const System sys = make_system(a.system, a.params);
  if (a.analytic == !a.params_file.empty()) {
    throw UsageError("simulate needs exactly one of --analytic or --params FILE");
  }
  lagnet::Mode mode = lagnet::Mode::lnn_nh;
  if (!a.params_file.empty()) {
    if (a.mode.empty()) throw UsageError("--params needs --mode lnn|lnn-nh");
    mode = make_mode(a.mode);
  } else if (!a.mode.empty()) {
    mode = make_mode(a.mode);
  }
  State s0;
  try {
    s0 = parse_state(a.state, sys.dof());
    eval::require_admissible_start(sys, s0);
  } catch (const ArgumentError& e) {
    throw UsageError(e.what());
  }
  const double jitter = a.jitter >= 0.0 ? a.jitter : (a.analytic ? 0.0 : 1e-6);
  const fs::path path = resolve_out(a.out, "traj.csv");
  Manifest m;
  m.command = "simulate";
  m.set("system", sys.name());
  if (a.analytic) {
    m.set("analytic", true);
  } else {
    m.set("params", a.params_file);
  }
  m.set("mode", std::string(lagnet::to_string(mode)));
  m.set("state", a.state);
  m.set("tspan", a.tspan);
  m.set("steps", a.steps);
  m.set("tol", a.tol);
  m.set("jitter", jitter);
  m.set("param", params_json(sys));
  m.set("out", path.string());

  eval::RolloutOptions ro;
  ro.rtol = ro.atol = a.tol;
  ro.jitter = jitter;
  eval::Rollout r;
  if (a.analytic) {
    r = eval::rollout(AnalyticLagrangian{sys}, mode, sys, s0, a.tspan, a.steps, ro);
  } else {
    const lagnet::Params p = lagnet::load(a.params_file);
    if (p.input_dim() != 2 * sys.dof()) {
      throw DimensionMismatchError("parameters in " + a.params_file + " take " + std::to_string(p.input_dim()) +
                                   " inputs, system " + sys.name() + " needs " + std::to_string(2 * sys.dof()));
    }
    r = eval::rollout(lagnet::NetworkLagrangian(p.net), mode, sys, s0, a.tspan, a.steps, ro);
  }

  ensure_parent(path);
  std::ofstream f(path);
  std::string line = "t";
  for (std::size_t i = 0; i < sys.dof(); ++i) line += ",q" + std::to_string(i);
  for (std::size_t i = 0; i < sys.dof(); ++i) line += ",qd" + std::to_string(i);
  for (std::size_t a_i = 0; a_i < sys.rank(); ++a_i) line += ",phi" + std::to_string(a_i);
  f << line << ",energy\n";
  const auto& t = r.trajectory;
  for (std::size_t k = 0; k < t.size(); ++k) {
    line = fmt(t.times[k]);
    for (double v : t.states[k].q) line += "," + fmt(v);
    for (double v : t.states[k].qd) line += "," + fmt(v);
    for (double v : sys.constraint_values(t.states[k])) line += "," + fmt(v);
    f << line << "," << fmt(sys.energy(t.states[k])) << "\n";
  }
  if (!f) {
    throw IoError("cannot write " + path.string());
  }
  m.outputs = {{"trajectory", path.string()}, {"truncated", r.truncated}, {"reached", r.reached}};
  m.write(sibling(path, "_manifest.json"));
  if (r.truncated) {
    err << "error: rollout stopped at t = " << fmt(r.reached) << ": " << r.failure << " (partial trajectory in "
        << path.string() << ")\n";
    return kExitRuntime;
  }
  out << "wrote " << t.size() << " states to " << path.string() << "\n";
  return kExitOk;
}

/// Lines of --config files become "--key=value" arguments placed before the
/// command-line ones, so explicit flags win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  std::vector<std::string> injected;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      out.push_back(args[i]);
      continue;
    }
    for (const auto& [k, v] : read_config(path)) injected.push_back("--" + k + "=" + v);
  }
  auto command = std::find_if(out.begin(), out.end(), [](const std::string& a) {
    return a == "gen" || a == "train" || a == "eval" || a == "simulate";
  });
  if (command != out.end()) out.insert(command + 1, injected.begin(), injected.end());
  return out;
}

template <class T>
CLI::Option* scalar(CLI::App* app, const std::string& name, T& value, const std::string& help) {
  return app->add_option(name, value, help)->capture_default_str()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
}

}  // namespace

State parse_state(std::string_view text, std::size_t dof) {
  const std::size_t semi = text.find(';');
  if (semi == std::string_view::npos || text.find(';', semi + 1) != std::string_view::npos) {
    throw ArgumentError("state must look like \"q0,...;qd0,...\" with one ';', got \"" + std::string(text) + "\"");
  }
  auto parse_side = [&](std::string_view side, const char* what) {
    std::vector<double> v;
    std::size_t start = 0;
    while (start <= side.size()) {
      const std::size_t comma = std::min(side.find(',', start), side.size());
      std::string_view item = side.substr(start, comma - start);
      while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
      while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
      double x = 0.0;
      const auto res = std::from_chars(item.data(), item.data() + item.size(), x);
      if (item.empty() || res.ec != std::errc() || res.ptr != item.data() + item.size() || !std::isfinite(x)) {
        throw ArgumentError("state: malformed number '" + std::string(item) + "' in " + what);
      }
      v.push_back(x);
      start = comma + 1;
    }
    if (v.size() != dof) {
      throw ArgumentError("state: " + std::string(what) + " has " + std::to_string(v.size()) + " entries, expected " +
                          std::to_string(dof));
    }
    return v;
  };
  return State{parse_side(text.substr(0, semi), "positions"), parse_side(text.substr(semi + 1), "velocities")};
}

SystemParams parse_params(const std::vector<std::string>& pairs) {
  SystemParams p;
  for (const auto& kv : pairs) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ArgumentError("--param expects key=value, got '" + kv + "'");
    }
    const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
    double x = 0.0;
    const auto res = std::from_chars(value.data(), value.data() + value.size(), x);
    if (value.empty() || res.ec != std::errc() || res.ptr != value.data() + value.size()) {
      throw ArgumentError("--param " + key + ": malformed number '" + value + "'");
    }
    p.set(key, x);
  }
  return p;
}

std::vector<std::pair<std::string, std::string>> read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot read config file " + path.string());
  }
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(path.string() + ": expected key=value", line_no);
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lagrangian networks for nonholonomic systems"};
  app.name("nhlnn");
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP worker threads (0: runtime default)");

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a labelled dataset");
  g->add_option("--config", "key=value file; flags given here win");
  scalar(g, "--system", gen.system, "particle | drone | wheel")->required();
  scalar(g, "--trajectories", gen.trajectories, "Number of trajectories");
  scalar(g, "--steps", gen.steps, "Grid points per trajectory");
  scalar(g, "--tspan", gen.tspan, "Duration of each trajectory");
  scalar(g, "--seed", gen.seed, "Base seed");
  scalar(g, "--rtol", gen.rtol, "Integrator relative tolerance");
  scalar(g, "--atol", gen.atol, "Integrator absolute tolerance");
  scalar(g, "--train-fraction", gen.train_fraction, "Fraction of leading trajectories used for training");
  g->add_option("--param", gen.params, "System parameter override key=value (m, m_t, m_d, I, J, R)");
  scalar(g, "--out", gen.out, "Output directory (default $NHLNN_OUTPUT_ROOT/data)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a network Lagrangian");
  t->add_option("--config", "key=value file; flags given here win");
  scalar(t, "--mode", tr.mode, "lnn | lnn-nh");
  scalar(t, "--data", tr.data, "Dataset directory written by gen");
  scalar(t, "--epochs", tr.epochs, "Training epochs");
  scalar(t, "--lr", tr.lr, "Initial learning rate");
  scalar(t, "--lr-final", tr.lr_final, "Learning rate reached at the last epoch");
  scalar(t, "--batch", tr.batch, "Minibatch size (must divide the trajectory length)");
  scalar(t, "--seed", tr.seed, "Seed for initialization and shuffling");
  scalar(t, "--jitter", tr.jitter, "Diagonal added to the velocity Hessian");
  scalar(t, "--clip", tr.clip, "Largest minibatch gradient norm (0: no clipping)");
  scalar(t, "--hidden", tr.hidden, "Hidden layer widths");
  scalar(t, "--out", tr.out, "Parameter file (default $NHLNN_OUTPUT_ROOT/params_<mode>.json)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Roll out both trained models and write the report");
  e->add_option("--config", "key=value file; flags given here win");
  scalar(e, "--system", ev.system, "particle | drone | wheel")->required();
  scalar(e, "--lnn", ev.lnn, "Parameters trained with --mode lnn");
  scalar(e, "--lnn-nh", ev.lnn_nh, "Parameters trained with --mode lnn-nh");
  scalar(e, "--n", ev.n, "Number of evaluation trajectories");
  scalar(e, "--seed", ev.seed, "Seed of the evaluation initial states");
  scalar(e, "--tspan", ev.tspan, "Rollout duration");
  scalar(e, "--steps", ev.steps, "Grid points per rollout");
  scalar(e, "--tol", ev.tol, "Integrator tolerance of the model rollouts");
  scalar(e, "--jitter", ev.jitter, "Diagonal added to the learned velocity Hessian");
  scalar(e, "--data", ev.data, "Dataset whose test split feeds the scatter data");
  e->add_option("--param", ev.params, "System parameter override key=value");
  scalar(e, "--out", ev.out, "Report directory (default $NHLNN_OUTPUT_ROOT/eval)");

  SimArgs sim;
  auto* s = app.add_subcommand("simulate", "Integrate one trajectory");
  s->add_option("--config", "key=value file; flags given here win");
  scalar(s, "--system", sim.system, "particle | drone | wheel")->required();
  s->add_flag("--analytic", sim.analytic, "Use the true Lagrangian");
  scalar(s, "--params", sim.params_file, "Trained parameter file");
  scalar(s, "--mode", sim.mode, "lnn | lnn-nh (default lnn-nh with --analytic)");
  scalar(s, "--state", sim.state, "Initial state \"q0,...;qd0,...\"")->required();
  scalar(s, "--tspan", sim.tspan, "Duration");
  scalar(s, "--steps", sim.steps, "Grid points");
  scalar(s, "--tol", sim.tol, "Integrator tolerance");
  scalar(s, "--jitter", sim.jitter, "Diagonal added to the velocity Hessian (negative: automatic)");
  s->add_option("--param", sim.params, "System parameter override key=value");
  scalar(s, "--out", sim.out, "Output CSV (default $NHLNN_OUTPUT_ROOT/traj.csv)");

  std::vector<std::string> args;
  try {
    args = expand_config(raw_args);
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    if (ex.get_exit_code() == 0) {
      return app.exit(ex, out, err);
    }
    err << "error: " << ex.what() << " (see --help)\n";
    return kExitUsage;
  }
  if (threads < 0) {
    err << "error: --threads must be non-negative\n";
    return kExitUsage;
  }
  if (threads > 0) omp_set_num_threads(threads);

  try {
    if (g->parsed()) do_gen(gen, out);
    if (t->parsed()) do_train(tr, out);
    if (e->parsed()) do_eval(ev, out);
    if (s->parsed()) return do_simulate(sim, out, err);
    return kExitOk;
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace nhlnn::cli
