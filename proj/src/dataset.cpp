#include "nhlnn/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "nhlnn/rng.hpp"

namespace nhlnn::data {
namespace {

using nlohmann::json;

struct Generated {
  std::uint64_t seed = 0;
  ode::Trajectory trajectory;
};

Generated generate_one(const System& system, const GenerateOptions& opt, std::size_t index) {
  ode::IntegratorOptions io;
  io.rtol = opt.rtol;
  io.atol = opt.atol;
  io.record_accels = true;
  auto field = [&system](const State& s) { return system.true_accel(s); };
  const std::uint64_t base = derive_seed(opt.seed, index);
  std::string last_failure = "no attempt made";
  for (std::size_t attempt = 0; attempt < kResampleBudget; ++attempt) {
    const std::uint64_t seed = attempt == 0 ? base : derive_seed(base, attempt);
    Rng rng(seed);
    State s0;
    try {
      s0 = system.sample_initial_state(rng);
    } catch (const SamplingError& e) {
      throw GenerationError(e.what(), index);
    }
    auto result = ode::integrate_partial(field, s0, opt.t_span, opt.steps, io);
    if (!result.complete) {
      last_failure = result.failure;
      continue;
    }
    bool admissible = true;
    for (const State& s : result.trajectory.states) {
      if (!system.admissible(s)) {
        admissible = false;
        last_failure = "trajectory left the admissible region";
        break;
      }
    }
    if (!admissible) {
      continue;
    }
    // Labels from the closed form at the stored states.
    for (std::size_t k = 0; k < result.trajectory.size(); ++k) {
      result.trajectory.accels[k] = system.true_accel(result.trajectory.states[k]);
    }
    return Generated{seed, std::move(result.trajectory)};
  }
  throw GenerationError("resample budget exhausted, last failure: " + last_failure, index);
}

void append_double(std::string& out, double v) {
  char buf[32];
  const int len = std::snprintf(buf, sizeof buf, "%.17g", v);
  out.append(buf, static_cast<std::size_t>(len));
}

double parse_double(std::string_view field, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw FormatError("dataset: malformed number '" + std::string(field) + "'", line);
  }
  return v;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string header(std::size_t n) {
  std::string h = "traj,t";
  for (const char* prefix : {"q", "qd", "qdd"}) {
    for (std::size_t i = 0; i < n; ++i) h += "," + std::string(prefix) + std::to_string(i);
  }
  return h;
}

}  // namespace

std::size_t Dataset::sample_count() const {
  std::size_t count = 0;
  for (const auto& t : trajectories) count += t.size();
  return count;
}

Dataset generate(const System& system, const GenerateOptions& opt) {
  if (opt.trajectories < 1) {
    throw ArgumentError("generate: need at least one trajectory");
  }
  if (opt.steps < 2) {
    throw ArgumentError("generate: need at least two steps per trajectory");
  }
  if (!(opt.t_span > 0.0)) {
    throw ArgumentError("generate: t_span must be positive");
  }
  std::vector<Generated> out(opt.trajectories);
  std::vector<std::exception_ptr> errors(opt.trajectories);
  const auto count = static_cast<std::ptrdiff_t>(opt.trajectories);
#pragma omp parallel for schedule(dynamic) if (opt.parallel)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = generate_one(system, opt, static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  Dataset d;
  d.system = system;
  d.seed = opt.seed;
  d.t_span = opt.t_span;
  d.rtol = opt.rtol;
  d.atol = opt.atol;
  for (auto& g : out) {
    d.seeds.push_back(g.seed);
    d.trajectories.push_back(std::move(g.trajectory));
  }
  d.train_count = d.trajectories.size();
  if (d.trajectories.size() >= 2) {
    split(d, kDefaultTrainFraction);
  }
  return d;
}

std::size_t test_count(std::size_t n, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ArgumentError("train fraction must lie strictly between 0 and 1");
  }
  const auto rounded = static_cast<std::size_t>(std::llround((1.0 - train_fraction) * static_cast<double>(n)));
  return std::max<std::size_t>(1, rounded);
}

void split(Dataset& d, double train_fraction) {
  const std::size_t n = d.trajectories.size();
  const std::size_t test = test_count(n, train_fraction);
  if (test >= n) {
    throw ArgumentError("split of " + std::to_string(n) + " trajectories at fraction " +
                        std::to_string(train_fraction) + " leaves no training trajectory");
  }
  d.train_count = n - test;
}

void save(const Dataset& d, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create " + dir.string() + ": " + ec.message());
  }
  const std::size_t n = d.system.dof();
  {
    std::ofstream csv(dir / "dataset.csv", std::ios::binary);
    if (!csv) {
      throw IoError("cannot write " + (dir / "dataset.csv").string());
    }
    std::string line = header(n);
    line += '\n';
    csv << line;
    for (std::size_t i = 0; i < d.trajectories.size(); ++i) {
      const auto& t = d.trajectories[i];
      for (std::size_t k = 0; k < t.size(); ++k) {
        line = std::to_string(i);
        line += ',';
        append_double(line, t.times[k]);
        for (const auto* v : {&t.states[k].q, &t.states[k].qd, &t.accels[k]}) {
          for (double x : *v) {
            line += ',';
            append_double(line, x);
          }
        }
        line += '\n';
        csv << line;
      }
    }
    if (!csv) {
      throw IoError("write failed: " + (dir / "dataset.csv").string());
    }
  }
  json params;
  for (auto key : SystemParams::kKeys) params[std::string(key)] = d.system.params().get(key);
  const json meta{{"system", d.system.name()},
                  {"dof", n},
                  {"params", params},
                  {"seed", d.seed},
                  {"seeds", d.seeds},
                  {"trajectories", d.trajectories.size()},
                  {"steps", d.steps()},
                  {"t_span", d.t_span},
                  {"rtol", d.rtol},
                  {"atol", d.atol},
                  {"train_count", d.train_count}};
  std::ofstream js(dir / "dataset.json");
  if (!js) {
    throw IoError("cannot write " + (dir / "dataset.json").string());
  }
  js << meta.dump(1) << '\n';
}

Dataset load(const std::filesystem::path& dir, const System* expected) {
  std::ifstream js(dir / "dataset.json");
  if (!js) {
    throw IoError("cannot read " + (dir / "dataset.json").string());
  }
  Dataset d;
  std::size_t n_traj = 0;
  try {
    const json meta = json::parse(js);
    SystemParams params;
    for (const auto& [key, value] : meta.at("params").items()) params.set(key, value.get<double>());
    d.system = System::make(meta.at("system").get<std::string>(), params);
    d.seed = meta.at("seed").get<std::uint64_t>();
    d.seeds = meta.at("seeds").get<std::vector<std::uint64_t>>();
    d.t_span = meta.at("t_span").get<double>();
    d.rtol = meta.at("rtol").get<double>();
    d.atol = meta.at("atol").get<double>();
    d.train_count = meta.at("train_count").get<std::size_t>();
    n_traj = meta.at("trajectories").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset.json: ") + e.what(), 0);
  }
  const std::size_t n = d.system.dof();
  if (expected) {
    if (expected->dof() != n) {
      throw DimensionMismatchError("dataset has " + std::to_string(n) + " degrees of freedom but system " +
                                   expected->name() + " has " + std::to_string(expected->dof()));
    }
    if (expected->name() != d.system.name()) {
      throw ArgumentError("dataset was generated for " + d.system.name() + ", not " + expected->name());
    }
  }

  std::ifstream csv(dir / "dataset.csv", std::ios::binary);
  if (!csv) {
    throw IoError("cannot read " + (dir / "dataset.csv").string());
  }
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(csv, line)) {
    throw FormatError("dataset.csv: missing header", 1);
  }
  const std::size_t columns = split_fields(line).size();
  if (columns != 2 + 3 * n) {
    throw DimensionMismatchError("dataset.csv has " + std::to_string(columns) + " columns, expected " +
                                 std::to_string(2 + 3 * n) + " for " + d.system.name());
  }
  if (line != header(n)) {
    throw FormatError("dataset.csv: unexpected header", 1);
  }
  d.trajectories.assign(n_traj, {});
  while (std::getline(csv, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != columns) {
      throw FormatError("dataset.csv: expected " + std::to_string(columns) + " fields, found " +
                            std::to_string(fields.size()),
                        line_no);
    }
    std::size_t traj = 0;
    const auto res = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), traj);
    if (res.ec != std::errc() || traj >= n_traj) {
      throw FormatError("dataset.csv: bad trajectory index '" + std::string(fields[0]) + "'", line_no);
    }
    auto& t = d.trajectories[traj];
    t.times.push_back(parse_double(fields[1], line_no));
    State s{std::vector<double>(n), std::vector<double>(n)};
    std::vector<double> a(n);
    for (std::size_t i = 0; i < n; ++i) {
      s.q[i] = parse_double(fields[2 + i], line_no);
      s.qd[i] = parse_double(fields[2 + n + i], line_no);
      a[i] = parse_double(fields[2 + 2 * n + i], line_no);
    }
    t.states.push_back(std::move(s));
    t.accels.push_back(std::move(a));
  }
  if (d.seeds.size() != n_traj || d.train_count > n_traj) {
    throw FormatError("dataset.json: inconsistent trajectory metadata", 0);
  }
  for (std::size_t i = 0; i < n_traj; ++i) {
    if (d.trajectories[i].size() != d.trajectories.front().size() || d.trajectories[i].size() < 2) {
      throw FormatError("dataset.csv: trajectory " + std::to_string(i) + " has " +
                            std::to_string(d.trajectories[i].size()) + " rows, expected a common length",
                        line_no);
    }
  }
  return d;
}

bool operator==(const Dataset& a, const Dataset& b) {
  if (a.system.name() != b.system.name() || !(a.system.params() == b.system.params()) || a.seed != b.seed ||
      a.t_span != b.t_span || a.rtol != b.rtol || a.atol != b.atol || a.seeds != b.seeds ||
      a.train_count != b.train_count || a.trajectories.size() != b.trajectories.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.trajectories.size(); ++i) {
    const auto& x = a.trajectories[i];
    const auto& y = b.trajectories[i];
    if (x.times != y.times || x.states != y.states || x.accels != y.accels) return false;
  }
  return true;
}

}  // namespace nhlnn::data
