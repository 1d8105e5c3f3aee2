#include "nhlnn/lagnet.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "nhlnn/lagnet_kernel.hpp"
#include "nhlnn/rng.hpp"

namespace nhlnn::lagnet {

using nlohmann::json;

std::string_view to_string(Mode mode) { return mode == Mode::lnn ? "lnn" : "lnn-nh"; }

Mode parse_mode(std::string_view text) {
  if (text == "lnn") return Mode::lnn;
  if (text == "lnn-nh") return Mode::lnn_nh;
  throw ArgumentError("unknown mode '" + std::string(text) + "' (expected lnn or lnn-nh)");
}

std::vector<std::size_t> Params::layout() const {
  std::vector<std::size_t> out{net.front().weight.cols()};
  for (const auto& layer : net) out.push_back(layer.weight.rows());
  return out;
}

Network<double> init_network(std::size_t input_dim, std::uint64_t seed, const std::vector<std::size_t>& hidden) {
  if (input_dim < 2) {
    throw ArgumentError("network input dimension must be at least 2");
  }
  std::vector<std::size_t> widths{input_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(1);
  Rng rng(seed);
  Network<double> net;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fan_in = widths[l], fan_out = widths[l + 1];
    if (fan_out == 0) {
      throw ArgumentError("hidden layer width must be positive");
    }
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    Layer<double> layer{Mat<double>(fan_out, fan_in), std::vector<double>(fan_out, 0.0)};
    for (double& w : layer.weight.entries()) w = rng.normal(0.0, sd);
    net.push_back(std::move(layer));
  }
  return net;
}

Params init_params(std::size_t input_dim, std::uint64_t seed, const std::vector<std::size_t>& hidden) {
  return Params{init_network(input_dim, seed, hidden), "", Mode::lnn, seed};
}

void validate(const Network<double>& net) {
  if (net.empty()) {
    throw ArgumentError("network has no layers");
  }
  for (std::size_t l = 0; l < net.size(); ++l) {
    const auto& layer = net[l];
    if (layer.bias.size() != layer.weight.rows()) {
      throw ArgumentError("layer " + std::to_string(l) + ": bias length differs from weight rows");
    }
    if (l > 0 && layer.weight.cols() != net[l - 1].weight.rows()) {
      throw ArgumentError("layer " + std::to_string(l) + ": input width does not chain with the previous layer");
    }
    for (double w : layer.weight.entries()) {
      if (!std::isfinite(w)) throw ArgumentError("layer " + std::to_string(l) + ": non-finite weight");
    }
    for (double b : layer.bias) {
      if (!std::isfinite(b)) throw ArgumentError("layer " + std::to_string(l) + ": non-finite bias");
    }
  }
  if (net.back().weight.rows() != 1) {
    throw ArgumentError("network output must be a single unit");
  }
}

std::size_t parameter_count(const Network<double>& net) {
  std::size_t count = 0;
  for (const auto& layer : net) count += layer.weight.entries().size() + layer.bias.size();
  return count;
}

std::vector<double> flatten(const Network<double>& net) {
  std::vector<double> theta;
  theta.reserve(parameter_count(net));
  for (const auto& layer : net) {
    theta.insert(theta.end(), layer.weight.entries().begin(), layer.weight.entries().end());
    theta.insert(theta.end(), layer.bias.begin(), layer.bias.end());
  }
  return theta;
}

double forward(const Params& p, const State& s) {
  const std::vector<double> x = s.packed();
  return forward<double, double>(p.net, std::span<const double>(x));
}

dyn::LagrangianJet<double> lagrangian_jet(const NetworkLagrangian& lagrangian, const State& s) {
  thread_local std::unique_ptr<JetKernel> kernel;
  if (!kernel || kernel->dof() != s.dof()) {
    kernel = std::make_unique<JetKernel>(s.dof());
  }
  kernel->forward(*lagrangian.net, std::span<const State>(&s, 1));
  return jet_from_features(kernel->features(0), s.dof());
}

std::string to_json(const Params& p) {
  json layers = json::array();
  for (const auto& layer : p.net) {
    layers.push_back({{"w", layer.weight.entries()}, {"b", layer.bias}});
  }
  json doc{{"layout", p.layout()},
           {"layers", std::move(layers)},
           {"seed", p.seed},
           {"system", p.system},
           {"mode", std::string(to_string(p.mode))}};
  return doc.dump(1);
}

Params from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("params: ") + e.what(), 0);
  }
  try {
    const auto layout = doc.at("layout").get<std::vector<std::size_t>>();
    const auto& layers = doc.at("layers");
    if (layout.size() < 2 || layers.size() + 1 != layout.size()) {
      throw FormatError("params: layout and layer count disagree", 0);
    }
    Params p;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto w = layers[l].at("w").get<std::vector<double>>();
      auto b = layers[l].at("b").get<std::vector<double>>();
      if (w.size() != layout[l] * layout[l + 1] || b.size() != layout[l + 1]) {
        throw FormatError("params: layer " + std::to_string(l) + " size does not match layout", 0);
      }
      p.net.push_back(Layer<double>{Mat<double>(layout[l + 1], layout[l], std::move(w)), std::move(b)});
    }
    validate(p.net);
    p.seed = doc.at("seed").get<std::uint64_t>();
    p.system = doc.at("system").get<std::string>();
    p.mode = parse_mode(doc.at("mode").get<std::string>());
    return p;
  } catch (const json::exception& e) {
    throw FormatError(std::string("params: ") + e.what(), 0);
  }
}

void save(const Params& p, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << to_json(p) << '\n';
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

Params load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot read " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

}  // namespace nhlnn::lagnet
