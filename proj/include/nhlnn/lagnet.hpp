#pragma once

// Fully connected softplus network L_theta(q, qd) -> scalar, with a linear
// output layer. Weights may be plain doubles or duals (parameter derivatives).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nhlnn/dual.hpp"
#include "nhlnn/dynamics.hpp"
#include "nhlnn/errors.hpp"
#include "nhlnn/matrix.hpp"
#include "nhlnn/systems.hpp"

namespace nhlnn::lagnet {

enum class Mode { lnn, lnn_nh };

/// "lnn" | "lnn-nh"
std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view text);

template <class W>
struct Layer {
  Mat<W> weight;  // out x in
  std::vector<W> bias;
};

template <class W>
using Network = std::vector<Layer<W>>;

inline const std::vector<std::size_t> kDefaultHidden{128, 128};

struct Params {
  Network<double> net;
  std::string system;
  Mode mode = Mode::lnn;
  std::uint64_t seed = 0;

  /// Widths input, hidden..., 1.
  std::vector<std::size_t> layout() const;
  std::size_t input_dim() const { return net.front().weight.cols(); }
};

/// Zero-mean normal weights with variance 2 / (fan_in + fan_out), zero biases.
Network<double> init_network(std::size_t input_dim, std::uint64_t seed,
                             const std::vector<std::size_t>& hidden = kDefaultHidden);
Params init_params(std::size_t input_dim, std::uint64_t seed,
                   const std::vector<std::size_t>& hidden = kDefaultHidden);

/// Checks shape chaining and finiteness; throws ArgumentError.
void validate(const Network<double>& net);

std::size_t parameter_count(const Network<double>& net);

/// Per layer: weights row-major, then bias.
std::vector<double> flatten(const Network<double>& net);

template <class W>
Network<W> unflatten(const Network<double>& shape, std::span<const W> theta) {
  Network<W> out;
  out.reserve(shape.size());
  std::size_t k = 0;
  for (const auto& layer : shape) {
    Layer<W> l{Mat<W>(layer.weight.rows(), layer.weight.cols()), std::vector<W>(layer.bias.size())};
    const std::size_t need = layer.weight.entries().size() + layer.bias.size();
    if (k + need > theta.size()) {
      throw DimensionMismatchError("parameter vector is shorter than the network layout");
    }
    for (auto& w : l.weight.entries()) w = theta[k++];
    for (auto& b : l.bias) b = theta[k++];
    out.push_back(std::move(l));
  }
  if (k != theta.size()) {
    throw DimensionMismatchError("parameter vector is longer than the network layout");
  }
  return out;
}

/// h = softplus(W h + b) for hidden layers, linear output.
template <class S, class W>
S forward(const Network<W>& net, std::span<const S> x) {
  if (net.empty() || x.size() != net.front().weight.cols()) {
    throw DimensionMismatchError("forward: input length " + std::to_string(x.size()) + " does not match layout");
  }
  std::vector<S> h(x.begin(), x.end());
  for (std::size_t l = 0; l < net.size(); ++l) {
    const auto& layer = net[l];
    const bool last = l + 1 == net.size();
    std::vector<S> z(layer.weight.rows());
    for (std::size_t k = 0; k < z.size(); ++k) {
      S acc(layer.bias[k]);
      for (std::size_t j = 0; j < h.size(); ++j) {
        acc += layer.weight(k, j) * h[j];
      }
      z[k] = last ? std::move(acc) : ad::softplus(acc);
    }
    h = std::move(z);
  }
  return h[0];
}

double forward(const Params& p, const State& s);

/// Generic scalar field over a network with weights of type W (AD reference path).
template <class W>
struct NetworkField {
  const Network<W>* net;

  template <class S>
  S operator()(std::span<const S> x) const {
    return forward<S, W>(*net, x);
  }
};

/// A learned Lagrangian. Generic evaluation goes through forward; the jet used
/// by the dynamics comes from the batched kernel (see lagrangian_jet below).
struct NetworkLagrangian {
  std::shared_ptr<const Network<double>> net;

  explicit NetworkLagrangian(Network<double> n) : net(std::make_shared<const Network<double>>(std::move(n))) {}

  template <class S>
  S operator()(std::span<const S> x) const {
    return forward<S, double>(*net, x);
  }
};

/// Found by argument-dependent lookup from the dynamics operations.
dyn::LagrangianJet<double> lagrangian_jet(const NetworkLagrangian& lagrangian, const State& s);

// ---- persistence -----------------------------------------------------------

std::string to_json(const Params& p);
Params from_json(std::string_view text);
void save(const Params& p, const std::filesystem::path& path);
Params load(const std::filesystem::path& path);

}  // namespace nhlnn::lagnet
