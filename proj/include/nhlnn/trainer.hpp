#pragma once

// Acceleration-MSE training of a network Lagrangian, through the
// unconstrained formula (lnn) or the multiplier formula (lnn-nh).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "nhlnn/dataset.hpp"
#include "nhlnn/dynamics.hpp"
#include "nhlnn/lagnet.hpp"

namespace nhlnn::train {

using lagnet::Mode;

struct TrainConfig {
  Mode mode = Mode::lnn;
  std::size_t epochs = 300;
  std::size_t batch_size = 1000;
  double lr0 = 1e-3;
  double lr_final = 1e-4;  // exponential decay from lr0 over the epochs
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double jitter = 1e-6;
  /// Minibatch gradients with a larger Euclidean norm are rescaled to it; 0 disables.
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden = lagnet::kDefaultHidden;
  bool parallel = true;
};

/// Consecutive non-finite steps tolerated before DivergenceError.
inline constexpr std::size_t kMaxConsecutiveSkips = 10;

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double lr = 0.0;
  double wall_seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t skipped_steps = 0;
};

/// Writes epoch,train_loss,test_loss,lr.
void write_history_csv(const TrainHistory& h, const std::filesystem::path& path);

/// Flattened labelled samples with constraint terms cached per state.
struct Samples {
  std::size_t dof = 0;
  std::vector<State> states;
  std::vector<std::vector<double>> accels;
  std::vector<dyn::ConstraintTerms> terms;  // empty for lnn or unconstrained systems

  std::size_t size() const { return states.size(); }
  const dyn::ConstraintTerms* terms_at(std::size_t i) const { return terms.empty() ? nullptr : &terms[i]; }
};

Samples make_samples(std::span<const ode::Trajectory> trajectories, const System& system, Mode mode);

/// Mean over samples and coordinates of (pred - truth)^2.
double mse(std::span<const std::vector<double>> predicted, std::span<const std::vector<double>> truth);

/// Loss of an arbitrary Lagrangian (analytic or network) on the selected samples.
template <class L>
double loss_with(const L& lagrangian, const Samples& samples, std::span<const std::size_t> indices, double jitter) {
  if (indices.empty()) {
    throw ArgumentError("loss of an empty batch");
  }
  using dyn::lagrangian_jet;
  std::vector<std::vector<double>> pred, truth;
  for (std::size_t i : indices) {
    pred.push_back(dyn::solve(lagrangian_jet(lagrangian, samples.states[i]), samples.terms_at(i), jitter).accel);
    truth.push_back(samples.accels[i]);
  }
  return mse(pred, truth);
}

/// Batched network loss; NaN when any prediction is not finite or a solve fails.
double loss_batch(const lagnet::Network<double>& net, const Samples& samples, std::span<const std::size_t> indices,
                  double jitter, bool parallel);

/// Loss and its parameter gradient (flatten layout) by the jet kernel and its
/// reverse sweep. Chunks are reduced in index order, so the result is the same
/// for any number of threads.
double loss_and_gradient(const lagnet::Network<double>& net, const Samples& samples,
                         std::span<const std::size_t> indices, double jitter, std::vector<double>& grad,
                         bool parallel);

/// Same quantities through grad_nested over forward() (slow; for checks).
double reference_loss_and_gradient(const lagnet::Network<double>& net, const Samples& samples,
                                   std::span<const std::size_t> indices, double jitter, std::vector<double>& grad);

struct TrainResult {
  lagnet::Params params;
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains from init_params(2n, cfg.seed, cfg.hidden) unless initial is given.
TrainResult train(const TrainConfig& cfg, const data::Dataset& d,
                  std::optional<lagnet::Network<double>> initial = std::nullopt, const EpochCallback& on_epoch = {});

}  // namespace nhlnn::train
