#pragma once

// Labelled trajectories of a benchmark system: generation, train/test split
// at trajectory granularity, and CSV + JSON sidecar persistence.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "nhlnn/odeint.hpp"
#include "nhlnn/systems.hpp"

namespace nhlnn::data {

struct GenerateOptions {
  std::size_t trajectories = 500;
  std::size_t steps = 1000;
  double t_span = 15.0;
  std::uint64_t seed = 0;
  double rtol = 1e-8;
  double atol = 1e-8;
  bool parallel = true;
};

/// Attempts per trajectory before generation gives up.
inline constexpr std::size_t kResampleBudget = 100;
inline constexpr double kDefaultTrainFraction = 0.88;

struct Dataset {
  System system = System::make("particle");
  std::uint64_t seed = 0;
  double t_span = 0.0;
  double rtol = 0.0;
  double atol = 0.0;
  std::vector<std::uint64_t> seeds;  // sampler seed actually used per trajectory
  std::vector<ode::Trajectory> trajectories;
  std::size_t train_count = 0;  // trajectories [0, train_count) train, the rest test

  std::size_t steps() const { return trajectories.empty() ? 0 : trajectories.front().size(); }
  std::size_t sample_count() const;
  std::span<const ode::Trajectory> train() const { return {trajectories.data(), train_count}; }
  std::span<const ode::Trajectory> test() const {
    return {trajectories.data() + train_count, trajectories.size() - train_count};
  }
};

/// Trajectory i is sampled with derive_seed(seed, i); a trajectory that fails
/// to integrate or leaves the admissible region is resampled with a seed
/// derived from that one. Accelerations are the closed-form labels at the grid
/// states. The result does not depend on the number of threads.
Dataset generate(const System& system, const GenerateOptions& options);

/// max(1, round((1 - f) n)) trailing trajectories form the test set.
std::size_t test_count(std::size_t n, double train_fraction);

/// Sets the train/test boundary; ArgumentError when either side would be empty.
void split(Dataset& d, double train_fraction);

/// Writes dir/dataset.csv and dir/dataset.json.
void save(const Dataset& d, const std::filesystem::path& dir);

/// Reads a dataset written by save. With expected != nullptr the stored
/// dimensions are checked against that system.
Dataset load(const std::filesystem::path& dir, const System* expected = nullptr);

bool operator==(const Dataset& a, const Dataset& b);

}  // namespace nhlnn::data
