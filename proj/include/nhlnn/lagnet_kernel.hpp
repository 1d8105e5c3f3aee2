#pragma once

// Batched second-order jets of a softplus network, and the matching reverse
// sweep for parameter gradients. Each sample carries one value channel, first
// order channels for the input axes and v = (qd, 0), and second-order pair
// channels (qd_i, qd_j) for i <= j and (qd_i, v). Hidden layers are applied to
// all channels of a chunk of samples with one matrix product.

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "nhlnn/dynamics.hpp"
#include "nhlnn/lagnet.hpp"

namespace nhlnn::lagnet {

/// Samples per work unit in batched and parallel evaluation. Fixed so that
/// results do not depend on the number of threads.
inline constexpr std::size_t kChunkSize = 40;

/// Per-sample features: dL/dq (n), upper triangle of d2L/dqd2 row by row
/// (n(n+1)/2), then (d2L/dq dqd^T) qd (n).
std::size_t feature_count(std::size_t n);
dyn::LagrangianJet<double> jet_from_features(std::span<const double> features, std::size_t n);

class JetKernel {
 public:
  explicit JetKernel(std::size_t dof);
  ~JetKernel();
  JetKernel(JetKernel&&) noexcept;
  JetKernel& operator=(JetKernel&&) noexcept;

  std::size_t dof() const;
  std::size_t size() const;

  /// Propagates the jets of all states and keeps the activations for backward.
  void forward(const Network<double>& net, std::span<const State> states);

  /// Features of sample s from the last forward.
  std::span<const double> features(std::size_t s) const;
  double value(std::size_t s) const;

  /// adjoint holds size() x feature_count(dof) derivatives of a scalar
  /// objective with respect to the features; the parameter gradient is added
  /// to grad in flatten() layout.
  void backward(const Network<double>& net, std::span<const double> adjoint, std::span<double> grad);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Features of every state, count x feature_count(n), chunked by kChunkSize.
std::vector<double> batch_features(const Network<double>& net, std::span<const State> states, bool parallel);

}  // namespace nhlnn::lagnet
