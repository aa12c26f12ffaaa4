#pragma once

// Small fully-connected value network with rectified-linear hidden layers and
// a linear output, stored as one flat parameter vector.

#include <span>
#include <vector>

#include "trustroute/core.hpp"

namespace trustroute {

struct BatchItem {
  std::vector<double> obs;
  std::size_t action = 0;
  double target = 0.0;
};

class Mlp {
 public:
  Mlp() = default;
  // sizes = {input, hidden..., output}; at least two entries.
  explicit Mlp(std::vector<std::size_t> sizes);

  // He-uniform weights, zero biases.
  void init(Rng& rng);

  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  std::size_t num_params() const { return params_.size(); }
  const std::vector<std::size_t>& sizes() const { return sizes_; }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  std::vector<double> forward(std::span<const double> x) const;

  // L = mean over the batch of (target - Q(obs, action))^2 and its gradient.
  double loss_and_gradient(std::span<const BatchItem> batch, std::vector<double>& grad) const;
  double loss(std::span<const BatchItem> batch) const;

  // On/off state of every hidden unit for every batch item, in order.
  std::vector<bool> relu_pattern(std::span<const BatchItem> batch) const;

  // theta <- theta - lr * grad
  void sgd_step(std::span<const double> grad, double lr);

 private:
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }

  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;  // start of each layer's W (row-major out x in), then b
  std::vector<double> params_;
};

// Max relative error between the analytic gradient and central differences.
// A parameter whose +-step probe flips a hidden unit straddles a kink where the
// loss has no derivative; it is left out and counted in `skipped`.
double gradient_check(const Mlp& net, std::span<const BatchItem> batch, double step = 1e-5,
                      std::size_t* skipped = nullptr);

}  // namespace trustroute
