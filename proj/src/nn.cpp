#include "trustroute/nn.hpp"

#include <algorithm>
#include <cmath>

namespace trustroute {

Mlp::Mlp(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw DomainError("network needs input and output layers");
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] == 0 || sizes_[l + 1] == 0) throw DomainError("layer width must be positive");
    offsets_.push_back(total);
    total += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
  }
  params_.assign(total, 0.0);
}

void Mlp::init(Rng& rng) {
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in));
    double* w = params_.data() + offsets_[l];
    for (std::size_t k = 0; k < in * out; ++k) w[k] = rng.uniform(-limit, limit);
    std::fill(w + in * out, w + in * out + out, 0.0);
  }
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
  if (x.size() != input_size()) throw DomainError("observation width does not match the network");
  std::vector<double> a(x.begin(), x.end());
  std::vector<double> z;
  const std::size_t layers = sizes_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    const double* w = params_.data() + offsets_[l];
    const double* b = w + in * out;
    z.assign(out, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      double s = b[o];
      const double* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) s += row[i] * a[i];
      z[o] = (l + 1 < layers) ? std::max(s, 0.0) : s;
    }
    a.swap(z);
  }
  return a;
}

double Mlp::loss_and_gradient(std::span<const BatchItem> batch, std::vector<double>& grad) const {
  grad.assign(params_.size(), 0.0);
  if (batch.empty()) return 0.0;
  const std::size_t layers = sizes_.size() - 1;
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  std::vector<std::vector<double>> acts(layers + 1);
  std::vector<double> delta;
  std::vector<double> prev_delta;

  for (const auto& item : batch) {
    if (item.obs.size() != input_size()) throw DomainError("observation width does not match the network");
    if (item.action >= output_size()) throw DomainError("action index out of range");
    acts[0] = item.obs;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t in = sizes_[l];
      const std::size_t out = sizes_[l + 1];
      const double* w = params_.data() + offsets_[l];
      const double* b = w + in * out;
      auto& next = acts[l + 1];
      next.assign(out, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        double s = b[o];
        const double* row = w + o * in;
        for (std::size_t i = 0; i < in; ++i) s += row[i] * acts[l][i];
        next[o] = (l + 1 < layers) ? std::max(s, 0.0) : s;
      }
    }
    const double q = acts[layers][item.action];
    const double residual = q - item.target;
    total += residual * residual;

    delta.assign(output_size(), 0.0);
    delta[item.action] = 2.0 * residual * scale;
    for (std::size_t l = layers; l-- > 0;) {
      const std::size_t in = sizes_[l];
      const std::size_t out = sizes_[l + 1];
      const double* w = params_.data() + offsets_[l];
      double* gw = grad.data() + offsets_[l];
      double* gb = gw + in * out;
      const auto& a_in = acts[l];
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        gb[o] += d;
        double* grow = gw + o * in;
        for (std::size_t i = 0; i < in; ++i) grow[i] += d * a_in[i];
      }
      if (l == 0) break;
      prev_delta.assign(in, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        const double* row = w + o * in;
        for (std::size_t i = 0; i < in; ++i) prev_delta[i] += row[i] * d;
      }
      // ReLU derivative: hidden activations are zero exactly where inactive.
      for (std::size_t i = 0; i < in; ++i) {
        if (a_in[i] <= 0.0) prev_delta[i] = 0.0;
      }
      delta.swap(prev_delta);
    }
  }
  return total * scale;
}

double Mlp::loss(std::span<const BatchItem> batch) const {
  if (batch.empty()) return 0.0;
  double total = 0.0;
  for (const auto& item : batch) {
    const double r = forward(item.obs)[item.action] - item.target;
    total += r * r;
  }
  return total / static_cast<double>(batch.size());
}

std::vector<bool> Mlp::relu_pattern(std::span<const BatchItem> batch) const {
  std::vector<bool> out;
  const std::size_t layers = sizes_.size() - 1;
  std::vector<double> a, z;
  for (const auto& item : batch) {
    a = item.obs;
    for (std::size_t l = 0; l + 1 < layers; ++l) {
      const std::size_t in = sizes_[l];
      const std::size_t width = sizes_[l + 1];
      const double* w = params_.data() + offsets_[l];
      const double* b = w + in * width;
      z.assign(width, 0.0);
      for (std::size_t o = 0; o < width; ++o) {
        double s = b[o];
        const double* row = w + o * in;
        for (std::size_t i = 0; i < in; ++i) s += row[i] * a[i];
        out.push_back(s > 0.0);
        z[o] = std::max(s, 0.0);
      }
      a.swap(z);
    }
  }
  return out;
}

void Mlp::sgd_step(std::span<const double> grad, double lr) {
  if (grad.size() != params_.size()) throw DomainError("gradient size mismatch");
  for (std::size_t k = 0; k < params_.size(); ++k) params_[k] -= lr * grad[k];
}

double gradient_check(const Mlp& net, std::span<const BatchItem> batch, double step,
                      std::size_t* skipped) {
  std::vector<double> analytic;
  net.loss_and_gradient(batch, analytic);
  const auto pattern = net.relu_pattern(batch);
  Mlp probe = net;
  double worst = 0.0;
  if (skipped) *skipped = 0;
  for (std::size_t k = 0; k < probe.num_params(); ++k) {
    const double original = probe.params()[k];
    probe.params()[k] = original + step;
    const double up = probe.loss(batch);
    const bool flip_up = probe.relu_pattern(batch) != pattern;
    probe.params()[k] = original - step;
    const double down = probe.loss(batch);
    const bool flip_down = probe.relu_pattern(batch) != pattern;
    probe.params()[k] = original;
    if (flip_up || flip_down) {
      if (skipped) ++*skipped;
      continue;
    }
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max(std::abs(analytic[k]) + std::abs(numeric), 1e-7);
    worst = std::max(worst, std::abs(analytic[k] - numeric) / denom);
  }
  return worst;
}

}  // namespace trustroute
