#pragma once

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ranknet/nn.hpp"
#include "ranknet/random.hpp"

namespace ranknet::testing {

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.values()) v = scale * (2.0 * uniform01(rng) - 1.0);
  return m;
}

// A stacked LSTM + Gaussian head over a random sequence; used by the
// finite-difference checks.
struct ToyModel {
  std::vector<LstmLayerParams> layers;
  GaussianHeadParams head;
  std::vector<Matrix> inputs;
  std::vector<std::vector<double>> targets, weights;

  /// Independent scalar forward of the same model in extended precision.
  long double loss_extended() const {
    using ld = long double;
    auto sig = [](ld x) { return 1.0L / (1.0L + std::exp(-x)); };
    const std::size_t batch = inputs.front().rows();
    ld total = 0.0L;
    for (std::size_t b = 0; b < batch; ++b) {
      std::vector<std::vector<ld>> h(layers.size()), c(layers.size());
      for (std::size_t l = 0; l < layers.size(); ++l) {
        h[l].assign(layers[l].hidden(), 0.0L);
        c[l].assign(layers[l].hidden(), 0.0L);
      }
      for (std::size_t t = 0; t < inputs.size(); ++t) {
        std::vector<ld> x(inputs[t].cols());
        for (std::size_t j = 0; j < x.size(); ++j) x[j] = inputs[t](b, j);
        for (std::size_t l = 0; l < layers.size(); ++l) {
          const auto& p = layers[l];
          const std::size_t H = p.hidden();
          std::vector<ld> pre(4 * H);
          for (std::size_t k = 0; k < 4 * H; ++k) {
            ld v = p.b(0, k);
            for (std::size_t j = 0; j < x.size(); ++j) v += x[j] * p.w_x(j, k);
            for (std::size_t j = 0; j < H; ++j) v += h[l][j] * p.w_h(j, k);
            pre[k] = v;
          }
          for (std::size_t j = 0; j < H; ++j) {
            const ld i = sig(pre[j]), f = sig(pre[H + j]), g = std::tanh(pre[2 * H + j]),
                     o = sig(pre[3 * H + j]);
            c[l][j] = f * c[l][j] + i * g;
            h[l][j] = o * std::tanh(c[l][j]);
          }
          x = h[l];
        }
        ld mu = head.b_mu(0, 0), pre_sigma = head.b_sigma(0, 0);
        for (std::size_t j = 0; j < x.size(); ++j) {
          mu += x[j] * head.w_mu(j, 0);
          pre_sigma += x[j] * head.w_sigma(j, 0);
        }
        const ld sigma = std::max(pre_sigma, 0.0L) + std::log1p(std::exp(-std::abs(pre_sigma)));
        const ld r = (static_cast<ld>(targets[t][b]) - mu) / sigma;
        total += weights[t][b] * (std::log(sigma) + 0.5L * r * r);
      }
    }
    return total;
  }

  /// Loss relative to the current parameters, for finite differences: the
  /// difference keeps full precision after rounding to double.
  std::function<double()> fd_loss() const {
    const long double base = loss_extended();
    return [this, base] { return static_cast<double>(loss_extended() - base); };
  }

  void gradients(std::vector<LstmLayerParams>& g_layers, GaussianHeadParams& g_head) const {
    const auto run = lstm_stack_forward(layers, inputs, {}, true);
    std::vector<Matrix> d_top;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      const auto out = gaussian_head(head, run.top_h[t]);
      const std::size_t b = out.mu.rows();
      Matrix d_mu(b, 1), d_sigma(b, 1);
      gaussian_nll_grad(targets[t], out.mu.values(), out.sigma.values(), weights[t],
                        d_mu.values(), d_sigma.values());
      d_top.push_back(gaussian_head_backward(head, run.top_h[t], out, d_mu, d_sigma, g_head));
    }
    lstm_stack_backward(layers, run, d_top, g_layers);
  }
};

inline ToyModel make_toy(std::uint64_t seed, std::size_t batch, std::size_t steps,
                         std::size_t input, std::size_t hidden, double weight_scale = 1.0) {
  Rng rng(seed);
  ToyModel m;
  m.layers.push_back(LstmLayerParams::init(input, hidden, rng));
  m.layers.push_back(LstmLayerParams::init(hidden, hidden, rng));
  m.head = GaussianHeadParams::init(hidden, rng);
  for (auto& l : m.layers) {
    for (double& v : l.b.values()) v += 0.3 * (2 * uniform01(rng) - 1);
  }
  for (std::size_t t = 0; t < steps; ++t) {
    m.inputs.push_back(random_matrix(batch, input, rng));
    std::vector<double> z(batch), w(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      z[b] = 2 * uniform01(rng) - 1;
      w[b] = weight_scale * (uniform01(rng) < 0.3 ? 9.0 : 1.0);
    }
    m.targets.push_back(z);
    m.weights.push_back(w);
  }
  return m;
}

}  // namespace ranknet::testing
