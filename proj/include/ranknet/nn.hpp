#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ranknet/random.hpp"
#include "ranknet/tensor.hpp"

namespace ranknet {

/// A named reference to one learnable array. Gradient sets are enumerated in
/// the same order as the parameters they mirror.
struct NamedParam {
  std::string name;
  Matrix* value;
};
using ParamRefs = std::vector<NamedParam>;

std::size_t parameter_count(const ParamRefs& refs);

/// Xavier-uniform initialisation with limit sqrt(6 / (rows + cols)).
Matrix xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng);

// ---------------------------------------------------------------------------
// LSTM

/// Weights of one LSTM layer. Gate blocks along the 4·hidden axis are ordered
/// input, forget, cell-candidate, output.
struct LstmLayerParams {
  Matrix w_x;  // input_dim × 4H
  Matrix w_h;  // H × 4H
  Matrix b;    // 1 × 4H

  std::size_t input_dim() const { return w_x.rows(); }
  std::size_t hidden() const { return w_h.rows(); }

  /// Xavier weights, zero bias except the forget block which starts at 1.
  static LstmLayerParams init(std::size_t input_dim, std::size_t hidden, Rng& rng);
  LstmLayerParams zeros_like() const;
  void append_params(const std::string& prefix, ParamRefs& out);
};

struct LstmState {
  Matrix h;  // batch × H
  Matrix c;  // batch × H

  static LstmState zeros(std::size_t batch, std::size_t hidden);
};

/// Activations retained by a forward step for the backward pass.
struct LstmCellCache {
  Matrix x, h_prev, c_prev;
  Matrix i, f, g, o;
  Matrix c, tanh_c;
};

struct LstmStepResult {
  LstmState state;
  LstmCellCache cache;
};

LstmStepResult lstm_cell_forward(const LstmLayerParams& p, const Matrix& x, const LstmState& state);

struct LstmCellInputGrads {
  Matrix dx, dh_prev, dc_prev;
};

/// Backward through one cell given dL/dh' and dL/dc'. Parameter gradients are
/// accumulated into `grads`.
LstmCellInputGrads lstm_cell_backward(const LstmLayerParams& p, const LstmCellCache& cache,
                                      const Matrix& dh, const Matrix& dc, LstmLayerParams& grads);

struct LstmStackRun {
  std::vector<Matrix> top_h;                      // per step, batch × H of the last layer
  std::vector<LstmState> final_states;            // per layer after the last step
  std::vector<std::vector<LstmCellCache>> cache;  // [layer][step]; empty when not kept
};

/// Runs every layer over the sequence. `init` holds one state per layer; pass
/// an empty span to start from zeros.
LstmStackRun lstm_stack_forward(std::span<const LstmLayerParams> layers,
                                std::span<const Matrix> inputs, std::span<const LstmState> init,
                                bool keep_cache = true);

/// One time step through the stack, updating `states` in place. Returns the
/// top-layer hidden output.
Matrix lstm_stack_step(std::span<const LstmLayerParams> layers, const Matrix& input,
                       std::vector<LstmState>& states);

/// Full BPTT. `d_top_h[t]` is dL/dh of the top layer at step t (an empty matrix
/// means zero). Returns dL/dx per step; parameter gradients accumulate into
/// `grads`.
std::vector<Matrix> lstm_stack_backward(std::span<const LstmLayerParams> layers,
                                        const LstmStackRun& run, std::span<const Matrix> d_top_h,
                                        std::span<LstmLayerParams> grads);

// ---------------------------------------------------------------------------
// Gaussian likelihood head

struct GaussianHeadParams {
  Matrix w_mu;     // H × 1
  Matrix b_mu;     // 1 × 1
  Matrix w_sigma;  // H × 1
  Matrix b_sigma;  // 1 × 1

  static GaussianHeadParams init(std::size_t hidden, Rng& rng);
  GaussianHeadParams zeros_like() const;
  void append_params(const std::string& prefix, ParamRefs& out);
};

struct GaussianOutput {
  Matrix mu;         // batch × 1
  Matrix sigma;      // batch × 1, softplus of sigma_pre
  Matrix sigma_pre;  // batch × 1
};

GaussianOutput gaussian_head(const GaussianHeadParams& p, const Matrix& h);

/// Returns dL/dh; accumulates head gradients into `grads`.
Matrix gaussian_head_backward(const GaussianHeadParams& p, const Matrix& h,
                              const GaussianOutput& out, const Matrix& d_mu,
                              const Matrix& d_sigma, GaussianHeadParams& grads);

/// Σ w·[½ln(2π) + ln σ + (z−μ)²/(2σ²)]. Throws DomainError if any σ <= 0.
double gaussian_nll(std::span<const double> z, std::span<const double> mu,
                    std::span<const double> sigma, std::span<const double> weights);

/// Partial derivatives of gaussian_nll with respect to μ and σ.
void gaussian_nll_grad(std::span<const double> z, std::span<const double> mu,
                       std::span<const double> sigma, std::span<const double> weights,
                       std::span<double> d_mu, std::span<double> d_sigma);

// ---------------------------------------------------------------------------
// MLP with a Gaussian output head

struct MlpParams {
  std::vector<Matrix> weights;  // layer l: in_l × out_l
  std::vector<Matrix> biases;   // layer l: 1 × out_l
  GaussianHeadParams head;

  static MlpParams init(std::size_t input_dim, std::span<const std::size_t> hidden_sizes, Rng& rng);
  std::size_t input_dim() const { return weights.empty() ? 0 : weights.front().rows(); }
  MlpParams zeros_like() const;
  void append_params(const std::string& prefix, ParamRefs& out);
};

struct MlpRun {
  std::vector<Matrix> activations;  // [0] is the input, then tanh output of each layer
  GaussianOutput out;
};

MlpRun mlp_forward(const MlpParams& p, const Matrix& x);
void mlp_backward(const MlpParams& p, const MlpRun& run, const Matrix& d_mu, const Matrix& d_sigma,
                  MlpParams& grads);

// ---------------------------------------------------------------------------
// Embedding

struct EmbeddingTable {
  Matrix table;  // num_ids × dim

  static EmbeddingTable init(std::size_t num_ids, std::size_t dim, Rng& rng);
  std::size_t num_ids() const { return table.rows(); }
  std::size_t dim() const { return table.cols(); }
  /// Throws ShapeError for an id >= num_ids.
  Matrix lookup(std::span<const std::size_t> ids) const;
  EmbeddingTable zeros_like() const { return {Matrix(table.rows(), table.cols())}; }
  void append_params(const std::string& prefix, ParamRefs& out);
};

// ---------------------------------------------------------------------------
// Optimisation

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

/// One bias-corrected ADAM update. Moment buffers are created on first use.
void adam_step(const ParamRefs& params, const ParamRefs& grads, AdamState& state);

/// Halves the learning rate after `patience` consecutive epochs without a new
/// best validation loss, and signals stop once it falls below `min_lr`.
class LrSchedule {
 public:
  struct Decision {
    double learning_rate;
    bool improved;
    bool decayed;
    bool stop;
  };

  explicit LrSchedule(double initial = 1e-3, double factor = 0.5, int patience = 10,
                      double min_lr = 1e-6);

  Decision observe(double validation_loss);
  double learning_rate() const { return lr_; }
  double best() const { return best_; }

 private:
  double lr_;
  double factor_;
  int patience_;
  double min_lr_;
  double best_;
  int stale_ = 0;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  bool passed = false;
};

/// Central differences of `loss` for every entry of `params` (a seeded random
/// subsample of `max_entries` when larger), compared against `analytic`.
/// Relative error is |a−n| / max(|a|, |n|, 1e-8).
GradCheckReport finite_diff_check(const ParamRefs& params, const ParamRefs& analytic,
                                  const std::function<double()>& loss, double tolerance,
                                  double epsilon = 1e-5, std::size_t max_entries = 2000,
                                  std::uint64_t seed = 0);

}  // namespace ranknet
