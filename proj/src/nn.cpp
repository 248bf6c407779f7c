#include "ranknet/nn.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numeric>

#include "ranknet/errors.hpp"
#include "ranknet/profile.hpp"

namespace ranknet {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

void require_same_len(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": length mismatch");
}

}  // namespace

std::size_t parameter_count(const ParamRefs& refs) {
  std::size_t n = 0;
  for (const auto& r : refs) n += r.value->size();
  return n;
}

Matrix xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (double& v : m.values()) v = (2.0 * uniform01(rng) - 1.0) * limit;
  return m;
}

// --- LSTM ------------------------------------------------------------------

LstmLayerParams LstmLayerParams::init(std::size_t input_dim, std::size_t hidden, Rng& rng) {
  LstmLayerParams p;
  p.w_x = xavier_uniform(input_dim, 4 * hidden, rng);
  p.w_h = xavier_uniform(hidden, 4 * hidden, rng);
  p.b = Matrix(1, 4 * hidden);
  for (std::size_t j = hidden; j < 2 * hidden; ++j) p.b(0, j) = 1.0;
  return p;
}

LstmLayerParams LstmLayerParams::zeros_like() const {
  return {Matrix(w_x.rows(), w_x.cols()), Matrix(w_h.rows(), w_h.cols()),
          Matrix(b.rows(), b.cols())};
}

void LstmLayerParams::append_params(const std::string& prefix, ParamRefs& out) {
  out.push_back({prefix + ".w_x", &w_x});
  out.push_back({prefix + ".w_h", &w_h});
  out.push_back({prefix + ".b", &b});
}

LstmState LstmState::zeros(std::size_t batch, std::size_t hidden) {
  return {Matrix(batch, hidden), Matrix(batch, hidden)};
}

LstmStepResult lstm_cell_forward(const LstmLayerParams& p, const Matrix& x, const LstmState& state) {
  const std::size_t hid = p.hidden();
  if (x.cols() != p.input_dim() || state.h.cols() != hid || state.c.cols() != hid ||
      state.h.rows() != x.rows() || state.c.rows() != x.rows() || p.w_x.cols() != 4 * hid ||
      p.b.cols() != 4 * hid) {
    throw ShapeError("lstm_cell_forward: input/state/parameter shapes do not conform");
  }
  Matrix pre = matmul(x, p.w_x);
  add_inplace(pre, matmul(state.h, p.w_h));
  pre = add_bias_rows(pre, p.b);

  LstmStepResult r;
  auto& k = r.cache;
  k.i = sigmoid_cols(pre, 0, hid);
  k.f = sigmoid_cols(pre, hid, hid);
  k.g = tanh_cols(pre, 2 * hid, hid);
  k.o = sigmoid_cols(pre, 3 * hid, hid);
  k.c = add(hadamard(k.f, state.c), hadamard(k.i, k.g));
  k.tanh_c = tanh(k.c);
  r.state.h = hadamard(k.o, k.tanh_c);
  r.state.c = k.c;
  k.x = x;
  k.h_prev = state.h;
  k.c_prev = state.c;
  return r;
}

LstmCellInputGrads lstm_cell_backward(const LstmLayerParams& p, const LstmCellCache& k,
                                      const Matrix& dh, const Matrix& dc, LstmLayerParams& grads) {
  const Matrix d_o = hadamard(dh, k.tanh_c);
  const Matrix dc_total = add(dc, tanh_backward(hadamard(dh, k.o), k.tanh_c));
  const Matrix d_i = hadamard(dc_total, k.g);
  const Matrix d_g = hadamard(dc_total, k.i);
  const Matrix d_f = hadamard(dc_total, k.c_prev);

  const Matrix dp_i = sigmoid_backward(d_i, k.i);
  const Matrix dp_f = sigmoid_backward(d_f, k.f);
  const Matrix dp_g = tanh_backward(d_g, k.g);
  const Matrix dp_o = sigmoid_backward(d_o, k.o);
  const Matrix d_pre = concat_cols({&dp_i, &dp_f, &dp_g, &dp_o});

  matmul_tn_acc(k.x, d_pre, grads.w_x);
  matmul_tn_acc(k.h_prev, d_pre, grads.w_h);
  add_inplace(grads.b, col_sums(d_pre));

  LstmCellInputGrads out;
  out.dc_prev = hadamard(dc_total, k.f);
  out.dx = matmul_nt(d_pre, p.w_x);
  out.dh_prev = matmul_nt(d_pre, p.w_h);
  return out;
}

LstmStackRun lstm_stack_forward(std::span<const LstmLayerParams> layers,
                                std::span<const Matrix> inputs, std::span<const LstmState> init,
                                bool keep_cache) {
  if (layers.empty()) throw ShapeError("lstm_stack_forward: no layers");
  if (inputs.empty()) throw ShapeError("lstm_stack_forward: empty sequence");
  for (std::size_t l = 1; l < layers.size(); ++l) {
    if (layers[l].input_dim() != layers[l - 1].hidden()) {
      throw ShapeError("lstm_stack_forward: layer input dims do not chain");
    }
  }
  if (!init.empty() && init.size() != layers.size()) {
    throw ShapeError("lstm_stack_forward: need one initial state per layer");
  }
  const std::size_t batch = inputs.front().rows();

  LstmStackRun run;
  run.final_states.reserve(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    run.final_states.push_back(init.empty() ? LstmState::zeros(batch, layers[l].hidden())
                                            : init[l]);
  }
  if (keep_cache) run.cache.assign(layers.size(), {});
  run.top_h.reserve(inputs.size());

  for (const Matrix& x : inputs) {
    const Matrix* in = &x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto step = lstm_cell_forward(layers[l], *in, run.final_states[l]);
      run.final_states[l] = std::move(step.state);
      if (keep_cache) run.cache[l].push_back(std::move(step.cache));
      in = &run.final_states[l].h;
    }
    run.top_h.push_back(*in);
  }
  return run;
}

Matrix lstm_stack_step(std::span<const LstmLayerParams> layers, const Matrix& input,
                       std::vector<LstmState>& states) {
  if (states.size() != layers.size()) throw ShapeError("lstm_stack_step: state count mismatch");
  const Matrix* in = &input;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    states[l] = lstm_cell_forward(layers[l], *in, states[l]).state;
    in = &states[l].h;
  }
  return *in;
}

std::vector<Matrix> lstm_stack_backward(std::span<const LstmLayerParams> layers,
                                        const LstmStackRun& run, std::span<const Matrix> d_top_h,
                                        std::span<LstmLayerParams> grads) {
  if (run.cache.size() != layers.size() || run.cache.empty()) {
    throw Error("lstm_stack_backward: forward cache missing");
  }
  if (grads.size() != layers.size()) throw ShapeError("lstm_stack_backward: grads size");
  const std::size_t steps = run.cache.front().size();
  if (d_top_h.size() != steps) throw ShapeError("lstm_stack_backward: d_top_h length");
  const std::size_t batch = run.top_h.front().rows();

  std::vector<Matrix> dh_rec, dc_rec;
  for (const auto& layer : layers) {
    dh_rec.emplace_back(batch, layer.hidden());
    dc_rec.emplace_back(batch, layer.hidden());
  }
  std::vector<Matrix> dx(steps);
  for (std::size_t t = steps; t-- > 0;) {
    Matrix from_above = d_top_h[t];
    for (std::size_t l = layers.size(); l-- > 0;) {
      Matrix dh = from_above.empty() ? dh_rec[l] : add(from_above, dh_rec[l]);
      auto g = lstm_cell_backward(layers[l], run.cache[l][t], dh, dc_rec[l], grads[l]);
      dh_rec[l] = std::move(g.dh_prev);
      dc_rec[l] = std::move(g.dc_prev);
      from_above = std::move(g.dx);
    }
    dx[t] = std::move(from_above);
  }
  return dx;
}

// --- Gaussian head -----------------------------------------------------------

GaussianHeadParams GaussianHeadParams::init(std::size_t hidden, Rng& rng) {
  return {xavier_uniform(hidden, 1, rng), Matrix(1, 1), xavier_uniform(hidden, 1, rng),
          Matrix(1, 1)};
}

GaussianHeadParams GaussianHeadParams::zeros_like() const {
  return {Matrix(w_mu.rows(), 1), Matrix(1, 1), Matrix(w_sigma.rows(), 1), Matrix(1, 1)};
}

void GaussianHeadParams::append_params(const std::string& prefix, ParamRefs& out) {
  out.push_back({prefix + ".w_mu", &w_mu});
  out.push_back({prefix + ".b_mu", &b_mu});
  out.push_back({prefix + ".w_sigma", &w_sigma});
  out.push_back({prefix + ".b_sigma", &b_sigma});
}

GaussianOutput gaussian_head(const GaussianHeadParams& p, const Matrix& h) {
  GaussianOutput out;
  out.mu = add_bias_rows(matmul(h, p.w_mu), p.b_mu);
  out.sigma_pre = add_bias_rows(matmul(h, p.w_sigma), p.b_sigma);
  out.sigma = softplus(out.sigma_pre);
  return out;
}

Matrix gaussian_head_backward(const GaussianHeadParams& p, const Matrix& h,
                              const GaussianOutput& out, const Matrix& d_mu,
                              const Matrix& d_sigma, GaussianHeadParams& grads) {
  // d softplus(x)/dx = sigmoid(x)
  const Matrix d_pre = hadamard(d_sigma, sigmoid(out.sigma_pre));
  matmul_tn_acc(h, d_mu, grads.w_mu);
  add_inplace(grads.b_mu, col_sums(d_mu));
  matmul_tn_acc(h, d_pre, grads.w_sigma);
  add_inplace(grads.b_sigma, col_sums(d_pre));
  return add(matmul_nt(d_mu, p.w_mu), matmul_nt(d_pre, p.w_sigma));
}

double gaussian_nll(std::span<const double> z, std::span<const double> mu,
                    std::span<const double> sigma, std::span<const double> weights) {
  require_same_len(z.size(), mu.size(), "gaussian_nll");
  require_same_len(z.size(), sigma.size(), "gaussian_nll");
  require_same_len(z.size(), weights.size(), "gaussian_nll");
  ProfileScope scope(OpClass::Other);
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!(sigma[i] > 0.0)) throw DomainError("gaussian_nll: sigma must be positive");
    const double r = (z[i] - mu[i]) / sigma[i];
    total += weights[i] * (kHalfLog2Pi + std::log(sigma[i]) + 0.5 * r * r);
  }
  return total;
}

void gaussian_nll_grad(std::span<const double> z, std::span<const double> mu,
                       std::span<const double> sigma, std::span<const double> weights,
                       std::span<double> d_mu, std::span<double> d_sigma) {
  require_same_len(z.size(), mu.size(), "gaussian_nll_grad");
  require_same_len(z.size(), sigma.size(), "gaussian_nll_grad");
  require_same_len(z.size(), weights.size(), "gaussian_nll_grad");
  require_same_len(z.size(), d_mu.size(), "gaussian_nll_grad");
  require_same_len(z.size(), d_sigma.size(), "gaussian_nll_grad");
  ProfileScope scope(OpClass::Other);
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!(sigma[i] > 0.0)) throw DomainError("gaussian_nll_grad: sigma must be positive");
    const double s2 = sigma[i] * sigma[i];
    const double diff = z[i] - mu[i];
    d_mu[i] = weights[i] * (mu[i] - z[i]) / s2;
    d_sigma[i] = weights[i] * (1.0 / sigma[i] - diff * diff / (s2 * sigma[i]));
  }
}

// --- MLP ---------------------------------------------------------------------

MlpParams MlpParams::init(std::size_t input_dim, std::span<const std::size_t> hidden_sizes,
                          Rng& rng) {
  if (hidden_sizes.empty()) throw ConfigError("MLP needs at least one hidden layer");
  MlpParams p;
  std::size_t in = input_dim;
  for (std::size_t width : hidden_sizes) {
    p.weights.push_back(xavier_uniform(in, width, rng));
    p.biases.emplace_back(1, width);
    in = width;
  }
  p.head = GaussianHeadParams::init(in, rng);
  return p;
}

MlpParams MlpParams::zeros_like() const {
  MlpParams g;
  for (const auto& w : weights) g.weights.emplace_back(w.rows(), w.cols());
  for (const auto& b : biases) g.biases.emplace_back(b.rows(), b.cols());
  g.head = head.zeros_like();
  return g;
}

void MlpParams::append_params(const std::string& prefix, ParamRefs& out) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back({prefix + ".layer" + std::to_string(l) + ".w", &weights[l]});
    out.push_back({prefix + ".layer" + std::to_string(l) + ".b", &biases[l]});
  }
  head.append_params(prefix + ".head", out);
}

MlpRun mlp_forward(const MlpParams& p, const Matrix& x) {
  if (x.cols() != p.input_dim()) throw ShapeError("mlp_forward: input width mismatch");
  MlpRun run;
  run.activations.push_back(x);
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    run.activations.push_back(
        tanh(add_bias_rows(matmul(run.activations.back(), p.weights[l]), p.biases[l])));
  }
  run.out = gaussian_head(p.head, run.activations.back());
  return run;
}

void mlp_backward(const MlpParams& p, const MlpRun& run, const Matrix& d_mu, const Matrix& d_sigma,
                  MlpParams& grads) {
  Matrix dh = gaussian_head_backward(p.head, run.activations.back(), run.out, d_mu, d_sigma,
                                     grads.head);
  for (std::size_t l = p.weights.size(); l-- > 0;) {
    const Matrix d_pre = tanh_backward(dh, run.activations[l + 1]);
    matmul_tn_acc(run.activations[l], d_pre, grads.weights[l]);
    add_inplace(grads.biases[l], col_sums(d_pre));
    if (l > 0) dh = matmul_nt(d_pre, p.weights[l]);
  }
}

// --- Embedding ---------------------------------------------------------------

EmbeddingTable EmbeddingTable::init(std::size_t num_ids, std::size_t dim, Rng& rng) {
  return {xavier_uniform(num_ids, dim, rng)};
}

Matrix EmbeddingTable::lookup(std::span<const std::size_t> ids) const {
  return gather_rows(table, ids);
}

void EmbeddingTable::append_params(const std::string& prefix, ParamRefs& out) {
  out.push_back({prefix + ".table", &table});
}

// --- ADAM / schedule ---------------------------------------------------------

void adam_step(const ParamRefs& params, const ParamRefs& grads, AdamState& s) {
  ProfileScope scope(OpClass::Other);
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter/gradient count");
  if (s.m.empty()) {
    for (const auto& p : params) {
      s.m.emplace_back(p.value->rows(), p.value->cols());
      s.v.emplace_back(p.value->rows(), p.value->cols());
    }
  }
  if (s.m.size() != params.size()) throw ShapeError("adam_step: optimizer state count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].value->same_shape(*grads[i].value) || !params[i].value->same_shape(s.m[i])) {
      throw ShapeError("adam_step: shape mismatch for " + params[i].name);
    }
  }
  ++s.step;
  const double t = static_cast<double>(s.step);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].value->values();
    const auto g = grads[i].value->values();
    auto m = s.m[i].values();
    auto v = s.v[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = s.beta1 * m[j] + (1.0 - s.beta1) * g[j];
      v[j] = s.beta2 * v[j] + (1.0 - s.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
    }
  }
}

LrSchedule::LrSchedule(double initial, double factor, int patience, double min_lr)
    : lr_(initial),
      factor_(factor),
      patience_(patience),
      min_lr_(min_lr),
      best_(std::numeric_limits<double>::infinity()) {}

LrSchedule::Decision LrSchedule::observe(double validation_loss) {
  Decision d{lr_, false, false, false};
  if (validation_loss < best_) {
    best_ = validation_loss;
    stale_ = 0;
    d.improved = true;
  } else if (++stale_ >= patience_) {
    lr_ *= factor_;
    stale_ = 0;
    d.decayed = true;
  }
  d.learning_rate = lr_;
  d.stop = lr_ < min_lr_;
  return d;
}

// --- Gradient check ----------------------------------------------------------

GradCheckReport finite_diff_check(const ParamRefs& params, const ParamRefs& analytic,
                                  const std::function<double()>& loss, double tolerance,
                                  double epsilon, std::size_t max_entries, std::uint64_t seed) {
  if (params.size() != analytic.size()) throw ShapeError("finite_diff_check: gradient set size");
  std::vector<std::pair<std::size_t, std::size_t>> entries;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].value->same_shape(*analytic[i].value)) {
      throw ShapeError("finite_diff_check: shape mismatch for " + params[i].name);
    }
    for (std::size_t j = 0; j < params[i].value->size(); ++j) entries.emplace_back(i, j);
  }
  if (entries.size() > max_entries) {
    auto rng = make_rng(seed, Stream::GradCheck);
    for (std::size_t k = 0; k < max_entries; ++k) {
      const std::size_t pick = k + static_cast<std::size_t>(rng() % (entries.size() - k));
      std::swap(entries[k], entries[pick]);
    }
    entries.resize(max_entries);
  }

  GradCheckReport report;
  for (const auto& [i, j] : entries) {
    double& x = (*params[i].value)[j];
    const double original = x;
    x = original + epsilon;
    const double up = loss();
    x = original - epsilon;
    const double down = loss();
    x = original;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double a = (*analytic[i].value)[j];
    const double rel =
        std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
    if (rel > report.max_rel_error || report.checked == 0) {
      report.max_rel_error = std::max(report.max_rel_error, rel);
      if (rel >= report.max_rel_error) {
        report.worst_param = params[i].name;
        report.worst_index = j;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
    ++report.checked;
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace ranknet
