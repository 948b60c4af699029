// SPDX-License-Identifier: Apache-2.0
#include "fedgame/forecaster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedgame/errors.hpp"
#include "fedgame/kernels.hpp"
#include "fedgame/metrics.hpp"

namespace fedgame {

const char* to_string(Architecture arch) { return arch == Architecture::mlp ? "mlp" : "lstm"; }

Architecture parse_architecture(const std::string& name) {
  if (name == "mlp") return Architecture::mlp;
  if (name == "lstm") return Architecture::lstm;
  throw ConfigError("unknown architecture '" + name + "' (expected mlp or lstm)");
}

std::vector<std::string> ForecasterConfig::problems() const {
  std::vector<std::string> out;
  if (history_len < 1) out.push_back("history_len: must be >= 1");
  if (horizon < 1) out.push_back("horizon: must be >= 1");
  if (input_features < 1) out.push_back("input_features: must be >= 1");
  if (quantiles.empty()) out.push_back("quantiles: must not be empty");
  for (std::size_t j = 0; j < quantiles.size(); ++j) {
    if (!(quantiles[j] > 0.0 && quantiles[j] < 1.0)) out.push_back("quantiles: every entry must lie in (0, 1)");
    if (j > 0 && !(quantiles[j] > quantiles[j - 1])) out.push_back("quantiles: must be strictly increasing");
  }
  for (auto h : hidden_sizes)
    if (h < 1) out.push_back("hidden_sizes: widths must be >= 1");
  if (arch == Architecture::lstm && hidden_sizes.empty()) out.push_back("hidden_sizes: lstm needs at least one layer");
  if (!(local_lr > 0.0) || !std::isfinite(local_lr)) out.push_back("local_lr: must be a positive finite number");
  if (!(prox_mu >= 0.0) || !std::isfinite(prox_mu)) out.push_back("prox_mu: must be >= 0");
  if (batch_size < 1) out.push_back("batch_size: must be >= 1");
  return out;
}

void ForecasterConfig::validate() const {
  const auto p = problems();
  if (p.empty()) return;
  std::string msg = "invalid forecaster config:";
  for (const auto& s : p) msg += "\n  " + s;
  throw ConfigError(msg);
}

SpecPtr make_layer_spec(const ForecasterConfig& config) {
  config.validate();
  auto spec = std::make_shared<LayerSpec>();
  std::size_t prev = 0;
  if (config.arch == Architecture::mlp) {
    prev = config.input_dim();
    for (std::size_t l = 0; l < config.hidden_sizes.size(); ++l) {
      const auto width = config.hidden_sizes[l];
      spec->add("fc" + std::to_string(l) + ".weight", width * prev, LayerKind::dense);
      spec->add("fc" + std::to_string(l) + ".bias", width, LayerKind::dense);
      prev = width;
    }
  } else {
    prev = config.input_features;
    for (std::size_t l = 0; l < config.hidden_sizes.size(); ++l) {
      const auto width = config.hidden_sizes[l];
      spec->add("lstm" + std::to_string(l) + ".w_ih", 4 * width * prev, LayerKind::recurrent);
      spec->add("lstm" + std::to_string(l) + ".w_hh", 4 * width * width, LayerKind::recurrent);
      spec->add("lstm" + std::to_string(l) + ".bias", 4 * width, LayerKind::recurrent);
      prev = width;
    }
  }
  spec->add("head.weight", config.output_dim() * prev, LayerKind::output_head);
  spec->add("head.bias", config.output_dim(), LayerKind::output_head);
  return spec;
}

namespace {

std::size_t fan_in_of(const ForecasterConfig& config, std::size_t layer_index) {
  const auto& hs = config.hidden_sizes;
  if (config.arch == Architecture::mlp) {
    const std::size_t l = layer_index / 2;
    if (l == 0) return config.input_dim();
    return hs[l - 1];
  }
  const std::size_t l = layer_index / 3;
  if (l < hs.size()) return hs[l];  // PyTorch-style 1/sqrt(hidden) for every LSTM tensor
  return hs.back();
}

}  // namespace

ForecasterModel init_model(const ForecasterConfig& config, RngStream& rng) {
  auto spec = make_layer_spec(config);
  ParameterVector params(spec);
  for (std::size_t li = 0; li < spec->layers().size(); ++li) {
    const auto& layer = spec->layers()[li];
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in_of(config, li)));
    for (std::size_t i = 0; i < layer.length; ++i) params[layer.offset + i] = rng.uniform(-s, s);
  }
  return ForecasterModel{std::move(params), config};
}

ForecasterModel zero_model(const ForecasterConfig& config) {
  return ForecasterModel{ParameterVector(make_layer_spec(config)), config};
}

ForecasterModel make_model(const ForecasterConfig& config, ParameterVector params) {
  const auto spec = make_layer_spec(config);
  if (!(params.spec() == *spec)) throw StructuralError("make_model: parameter layout does not match config");
  return ForecasterModel{std::move(params), config};
}

namespace {

// Views of each registered tensor, in registry order.
struct Slices {
  std::vector<std::span<const double>> w;
  Slices(const LayerSpec& spec, std::span<const double> values) {
    for (const auto& l : spec.layers()) w.push_back(values.subspan(l.offset, l.length));
  }
};

struct GradSlices {
  std::vector<std::span<double>> g;
  GradSlices(const LayerSpec& spec, std::span<double> values) {
    for (const auto& l : spec.layers()) g.push_back(values.subspan(l.offset, l.length));
  }
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// out += W^T d, W is rows x cols row-major
void add_transposed(std::span<const double> weight, std::span<const double> d, std::span<double> out) {
  const std::size_t cols = out.size();
  for (std::size_t r = 0; r < d.size(); ++r) {
    const double dr = d[r];
    if (dr == 0.0) continue;
    const double* w = weight.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] += w[c] * dr;
  }
}

// G += d x^T
void add_outer(std::span<double> grad, std::span<const double> d, std::span<const double> x) {
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < d.size(); ++r) {
    const double dr = d[r];
    if (dr == 0.0) continue;
    double* g = grad.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) g[c] += dr * x[c];
  }
}

// ---- MLP ------------------------------------------------------------------

struct MlpCache {
  std::vector<std::vector<double>> acts;  // acts[0] = input, acts[l+1] = tanh output of hidden l
  std::vector<double> out;
};

void mlp_forward(const ForecasterConfig& cfg, const Slices& s, std::span<const double> x, MlpCache& cache) {
  const std::size_t nh = cfg.hidden_sizes.size();
  cache.acts.resize(nh + 1);
  cache.acts[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < nh; ++l) {
    auto& a = cache.acts[l + 1];
    a.assign(cfg.hidden_sizes[l], 0.0);
    kernels::serial::matvec(s.w[2 * l], cache.acts[l], s.w[2 * l + 1], a);
    for (auto& v : a) v = std::tanh(v);
  }
  cache.out.assign(cfg.output_dim(), 0.0);
  kernels::serial::matvec(s.w[2 * nh], cache.acts[nh], s.w[2 * nh + 1], cache.out);
}

void mlp_backward(const ForecasterConfig& cfg, const Slices& s, const MlpCache& cache, std::span<const double> dout,
                  GradSlices& g) {
  const std::size_t nh = cfg.hidden_sizes.size();
  add_outer(g.g[2 * nh], dout, cache.acts[nh]);
  for (std::size_t r = 0; r < dout.size(); ++r) g.g[2 * nh + 1][r] += dout[r];
  if (nh == 0) return;
  std::vector<double> da(cache.acts[nh].size(), 0.0);
  add_transposed(s.w[2 * nh], dout, da);
  for (std::size_t l = nh; l-- > 0;) {
    const auto& a = cache.acts[l + 1];
    std::vector<double> dz(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) dz[i] = da[i] * (1.0 - a[i] * a[i]);
    add_outer(g.g[2 * l], dz, cache.acts[l]);
    for (std::size_t i = 0; i < dz.size(); ++i) g.g[2 * l + 1][i] += dz[i];
    if (l > 0) {
      da.assign(cache.acts[l].size(), 0.0);
      add_transposed(s.w[2 * l], dz, da);
    }
  }
}

// ---- LSTM -----------------------------------------------------------------

struct LstmLayerCache {
  // Per time step, gates stored as [i | f | g | o], each of width H.
  std::vector<std::vector<double>> gates;
  std::vector<std::vector<double>> c;   // cell state after step t
  std::vector<std::vector<double>> h;   // hidden state after step t
  std::vector<std::vector<double>> tc;  // tanh(c)
};

struct LstmCache {
  std::vector<std::vector<double>> inputs;  // per time step, input features
  std::vector<LstmLayerCache> layers;
  std::vector<double> out;
};

void lstm_forward(const ForecasterConfig& cfg, const Slices& s, std::span<const double> x, LstmCache& cache) {
  const std::size_t T = cfg.history_len;
  const std::size_t F = cfg.input_features;
  const std::size_t L = cfg.hidden_sizes.size();
  cache.inputs.resize(T);
  for (std::size_t t = 0; t < T; ++t) cache.inputs[t].assign(x.begin() + t * F, x.begin() + (t + 1) * F);
  cache.layers.assign(L, {});
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t H = cfg.hidden_sizes[l];
    auto& lc = cache.layers[l];
    lc.gates.assign(T, std::vector<double>(4 * H));
    lc.c.assign(T, std::vector<double>(H));
    lc.h.assign(T, std::vector<double>(H));
    lc.tc.assign(T, std::vector<double>(H));
    const auto& w_ih = s.w[3 * l];
    const auto& w_hh = s.w[3 * l + 1];
    const auto& bias = s.w[3 * l + 2];
    std::vector<double> zero(H, 0.0), rec(4 * H);
    for (std::size_t t = 0; t < T; ++t) {
      const auto& in = l == 0 ? cache.inputs[t] : cache.layers[l - 1].h[t];
      const auto& h_prev = t == 0 ? zero : lc.h[t - 1];
      const auto& c_prev = t == 0 ? zero : lc.c[t - 1];
      auto& z = lc.gates[t];
      kernels::serial::matvec(w_ih, in, bias, z);
      kernels::serial::matvec(w_hh, h_prev, {}, rec);
      for (std::size_t k = 0; k < 4 * H; ++k) z[k] += rec[k];
      for (std::size_t k = 0; k < H; ++k) {
        const double ig = sigmoid(z[k]);
        const double fg = sigmoid(z[H + k]);
        const double gg = std::tanh(z[2 * H + k]);
        const double og = sigmoid(z[3 * H + k]);
        z[k] = ig;
        z[H + k] = fg;
        z[2 * H + k] = gg;
        z[3 * H + k] = og;
        lc.c[t][k] = fg * c_prev[k] + ig * gg;
        lc.tc[t][k] = std::tanh(lc.c[t][k]);
        lc.h[t][k] = og * lc.tc[t][k];
      }
    }
  }
  cache.out.assign(cfg.output_dim(), 0.0);
  kernels::serial::matvec(s.w[3 * L], cache.layers[L - 1].h[T - 1], s.w[3 * L + 1], cache.out);
}

void lstm_backward(const ForecasterConfig& cfg, const Slices& s, const LstmCache& cache, std::span<const double> dout,
                   GradSlices& g) {
  const std::size_t T = cfg.history_len;
  const std::size_t L = cfg.hidden_sizes.size();
  const std::size_t H_last = cfg.hidden_sizes.back();

  add_outer(g.g[3 * L], dout, cache.layers[L - 1].h[T - 1]);
  for (std::size_t r = 0; r < dout.size(); ++r) g.g[3 * L + 1][r] += dout[r];

  // dh_above[t]: gradient w.r.t. this layer's h[t] arriving from the layer above (or the head).
  std::vector<std::vector<double>> dh_above(T, std::vector<double>(H_last, 0.0));
  add_transposed(s.w[3 * L], dout, dh_above[T - 1]);

  for (std::size_t l = L; l-- > 0;) {
    const std::size_t H = cfg.hidden_sizes[l];
    const std::size_t in_dim = l == 0 ? cfg.input_features : cfg.hidden_sizes[l - 1];
    const auto& lc = cache.layers[l];
    const auto& w_ih = s.w[3 * l];
    const auto& w_hh = s.w[3 * l + 1];
    std::vector<std::vector<double>> dx(T, std::vector<double>(in_dim, 0.0));
    std::vector<double> dh_next(H, 0.0), dc_next(H, 0.0), dz(4 * H), zero(H, 0.0);
    for (std::size_t t = T; t-- > 0;) {
      const auto& gates = lc.gates[t];
      const auto& c_prev = t == 0 ? zero : lc.c[t - 1];
      const auto& h_prev = t == 0 ? zero : lc.h[t - 1];
      for (std::size_t k = 0; k < H; ++k) {
        const double ig = gates[k], fg = gates[H + k], gg = gates[2 * H + k], og = gates[3 * H + k];
        const double dh = dh_above[t][k] + dh_next[k];
        const double tc = lc.tc[t][k];
        const double dc = dc_next[k] + dh * og * (1.0 - tc * tc);
        dz[k] = dc * gg * ig * (1.0 - ig);
        dz[H + k] = dc * c_prev[k] * fg * (1.0 - fg);
        dz[2 * H + k] = dc * ig * (1.0 - gg * gg);
        dz[3 * H + k] = dh * tc * og * (1.0 - og);
        dc_next[k] = dc * fg;
      }
      const auto& in = l == 0 ? cache.inputs[t] : cache.layers[l - 1].h[t];
      add_outer(g.g[3 * l], dz, in);
      add_outer(g.g[3 * l + 1], dz, h_prev);
      for (std::size_t k = 0; k < 4 * H; ++k) g.g[3 * l + 2][k] += dz[k];
      std::fill(dh_next.begin(), dh_next.end(), 0.0);
      add_transposed(w_hh, dz, dh_next);
      if (l > 0) add_transposed(w_ih, dz, dx[t]);
    }
    if (l > 0) dh_above = std::move(dx);
  }
}

void check_window(const ForecasterModel& model, std::span<const double> window) {
  if (window.size() != model.config.input_dim()) {
    throw StructuralError("forward: window of " + std::to_string(window.size()) + " values, model expects " +
                          std::to_string(model.config.input_dim()));
  }
  if (model.params.size() != model.spec().total()) throw StructuralError("forward: parameter size mismatch");
}

}  // namespace

std::vector<double> forward(const ForecasterModel& model, std::span<const double> window) {
  check_window(model, window);
  Slices s(model.spec(), model.params.values());
  if (model.config.arch == Architecture::mlp) {
    MlpCache cache;
    mlp_forward(model.config, s, window, cache);
    return std::move(cache.out);
  }
  LstmCache cache;
  lstm_forward(model.config, s, window, cache);
  return std::move(cache.out);
}

double pinball_loss(std::span<const double> pred, std::span<const double> target, std::span<const double> quantiles) {
  const std::size_t nq = quantiles.size();
  if (nq == 0 || pred.size() != target.size() * nq) throw StructuralError("pinball_loss: shape mismatch");
  std::vector<double> column(target.size());
  double total = 0.0;
  for (std::size_t j = 0; j < nq; ++j) {
    for (std::size_t t = 0; t < target.size(); ++t) column[t] = pred[t * nq + j];
    total += quantile_score(target, column, quantiles[j]);
  }
  return total / static_cast<double>(nq);
}

LossGradient task_gradient(const ForecasterModel& model, std::span<const Sample> batch) {
  if (batch.empty()) throw UsageError("task_gradient: empty batch");
  const auto& cfg = model.config;
  const std::size_t nq = cfg.quantiles.size();
  const std::size_t out_dim = cfg.output_dim();
  const double scale = 1.0 / (static_cast<double>(batch.size()) * static_cast<double>(out_dim));

  LossGradient result;
  result.gradient.assign(model.params.size(), 0.0);
  Slices s(model.spec(), model.params.values());
  GradSlices g(model.spec(), result.gradient);
  std::vector<double> dout(out_dim);
  MlpCache mlp_cache;
  LstmCache lstm_cache;

  for (const auto& sample : batch) {
    check_window(model, sample.input);
    if (sample.target.size() != cfg.horizon) throw StructuralError("task_gradient: target length mismatch");
    const std::vector<double>* out = nullptr;
    if (cfg.arch == Architecture::mlp) {
      mlp_forward(cfg, s, sample.input, mlp_cache);
      out = &mlp_cache.out;
    } else {
      lstm_forward(cfg, s, sample.input, lstm_cache);
      out = &lstm_cache.out;
    }
    result.loss += pinball_loss(*out, sample.target, cfg.quantiles);
    for (std::size_t t = 0; t < cfg.horizon; ++t) {
      for (std::size_t j = 0; j < nq; ++j) {
        const double q = cfg.quantiles[j];
        const double y = sample.target[t];
        const double yhat = (*out)[t * nq + j];
        dout[t * nq + j] = (y < yhat ? (1.0 - q) : -q) * scale;
      }
    }
    if (cfg.arch == Architecture::mlp) {
      mlp_backward(cfg, s, mlp_cache, dout, g);
    } else {
      lstm_backward(cfg, s, lstm_cache, dout, g);
    }
  }
  result.loss /= static_cast<double>(batch.size());
  return result;
}

ProxGradient fedprox_gradient(const ForecasterModel& model, std::span<const Sample> batch,
                              const ParameterVector& global_params, double mu) {
  if (!model.params.same_layout(global_params)) throw StructuralError("fedprox_gradient: layout mismatch");
  auto task = task_gradient(model, batch);
  ProxGradient out;
  out.task_loss = task.loss;
  out.task = std::move(task.gradient);
  out.proximal.resize(out.task.size());
  out.total.resize(out.task.size());
  const auto w = model.params.values();
  const auto wb = global_params.values();
  for (std::size_t i = 0; i < out.task.size(); ++i) {
    out.proximal[i] = mu * (w[i] - wb[i]);
    out.total[i] = out.task[i] + out.proximal[i];
  }
  return out;
}

double fedprox_objective(const ForecasterModel& model, std::span<const Sample> batch,
                         const ParameterVector& global_params, double mu) {
  if (batch.empty()) throw UsageError("fedprox_objective: empty batch");
  double loss = 0.0;
  for (const auto& sample : batch) loss += pinball_loss(forward(model, sample.input), sample.target, model.config.quantiles);
  loss /= static_cast<double>(batch.size());
  double dist = 0.0;
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const double d = model.params[i] - global_params[i];
    dist += d * d;
  }
  return loss + 0.5 * mu * dist;
}

std::vector<Sample> make_batch(const WindowedDataset& data, std::span<const std::size_t> indices) {
  std::vector<Sample> batch;
  batch.reserve(indices.size());
  for (auto i : indices) batch.push_back(Sample{data.input(i), data.target(i)});
  return batch;
}

LocalTrainResult local_train(const ForecasterModel& model, const WindowedDataset& data,
                             const ParameterVector& global_params, const ForecasterConfig& cfg, RngStream& rng) {
  if (data.empty()) throw UsageError("local_train: empty dataset");
  if (!model.params.same_layout(global_params)) throw StructuralError("local_train: model and global layouts differ");
  if (data.history_len * model.config.input_features != model.config.input_dim() ||
      data.horizon != model.config.horizon) {
    throw StructuralError("local_train: dataset windows do not match the model shape");
  }
  LocalTrainResult result{model, 0.0, 0};
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t bs = std::max<std::size_t>(cfg.batch_size, 1);

  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      const auto batch = make_batch(data, std::span(order).subspan(start, end - start));
      const auto grad = fedprox_gradient(result.model, batch, global_params, cfg.prox_mu);
      if (!std::isfinite(grad.task_loss)) {
        throw NumericError("local_train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches));
      }
      auto w = result.model.params.values();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.local_lr * grad.total[i];
      epoch_loss += grad.task_loss;
      ++batches;
      ++result.steps;
    }
    result.mean_loss = epoch_loss / static_cast<double>(batches);
  }
  if (!result.model.params.all_finite()) throw NumericError("local_train: non-finite parameters after training");
  return result;
}

}  // namespace fedgame
