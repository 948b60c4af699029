// SPDX-License-Identifier: Apache-2.0
#include "fedgame/aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fedgame/errors.hpp"
#include "fedgame/format.hpp"
#include "fedgame/kernels.hpp"
#include "fedgame/params.hpp"

namespace fedgame {

std::vector<std::string> AggregatorConfig::problems() const {
  std::vector<std::string> out;
  if (embed_dim < 1) out.push_back("embed_dim: must be >= 1");
  if (num_experts < 1) out.push_back("num_experts: must be >= 1");
  if (top_k < 1 || top_k > num_experts) {
    out.push_back("top_k (" + std::to_string(top_k) + ") must satisfy 1 <= top_k <= num_experts (" +
                  std::to_string(num_experts) + ")");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) out.push_back("temperature: must be > 0");
  if (!(w_self >= 0.0 && w_self <= 1.0)) out.push_back("w_self: must lie in [0, 1]");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) out.push_back("alpha: must be >= 0");
  if (!(beta >= 0.0) || !std::isfinite(beta)) out.push_back("beta: must be >= 0");
  if (!(server_lr >= 0.0) || !std::isfinite(server_lr)) out.push_back("server_lr: must be >= 0");
  return out;
}

void AggregatorConfig::validate() const {
  const auto p = problems();
  if (p.empty()) return;
  std::string msg = "invalid aggregator config:";
  for (const auto& s : p) msg += "\n  " + s;
  throw ConfigError(msg);
}

// ---------------------------------------------------------------------------
// State

AggregatorState::AggregatorState(const AggregatorConfig& config, std::size_t head_dim, std::size_t n_clients,
                                 RngStream rng)
    : config_(config), head_dim_(head_dim), rng_(std::move(rng)) {
  config_.validate();
  if (head_dim_ < 1) throw ConfigError("aggregator: head_dim must be >= 1");
  params_.assign(gate_offset(0), 0.0);
  const double d = static_cast<double>(embed_dim());
  init_range(encoder_weight_offset(), embed_dim() * head_dim_, static_cast<double>(head_dim_));
  init_range(encoder_bias_offset(), embed_dim(), static_cast<double>(head_dim_));
  init_range(expert_weight_offset(), num_experts() * 2 * embed_dim(), 2.0 * d);
  init_range(expert_bias_offset(), num_experts(), 2.0 * d);
  adam_m.assign(params_.size(), 0.0);
  adam_v.assign(params_.size(), 0.0);
  for (std::size_t i = 0; i < n_clients; ++i) register_client();
}

void AggregatorState::init_range(std::size_t off, std::size_t len, double fan_in) {
  const double s = 1.0 / std::sqrt(fan_in);
  for (std::size_t i = 0; i < len; ++i) params_[off + i] = rng_.uniform(-s, s);
}

std::size_t AggregatorState::register_client() {
  const std::size_t id = num_clients_;
  const std::size_t off = params_.size();
  const std::size_t len = 2 * embed_dim() * num_experts();
  params_.resize(off + len, 0.0);
  init_range(off, len, static_cast<double>(embed_dim()));
  adam_m.resize(params_.size(), 0.0);
  adam_v.resize(params_.size(), 0.0);
  ++num_clients_;
  return id;
}

std::span<const double> AggregatorState::gate_weight(std::size_t client) const {
  if (client >= num_clients_) throw UsageError("aggregator: unregistered client " + std::to_string(client));
  return view(gate_offset(client), embed_dim() * num_experts());
}

std::span<const double> AggregatorState::noise_weight(std::size_t client) const {
  if (client >= num_clients_) throw UsageError("aggregator: unregistered client " + std::to_string(client));
  return view(gate_offset(client) + embed_dim() * num_experts(), embed_dim() * num_experts());
}

std::span<double> AggregatorState::gate_weight(std::size_t client) {
  if (client >= num_clients_) throw UsageError("aggregator: unregistered client " + std::to_string(client));
  return mut(gate_offset(client), embed_dim() * num_experts());
}

std::span<double> AggregatorState::noise_weight(std::size_t client) {
  if (client >= num_clients_) throw UsageError("aggregator: unregistered client " + std::to_string(client));
  return mut(gate_offset(client) + embed_dim() * num_experts(), embed_dim() * num_experts());
}

AggregatorState permute_clients(const AggregatorState& state, std::span<const std::size_t> perm) {
  if (perm.size() != state.num_clients()) throw UsageError("permute_clients: permutation size mismatch");
  AggregatorState out = state;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const auto g = state.gate_weight(perm[i]);
    const auto n = state.noise_weight(perm[i]);
    std::copy(g.begin(), g.end(), out.gate_weight(i).begin());
    std::copy(n.begin(), n.end(), out.noise_weight(i).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Building blocks

std::vector<double> encode(const AggregatorState& state, std::span<const double> head_delta) {
  if (head_delta.size() != state.head_dim()) {
    throw StructuralError("encode: head delta of length " + std::to_string(head_delta.size()) + ", encoder expects " +
                          std::to_string(state.head_dim()));
  }
  std::vector<double> e(state.embed_dim());
  kernels::serial::matvec(state.encoder_weight(), head_delta, state.encoder_bias(), e);
  return e;
}

Embeddings encode_all(const AggregatorState& state, const HeadDeltas& head_deltas) {
  Embeddings out;
  out.reserve(head_deltas.size());
  for (const auto& u : head_deltas) out.push_back(encode(state, u));
  return out;
}

std::vector<double> expert_scores(const AggregatorState& state, std::span<const double> e_i,
                                  std::span<const double> e_j) {
  const std::size_t d = state.embed_dim();
  if (e_i.size() != d || e_j.size() != d) throw StructuralError("expert_scores: embedding length mismatch");
  std::vector<double> s(state.num_experts());
  for (std::size_t k = 0; k < s.size(); ++k) {
    const auto w = state.expert_weight(k);
    double acc = state.expert_bias(k);
    for (std::size_t a = 0; a < d; ++a) acc += w[a] * e_j[a];
    for (std::size_t a = 0; a < d; ++a) acc += w[d + a] * e_i[a];
    s[k] = acc;
  }
  return s;
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// e W, W is d x M row-major.
std::vector<double> row_times(std::span<const double> e, std::span<const double> w, std::size_t m) {
  std::vector<double> out(m, 0.0);
  for (std::size_t a = 0; a < e.size(); ++a) {
    const double ea = e[a];
    for (std::size_t k = 0; k < m; ++k) out[k] += ea * w[a * m + k];
  }
  return out;
}

}  // namespace

std::vector<double> gate_logits(const AggregatorState& state, std::size_t client, std::span<const double> e_i,
                                std::span<const double> noise) {
  const std::size_t m = state.num_experts();
  if (e_i.size() != state.embed_dim()) throw StructuralError("gate_logits: embedding length mismatch");
  auto logits = row_times(e_i, state.gate_weight(client), m);
  if (!noise.empty()) {
    if (noise.size() != m) throw StructuralError("gate_logits: one noise draw per expert required");
    const auto z = row_times(e_i, state.noise_weight(client), m);
    for (std::size_t k = 0; k < m; ++k) logits[k] += noise[k] * softplus(z[k]);
  }
  return logits;
}

std::vector<double> gate_logits(AggregatorState& state, std::size_t client, std::span<const double> e_i,
                                bool training) {
  if (client >= state.num_clients()) throw UsageError("gate_logits: unregistered client " + std::to_string(client));
  if (!training || !state.config().noise_enabled) return gate_logits(std::as_const(state), client, e_i, {});
  std::vector<double> eps(state.num_experts());
  for (auto& x : eps) x = state.rng().normal();
  return gate_logits(std::as_const(state), client, e_i, eps);
}

std::vector<char> top_k_mask(std::span<const double> logits, std::size_t k) {
  if (k < 1 || k > logits.size()) throw UsageError("top_k_mask: need 1 <= k <= number of logits");
  std::vector<std::size_t> idx(logits.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
  std::vector<char> mask(logits.size(), 0);
  for (std::size_t r = 0; r < k; ++r) mask[idx[r]] = 1;
  return mask;
}

namespace {

std::vector<double> masked_softmax(std::span<const double> logits, const std::vector<char>& mask) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < logits.size(); ++k)
    if (mask[k]) mx = std::max(mx, logits[k]);
  std::vector<double> out(logits.size(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (!mask[k]) continue;
    out[k] = std::exp(logits[k] - mx);
    total += out[k];
  }
  for (auto& v : out) v /= total;
  return out;
}

}  // namespace

std::vector<double> gate_weights(std::span<const double> logits, std::size_t k) {
  return masked_softmax(logits, top_k_mask(logits, k));
}

std::vector<double> tempered_softmax(std::span<const double> values, double temperature) {
  if (values.empty()) return {};
  const double mx = *std::max_element(values.begin(), values.end());
  std::vector<double> out(values.size());
  for (std::size_t j = 0; j < values.size(); ++j) out[j] = std::exp((values[j] - mx) / temperature);
  std::vector<double> scratch = out;
  const double total = kernels::order_free_sum(scratch);
  for (auto& v : out) v /= total;
  return out;
}

// ---------------------------------------------------------------------------
// Per-client forward pass

namespace {

struct ClientPass {
  std::vector<double> clean;  // e_i W_g
  std::vector<double> z;      // e_i W_noise
  std::vector<double> eps;    // empty when noise is off
  std::vector<double> logits;
  std::vector<char> mask;
  std::vector<double> mix;
  std::vector<std::size_t> nbrs;
  std::vector<std::vector<double>> scores;  // per neighbor, per expert
  std::vector<double> v;
  std::vector<double> w;
};

ClientPass run_client(const AggregatorState& state, std::size_t i, const Embeddings& emb, std::span<const double> eps,
                      const std::vector<char>* frozen_mask) {
  const std::size_t m = state.num_experts();
  ClientPass p;
  p.clean = row_times(emb[i], state.gate_weight(i), m);
  p.logits = p.clean;
  if (!eps.empty()) {
    p.eps.assign(eps.begin(), eps.end());
    p.z = row_times(emb[i], state.noise_weight(i), m);
    for (std::size_t k = 0; k < m; ++k) p.logits[k] += eps[k] * softplus(p.z[k]);
  }
  p.mask = frozen_mask ? *frozen_mask : top_k_mask(p.logits, state.config().top_k);
  p.mix = masked_softmax(p.logits, p.mask);
  for (std::size_t j = 0; j < emb.size(); ++j) {
    if (j == i) continue;
    p.nbrs.push_back(j);
    p.scores.push_back(expert_scores(state, emb[i], emb[j]));
    double v = 0.0;
    for (std::size_t k = 0; k < m; ++k) v += p.mix[k] * p.scores.back()[k];
    p.v.push_back(v);
  }
  p.w = tempered_softmax(p.v, state.config().temperature);
  return p;
}

AttentionRow to_row(std::size_t i, ClientPass& p) {
  AttentionRow row;
  row.client_id = i;
  row.neighbors = std::move(p.nbrs);
  row.weights = std::move(p.w);
  row.relevance = std::move(p.v);
  row.expert_mix = std::move(p.mix);
  row.logits = std::move(p.logits);
  return row;
}

void require_clients(const AggregatorState& state, std::size_t n, const char* what) {
  if (n != state.num_clients()) {
    throw UsageError(std::string(what) + ": " + std::to_string(n) + " inputs for " +
                     std::to_string(state.num_clients()) + " registered clients");
  }
}

}  // namespace

AttentionRow attention_row(const AggregatorState& state, std::size_t client, const Embeddings& embeddings) {
  require_clients(state, embeddings.size(), "attention_row");
  if (client >= state.num_clients()) throw UsageError("attention_row: unregistered client " + std::to_string(client));
  auto p = run_client(state, client, embeddings, {}, nullptr);
  return to_row(client, p);
}

AttentionRow attention_row(AggregatorState& state, std::size_t client, const Embeddings& embeddings, bool training) {
  require_clients(state, embeddings.size(), "attention_row");
  if (client >= state.num_clients()) throw UsageError("attention_row: unregistered client " + std::to_string(client));
  std::vector<double> eps;
  if (training && state.config().noise_enabled) {
    eps.resize(state.num_experts());
    for (auto& x : eps) x = state.rng().normal();
  }
  auto p = run_client(state, client, embeddings, eps, nullptr);
  return to_row(client, p);
}

std::vector<double> personalized_delta(double w_self, std::size_t client, const HeadDeltas& head_deltas,
                                       const AttentionRow& row) {
  if (client >= head_deltas.size()) throw UsageError("personalized_delta: unknown client");
  const auto& own = head_deltas[client];
  if (row.neighbors.empty()) return own;
  if (row.neighbors.size() != row.weights.size()) throw StructuralError("personalized_delta: malformed attention row");
  std::vector<std::span<const double>> msgs;
  for (auto j : row.neighbors) {
    if (j >= head_deltas.size() || head_deltas[j].size() != own.size()) {
      throw StructuralError("personalized_delta: neighbor delta shape mismatch");
    }
    msgs.emplace_back(head_deltas[j]);
  }
  std::vector<double> mixed(own.size());
  kernels::serial::column_weighted_sum(msgs, row.weights, mixed);
  std::vector<double> out(own.size());
  for (std::size_t c = 0; c < own.size(); ++c) out[c] = w_self * own[c] + (1.0 - w_self) * mixed[c];
  return out;
}

double meta_loss(std::span<const double> delta_pers, std::span<const double> delta_u, double alpha, double beta) {
  if (delta_pers.size() != delta_u.size()) throw StructuralError("meta_loss: length mismatch");
  double sq = 0.0;
  for (std::size_t c = 0; c < delta_u.size(); ++c) {
    const double d = delta_pers[c] - delta_u[c];
    sq += d * d;
  }
  return alpha * sq + beta * (1.0 - cosine_similarity(delta_pers, delta_u));
}

// ---------------------------------------------------------------------------
// Objective and gradient

MetaEvaluation evaluate_meta(const AggregatorState& state, const HeadDeltas& head_deltas, const MetaOptions& options) {
  const std::size_t n = head_deltas.size();
  require_clients(state, n, "evaluate_meta");
  if (options.noise && options.noise->size() != n) throw StructuralError("evaluate_meta: noise per client required");
  if (options.masks && options.masks->size() != n) throw StructuralError("evaluate_meta: mask per client required");

  const auto& cfg = state.config();
  const std::size_t d = state.embed_dim();
  const std::size_t m = state.num_experts();
  const std::size_t head = state.head_dim();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double T = cfg.temperature;

  const Embeddings emb = encode_all(state, head_deltas);
  MetaEvaluation out;
  out.client_loss.resize(n);
  if (options.with_gradient) out.gradient.assign(state.parameters().size(), 0.0);
  std::vector<std::vector<double>> d_emb(n, std::vector<double>(d, 0.0));

  for (std::size_t i = 0; i < n; ++i) {
    std::span<const double> eps;
    if (options.noise) eps = (*options.noise)[i];
    const std::vector<char>* mask = options.masks ? &(*options.masks)[i] : nullptr;
    ClientPass p = run_client(state, i, emb, eps, mask);

    const auto& u = head_deltas[i];
    AttentionRow row;
    row.neighbors = p.nbrs;
    row.weights = p.w;
    auto pers = personalized_delta(cfg.w_self, i, head_deltas, row);
    out.client_loss[i] = meta_loss(pers, u, cfg.alpha, cfg.beta);
    out.loss += out.client_loss[i];
    out.masks.push_back(p.mask);

    if (options.with_gradient && !p.nbrs.empty()) {
      // d loss_i / d pers
      std::vector<double> g_pers(head);
      const double np = std::sqrt(squared_norm(pers));
      const double nu = std::sqrt(squared_norm(u));
      const bool cos_active = np >= kCosineNormFloor && nu >= kCosineNormFloor;
      const double cosv = cos_active ? kernels::serial::dot(pers, u) / (np * nu) : 0.0;
      for (std::size_t c = 0; c < head; ++c) {
        double g = 2.0 * cfg.alpha * (pers[c] - u[c]);
        if (cos_active) g -= cfg.beta * (u[c] / (np * nu) - cosv * pers[c] / (np * np));
        g_pers[c] = g * inv_n;
      }
      // d / d w_ij
      const std::size_t nn = p.nbrs.size();
      std::vector<double> dw(nn);
      for (std::size_t r = 0; r < nn; ++r) dw[r] = (1.0 - cfg.w_self) * kernels::serial::dot(g_pers, head_deltas[p.nbrs[r]]);
      // tempered softmax
      double wdw = 0.0;
      for (std::size_t r = 0; r < nn; ++r) wdw += p.w[r] * dw[r];
      std::vector<double> dv(nn);
      for (std::size_t r = 0; r < nn; ++r) dv[r] = p.w[r] * (dw[r] - wdw) / T;
      // v = c . s
      std::vector<double> dmix(m, 0.0);
      for (std::size_t r = 0; r < nn; ++r) {
        const std::size_t j = p.nbrs[r];
        for (std::size_t k = 0; k < m; ++k) {
          dmix[k] += dv[r] * p.scores[r][k];
          const double ds = dv[r] * p.mix[k];
          if (ds == 0.0) continue;
          const auto w = state.expert_weight(k);
          double* gw = out.gradient.data() + state.expert_weight_offset() + k * 2 * d;
          for (std::size_t a = 0; a < d; ++a) {
            gw[a] += ds * emb[j][a];
            gw[d + a] += ds * emb[i][a];
            d_emb[j][a] += ds * w[a];
            d_emb[i][a] += ds * w[d + a];
          }
          out.gradient[state.expert_bias_offset() + k] += ds;
        }
      }
      // gate softmax over kept logits
      double cdc = 0.0;
      for (std::size_t k = 0; k < m; ++k)
        if (p.mask[k]) cdc += p.mix[k] * dmix[k];
      std::vector<double> dh(m, 0.0);
      for (std::size_t k = 0; k < m; ++k)
        if (p.mask[k]) dh[k] = p.mix[k] * (dmix[k] - cdc);
      // H = e W_g + eps * softplus(e W_noise)
      const auto wg = state.gate_weight(i);
      const std::size_t goff = state.gate_offset(i);
      for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t k = 0; k < m; ++k) {
          out.gradient[goff + a * m + k] += emb[i][a] * dh[k];
          d_emb[i][a] += wg[a * m + k] * dh[k];
        }
      }
      if (!p.eps.empty()) {
        const auto wn = state.noise_weight(i);
        const std::size_t noff = goff + d * m;
        std::vector<double> dz(m);
        for (std::size_t k = 0; k < m; ++k) dz[k] = dh[k] * p.eps[k] * sigmoid(p.z[k]);
        for (std::size_t a = 0; a < d; ++a) {
          for (std::size_t k = 0; k < m; ++k) {
            out.gradient[noff + a * m + k] += emb[i][a] * dz[k];
            d_emb[i][a] += wn[a * m + k] * dz[k];
          }
        }
      }
    }
    out.personalized.push_back(std::move(pers));
    out.rows.push_back(to_row(i, p));
  }
  out.loss *= inv_n;

  if (options.with_gradient) {
    // e_j = W u_j + b
    double* gw = out.gradient.data() + state.encoder_weight_offset();
    double* gb = out.gradient.data() + state.encoder_bias_offset();
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t a = 0; a < d; ++a) {
        const double de = d_emb[j][a];
        if (de == 0.0) continue;
        gb[a] += de;
        for (std::size_t c = 0; c < head; ++c) gw[a * head + c] += de * head_deltas[j][c];
      }
    }
  }
  return out;
}

TrainStepResult train_step(const AggregatorState& state, const HeadDeltas& head_deltas) {
  if (head_deltas.size() < 2) throw UsageError("train_step: need at least two clients");
  TrainStepResult result{state, 0.0};
  AggregatorState& next = result.state;
  const auto& cfg = next.config();

  GateNoise noise;
  MetaOptions options;
  if (cfg.noise_enabled) {
    noise.assign(head_deltas.size(), std::vector<double>(next.num_experts()));
    for (auto& row : noise)
      for (auto& x : row) x = next.rng().normal();
    options.noise = &noise;
  }
  const auto eval = evaluate_meta(next, head_deltas, options);
  result.loss = eval.loss;

  bool finite = std::isfinite(eval.loss);
  for (double g : eval.gradient) finite = finite && std::isfinite(g);
  if (!finite) {
    std::ostringstream msg;
    msg << "train_step: non-finite meta-loss gradient; gate logits:";
    for (const auto& row : eval.rows) {
      msg << "\n  client " << row.client_id << ":";
      for (double h : row.logits) msg << ' ' << format_double(h);
    }
    throw NumericError(msg.str());
  }

  // Adam
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++next.adam_step;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(next.adam_step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(next.adam_step));
  auto params = next.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = eval.gradient[i];
    next.adam_m[i] = b1 * next.adam_m[i] + (1.0 - b1) * g;
    next.adam_v[i] = b2 * next.adam_v[i] + (1.0 - b2) * g * g;
    const double mhat = next.adam_m[i] / c1;
    const double vhat = next.adam_v[i] / c2;
    params[i] -= cfg.server_lr * mhat / (std::sqrt(vhat) + eps);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Aggregation entry points

AggregationResult aggregate_game(const AggregatorState& state, const HeadDeltas& head_deltas) {
  require_clients(state, head_deltas.size(), "aggregate_game");
  const Embeddings emb = encode_all(state, head_deltas);
  AggregationResult out;
  for (std::size_t i = 0; i < head_deltas.size(); ++i) {
    auto p = run_client(state, i, emb, {}, nullptr);
    out.rows.push_back(to_row(i, p));
    out.personalized.push_back(personalized_delta(state.config().w_self, i, head_deltas, out.rows.back()));
  }
  return out;
}

AggregationResult aggregate_mean(const HeadDeltas& head_deltas, double w_self) {
  AggregationResult out;
  const std::size_t n = head_deltas.size();
  for (std::size_t i = 0; i < n; ++i) {
    AttentionRow row;
    row.client_id = i;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) row.neighbors.push_back(j);
    row.weights.assign(row.neighbors.size(), 1.0 / static_cast<double>(row.neighbors.size()));
    out.personalized.push_back(personalized_delta(w_self, i, head_deltas, row));
    out.rows.push_back(std::move(row));
  }
  return out;
}

AggregationResult aggregate_single_attention(const AggregatorState& state, const HeadDeltas& head_deltas) {
  if (state.num_experts() != 1) throw ConfigError("aggregate_single_attention: state must have exactly one expert");
  require_clients(state, head_deltas.size(), "aggregate_single_attention");
  const Embeddings emb = encode_all(state, head_deltas);
  AggregationResult out;
  const std::size_t n = head_deltas.size();
  for (std::size_t i = 0; i < n; ++i) {
    AttentionRow row;
    row.client_id = i;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      row.neighbors.push_back(j);
      row.relevance.push_back(expert_scores(state, emb[i], emb[j])[0]);
    }
    row.weights = tempered_softmax(row.relevance, state.config().temperature);
    row.expert_mix = {1.0};
    out.personalized.push_back(personalized_delta(state.config().w_self, i, head_deltas, row));
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace fedgame
