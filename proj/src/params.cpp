// SPDX-License-Identifier: Apache-2.0
#include "fedgame/params.hpp"

#include <algorithm>
#include <cmath>

#include "fedgame/errors.hpp"
#include "fedgame/kernels.hpp"

namespace fedgame {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::recurrent: return "recurrent";
    case LayerKind::dense: return "dense";
    case LayerKind::output_head: return "output-head";
  }
  return "unknown";
}

LayerSpec::LayerSpec(std::vector<Layer> layers) {
  std::size_t expected = 0;
  for (const auto& layer : layers) {
    if (layer.offset != expected) {
      throw StructuralError("layer '" + layer.name + "' starts at " + std::to_string(layer.offset) +
                            ", expected contiguous offset " + std::to_string(expected));
    }
    if (layer.length == 0) throw StructuralError("layer '" + layer.name + "' is empty");
    expected += layer.length;
    if (layer.kind == LayerKind::output_head) head_length_ += layer.length;
  }
  total_ = expected;
  layers_ = std::move(layers);
}

LayerSpec& LayerSpec::add(std::string name, std::size_t length, LayerKind kind) {
  if (length == 0) throw StructuralError("layer '" + name + "' is empty");
  layers_.push_back(Layer{std::move(name), total_, length, kind});
  total_ += length;
  if (kind == LayerKind::output_head) head_length_ += length;
  return *this;
}

double LayerSpec::head_fraction() const {
  return total_ == 0 ? 0.0 : static_cast<double>(head_length_) / static_cast<double>(total_);
}

ParameterVector::ParameterVector(SpecPtr spec) : spec_(std::move(spec)) {
  if (!spec_) throw StructuralError("ParameterVector: null layer spec");
  values_.assign(spec_->total(), 0.0);
}

ParameterVector::ParameterVector(SpecPtr spec, std::vector<double> values)
    : spec_(std::move(spec)), values_(std::move(values)) {
  if (!spec_) throw StructuralError("ParameterVector: null layer spec");
  if (values_.size() != spec_->total()) {
    throw StructuralError("ParameterVector: " + std::to_string(values_.size()) + " values for a spec of " +
                          std::to_string(spec_->total()));
  }
}

bool ParameterVector::same_layout(const ParameterVector& other) const {
  if (spec_ == other.spec_) return true;
  if (!spec_ || !other.spec_) return false;
  return *spec_ == *other.spec_;
}

bool ParameterVector::all_finite() const {
  for (double v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

namespace {

void require_layout(const ParameterVector& a, const ParameterVector& b, const char* op) {
  if (!a.same_layout(b)) throw StructuralError(std::string(op) + ": parameter vectors use different layer specs");
}

}  // namespace

DeltaUpdate compute_delta(const ParameterVector& private_params, const ParameterVector& global_params, int round,
                          std::size_t client_id) {
  require_layout(private_params, global_params, "compute_delta");
  ParameterVector full(private_params.spec_ptr());
  kernels::parallel::subtract(private_params.values(), global_params.values(), full.values());
  DeltaUpdate out{std::move(full), {}, round, client_id};
  if (out.full.spec().has_head()) out.head = select_head(out.full);
  return out;
}

std::vector<double> select_head(const ParameterVector& params) {
  const auto& spec = params.spec();
  if (!spec.has_head()) throw ConfigError("select_head: layer spec has no output-head layer");
  std::vector<double> head;
  head.reserve(spec.head_length());
  for (const auto& layer : spec.layers()) {
    if (layer.kind != LayerKind::output_head) continue;
    auto slice = params.values().subspan(layer.offset, layer.length);
    head.insert(head.end(), slice.begin(), slice.end());
  }
  return head;
}

std::vector<double> select_head(const DeltaUpdate& delta) { return select_head(delta.full); }

ParameterVector scatter_head(const ParameterVector& tmpl, std::span<const double> head) {
  const auto& spec = tmpl.spec();
  if (!spec.has_head()) throw ConfigError("scatter_head: layer spec has no output-head layer");
  if (head.size() != spec.head_length()) {
    throw StructuralError("scatter_head: head of length " + std::to_string(head.size()) + ", spec expects " +
                          std::to_string(spec.head_length()));
  }
  ParameterVector out = tmpl;
  std::size_t cursor = 0;
  for (const auto& layer : spec.layers()) {
    if (layer.kind != LayerKind::output_head) continue;
    for (std::size_t i = 0; i < layer.length; ++i) out[layer.offset + i] = head[cursor++];
  }
  return out;
}

ParameterVector mean_deltas(std::span<const DeltaUpdate> deltas) {
  if (deltas.empty()) throw UsageError("mean_deltas: empty delta list");
  std::vector<std::span<const double>> rows;
  rows.reserve(deltas.size());
  for (const auto& d : deltas) {
    require_layout(d.full, deltas.front().full, "mean_deltas");
    rows.push_back(d.full.values());
  }
  ParameterVector out(deltas.front().full.spec_ptr());
  kernels::parallel::column_mean(rows, out.values());
  return out;
}

ParameterVector weighted_mean_deltas(std::span<const DeltaUpdate> deltas, std::span<const double> weights) {
  if (deltas.empty()) throw UsageError("weighted_mean_deltas: empty delta list");
  if (weights.size() != deltas.size()) throw StructuralError("weighted_mean_deltas: one weight per delta required");
  std::vector<std::span<const double>> rows;
  rows.reserve(deltas.size());
  for (const auto& d : deltas) {
    require_layout(d.full, deltas.front().full, "weighted_mean_deltas");
    rows.push_back(d.full.values());
  }
  ParameterVector out(deltas.front().full.spec_ptr());
  kernels::parallel::column_weighted_sum(rows, weights, out.values());
  return out;
}

ParameterVector add_scaled(const ParameterVector& base, std::span<const double> delta, double step) {
  if (delta.size() != base.size()) {
    throw StructuralError("add_scaled: delta of length " + std::to_string(delta.size()) + " for base of " +
                          std::to_string(base.size()));
  }
  ParameterVector out = base;
  if (step != 0.0) kernels::parallel::axpy(step, delta, out.values());
  if (!out.all_finite()) throw NumericError("add_scaled: non-finite parameter produced");
  return out;
}

double squared_norm(std::span<const double> v) { return kernels::serial::dot(v, v); }

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw StructuralError("cosine_similarity: length mismatch");
  const double na = std::sqrt(squared_norm(a));
  const double nb = std::sqrt(squared_norm(b));
  if (na < kCosineNormFloor || nb < kCosineNormFloor) return 0.0;
  return std::clamp(kernels::serial::dot(a, b) / (na * nb), -1.0, 1.0);
}

}  // namespace fedgame
