// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fedgame {

enum class LayerKind { recurrent, dense, output_head };

const char* to_string(LayerKind kind);

struct Layer {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
  LayerKind kind = LayerKind::dense;

  bool operator==(const Layer&) const = default;
};

/// Registry describing how a flat parameter vector splits into named layers.
///
/// Layers are contiguous and non-overlapping, in registration order. Layers
/// flagged `output_head` form the selective slice exchanged for personalized
/// aggregation; the registry may carry none, in which case head selection
/// raises a ConfigError.
class LayerSpec {
 public:
  LayerSpec() = default;
  /// Validates offsets; throws StructuralError on gaps or overlaps.
  explicit LayerSpec(std::vector<Layer> layers);

  /// Appends a layer at the current end of the registry.
  LayerSpec& add(std::string name, std::size_t length, LayerKind kind);

  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t total() const { return total_; }
  std::size_t head_length() const { return head_length_; }
  bool has_head() const { return head_length_ > 0; }
  /// r = head_length / total.
  double head_fraction() const;

  bool operator==(const LayerSpec& other) const { return layers_ == other.layers_; }

 private:
  std::vector<Layer> layers_;
  std::size_t total_ = 0;
  std::size_t head_length_ = 0;
};

using SpecPtr = std::shared_ptr<const LayerSpec>;

/// Flat model parameters bound to their layer registry.
class ParameterVector {
 public:
  ParameterVector() = default;
  /// Zero vector.
  explicit ParameterVector(SpecPtr spec);
  /// Throws StructuralError if values.size() != spec->total().
  ParameterVector(SpecPtr spec, std::vector<double> values);

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  const LayerSpec& spec() const { return *spec_; }
  const SpecPtr& spec_ptr() const { return spec_; }

  bool same_layout(const ParameterVector& other) const;
  bool all_finite() const;

  bool operator==(const ParameterVector& other) const {
    return values_ == other.values_ && same_layout(other);
  }

 private:
  SpecPtr spec_;
  std::vector<double> values_;
};

/// A client's upload: the full difference to the global model plus its head slice.
struct DeltaUpdate {
  ParameterVector full;
  std::vector<double> head;
  int round = 0;
  std::size_t client_id = 0;
};

/// full = private - global; head = head slices of full.
DeltaUpdate compute_delta(const ParameterVector& private_params, const ParameterVector& global_params,
                          int round = 0, std::size_t client_id = 0);

/// Concatenated output-head slices in registry order.
std::vector<double> select_head(const ParameterVector& params);
std::vector<double> select_head(const DeltaUpdate& delta);

/// Copy of `tmpl` with its head slices overwritten by `head`.
ParameterVector scatter_head(const ParameterVector& tmpl, std::span<const double> head);

/// Uniform (1/N) average of the full deltas. Invariant to the order of `deltas`.
ParameterVector mean_deltas(std::span<const DeltaUpdate> deltas);
/// Sum of weights[i] * deltas[i].full; weights are used as given (no renormalization).
ParameterVector weighted_mean_deltas(std::span<const DeltaUpdate> deltas, std::span<const double> weights);

/// base + step * delta. Throws NumericError if any result entry is not finite.
ParameterVector add_scaled(const ParameterVector& base, std::span<const double> delta, double step);

/// a.b / (|a||b|); returns 0 when either norm is below kCosineNormFloor.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
inline constexpr double kCosineNormFloor = 1e-12;

double squared_norm(std::span<const double> v);

}  // namespace fedgame
