// SPDX-License-Identifier: Apache-2.0
#include "fedgame/kernels.hpp"

#include <algorithm>
#include <cstdint>

#include "fedgame/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fedgame::kernels {

namespace {

// Below this many outputs the fork/join overhead dominates.
constexpr std::int64_t kParallelThreshold = 1 << 14;

void require_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw StructuralError(std::string(what) + ": length mismatch");
}

}  // namespace

double order_free_sum(std::span<double> values) {
  std::sort(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += v;
  return total;
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

void subtract(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  require_same(a.size(), b.size(), "subtract");
  require_same(a.size(), out.size(), "subtract");
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require_same(x.size(), y.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void column_mean(std::span<const std::span<const double>> rows, std::span<double> out) {
  for (const auto& r : rows) require_same(r.size(), out.size(), "column_mean");
  std::vector<double> scratch(rows.size());
  const double n = static_cast<double>(rows.size());
  for (std::size_t c = 0; c < out.size(); ++c) {
    for (std::size_t r = 0; r < rows.size(); ++r) scratch[r] = rows[r][c];
    out[c] = order_free_sum(scratch) / n;
  }
}

void column_weighted_sum(std::span<const std::span<const double>> rows, std::span<const double> weights,
                         std::span<double> out) {
  require_same(rows.size(), weights.size(), "column_weighted_sum");
  for (const auto& r : rows) require_same(r.size(), out.size(), "column_weighted_sum");
  std::vector<double> scratch(rows.size());
  for (std::size_t c = 0; c < out.size(); ++c) {
    for (std::size_t r = 0; r < rows.size(); ++r) scratch[r] = weights[r] * rows[r][c];
    out[c] = order_free_sum(scratch);
  }
}

void matvec(std::span<const double> weight, std::span<const double> x, std::span<const double> bias,
            std::span<double> out) {
  require_same(weight.size(), out.size() * x.size(), "matvec");
  if (!bias.empty()) require_same(bias.size(), out.size(), "matvec bias");
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < out.size(); ++r) {
    double acc = bias.empty() ? 0.0 : bias[r];
    const double* w = weight.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += w[c] * x[c];
    out[r] = acc;
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_same(a.size(), b.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace serial

namespace parallel {

void subtract(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  require_same(a.size(), b.size(), "subtract");
  require_same(a.size(), out.size(), "subtract");
  const auto n = static_cast<std::int64_t>(a.size());
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
  for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require_same(x.size(), y.size(), "axpy");
  const auto n = static_cast<std::int64_t>(x.size());
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
  for (std::int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void column_mean(std::span<const std::span<const double>> rows, std::span<double> out) {
  for (const auto& r : rows) require_same(r.size(), out.size(), "column_mean");
  const auto n = static_cast<std::int64_t>(out.size());
  const double count = static_cast<double>(rows.size());
#pragma omp parallel if (n > kParallelThreshold)
  {
    std::vector<double> scratch(rows.size());
#pragma omp for schedule(static)
    for (std::int64_t c = 0; c < n; ++c) {
      for (std::size_t r = 0; r < rows.size(); ++r) scratch[r] = rows[r][c];
      out[c] = order_free_sum(scratch) / count;
    }
  }
}

void column_weighted_sum(std::span<const std::span<const double>> rows, std::span<const double> weights,
                         std::span<double> out) {
  require_same(rows.size(), weights.size(), "column_weighted_sum");
  for (const auto& r : rows) require_same(r.size(), out.size(), "column_weighted_sum");
  const auto n = static_cast<std::int64_t>(out.size());
#pragma omp parallel if (n > kParallelThreshold)
  {
    std::vector<double> scratch(rows.size());
#pragma omp for schedule(static)
    for (std::int64_t c = 0; c < n; ++c) {
      for (std::size_t r = 0; r < rows.size(); ++r) scratch[r] = weights[r] * rows[r][c];
      out[c] = order_free_sum(scratch);
    }
  }
}

void matvec(std::span<const double> weight, std::span<const double> x, std::span<const double> bias,
            std::span<double> out) {
  require_same(weight.size(), out.size() * x.size(), "matvec");
  if (!bias.empty()) require_same(bias.size(), out.size(), "matvec bias");
  const std::size_t cols = x.size();
  const auto rows = static_cast<std::int64_t>(out.size());
#pragma omp parallel for schedule(static) if (rows * static_cast<std::int64_t>(cols) > kParallelThreshold)
  for (std::int64_t r = 0; r < rows; ++r) {
    double acc = bias.empty() ? 0.0 : bias[r];
    const double* w = weight.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += w[c] * x[c];
    out[r] = acc;
  }
}

}  // namespace parallel

}  // namespace fedgame::kernels
