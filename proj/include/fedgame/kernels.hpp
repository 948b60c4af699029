// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

// Vector kernels used by the delta algebra and the dense layers.
//
// Every kernel exists twice: `serial` is the reference used by tests, and
// `parallel` is the OpenMP version the library calls. Parallel versions only
// split work over independent outputs, so both produce bit-identical results.

namespace fedgame::kernels {

/// Sum that does not depend on the order of `values`: the scratch span is
/// sorted in place, then accumulated left to right.
double order_free_sum(std::span<double> values);

namespace serial {

void subtract(std::span<const double> a, std::span<const double> b, std::span<double> out);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
// out[c] = order_free_sum(rows[*][c]) / rows.size()
void column_mean(std::span<const std::span<const double>> rows, std::span<double> out);
void column_weighted_sum(std::span<const std::span<const double>> rows, std::span<const double> weights,
                         std::span<double> out);
// out = W x + bias; W is out.size() x x.size(), row-major. bias may be empty.
void matvec(std::span<const double> weight, std::span<const double> x, std::span<const double> bias,
            std::span<double> out);
double dot(std::span<const double> a, std::span<const double> b);

}  // namespace serial

namespace parallel {

void subtract(std::span<const double> a, std::span<const double> b, std::span<double> out);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void column_mean(std::span<const std::span<const double>> rows, std::span<double> out);
void column_weighted_sum(std::span<const std::span<const double>> rows, std::span<const double> weights,
                         std::span<double> out);
void matvec(std::span<const double> weight, std::span<const double> x, std::span<const double> bias,
            std::span<double> out);

}  // namespace parallel

/// Number of OpenMP threads available (1 when built without OpenMP).
int max_threads();

}  // namespace fedgame::kernels
