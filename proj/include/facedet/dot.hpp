#pragma once

#include <cstddef>

namespace facedet::detail {

// sum_k a[k] * x[k] accumulated in double over eight fixed lanes, so the
// result depends only on the inputs, never on the caller's threading.
double dot_f64_f32(const double* a, const float* x, std::size_t n);
double dot_f32_f32(const float* a, const float* x, std::size_t n);

}  // namespace facedet::detail
