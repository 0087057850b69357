#pragma once

// Serial brute-force reference implementations, kept deliberately naive and
// independent of the OpenMP kernels they check. Tests and the benchmark
// target compare against these.

#include "ganevade/image_io.hpp"
#include "ganevade/kernels.hpp"
#include "ganevade/tensor.hpp"

namespace ganevade::ref {

// six nested loops, explicit zero-padding bounds checks
Tensor<double> conv2d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                      const kernels::ConvSpec& spec);

// scatter-add over the adjoint relation
Tensor<double> conv_transpose2d(const Tensor<double>& x, const Tensor<double>& w,
                                const Tensor<double>& b, const kernels::ConvSpec& spec);

// per-window scan
std::pair<Tensor<double>, kernels::PoolIndices> maxpool2d(const Tensor<double>& x);

// direct 2-d weighted sum, replicate borders
Image gaussian_filter(const Image& img, int k);

// sort-based window median, replicate borders
Image median_filter(const Image& img, int k);

// direct per-pixel 4x4 kernel sum
Image bicubic_resize(const Image& img, int out_h, int out_w);

// unoptimized sliding-window SSIM
double ssim(const Image& a, const Image& b);

} // namespace ganevade::ref
