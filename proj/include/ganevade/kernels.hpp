#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "ganevade/tensor.hpp"

namespace ganevade::kernels {

// Geometry of a 3x3, stride-1 convolution. Output spatial extent is
// in + 2*padding - 2*dilation; a transposed convolution under the same spec
// maps back the other way.
struct ConvSpec {
    int in_channels = 0;
    int out_channels = 0;
    int padding = 1;
    int dilation = 1;

    static constexpr int kernel = 3;
    static constexpr int stride = 1;

    int out_extent(int in) const { return in + 2 * padding - 2 * dilation; }
    int transposed_out_extent(int in) const { return in - 2 * padding + 2 * dilation; }
};

// Argmax positions recorded by maxpool2d. dims matches the pooled output;
// each entry is the flat index (row*W + col) of the argmax inside the
// pre-pool plane of the same channel.
struct PoolIndices {
    std::vector<int> dims;
    std::vector<std::int32_t> idx;
};

// Worker-thread budget for the parallel kernels. Results are bitwise
// identical for every setting: each output cell is accumulated by exactly
// one thread in a fixed order. 1 = serial reference mode.
void set_threads(int n);
int threads();

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, const ConvSpec& spec);

// dL/dx of conv2d. The same arithmetic is the forward map of
// conv_transpose2d under the same spec.
template <typename T>
Tensor<T> conv2d_input_grad(const Tensor<T>& gy, const Tensor<T>& w, const ConvSpec& spec);

template <typename T>
std::pair<Tensor<T>, Tensor<T>> conv2d_weight_grad(const Tensor<T>& gy, const Tensor<T>& x, const ConvSpec& spec);

// Weight layout: in_channels x out_channels x 3 x 3. With zero bias this is
// the exact adjoint of conv2d: <conv2d(x;w), y> == <x, conv_transpose2d(y;w)>.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, const ConvSpec& spec);

template <typename T>
Tensor<T> conv_transpose2d_input_grad(const Tensor<T>& gy, const Tensor<T>& w, const ConvSpec& spec);

template <typename T>
std::pair<Tensor<T>, Tensor<T>> conv_transpose2d_weight_grad(const Tensor<T>& gy, const Tensor<T>& x, const ConvSpec& spec);

// Non-overlapping 2x2 windows, stride 2. H and W must be even. Ties break
// to the lowest flat index. The backward pass of maxpool2d is
// maxunpool2d(gy, idx, H, W).
template <typename T>
std::pair<Tensor<T>, PoolIndices> maxpool2d(const Tensor<T>& x);

// Scatters x back to the recorded argmax positions, zeros elsewhere.
// Rejects indices that fall outside their own 2x2 window.
template <typename T>
Tensor<T> maxunpool2d(const Tensor<T>& x, const PoolIndices& idx, int out_h, int out_w);

// dL/dx of maxunpool2d: gather at the recorded positions.
template <typename T>
Tensor<T> maxunpool2d_input_grad(const Tensor<T>& gy, const PoolIndices& idx);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// Passes gy where x > 0; zero where x <= 0.
template <typename T>
Tensor<T> relu_grad(const Tensor<T>& gy, const Tensor<T>& x);

// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate.
// Gradient oracle for the analytic backward passes; f must be pure.
Tensor<double> finite_diff_grad(const std::function<double(const Tensor<double>&)>& f,
                                const Tensor<double>& x, double h);

} // namespace ganevade::kernels
