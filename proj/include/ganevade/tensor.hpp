#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "ganevade/errors.hpp"

namespace ganevade {

enum class Dtype : std::uint8_t { f32 = 0, f64 = 1 };

template <typename T> constexpr Dtype dtype_of();
template <> constexpr Dtype dtype_of<float>() { return Dtype::f32; }
template <> constexpr Dtype dtype_of<double>() { return Dtype::f64; }

// Dense row-major n-d array. Every dim is >= 1 and data.size() equals the
// product of dims.
template <typename T>
struct Tensor {
    std::vector<int> dims;
    std::vector<T> data;

    Tensor() = default;

    explicit Tensor(std::vector<int> d) : dims(std::move(d)) {
        data.assign(checked_numel(dims), T(0));
    }

    Tensor(std::vector<int> d, std::vector<T> values) : dims(std::move(d)), data(std::move(values)) {
        if (data.size() != checked_numel(dims)) {
            throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                             " does not match dims product " + std::to_string(checked_numel(dims)));
        }
    }

    static Tensor zeros(std::vector<int> d) { return Tensor(std::move(d)); }

    static Tensor full(std::vector<int> d, T value) {
        Tensor t(std::move(d));
        for (auto& x : t.data) x = value;
        return t;
    }

    int ndim() const { return static_cast<int>(dims.size()); }
    std::size_t numel() const { return data.size(); }

    int dim(int i) const { return dims[static_cast<std::size_t>(i)]; }

    // (channel, row, col) accessor for the 3-d layouts used throughout.
    T& at(int c, int i, int j) {
        return data[(static_cast<std::size_t>(c) * dims[1] + i) * dims[2] + j];
    }
    T at(int c, int i, int j) const {
        return data[(static_cast<std::size_t>(c) * dims[1] + i) * dims[2] + j];
    }

    // 4-d accessor for weight tensors.
    T& at4(int a, int b, int c, int d) {
        return data[((static_cast<std::size_t>(a) * dims[1] + b) * dims[2] + c) * dims[3] + d];
    }
    T at4(int a, int b, int c, int d) const {
        return data[((static_cast<std::size_t>(a) * dims[1] + b) * dims[2] + c) * dims[3] + d];
    }

    bool same_shape(const Tensor& other) const { return dims == other.dims; }

    static std::size_t checked_numel(const std::vector<int>& d) {
        if (d.empty()) throw ShapeError("tensor: dims must be non-empty");
        std::size_t n = 1;
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (d[i] < 1) {
                throw ShapeError("tensor: dim " + std::to_string(i) + " is " +
                                 std::to_string(d[i]) + ", must be >= 1",
                                 static_cast<int>(i));
            }
            n *= static_cast<std::size_t>(d[i]);
        }
        return n;
    }
};

template <typename T>
std::string shape_str(const Tensor<T>& t) {
    std::string s = "[";
    for (int i = 0; i < t.ndim(); ++i) {
        if (i) s += "x";
        s += std::to_string(t.dims[static_cast<std::size_t>(i)]);
    }
    return s + "]";
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw ShapeError("dot: shape mismatch " + shape_str(a) + " vs " + shape_str(b));
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) acc += static_cast<double>(a.data[i]) * static_cast<double>(b.data[i]);
    return acc;
}

template <typename T>
double l1_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw ShapeError("l1_diff: shape mismatch " + shape_str(a) + " vs " + shape_str(b));
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) acc += std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]));
    return acc;
}

template <typename T>
double max_abs(const Tensor<T>& a) {
    double m = 0.0;
    for (const T& x : a.data) m = std::max(m, std::abs(static_cast<double>(x)));
    return m;
}

template <typename T>
double l2_norm(const Tensor<T>& a) {
    double acc = 0.0;
    for (const T& x : a.data) acc += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(acc);
}

template <typename T>
double mean(const Tensor<T>& a) {
    double acc = 0.0;
    for (const T& x : a.data) acc += static_cast<double>(x);
    return acc / static_cast<double>(a.numel());
}

template <typename T>
bool has_non_finite(const Tensor<T>& a) {
    for (const T& x : a.data) {
        if (!std::isfinite(static_cast<double>(x))) return true;
    }
    return false;
}

template <typename T>
Tensor<T> clamp01(const Tensor<T>& a) {
    Tensor<T> out = a;
    for (auto& x : out.data) x = x < T(0) ? T(0) : (x > T(1) ? T(1) : x);
    return out;
}

// ---------------------------------------------------------------------------
// Binary tensor file ("TNS1"): magic, u8 dtype code (0=f32, 1=f64), u8 ndim,
// ndim x u32 little-endian dims, then raw little-endian data.

using TensorAny = std::variant<Tensor<float>, Tensor<double>>;

void save_tensor(const Tensor<float>& t, std::ostream& out);
void save_tensor(const Tensor<double>& t, std::ostream& out);
TensorAny load_tensor(std::istream& in);

template <typename T> Tensor<T> load_tensor_as(std::istream& in);

void save_tensor_file(const Tensor<float>& t, const std::string& path);
void save_tensor_file(const Tensor<double>& t, const std::string& path);
TensorAny load_tensor_file(const std::string& path);

} // namespace ganevade
