#include "ganevade/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ganevade::kernels {

namespace {

std::atomic<int> g_threads{
#ifdef _OPENMP
    0 // resolved lazily from omp_get_max_threads()
#else
    1
#endif
};

int resolve_threads() {
    int n = g_threads.load(std::memory_order_relaxed);
    if (n == 0) {
#ifdef _OPENMP
        n = omp_get_max_threads();
#else
        n = 1;
#endif
        g_threads.store(n, std::memory_order_relaxed);
    }
    return n;
}

bool want_parallel() {
#ifdef _OPENMP
    return resolve_threads() > 1 && !omp_in_parallel();
#else
    return false;
#endif
}

template <typename T>
void check_spec(const ConvSpec& spec, const Tensor<T>& w, bool transposed, const char* op) {
    if (w.ndim() != 4) {
        throw ShapeError(std::string(op) + ": weight must be 4-d, got " + shape_str(w));
    }
    if (w.dims[2] != 3 || w.dims[3] != 3) {
        throw ShapeError(std::string(op) + ": kernel must be 3x3, got " + shape_str(w), 2);
    }
    if (spec.padding < 0 || spec.dilation < 1) {
        throw ShapeError(std::string(op) + ": invalid spec (padding " + std::to_string(spec.padding) +
                         ", dilation " + std::to_string(spec.dilation) + ")");
    }
    const int exp0 = transposed ? spec.in_channels : spec.out_channels;
    const int exp1 = transposed ? spec.out_channels : spec.in_channels;
    if (w.dims[0] != exp0) {
        throw ShapeError(std::string(op) + ": weight axis 0 is " + std::to_string(w.dims[0]) +
                         ", spec expects " + std::to_string(exp0), 0);
    }
    if (w.dims[1] != exp1) {
        throw ShapeError(std::string(op) + ": weight axis 1 is " + std::to_string(w.dims[1]) +
                         ", spec expects " + std::to_string(exp1), 1);
    }
}

template <typename T>
void check_image(const Tensor<T>& x, int channels, const char* op, const char* role) {
    if (x.ndim() != 3) {
        throw ShapeError(std::string(op) + ": " + role + " must be CxHxW, got " + shape_str(x));
    }
    if (x.dims[0] != channels) {
        throw ShapeError(std::string(op) + ": " + role + " has " + std::to_string(x.dims[0]) +
                         " channels, expected " + std::to_string(channels), 0);
    }
}

template <typename T>
void check_bias(const Tensor<T>& b, int channels, const char* op) {
    if (b.ndim() != 1 || b.dims[0] != channels) {
        throw ShapeError(std::string(op) + ": bias must be [" + std::to_string(channels) +
                         "], got " + shape_str(b), 0);
    }
}

// ext[c, t] = x[c, t + src_off] where valid, 0 elsewhere. The buffer is
// sized (extent + delta per axis) so the gather loops below never branch
// on bounds.
template <typename T>
Tensor<T> zero_embed(const Tensor<T>& x, int delta, int src_off) {
    const int ch = x.dims[0], h = x.dims[1], w = x.dims[2];
    const int eh = h + delta;
    const int ew = w + delta;
    Tensor<T> ext({ch, eh, ew});
    for (int c = 0; c < ch; ++c) {
        for (int ti = 0; ti < eh; ++ti) {
            const int si = ti + src_off;
            if (si < 0 || si >= h) continue;
            const T* src = x.data.data() + (static_cast<std::size_t>(c) * h + si) * w;
            T* dst = ext.data.data() + (static_cast<std::size_t>(c) * eh + ti) * ew;
            for (int tj = 0; tj < ew; ++tj) {
                const int sj = tj + src_off;
                if (sj >= 0 && sj < w) dst[tj] = src[sj];
            }
        }
    }
    return ext;
}

// dst[o,i,j] = bias[o] + sum_{c,u,v} ext[c, i + su*u + off, j + sv*v + off] * w[widx(o,c,u,v)]
// Shared by the four convolution maps; the accumulation runs in f64 with a
// fixed (c,u,v) order per output cell, so results do not depend on the
// thread count.
template <typename T, typename WIdx>
Tensor<T> conv_core(const Tensor<T>& ext, int out_ch, int out_h, int out_w,
                    const Tensor<T>& w, const T* bias, int shift_step, WIdx widx) {
    const int src_ch = ext.dims[0];
    const int eh = ext.dims[1], ew = ext.dims[2];
    Tensor<T> out({out_ch, out_h, out_w});
    const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
    const bool par = want_parallel();
    (void)par;

#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(resolve_threads()) if (par)
#endif
    for (int o = 0; o < out_ch; ++o) {
        std::vector<double> acc(plane, bias ? static_cast<double>(bias[o]) : 0.0);
        for (int c = 0; c < src_ch; ++c) {
            const T* splane = ext.data.data() + static_cast<std::size_t>(c) * eh * ew;
            for (int u = 0; u < 3; ++u) {
                for (int v = 0; v < 3; ++v) {
                    const double wv = static_cast<double>(w.data[widx(o, c, u, v)]);
                    const T* base = splane + static_cast<std::size_t>(u * shift_step) * ew + v * shift_step;
                    for (int i = 0; i < out_h; ++i) {
                        double* arow = acc.data() + static_cast<std::size_t>(i) * out_w;
                        const T* srow = base + static_cast<std::size_t>(i) * ew;
                        for (int j = 0; j < out_w; ++j) {
                            arow[j] += wv * static_cast<double>(srow[j]);
                        }
                    }
                }
            }
        }
        T* dst = out.data.data() + static_cast<std::size_t>(o) * plane;
        for (std::size_t k = 0; k < plane; ++k) dst[k] = static_cast<T>(acc[k]);
    }
    return out;
}

// Direct map: ext = x padded by spec.padding, tap (u,v) lands at
// (i + u*dil, j + v*dil). Weight axis 0 is the destination channel both for
// conv2d (out x in) and for the input gradient of a transposed convolution
// (in x out), so one index expression serves both.
template <typename T>
Tensor<T> conv_gather(const Tensor<T>& x, const Tensor<T>& w, const T* bias, const ConvSpec& spec,
                      int dst_ch, const char* op) {
    const int out_h = spec.out_extent(x.dims[1]);
    const int out_w = spec.out_extent(x.dims[2]);
    if (out_h < 1 || out_w < 1) {
        throw ShapeError(std::string(op) + ": output extent " + std::to_string(out_h) + "x" +
                         std::to_string(out_w) + " for input " + shape_str(x), 1);
    }
    Tensor<T> ext = zero_embed(x, 2 * spec.padding, -spec.padding);
    const int src_ch = x.dims[0];
    auto widx = [src_ch](int o, int c, int u, int v) {
        return ((static_cast<std::size_t>(o) * src_ch + c) * 3 + u) * 3 + v;
    };
    return conv_core(ext, dst_ch, out_h, out_w, w, bias, spec.dilation, widx);
}

// Adjoint map: tap (u,v) reads src at i + pad - u*dil, expressed over a
// zero-embedded buffer as i + dil*(2-u) so the loop stays branch-free;
// substituting u -> 2-u moves the flip into the weight index. Weight axis 0
// is the source channel both for conv_transpose2d (in x out) and for
// conv2d_input_grad (out x in).
template <typename T>
Tensor<T> adjoint_gather(const Tensor<T>& x, const Tensor<T>& w, const T* bias, const ConvSpec& spec,
                         int dst_ch, const char* op) {
    const int out_h = spec.transposed_out_extent(x.dims[1]);
    const int out_w = spec.transposed_out_extent(x.dims[2]);
    if (out_h < 1 || out_w < 1) {
        throw ShapeError(std::string(op) + ": output extent " + std::to_string(out_h) + "x" +
                         std::to_string(out_w) + " for input " + shape_str(x), 1);
    }
    Tensor<T> ext = zero_embed(x, 4 * spec.dilation - 2 * spec.padding, spec.padding - 2 * spec.dilation);
    auto widx = [dst_ch](int o, int c, int u, int v) {
        return ((static_cast<std::size_t>(c) * dst_ch + o) * 3 + (2 - u)) * 3 + (2 - v);
    };
    return conv_core(ext, dst_ch, out_h, out_w, w, bias, spec.dilation, widx);
}

// gw[a,b,u,v] = sum_{i,j} gy[a or b, i, j] * ext[b or a, i + u*step, j + v*step]
template <typename T, typename Accum>
void tap_dots(const Tensor<T>& gy, const Tensor<T>& ext, int step, Accum accum) {
    const int gch = gy.dims[0], gh = gy.dims[1], gw_ = gy.dims[2];
    const int ech = ext.dims[0], eh = ext.dims[1], ew = ext.dims[2];
    const bool par = want_parallel();
    (void)par;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(resolve_threads()) if (par)
#endif
    for (int o = 0; o < gch; ++o) {
        const T* gplane = gy.data.data() + static_cast<std::size_t>(o) * gh * gw_;
        for (int c = 0; c < ech; ++c) {
            const T* splane = ext.data.data() + static_cast<std::size_t>(c) * eh * ew;
            for (int u = 0; u < 3; ++u) {
                for (int v = 0; v < 3; ++v) {
                    const T* base = splane + static_cast<std::size_t>(u * step) * ew + v * step;
                    double acc = 0.0;
                    for (int i = 0; i < gh; ++i) {
                        const T* grow = gplane + static_cast<std::size_t>(i) * gw_;
                        const T* srow = base + static_cast<std::size_t>(i) * ew;
                        for (int j = 0; j < gw_; ++j) {
                            acc += static_cast<double>(grow[j]) * static_cast<double>(srow[j]);
                        }
                    }
                    accum(o, c, u, v, acc);
                }
            }
        }
    }
}

template <typename T>
Tensor<T> bias_grad(const Tensor<T>& gy) {
    Tensor<T> gb({gy.dims[0]});
    const std::size_t plane = static_cast<std::size_t>(gy.dims[1]) * gy.dims[2];
    for (int o = 0; o < gy.dims[0]; ++o) {
        double acc = 0.0;
        const T* p = gy.data.data() + static_cast<std::size_t>(o) * plane;
        for (std::size_t k = 0; k < plane; ++k) acc += static_cast<double>(p[k]);
        gb.data[static_cast<std::size_t>(o)] = static_cast<T>(acc);
    }
    return gb;
}

} // namespace

void set_threads(int n) { g_threads.store(std::max(1, n), std::memory_order_relaxed); }

int threads() { return resolve_threads(); }

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, const ConvSpec& spec) {
    check_spec(spec, w, /*transposed=*/false, "conv2d");
    check_image(x, spec.in_channels, "conv2d", "input");
    check_bias(b, spec.out_channels, "conv2d");
    return conv_gather(x, w, b.data.data(), spec, spec.out_channels, "conv2d");
}

template <typename T>
Tensor<T> conv2d_input_grad(const Tensor<T>& gy, const Tensor<T>& w, const ConvSpec& spec) {
    check_spec(spec, w, /*transposed=*/false, "conv2d_input_grad");
    check_image(gy, spec.out_channels, "conv2d_input_grad", "output gradient");
    return adjoint_gather(gy, w, static_cast<const T*>(nullptr), spec, spec.in_channels,
                          "conv2d_input_grad");
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> conv2d_weight_grad(const Tensor<T>& gy, const Tensor<T>& x, const ConvSpec& spec) {
    check_image(x, spec.in_channels, "conv2d_weight_grad", "input");
    check_image(gy, spec.out_channels, "conv2d_weight_grad", "output gradient");
    for (int a = 1; a <= 2; ++a) {
        const int expect = spec.out_extent(x.dims[static_cast<std::size_t>(a)]);
        if (gy.dims[static_cast<std::size_t>(a)] != expect) {
            throw ShapeError("conv2d_weight_grad: output gradient axis " + std::to_string(a) + " is " +
                             std::to_string(gy.dims[static_cast<std::size_t>(a)]) + ", expected " +
                             std::to_string(expect), a);
        }
    }
    Tensor<T> ext = zero_embed(x, 2 * spec.padding, -spec.padding);
    Tensor<T> gw({spec.out_channels, spec.in_channels, 3, 3});
    tap_dots(gy, ext, spec.dilation, [&](int o, int c, int u, int v, double acc) {
        gw.at4(o, c, u, v) = static_cast<T>(acc);
    });
    return {std::move(gw), bias_grad(gy)};
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, const ConvSpec& spec) {
    check_spec(spec, w, /*transposed=*/true, "conv_transpose2d");
    check_image(x, spec.in_channels, "conv_transpose2d", "input");
    check_bias(b, spec.out_channels, "conv_transpose2d");
    return adjoint_gather(x, w, b.data.data(), spec, spec.out_channels, "conv_transpose2d");
}

template <typename T>
Tensor<T> conv_transpose2d_input_grad(const Tensor<T>& gy, const Tensor<T>& w, const ConvSpec& spec) {
    check_spec(spec, w, /*transposed=*/true, "conv_transpose2d_input_grad");
    check_image(gy, spec.out_channels, "conv_transpose2d_input_grad", "output gradient");
    return conv_gather(gy, w, static_cast<const T*>(nullptr), spec, spec.in_channels,
                       "conv_transpose2d_input_grad");
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> conv_transpose2d_weight_grad(const Tensor<T>& gy, const Tensor<T>& x,
                                                             const ConvSpec& spec) {
    check_image(x, spec.in_channels, "conv_transpose2d_weight_grad", "input");
    check_image(gy, spec.out_channels, "conv_transpose2d_weight_grad", "output gradient");
    for (int a = 1; a <= 2; ++a) {
        const int expect = spec.transposed_out_extent(x.dims[static_cast<std::size_t>(a)]);
        if (gy.dims[static_cast<std::size_t>(a)] != expect) {
            throw ShapeError("conv_transpose2d_weight_grad: output gradient axis " + std::to_string(a) +
                             " is " + std::to_string(gy.dims[static_cast<std::size_t>(a)]) +
                             ", expected " + std::to_string(expect), a);
        }
    }
    Tensor<T> ext = zero_embed(x, 4 * spec.dilation - 2 * spec.padding, spec.padding - 2 * spec.dilation);
    Tensor<T> gw({spec.in_channels, spec.out_channels, 3, 3});
    tap_dots(gy, ext, spec.dilation, [&](int o, int c, int u, int v, double acc) {
        gw.at4(c, o, 2 - u, 2 - v) = static_cast<T>(acc);
    });
    return {std::move(gw), bias_grad(gy)};
}

template <typename T>
std::pair<Tensor<T>, PoolIndices> maxpool2d(const Tensor<T>& x) {
    if (x.ndim() != 3) throw ShapeError("maxpool2d: input must be CxHxW, got " + shape_str(x));
    const int ch = x.dims[0], h = x.dims[1], w = x.dims[2];
    if (h % 2 != 0) throw ShapeError("maxpool2d: height " + std::to_string(h) + " is odd", 1);
    if (w % 2 != 0) throw ShapeError("maxpool2d: width " + std::to_string(w) + " is odd", 2);
    const int oh = h / 2, ow = w / 2;
    Tensor<T> y({ch, oh, ow});
    PoolIndices pidx;
    pidx.dims = {ch, oh, ow};
    pidx.idx.resize(static_cast<std::size_t>(ch) * oh * ow);
    for (int c = 0; c < ch; ++c) {
        const T* plane = x.data.data() + static_cast<std::size_t>(c) * h * w;
        for (int wi = 0; wi < oh; ++wi) {
            for (int wj = 0; wj < ow; ++wj) {
                const int r0 = 2 * wi, c0 = 2 * wj;
                // scan in flat order; strict > keeps the lowest flat index on ties
                std::int32_t best = r0 * w + c0;
                T best_v = plane[best];
                const std::int32_t cand[3] = {r0 * w + c0 + 1, (r0 + 1) * w + c0, (r0 + 1) * w + c0 + 1};
                for (std::int32_t f : cand) {
                    if (plane[f] > best_v) {
                        best_v = plane[f];
                        best = f;
                    }
                }
                const std::size_t o = (static_cast<std::size_t>(c) * oh + wi) * ow + wj;
                y.data[o] = best_v;
                pidx.idx[o] = best;
            }
        }
    }
    return {std::move(y), std::move(pidx)};
}

namespace {

// flat index must address a cell of window (wi, wj) in a plane of width out_w
void check_window(std::int32_t flat, int wi, int wj, int out_h, int out_w, const char* op) {
    if (flat < 0 || flat >= out_h * out_w) {
        throw Error(std::string(op) + ": corrupted indices, flat index " + std::to_string(flat) +
                    " outside plane " + std::to_string(out_h) + "x" + std::to_string(out_w));
    }
    const int r = flat / out_w, c = flat % out_w;
    if (r / 2 != wi || c / 2 != wj) {
        throw Error(std::string(op) + ": corrupted indices, flat index " + std::to_string(flat) +
                    " outside its 2x2 window (" + std::to_string(wi) + "," + std::to_string(wj) + ")");
    }
}

} // namespace

template <typename T>
Tensor<T> maxunpool2d(const Tensor<T>& x, const PoolIndices& idx, int out_h, int out_w) {
    if (x.ndim() != 3) throw ShapeError("maxunpool2d: input must be Cxhxw, got " + shape_str(x));
    if (idx.dims != x.dims) throw ShapeError("maxunpool2d: index dims do not match input " + shape_str(x));
    const int ch = x.dims[0], h = x.dims[1], w = x.dims[2];
    if (out_h != 2 * h) throw ShapeError("maxunpool2d: out_h must be 2*h", 1);
    if (out_w != 2 * w) throw ShapeError("maxunpool2d: out_w must be 2*w", 2);
    Tensor<T> y({ch, out_h, out_w});
    for (int c = 0; c < ch; ++c) {
        T* plane = y.data.data() + static_cast<std::size_t>(c) * out_h * out_w;
        for (int wi = 0; wi < h; ++wi) {
            for (int wj = 0; wj < w; ++wj) {
                const std::size_t o = (static_cast<std::size_t>(c) * h + wi) * w + wj;
                const std::int32_t flat = idx.idx[o];
                check_window(flat, wi, wj, out_h, out_w, "maxunpool2d");
                plane[flat] = x.data[o];
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> maxunpool2d_input_grad(const Tensor<T>& gy, const PoolIndices& idx) {
    if (gy.ndim() != 3) throw ShapeError("maxunpool2d_input_grad: gradient must be CxHxW");
    if (idx.dims.size() != 3) throw ShapeError("maxunpool2d_input_grad: bad indices");
    const int ch = idx.dims[0], h = idx.dims[1], w = idx.dims[2];
    if (gy.dims[0] != ch || gy.dims[1] != 2 * h || gy.dims[2] != 2 * w) {
        throw ShapeError("maxunpool2d_input_grad: gradient " + shape_str(gy) + " does not match indices");
    }
    Tensor<T> gx({ch, h, w});
    for (int c = 0; c < ch; ++c) {
        const T* plane = gy.data.data() + static_cast<std::size_t>(c) * 4 * h * w;
        for (int wi = 0; wi < h; ++wi) {
            for (int wj = 0; wj < w; ++wj) {
                const std::size_t o = (static_cast<std::size_t>(c) * h + wi) * w + wj;
                const std::int32_t flat = idx.idx[o];
                check_window(flat, wi, wj, 2 * h, 2 * w, "maxunpool2d_input_grad");
                gx.data[o] = plane[flat];
            }
        }
    }
    return gx;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (auto& v : y.data) v = v > T(0) ? v : T(0);
    return y;
}

template <typename T>
Tensor<T> relu_grad(const Tensor<T>& gy, const Tensor<T>& x) {
    if (!gy.same_shape(x)) {
        throw ShapeError("relu_grad: shape mismatch " + shape_str(gy) + " vs " + shape_str(x));
    }
    Tensor<T> gx = gy;
    for (std::size_t i = 0; i < gx.numel(); ++i) {
        if (!(x.data[i] > T(0))) gx.data[i] = T(0);
    }
    return gx;
}

Tensor<double> finite_diff_grad(const std::function<double(const Tensor<double>&)>& f,
                                const Tensor<double>& x, double h) {
    Tensor<double> g(x.dims);
    Tensor<double> probe = x;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double orig = probe.data[i];
        probe.data[i] = orig + h;
        const double fp = f(probe);
        probe.data[i] = orig - h;
        const double fm = f(probe);
        probe.data[i] = orig;
        g.data[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

#define GANEVADE_INSTANTIATE(T)                                                                        \
    template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const ConvSpec&); \
    template Tensor<T> conv2d_input_grad<T>(const Tensor<T>&, const Tensor<T>&, const ConvSpec&);      \
    template std::pair<Tensor<T>, Tensor<T>> conv2d_weight_grad<T>(const Tensor<T>&, const Tensor<T>&, \
                                                                   const ConvSpec&);                   \
    template Tensor<T> conv_transpose2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,       \
                                           const ConvSpec&);                                           \
    template Tensor<T> conv_transpose2d_input_grad<T>(const Tensor<T>&, const Tensor<T>&,              \
                                                      const ConvSpec&);                                \
    template std::pair<Tensor<T>, Tensor<T>> conv_transpose2d_weight_grad<T>(const Tensor<T>&,         \
                                                                             const Tensor<T>&,         \
                                                                             const ConvSpec&);         \
    template std::pair<Tensor<T>, PoolIndices> maxpool2d<T>(const Tensor<T>&);                          \
    template Tensor<T> maxunpool2d<T>(const Tensor<T>&, const PoolIndices&, int, int);                 \
    template Tensor<T> maxunpool2d_input_grad<T>(const Tensor<T>&, const PoolIndices&);                \
    template Tensor<T> relu<T>(const Tensor<T>&);                                                      \
    template Tensor<T> relu_grad<T>(const Tensor<T>&, const Tensor<T>&);

GANEVADE_INSTANTIATE(float)
GANEVADE_INSTANTIATE(double)

#undef GANEVADE_INSTANTIATE

} // namespace ganevade::kernels
