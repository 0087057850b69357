#include "ref_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ganevade::ref {

using kernels::ConvSpec;
using kernels::PoolIndices;

Tensor<double> conv2d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                      const ConvSpec& spec) {
    const int cin = x.dims[0], h = x.dims[1], ww = x.dims[2];
    const int cout = w.dims[0];
    const int p = spec.padding, d = spec.dilation;
    const int oh = h + 2 * p - 2 * d, ow = ww + 2 * p - 2 * d;
    Tensor<double> y({cout, oh, ow});
    for (int o = 0; o < cout; ++o) {
        for (int i = 0; i < oh; ++i) {
            for (int j = 0; j < ow; ++j) {
                double acc = b.data[static_cast<std::size_t>(o)];
                for (int c = 0; c < cin; ++c) {
                    for (int u = 0; u < 3; ++u) {
                        for (int v = 0; v < 3; ++v) {
                            const int si = i + u * d - p;
                            const int sj = j + v * d - p;
                            if (si < 0 || si >= h || sj < 0 || sj >= ww) continue;
                            acc += x.at(c, si, sj) * w.at4(o, c, u, v);
                        }
                    }
                }
                y.at(o, i, j) = acc;
            }
        }
    }
    return y;
}

Tensor<double> conv_transpose2d(const Tensor<double>& x, const Tensor<double>& w,
                                const Tensor<double>& b, const ConvSpec& spec) {
    const int cin = x.dims[0], h = x.dims[1], ww = x.dims[2];
    const int cout = w.dims[1];
    const int p = spec.padding, d = spec.dilation;
    const int oh = h - 2 * p + 2 * d, ow = ww - 2 * p + 2 * d;
    Tensor<double> z({cout, oh, ow});
    for (int c = 0; c < cout; ++c) {
        for (int i = 0; i < oh; ++i) {
            for (int j = 0; j < ow; ++j) {
                z.at(c, i, j) = b.data[static_cast<std::size_t>(c)];
            }
        }
    }
    for (int o = 0; o < cin; ++o) {
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < ww; ++j) {
                for (int c = 0; c < cout; ++c) {
                    for (int u = 0; u < 3; ++u) {
                        for (int v = 0; v < 3; ++v) {
                            const int ti = i + u * d - p;
                            const int tj = j + v * d - p;
                            if (ti < 0 || ti >= oh || tj < 0 || tj >= ow) continue;
                            z.at(c, ti, tj) += x.at(o, i, j) * w.at4(o, c, u, v);
                        }
                    }
                }
            }
        }
    }
    return z;
}

std::pair<Tensor<double>, PoolIndices> maxpool2d(const Tensor<double>& x) {
    const int ch = x.dims[0], h = x.dims[1], w = x.dims[2];
    Tensor<double> y({ch, h / 2, w / 2});
    PoolIndices idx;
    idx.dims = {ch, h / 2, w / 2};
    idx.idx.resize(y.numel());
    for (int c = 0; c < ch; ++c) {
        for (int wi = 0; wi < h / 2; ++wi) {
            for (int wj = 0; wj < w / 2; ++wj) {
                double best = -1e308;
                int best_flat = -1;
                for (int di = 0; di < 2; ++di) {
                    for (int dj = 0; dj < 2; ++dj) {
                        const int r = 2 * wi + di, cc = 2 * wj + dj;
                        if (x.at(c, r, cc) > best) {
                            best = x.at(c, r, cc);
                            best_flat = r * w + cc;
                        }
                    }
                }
                y.at(c, wi, wj) = best;
                idx.idx[(static_cast<std::size_t>(c) * (h / 2) + wi) * (w / 2) + wj] =
                    static_cast<std::int32_t>(best_flat);
            }
        }
    }
    return {std::move(y), std::move(idx)};
}

namespace {
int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }
} // namespace

Image gaussian_filter(const Image& img, int k) {
    const int r = k / 2;
    const double sigma = 0.3 * ((k - 1) / 2.0 - 1.0) + 0.8;
    std::vector<double> k1(static_cast<std::size_t>(k));
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
        const double d = i - r;
        k1[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
        sum += k1[static_cast<std::size_t>(i)];
    }
    for (double& v : k1) v /= sum;

    const int h = img.dims[1], w = img.dims[2];
    Image out(img.dims);
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                double acc = 0.0;
                for (int u = 0; u < k; ++u) {
                    for (int v = 0; v < k; ++v) {
                        acc += k1[static_cast<std::size_t>(u)] * k1[static_cast<std::size_t>(v)] *
                               img.at(c, clampi(i + u - r, 0, h - 1), clampi(j + v - r, 0, w - 1));
                    }
                }
                out.at(c, i, j) = acc;
            }
        }
    }
    return out;
}

Image median_filter(const Image& img, int k) {
    const int r = k / 2;
    const int h = img.dims[1], w = img.dims[2];
    Image out(img.dims);
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                std::vector<double> window;
                for (int u = -r; u <= r; ++u) {
                    for (int v = -r; v <= r; ++v) {
                        window.push_back(img.at(c, clampi(i + u, 0, h - 1), clampi(j + v, 0, w - 1)));
                    }
                }
                std::sort(window.begin(), window.end());
                out.at(c, i, j) = window[window.size() / 2];
            }
        }
    }
    return out;
}

namespace {

double cubic(double t) {
    t = std::abs(t);
    const double a = -0.5;
    if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
    if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
    return 0.0;
}

} // namespace

Image bicubic_resize(const Image& img, int out_h, int out_w) {
    const int h = img.dims[1], w = img.dims[2];
    Image out({3, out_h, out_w});
    for (int c = 0; c < 3; ++c) {
        for (int oi = 0; oi < out_h; ++oi) {
            const double sy = (oi + 0.5) * (static_cast<double>(h) / out_h) - 0.5;
            const int by = static_cast<int>(std::floor(sy));
            for (int oj = 0; oj < out_w; ++oj) {
                const double sx = (oj + 0.5) * (static_cast<double>(w) / out_w) - 0.5;
                const int bx = static_cast<int>(std::floor(sx));
                double acc = 0.0;
                for (int u = -1; u <= 2; ++u) {
                    for (int v = -1; v <= 2; ++v) {
                        acc += cubic(sy - (by + u)) * cubic(sx - (bx + v)) *
                               img.at(c, clampi(by + u, 0, h - 1), clampi(bx + v, 0, w - 1));
                    }
                }
                out.at(c, oi, oj) = acc < 0.0 ? 0.0 : (acc > 1.0 ? 1.0 : acc);
            }
        }
    }
    return out;
}

double ssim(const Image& a, const Image& b) {
    const int win = 11;
    const double sigma = 1.5;
    double w2[11][11];
    double sum = 0.0;
    for (int u = 0; u < win; ++u) {
        for (int v = 0; v < win; ++v) {
            const double du = u - 5.0, dv = v - 5.0;
            w2[u][v] = std::exp(-(du * du + dv * dv) / (2.0 * sigma * sigma));
            sum += w2[u][v];
        }
    }
    for (int u = 0; u < win; ++u) {
        for (int v = 0; v < win; ++v) w2[u][v] /= sum;
    }
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const int h = a.dims[1], w = a.dims[2];
    double total = 0.0;
    for (int c = 0; c < a.dims[0]; ++c) {
        double acc = 0.0;
        int count = 0;
        for (int i = 0; i + win <= h; ++i) {
            for (int j = 0; j + win <= w; ++j) {
                double mx = 0.0, my = 0.0, mxx = 0.0, myy = 0.0, mxy = 0.0;
                for (int u = 0; u < win; ++u) {
                    for (int v = 0; v < win; ++v) {
                        const double xv = a.at(c, i + u, j + v);
                        const double yv = b.at(c, i + u, j + v);
                        mx += w2[u][v] * xv;
                        my += w2[u][v] * yv;
                        mxx += w2[u][v] * xv * xv;
                        myy += w2[u][v] * yv * yv;
                        mxy += w2[u][v] * xv * yv;
                    }
                }
                const double sx = mxx - mx * mx;
                const double sy = myy - my * my;
                const double sxy = mxy - mx * my;
                acc += ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) /
                       ((mx * mx + my * my + c1) * (sx + sy + c2));
                ++count;
            }
        }
        total += acc / count;
    }
    return total / a.dims[0];
}

} // namespace ganevade::ref
