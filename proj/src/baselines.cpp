#include "ganevade/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ganevade {

namespace {

void check_image_arg(const Image& img, const char* op) {
    if (img.ndim() != 3 || img.dims[0] != 3) {
        throw ShapeError(std::string(op) + ": image must be 3xHxW, got " + shape_str(img), 0);
    }
}

void check_kernel_arg(int k, const char* op) {
    if (k != 3 && k != 5) {
        throw Error(std::string(op) + ": kernel must be 3 or 5, got " + std::to_string(k));
    }
}

int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

} // namespace

double gaussian_sigma_for_kernel(int k) {
    check_kernel_arg(k, "gaussian_filter");
    return 0.3 * ((k - 1) / 2.0 - 1.0) + 0.8;
}

Image gaussian_filter(const Image& img, int k) {
    check_image_arg(img, "gaussian_filter");
    check_kernel_arg(k, "gaussian_filter");
    const double sigma = gaussian_sigma_for_kernel(k);
    const int r = k / 2;
    std::vector<double> kern(static_cast<std::size_t>(k));
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
        const double d = static_cast<double>(i - r);
        kern[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
        sum += kern[static_cast<std::size_t>(i)];
    }
    for (double& v : kern) v /= sum;

    const int h = img.dims[1], w = img.dims[2];
    Image tmp(img.dims), out(img.dims);
    for (int c = 0; c < 3; ++c) {
        // horizontal pass
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                double acc = 0.0;
                for (int t = 0; t < k; ++t) {
                    acc += kern[static_cast<std::size_t>(t)] * img.at(c, i, clampi(j + t - r, 0, w - 1));
                }
                tmp.at(c, i, j) = acc;
            }
        }
        // vertical pass
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                double acc = 0.0;
                for (int t = 0; t < k; ++t) {
                    acc += kern[static_cast<std::size_t>(t)] * tmp.at(c, clampi(i + t - r, 0, h - 1), j);
                }
                out.at(c, i, j) = acc;
            }
        }
    }
    return out;
}

Image median_filter(const Image& img, int k) {
    check_image_arg(img, "median_filter");
    check_kernel_arg(k, "median_filter");
    const int r = k / 2;
    const int h = img.dims[1], w = img.dims[2];
    Image out(img.dims);
    std::vector<double> window(static_cast<std::size_t>(k) * k);
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                std::size_t n = 0;
                for (int di = -r; di <= r; ++di) {
                    for (int dj = -r; dj <= r; ++dj) {
                        window[n++] = img.at(c, clampi(i + di, 0, h - 1), clampi(j + dj, 0, w - 1));
                    }
                }
                auto mid = window.begin() + static_cast<std::ptrdiff_t>(n / 2);
                std::nth_element(window.begin(), mid, window.begin() + static_cast<std::ptrdiff_t>(n));
                out.at(c, i, j) = *mid;
            }
        }
    }
    return out;
}

namespace {

// Catmull-Rom kernel (cubic convolution, a = -0.5) at |x| = t.
double cubic_weight(double t) {
    t = std::abs(t);
    if (t <= 1.0) return (1.5 * t - 2.5) * t * t + 1.0;
    if (t < 2.0) return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0;
    return 0.0;
}

struct TapPlan {
    std::vector<int> base;     // floor(src) - 1 per output coordinate
    std::vector<double> wt;    // 4 weights per output coordinate
};

TapPlan plan_axis(int in, int out) {
    TapPlan plan;
    plan.base.resize(static_cast<std::size_t>(out));
    plan.wt.resize(static_cast<std::size_t>(out) * 4);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (int o = 0; o < out; ++o) {
        const double src = (o + 0.5) * scale - 0.5;
        const double fl = std::floor(src);
        const double frac = src - fl;
        plan.base[static_cast<std::size_t>(o)] = static_cast<int>(fl) - 1;
        for (int t = 0; t < 4; ++t) {
            plan.wt[static_cast<std::size_t>(o) * 4 + t] = cubic_weight(frac + 1.0 - t);
        }
    }
    return plan;
}

} // namespace

Image bicubic_resize(const Image& img, int out_h, int out_w) {
    check_image_arg(img, "bicubic_resize");
    if (out_h < 1 || out_w < 1) {
        throw ShapeError("bicubic_resize: output size must be >= 1", out_h < 1 ? 1 : 2);
    }
    const int h = img.dims[1], w = img.dims[2];
    const TapPlan px = plan_axis(w, out_w);
    const TapPlan py = plan_axis(h, out_h);

    // horizontal pass to h x out_w, then vertical
    Image tmp({3, h, out_w});
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < h; ++i) {
            for (int o = 0; o < out_w; ++o) {
                const int base = px.base[static_cast<std::size_t>(o)];
                double acc = 0.0;
                for (int t = 0; t < 4; ++t) {
                    acc += px.wt[static_cast<std::size_t>(o) * 4 + t] *
                           img.at(c, i, clampi(base + t, 0, w - 1));
                }
                tmp.at(c, i, o) = acc;
            }
        }
    }
    Image out({3, out_h, out_w});
    for (int c = 0; c < 3; ++c) {
        for (int o = 0; o < out_h; ++o) {
            const int base = py.base[static_cast<std::size_t>(o)];
            for (int j = 0; j < out_w; ++j) {
                double acc = 0.0;
                for (int t = 0; t < 4; ++t) {
                    acc += py.wt[static_cast<std::size_t>(o) * 4 + t] *
                           tmp.at(c, clampi(base + t, 0, h - 1), j);
                }
                out.at(c, o, j) = acc < 0.0 ? 0.0 : (acc > 1.0 ? 1.0 : acc);
            }
        }
    }
    return out;
}

} // namespace ganevade
