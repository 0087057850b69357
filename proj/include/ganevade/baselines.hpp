#pragma once

#include "ganevade/image_io.hpp"

namespace ganevade {

struct FilterSpec {
    enum class Kind { gaussian, median };
    Kind kind = Kind::gaussian;
    int kernel = 3;     // 3 or 5
    double sigma = 0.0; // gaussian only; derived from kernel when 0
};

// 0.3*((k-1)/2 - 1) + 0.8: 0.8 for k=3, 1.1 for k=5.
double gaussian_sigma_for_kernel(int k);

// Separable Gaussian low-pass, kernel normalized to sum 1, edge-replicate
// borders, per channel.
Image gaussian_filter(const Image& img, int k);

// Per-channel windowed median (exact middle order statistic of k*k values),
// edge-replicate borders.
Image median_filter(const Image& img, int k);

// Separable Catmull-Rom cubic (a = -0.5), half-pixel center alignment,
// edge-replicate taps, output clamped to [0,1].
Image bicubic_resize(const Image& img, int out_h, int out_w);

} // namespace ganevade
