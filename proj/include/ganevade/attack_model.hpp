#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ganevade/kernels.hpp"
#include "ganevade/tensor.hpp"

namespace ganevade {

// Channel widths of the encoder-decoder. The defaults are the production
// architecture; tests shrink them to keep finite-difference sweeps cheap.
struct ArchConfig {
    int c1 = 32;
    int c2 = 64;
    int c3 = 128;
    int latent_channels = 32;
};

template <typename T>
struct ConvLayer {
    std::string name;
    Tensor<T> w;
    Tensor<T> b;
    kernels::ConvSpec spec;
    bool transposed = false;
};

// Encoder: conv1..conv3 (3x3, pad 1) each + ReLU + 2x2 max-pool, then a
// dilated conv4 (pad 2, dilation 2) + ReLU producing the latent Y at 1/8
// spatial resolution. Decoder: dilated transposed conv back to c3 channels,
// then three conv+ReLU+max-unpool stages consuming the encoder pool indices
// in reverse, and a final transposed conv down to 3 channels with no
// activation. Every layer preserves spatial extent; only pool/unpool resize.
template <typename T>
struct AttackModel {
    ArchConfig arch;

    ConvLayer<T> conv1, conv2, conv3, conv4_dilated;
    ConvLayer<T> tconv1_dilated, dconv1, dconv2, dconv3, tconv_out;

    std::vector<ConvLayer<T>*> layers();
    std::vector<const ConvLayer<T>*> layers() const;

    // ("conv1.w", &w), ("conv1.b", &b), ... in fixed layer order.
    std::vector<std::pair<std::string, Tensor<T>*>> tensors();
    std::vector<std::pair<std::string, const Tensor<T>*>> tensors() const;
};

// Kaiming-uniform (fan-in) weights, zero biases; deterministic under seed.
template <typename T>
AttackModel<T> build_attack_model(const ArchConfig& arch, std::uint64_t seed);

template <typename T>
AttackModel<T> build_attack_model(int latent_channels, std::uint64_t seed);

template <typename T>
struct LatentState {
    Tensor<T> y;
    kernels::PoolIndices idx1, idx2, idx3;
    int in_h = 0;
    int in_w = 0;
};

// Input must be 3xHxW with H, W divisible by 8.
template <typename T>
LatentState<T> encode(const AttackModel<T>& model, const Tensor<T>& image);

template <typename T>
Tensor<T> decode(const AttackModel<T>& model, const LatentState<T>& state);

// decode(encode(image)); raw values, not clamped. Clamping to [0,1] happens
// only when an image file is materialized.
template <typename T>
Tensor<T> attack_forward(const AttackModel<T>& model, const Tensor<T>& image);

template <typename T>
struct Perturbation {
    Tensor<T> theta; // attack_forward(image) - image
};

template <typename T>
Perturbation<T> perturbation(const AttackModel<T>& model, const Tensor<T>& image);

// Intermediates retained by one forward evaluation, enough to run the
// analytic backward pass.
template <typename T>
struct ForwardTrace {
    Tensor<T> input;
    Tensor<T> a1, a2, a3, a4;     // encoder conv outputs, pre-ReLU
    Tensor<T> p1, p2, p3;         // pooled activations
    kernels::PoolIndices idx1, idx2, idx3;
    Tensor<T> y;                  // latent (post-ReLU)
    Tensor<T> d0, d1, d2, d3;     // decoder conv outputs, pre-ReLU
    Tensor<T> rd0;                // ReLU(d0)
    Tensor<T> u1, u2, u3;         // unpooled activations
    Tensor<T> output;
};

template <typename T>
Tensor<T> forward_traced(const AttackModel<T>& model, const Tensor<T>& image, ForwardTrace<T>& trace);

// Parameter gradients aligned with model.layers() order.
template <typename T>
struct ModelGrads {
    std::vector<Tensor<T>> gw;
    std::vector<Tensor<T>> gb;
};

template <typename T>
ModelGrads<T> zero_grads(const AttackModel<T>& model);

template <typename T>
void add_grads(ModelGrads<T>& into, const ModelGrads<T>& from);

// Accumulates parameter gradients into `grads` and returns the gradient
// with respect to the input image.
template <typename T>
Tensor<T> attack_backward(const AttackModel<T>& model, const ForwardTrace<T>& trace,
                          const Tensor<T>& g_output, ModelGrads<T>& grads);

inline constexpr double kContrastiveEps = 1e-8;

// (1/N) sum_i |A_i - R_i|_1 / (|A_i - I_i|_1 + eps) over triples of
// (attacked, simulated-real, gan) images. Rejects NaN inputs.
template <typename T>
double contrastive_loss(const std::vector<Tensor<T>>& attacked,
                        const std::vector<Tensor<T>>& simulated_real,
                        const std::vector<Tensor<T>>& gan);

// d(loss)/d(attacked_i); the |.| subgradient at 0 is 0.
template <typename T>
std::vector<Tensor<T>> contrastive_loss_grad(const std::vector<Tensor<T>>& attacked,
                                             const std::vector<Tensor<T>>& simulated_real,
                                             const std::vector<Tensor<T>>& gan);

} // namespace ganevade
