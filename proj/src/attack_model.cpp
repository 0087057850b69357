#include "ganevade/attack_model.hpp"

#include <cmath>

#include "ganevade/rng.hpp"

namespace ganevade {

namespace {

using kernels::ConvSpec;

ConvSpec plain_spec(int in_ch, int out_ch) { return ConvSpec{in_ch, out_ch, 1, 1}; }
ConvSpec dilated_spec(int in_ch, int out_ch) { return ConvSpec{in_ch, out_ch, 2, 2}; }

template <typename T>
ConvLayer<T> make_layer(const std::string& name, const ConvSpec& spec, bool transposed, Rng rng) {
    ConvLayer<T> layer;
    layer.name = name;
    layer.spec = spec;
    layer.transposed = transposed;
    const int d0 = transposed ? spec.in_channels : spec.out_channels;
    const int d1 = transposed ? spec.out_channels : spec.in_channels;
    layer.w = Tensor<T>({d0, d1, 3, 3});
    // fan-in counts the source channels of the forward map
    const double fan_in = static_cast<double>(spec.in_channels) * 9.0;
    const double bound = std::sqrt(6.0 / fan_in);
    for (auto& v : layer.w.data) v = static_cast<T>(rng.uniform(-bound, bound));
    layer.b = Tensor<T>({spec.out_channels});
    return layer;
}

} // namespace

template <typename T>
std::vector<ConvLayer<T>*> AttackModel<T>::layers() {
    return {&conv1, &conv2, &conv3, &conv4_dilated, &tconv1_dilated, &dconv1, &dconv2, &dconv3, &tconv_out};
}

template <typename T>
std::vector<const ConvLayer<T>*> AttackModel<T>::layers() const {
    return {&conv1, &conv2, &conv3, &conv4_dilated, &tconv1_dilated, &dconv1, &dconv2, &dconv3, &tconv_out};
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> AttackModel<T>::tensors() {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    for (ConvLayer<T>* l : layers()) {
        out.emplace_back(l->name + ".w", &l->w);
        out.emplace_back(l->name + ".b", &l->b);
    }
    return out;
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> AttackModel<T>::tensors() const {
    std::vector<std::pair<std::string, const Tensor<T>*>> out;
    for (const ConvLayer<T>* l : layers()) {
        out.emplace_back(l->name + ".w", &l->w);
        out.emplace_back(l->name + ".b", &l->b);
    }
    return out;
}

template <typename T>
AttackModel<T> build_attack_model(const ArchConfig& arch, std::uint64_t seed) {
    if (arch.latent_channels < 1 || arch.c1 < 1 || arch.c2 < 1 || arch.c3 < 1) {
        throw ShapeError("build_attack_model: channel counts must be >= 1");
    }
    AttackModel<T> m;
    m.arch = arch;
    std::uint64_t stream = 0;
    auto next = [&]() { return Rng::derive(seed, stream++); };
    m.conv1 = make_layer<T>("conv1", plain_spec(3, arch.c1), false, next());
    m.conv2 = make_layer<T>("conv2", plain_spec(arch.c1, arch.c2), false, next());
    m.conv3 = make_layer<T>("conv3", plain_spec(arch.c2, arch.c3), false, next());
    m.conv4_dilated = make_layer<T>("conv4_dilated", dilated_spec(arch.c3, arch.latent_channels), false, next());
    m.tconv1_dilated = make_layer<T>("tconv1_dilated", dilated_spec(arch.latent_channels, arch.c3), true, next());
    m.dconv1 = make_layer<T>("dconv1", plain_spec(arch.c3, arch.c3), false, next());
    m.dconv2 = make_layer<T>("dconv2", plain_spec(arch.c3, arch.c2), false, next());
    m.dconv3 = make_layer<T>("dconv3", plain_spec(arch.c2, arch.c1), false, next());
    m.tconv_out = make_layer<T>("tconv_out", plain_spec(arch.c1, 3), true, next());
    return m;
}

template <typename T>
AttackModel<T> build_attack_model(int latent_channels, std::uint64_t seed) {
    ArchConfig arch;
    arch.latent_channels = latent_channels;
    return build_attack_model<T>(arch, seed);
}

namespace {

template <typename T>
void check_encoder_input(const Tensor<T>& image) {
    if (image.ndim() != 3 || image.dims[0] != 3) {
        throw ShapeError("encode: input must be 3xHxW, got " + shape_str(image), 0);
    }
    if (image.dims[1] % 8 != 0) {
        throw ShapeError("encode: height " + std::to_string(image.dims[1]) + " not divisible by 8", 1);
    }
    if (image.dims[2] % 8 != 0) {
        throw ShapeError("encode: width " + std::to_string(image.dims[2]) + " not divisible by 8", 2);
    }
}

template <typename T>
Tensor<T> apply_layer(const ConvLayer<T>& l, const Tensor<T>& x) {
    return l.transposed ? kernels::conv_transpose2d(x, l.w, l.b, l.spec)
                        : kernels::conv2d(x, l.w, l.b, l.spec);
}

} // namespace

template <typename T>
Tensor<T> forward_traced(const AttackModel<T>& model, const Tensor<T>& image, ForwardTrace<T>& t) {
    check_encoder_input(image);
    using namespace kernels;
    t.input = image;

    t.a1 = apply_layer(model.conv1, image);
    auto [p1, i1] = maxpool2d(relu(t.a1));
    t.p1 = std::move(p1);
    t.idx1 = std::move(i1);

    t.a2 = apply_layer(model.conv2, t.p1);
    auto [p2, i2] = maxpool2d(relu(t.a2));
    t.p2 = std::move(p2);
    t.idx2 = std::move(i2);

    t.a3 = apply_layer(model.conv3, t.p2);
    auto [p3, i3] = maxpool2d(relu(t.a3));
    t.p3 = std::move(p3);
    t.idx3 = std::move(i3);

    t.a4 = apply_layer(model.conv4_dilated, t.p3);
    t.y = relu(t.a4);

    t.d0 = apply_layer(model.tconv1_dilated, t.y);
    t.rd0 = relu(t.d0);

    t.d1 = apply_layer(model.dconv1, t.rd0);
    t.u1 = maxunpool2d(relu(t.d1), t.idx3, 2 * t.d1.dims[1], 2 * t.d1.dims[2]);

    t.d2 = apply_layer(model.dconv2, t.u1);
    t.u2 = maxunpool2d(relu(t.d2), t.idx2, 2 * t.d2.dims[1], 2 * t.d2.dims[2]);

    t.d3 = apply_layer(model.dconv3, t.u2);
    t.u3 = maxunpool2d(relu(t.d3), t.idx1, 2 * t.d3.dims[1], 2 * t.d3.dims[2]);

    t.output = apply_layer(model.tconv_out, t.u3);
    return t.output;
}

template <typename T>
LatentState<T> encode(const AttackModel<T>& model, const Tensor<T>& image) {
    check_encoder_input(image);
    using namespace kernels;
    LatentState<T> s;
    s.in_h = image.dims[1];
    s.in_w = image.dims[2];
    Tensor<T> x = relu(apply_layer(model.conv1, image));
    auto [p1, i1] = maxpool2d(x);
    s.idx1 = std::move(i1);
    x = relu(apply_layer(model.conv2, p1));
    auto [p2, i2] = maxpool2d(x);
    s.idx2 = std::move(i2);
    x = relu(apply_layer(model.conv3, p2));
    auto [p3, i3] = maxpool2d(x);
    s.idx3 = std::move(i3);
    s.y = relu(apply_layer(model.conv4_dilated, p3));
    return s;
}

template <typename T>
Tensor<T> decode(const AttackModel<T>& model, const LatentState<T>& s) {
    using namespace kernels;
    Tensor<T> x = relu(apply_layer(model.tconv1_dilated, s.y));
    x = relu(apply_layer(model.dconv1, x));
    x = maxunpool2d(x, s.idx3, 2 * x.dims[1], 2 * x.dims[2]);
    x = relu(apply_layer(model.dconv2, x));
    x = maxunpool2d(x, s.idx2, 2 * x.dims[1], 2 * x.dims[2]);
    x = relu(apply_layer(model.dconv3, x));
    x = maxunpool2d(x, s.idx1, 2 * x.dims[1], 2 * x.dims[2]);
    return apply_layer(model.tconv_out, x);
}

template <typename T>
Tensor<T> attack_forward(const AttackModel<T>& model, const Tensor<T>& image) {
    ForwardTrace<T> t;
    return forward_traced(model, image, t);
}

template <typename T>
Perturbation<T> perturbation(const AttackModel<T>& model, const Tensor<T>& image) {
    Tensor<T> out = attack_forward(model, image);
    Perturbation<T> p;
    p.theta = Tensor<T>(image.dims);
    for (std::size_t i = 0; i < image.numel(); ++i) {
        p.theta.data[i] = out.data[i] - image.data[i];
    }
    return p;
}

template <typename T>
ModelGrads<T> zero_grads(const AttackModel<T>& model) {
    ModelGrads<T> g;
    for (const ConvLayer<T>* l : model.layers()) {
        g.gw.emplace_back(l->w.dims);
        g.gb.emplace_back(l->b.dims);
    }
    return g;
}

template <typename T>
void add_grads(ModelGrads<T>& into, const ModelGrads<T>& from) {
    for (std::size_t k = 0; k < into.gw.size(); ++k) {
        for (std::size_t i = 0; i < into.gw[k].numel(); ++i) into.gw[k].data[i] += from.gw[k].data[i];
        for (std::size_t i = 0; i < into.gb[k].numel(); ++i) into.gb[k].data[i] += from.gb[k].data[i];
    }
}

template <typename T>
Tensor<T> attack_backward(const AttackModel<T>& model, const ForwardTrace<T>& t,
                          const Tensor<T>& g_output, ModelGrads<T>& grads) {
    using namespace kernels;
    // layer order in grads: conv1..conv4_dilated, tconv1_dilated, dconv1..3, tconv_out
    enum { L_CONV1, L_CONV2, L_CONV3, L_CONV4, L_TCONV1, L_DCONV1, L_DCONV2, L_DCONV3, L_TOUT };

    auto add_wg = [&grads](int slot, std::pair<Tensor<T>, Tensor<T>> wg) {
        auto& [gw, gb] = wg;
        auto& dw = grads.gw[static_cast<std::size_t>(slot)];
        auto& db = grads.gb[static_cast<std::size_t>(slot)];
        for (std::size_t i = 0; i < dw.numel(); ++i) dw.data[i] += gw.data[i];
        for (std::size_t i = 0; i < db.numel(); ++i) db.data[i] += gb.data[i];
    };

    Tensor<T> g = g_output;

    add_wg(L_TOUT, conv_transpose2d_weight_grad(g, t.u3, model.tconv_out.spec));
    g = conv_transpose2d_input_grad(g, model.tconv_out.w, model.tconv_out.spec);

    g = maxunpool2d_input_grad(g, t.idx1);
    g = relu_grad(g, t.d3);
    add_wg(L_DCONV3, conv2d_weight_grad(g, t.u2, model.dconv3.spec));
    g = conv2d_input_grad(g, model.dconv3.w, model.dconv3.spec);

    g = maxunpool2d_input_grad(g, t.idx2);
    g = relu_grad(g, t.d2);
    add_wg(L_DCONV2, conv2d_weight_grad(g, t.u1, model.dconv2.spec));
    g = conv2d_input_grad(g, model.dconv2.w, model.dconv2.spec);

    g = maxunpool2d_input_grad(g, t.idx3);
    g = relu_grad(g, t.d1);
    add_wg(L_DCONV1, conv2d_weight_grad(g, t.rd0, model.dconv1.spec));
    g = conv2d_input_grad(g, model.dconv1.w, model.dconv1.spec);

    g = relu_grad(g, t.d0);
    add_wg(L_TCONV1, conv_transpose2d_weight_grad(g, t.y, model.tconv1_dilated.spec));
    g = conv_transpose2d_input_grad(g, model.tconv1_dilated.w, model.tconv1_dilated.spec);

    g = relu_grad(g, t.a4);
    add_wg(L_CONV4, conv2d_weight_grad(g, t.p3, model.conv4_dilated.spec));
    g = conv2d_input_grad(g, model.conv4_dilated.w, model.conv4_dilated.spec);

    g = maxunpool2d(g, t.idx3, t.a3.dims[1], t.a3.dims[2]);
    g = relu_grad(g, t.a3);
    add_wg(L_CONV3, conv2d_weight_grad(g, t.p2, model.conv3.spec));
    g = conv2d_input_grad(g, model.conv3.w, model.conv3.spec);

    g = maxunpool2d(g, t.idx2, t.a2.dims[1], t.a2.dims[2]);
    g = relu_grad(g, t.a2);
    add_wg(L_CONV2, conv2d_weight_grad(g, t.p1, model.conv2.spec));
    g = conv2d_input_grad(g, model.conv2.w, model.conv2.spec);

    g = maxunpool2d(g, t.idx1, t.a1.dims[1], t.a1.dims[2]);
    g = relu_grad(g, t.a1);
    add_wg(L_CONV1, conv2d_weight_grad(g, t.input, model.conv1.spec));
    return conv2d_input_grad(g, model.conv1.w, model.conv1.spec);
}

namespace {

template <typename T>
void check_triples(const std::vector<Tensor<T>>& a, const std::vector<Tensor<T>>& r,
                   const std::vector<Tensor<T>>& g) {
    if (a.empty()) throw ShapeError("contrastive_loss: empty batch");
    if (a.size() != r.size() || a.size() != g.size()) {
        throw ShapeError("contrastive_loss: triple lists differ in length");
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i].same_shape(r[i]) || !a[i].same_shape(g[i])) {
            throw ShapeError("contrastive_loss: shape mismatch in triple " + std::to_string(i));
        }
        if (has_non_finite(a[i]) || has_non_finite(r[i]) || has_non_finite(g[i])) {
            throw Error("contrastive_loss: non-finite value in triple " + std::to_string(i));
        }
    }
}

} // namespace

template <typename T>
double contrastive_loss(const std::vector<Tensor<T>>& attacked,
                        const std::vector<Tensor<T>>& simulated_real,
                        const std::vector<Tensor<T>>& gan) {
    check_triples(attacked, simulated_real, gan);
    const double n = static_cast<double>(attacked.size());
    double total = 0.0;
    for (std::size_t i = 0; i < attacked.size(); ++i) {
        const double num = l1_diff(attacked[i], simulated_real[i]);
        const double den = l1_diff(attacked[i], gan[i]) + kContrastiveEps;
        total += num / den;
    }
    return total / n;
}

template <typename T>
std::vector<Tensor<T>> contrastive_loss_grad(const std::vector<Tensor<T>>& attacked,
                                             const std::vector<Tensor<T>>& simulated_real,
                                             const std::vector<Tensor<T>>& gan) {
    check_triples(attacked, simulated_real, gan);
    const double n = static_cast<double>(attacked.size());
    std::vector<Tensor<T>> out;
    out.reserve(attacked.size());
    auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
    for (std::size_t i = 0; i < attacked.size(); ++i) {
        const double num = l1_diff(attacked[i], simulated_real[i]);
        const double den = l1_diff(attacked[i], gan[i]) + kContrastiveEps;
        Tensor<T> g(attacked[i].dims);
        for (std::size_t k = 0; k < g.numel(); ++k) {
            const double sr = sign(static_cast<double>(attacked[i].data[k]) -
                                   static_cast<double>(simulated_real[i].data[k]));
            const double si = sign(static_cast<double>(attacked[i].data[k]) -
                                   static_cast<double>(gan[i].data[k]));
            g.data[k] = static_cast<T>((sr * den - num * si) / (den * den) / n);
        }
        out.push_back(std::move(g));
    }
    return out;
}

#define GANEVADE_INSTANTIATE_MODEL(T)                                                            \
    template struct AttackModel<T>;                                                              \
    template AttackModel<T> build_attack_model<T>(const ArchConfig&, std::uint64_t);             \
    template AttackModel<T> build_attack_model<T>(int, std::uint64_t);                           \
    template LatentState<T> encode<T>(const AttackModel<T>&, const Tensor<T>&);                  \
    template Tensor<T> decode<T>(const AttackModel<T>&, const LatentState<T>&);                  \
    template Tensor<T> attack_forward<T>(const AttackModel<T>&, const Tensor<T>&);               \
    template Perturbation<T> perturbation<T>(const AttackModel<T>&, const Tensor<T>&);           \
    template Tensor<T> forward_traced<T>(const AttackModel<T>&, const Tensor<T>&, ForwardTrace<T>&); \
    template ModelGrads<T> zero_grads<T>(const AttackModel<T>&);                                 \
    template void add_grads<T>(ModelGrads<T>&, const ModelGrads<T>&);                            \
    template Tensor<T> attack_backward<T>(const AttackModel<T>&, const ForwardTrace<T>&,         \
                                          const Tensor<T>&, ModelGrads<T>&);                     \
    template double contrastive_loss<T>(const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&, \
                                        const std::vector<Tensor<T>>&);                          \
    template std::vector<Tensor<T>> contrastive_loss_grad<T>(const std::vector<Tensor<T>>&,      \
                                                             const std::vector<Tensor<T>>&,      \
                                                             const std::vector<Tensor<T>>&);

GANEVADE_INSTANTIATE_MODEL(float)
GANEVADE_INSTANTIATE_MODEL(double)

#undef GANEVADE_INSTANTIATE_MODEL

} // namespace ganevade
