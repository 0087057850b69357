#include "ganevade/attacks.hpp"

#include "ganevade/baselines.hpp"

namespace ganevade {

std::vector<std::string> attack_method_names() {
    return {"gf3", "gf5", "mf3", "mf5", "resize256", "resize512", "model", "remover"};
}

AttackMethod make_attack(const std::string& method, const AttackModel<double>* model) {
    if (method == "gf3") return {"GF (3x3)", true, [](const Image& i) { return gaussian_filter(i, 3); }};
    if (method == "gf5") return {"GF (5x5)", true, [](const Image& i) { return gaussian_filter(i, 5); }};
    if (method == "mf3") return {"MF (3x3)", true, [](const Image& i) { return median_filter(i, 3); }};
    if (method == "mf5") return {"MF (5x5)", true, [](const Image& i) { return median_filter(i, 5); }};
    if (method == "resize256") {
        return {"Resizing (256x256)", false, [](const Image& i) { return bicubic_resize(i, 256, 256); }};
    }
    if (method == "resize512") {
        return {"Resizing (512x512)", false, [](const Image& i) { return bicubic_resize(i, 512, 512); }};
    }
    if (method == "model" || method == "remover") {
        if (!model) throw ConfigError("attack '" + method + "' needs a model checkpoint");
        const char* label = method == "model" ? "Model" : "Remover";
        return {label, true, [model](const Image& i) { return clamp01(attack_forward(*model, i)); }};
    }
    throw ConfigError("unknown attack method '" + method + "'");
}

} // namespace ganevade
