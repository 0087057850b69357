#pragma once

#include <string>
#include <vector>

#include "ganevade/attack_model.hpp"
#include "ganevade/metrics.hpp"

namespace ganevade {

// gf3, gf5, mf3, mf5, resize256, resize512, model, remover
std::vector<std::string> attack_method_names();

// `model` is required for the "model" and "remover" methods and ignored
// otherwise. The returned method captures it by reference.
AttackMethod make_attack(const std::string& method, const AttackModel<double>* model = nullptr);

} // namespace ganevade
