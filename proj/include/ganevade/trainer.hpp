#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ganevade/attack_model.hpp"
#include "ganevade/sample.hpp"

namespace ganevade {

struct TrainConfig {
    int batch_size = 32;
    double lr0 = 1e-3;
    double lr_min = 1e-6;
    int epochs = 50;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    double weight_decay = 0.01;

    void validate() const;

    // Accepts exactly the field names above (any subset); unknown fields
    // are rejected.
    static TrainConfig from_json(const std::string& text);
    std::string to_json() const;
};

// lr_min + 0.5*(lr0 - lr_min)*(1 + cos(pi*step/total_steps))
double cosine_lr(long step, long total_steps, double lr0, double lr_min);

struct AdamWState {
    std::vector<Tensor<double>> m; // aligned with model.tensors() order
    std::vector<Tensor<double>> v;
    long t = 0;
};

AdamWState init_adamw(const AttackModel<double>& model);

// Decoupled decay applied as w *= (1 - lr*weight_decay) before the
// moment update is subtracted. Throws TrainError on non-finite gradients
// without touching params or state.
void adamw_step(AttackModel<double>& model, const ModelGrads<double>& grads, AdamWState& state,
                double lr, const TrainConfig& cfg);

struct TrainOptions {
    // Where to save params+state if the loss stops being finite.
    std::string abort_checkpoint_path;
    // Resume point; both or neither.
    const AttackModel<double>* resume_model = nullptr;
    const AdamWState* resume_state = nullptr;
    std::function<void(long step, double loss)> on_step;
};

struct TrainResult {
    AttackModel<double> model;
    AdamWState state;
    std::vector<double> loss_history; // steps executed by this call
    long total_steps = 0;
};

// Trains the encoder-decoder under the contrastive objective on shuffled
// mini-batches with a per-step cosine learning rate. Deterministic under
// cfg.seed for any thread count; resuming from a saved state replays the
// remaining steps exactly.
TrainResult train_attack(const std::vector<SamplePair>& pairs, const TrainConfig& cfg,
                         const TrainOptions& opt = {});

// One-class variant: same network trained to reconstruct real images under
// mean absolute error per pixel. Used as the fingerprint remover.
TrainResult train_remover(const std::vector<Image>& real_images, const TrainConfig& cfg,
                          const TrainOptions& opt = {});

// Checkpoint container ("CPAB"): u32 version, u32 tensor count, then per
// tensor a u16 name length, the name, and a TNS1 block. Bitwise roundtrip.
void save_checkpoint(const AttackModel<double>& model, const AdamWState* state, const std::string& path);
std::pair<AttackModel<double>, std::optional<AdamWState>> load_checkpoint(const std::string& path);

} // namespace ganevade
