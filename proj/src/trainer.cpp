#include "ganevade/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ganevade/rng.hpp"

namespace ganevade {

namespace {
constexpr std::uint64_t kShuffleStream = 1u << 20;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("train config: epochs must be >= 0");
    if (lr_min > lr0) throw ConfigError("train config: lr_min must be <= lr0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw ConfigError("train config: betas must be in [0, 1)");
    }
    if (eps_adam <= 0.0) throw ConfigError("train config: eps_adam must be > 0");
    if (weight_decay < 0.0) throw ConfigError("train config: weight_decay must be >= 0");
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("train config: invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("train config: document must be an object");
    TrainConfig cfg;
    for (const auto& [key, value] : doc.items()) {
        try {
            if (key == "batch_size") cfg.batch_size = value.get<int>();
            else if (key == "lr0") cfg.lr0 = value.get<double>();
            else if (key == "lr_min") cfg.lr_min = value.get<double>();
            else if (key == "epochs") cfg.epochs = value.get<int>();
            else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
            else if (key == "beta1") cfg.beta1 = value.get<double>();
            else if (key == "beta2") cfg.beta2 = value.get<double>();
            else if (key == "eps_adam") cfg.eps_adam = value.get<double>();
            else if (key == "weight_decay") cfg.weight_decay = value.get<double>();
            else throw ConfigError("train config: unknown field '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("train config: bad value for '" + key + "': " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

std::string TrainConfig::to_json() const {
    nlohmann::json doc;
    doc["batch_size"] = batch_size;
    doc["lr0"] = lr0;
    doc["lr_min"] = lr_min;
    doc["epochs"] = epochs;
    doc["seed"] = seed;
    doc["beta1"] = beta1;
    doc["beta2"] = beta2;
    doc["eps_adam"] = eps_adam;
    doc["weight_decay"] = weight_decay;
    return doc.dump(2);
}

double cosine_lr(long step, long total_steps, double lr0, double lr_min) {
    if (total_steps < 1) throw Error("cosine_lr: total_steps must be >= 1");
    if (step < 0 || step > total_steps) {
        throw Error("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                    std::to_string(total_steps) + "]");
    }
    if (step == 0) return lr0; // keep the endpoints exact in floating point
    if (step == total_steps) return lr_min;
    const double phase = 3.14159265358979323846 * static_cast<double>(step) / static_cast<double>(total_steps);
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(phase));
}

namespace {

std::vector<Tensor<double>*> flat_params(AttackModel<double>& model) {
    std::vector<Tensor<double>*> out;
    for (auto& [name, tensor] : model.tensors()) {
        (void)name;
        out.push_back(tensor);
    }
    return out;
}

std::vector<const Tensor<double>*> flat_grads(const ModelGrads<double>& grads) {
    std::vector<const Tensor<double>*> out;
    for (std::size_t k = 0; k < grads.gw.size(); ++k) {
        out.push_back(&grads.gw[k]);
        out.push_back(&grads.gb[k]);
    }
    return out;
}

} // namespace

AdamWState init_adamw(const AttackModel<double>& model) {
    AdamWState state;
    for (const auto& [name, tensor] : model.tensors()) {
        (void)name;
        state.m.emplace_back(tensor->dims);
        state.v.emplace_back(tensor->dims);
    }
    return state;
}

void adamw_step(AttackModel<double>& model, const ModelGrads<double>& grads, AdamWState& state,
                double lr, const TrainConfig& cfg) {
    auto params = flat_params(model);
    auto gs = flat_grads(grads);
    if (params.size() != gs.size() || params.size() != state.m.size()) {
        throw TrainError("adamw_step: parameter/gradient/state layout mismatch");
    }
    for (std::size_t k = 0; k < gs.size(); ++k) {
        if (!gs[k]->same_shape(*params[k])) {
            throw TrainError("adamw_step: gradient shape mismatch at tensor " + std::to_string(k));
        }
        if (has_non_finite(*gs[k])) {
            throw TrainError("adamw_step: non-finite gradient at tensor " + std::to_string(k) +
                             "; step aborted");
        }
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    const double decay = 1.0 - lr * cfg.weight_decay;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor<double>& w = *params[k];
        const Tensor<double>& g = *gs[k];
        Tensor<double>& m = state.m[k];
        Tensor<double>& v = state.v[k];
        for (std::size_t i = 0; i < w.numel(); ++i) {
            m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * g.data[i];
            v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * g.data[i] * g.data[i];
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            w.data[i] = w.data[i] * decay - lr * (mhat / (std::sqrt(vhat) + cfg.eps_adam));
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kCkptMagic[4] = {'C', 'P', 'A', 'B'};
constexpr std::uint32_t kCkptVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError("checkpoint: truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_entry(std::ostream& out, const std::string& name, const Tensor<double>& t) {
    if (name.size() > 0xffff) throw FormatError("checkpoint: tensor name too long");
    const std::uint16_t len = static_cast<std::uint16_t>(name.size());
    unsigned char b[2] = {static_cast<unsigned char>(len & 0xff), static_cast<unsigned char>(len >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    save_tensor(t, out);
}

std::pair<std::string, Tensor<double>> read_entry(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    if (!in) throw FormatError("checkpoint: truncated entry header");
    const std::size_t len = static_cast<std::size_t>(b[0]) | (static_cast<std::size_t>(b[1]) << 8);
    std::string name(len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(len));
    if (!in) throw FormatError("checkpoint: truncated entry name");
    return {std::move(name), load_tensor_as<double>(in)};
}

} // namespace

void save_checkpoint(const AttackModel<double>& model, const AdamWState* state, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("checkpoint: cannot open " + path + " for writing");
    out.write(kCkptMagic, 4);
    write_u32(out, kCkptVersion);
    const auto tensors = model.tensors();
    std::uint32_t count = static_cast<std::uint32_t>(tensors.size());
    if (state) count += 1 + 2 * static_cast<std::uint32_t>(tensors.size());
    write_u32(out, count);
    for (const auto& [name, tensor] : tensors) write_entry(out, name, *tensor);
    if (state) {
        Tensor<double> t({1});
        t.data[0] = static_cast<double>(state->t);
        write_entry(out, "adamw.t", t);
        for (std::size_t k = 0; k < tensors.size(); ++k) {
            write_entry(out, "adamw.m." + tensors[k].first, state->m[k]);
            write_entry(out, "adamw.v." + tensors[k].first, state->v[k]);
        }
    }
    if (!out) throw FormatError("checkpoint: write failed for " + path);
}

std::pair<AttackModel<double>, std::optional<AdamWState>> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("checkpoint: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCkptMagic, 4) != 0) {
        throw FormatError("checkpoint: bad magic, expected CPAB");
    }
    const std::uint32_t version = read_u32(in);
    if (version != kCkptVersion) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    }
    const std::uint32_t count = read_u32(in);
    std::map<std::string, Tensor<double>> entries;
    for (std::uint32_t k = 0; k < count; ++k) {
        auto [name, tensor] = read_entry(in);
        if (!entries.emplace(std::move(name), std::move(tensor)).second) {
            throw FormatError("checkpoint: duplicate tensor name");
        }
    }

    auto take = [&entries](const std::string& name) {
        auto it = entries.find(name);
        if (it == entries.end()) throw FormatError("checkpoint: missing tensor '" + name + "'");
        Tensor<double> t = std::move(it->second);
        entries.erase(it);
        return t;
    };

    // channel widths are recoverable from the stored weight shapes
    for (const char* probe : {"conv1.w", "conv2.w", "conv3.w", "conv4_dilated.w"}) {
        auto it = entries.find(probe);
        if (it == entries.end()) throw FormatError(std::string("checkpoint: missing tensor '") + probe + "'");
        if (it->second.ndim() != 4) throw FormatError(std::string("checkpoint: malformed tensor '") + probe + "'");
    }
    ArchConfig arch;
    arch.c1 = entries.at("conv1.w").dims[0];
    arch.c2 = entries.at("conv2.w").dims[0];
    arch.c3 = entries.at("conv3.w").dims[0];
    arch.latent_channels = entries.at("conv4_dilated.w").dims[0];

    AttackModel<double> model = build_attack_model<double>(arch, 0);
    for (auto& [name, tensor] : model.tensors()) {
        Tensor<double> stored = take(name);
        if (stored.dims != tensor->dims) {
            throw FormatError("checkpoint: tensor '" + name + "' has shape " + shape_str(stored) +
                              ", expected " + shape_str(*tensor));
        }
        *tensor = std::move(stored);
    }

    std::optional<AdamWState> state;
    if (entries.count("adamw.t")) {
        AdamWState s;
        Tensor<double> t = take("adamw.t");
        if (t.numel() != 1) throw FormatError("checkpoint: malformed adamw.t");
        s.t = static_cast<long>(t.data[0]);
        for (const auto& [name, tensor] : model.tensors()) {
            Tensor<double> m = take("adamw.m." + name);
            Tensor<double> v = take("adamw.v." + name);
            if (m.dims != tensor->dims || v.dims != tensor->dims) {
                throw FormatError("checkpoint: optimizer state shape mismatch for '" + name + "'");
            }
            s.m.push_back(std::move(m));
            s.v.push_back(std::move(v));
        }
        state = std::move(s);
    }
    if (!entries.empty()) {
        throw FormatError("checkpoint: unexpected tensor '" + entries.begin()->first + "'");
    }
    return {std::move(model), std::move(state)};
}

// ---------------------------------------------------------------------------
// Training loops

namespace {

struct SampleTask {
    const Image* input;
    const Image* target; // nullptr for the reconstruction objective
};

struct SampleOutcome {
    double ratio = 0.0; // this sample's contribution before the 1/B factor
    ModelGrads<double> grads;
};

// Forward + objective + backward for one sample. `inv_batch` folds the 1/B
// of the batch mean into the output gradient.
SampleOutcome eval_sample(const AttackModel<double>& model, const SampleTask& task, double inv_batch) {
    SampleOutcome out;
    out.grads = zero_grads(model);
    ForwardTrace<double> trace;
    const Tensor<double>& produced = forward_traced(model, *task.input, trace);

    Tensor<double> g_out(produced.dims);
    if (task.target) {
        // ratio objective against (target, input)
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < produced.numel(); ++i) {
            num += std::abs(produced.data[i] - task.target->data[i]);
            den += std::abs(produced.data[i] - task.input->data[i]);
        }
        den += kContrastiveEps;
        out.ratio = num / den;
        auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
        for (std::size_t i = 0; i < produced.numel(); ++i) {
            const double sr = sign(produced.data[i] - task.target->data[i]);
            const double si = sign(produced.data[i] - task.input->data[i]);
            g_out.data[i] = (sr * den - num * si) / (den * den) * inv_batch;
        }
    } else {
        // mean absolute reconstruction error per pixel
        const double inv_n = 1.0 / static_cast<double>(produced.numel());
        double num = 0.0;
        for (std::size_t i = 0; i < produced.numel(); ++i) {
            num += std::abs(produced.data[i] - task.input->data[i]);
        }
        out.ratio = num * inv_n;
        auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
        for (std::size_t i = 0; i < produced.numel(); ++i) {
            g_out.data[i] = sign(produced.data[i] - task.input->data[i]) * inv_n * inv_batch;
        }
    }
    attack_backward(model, trace, g_out, out.grads);
    return out;
}

TrainResult run_training(const std::vector<SampleTask>& samples, const TrainConfig& cfg,
                         const TrainOptions& opt, const char* what) {
    cfg.validate();
    if (samples.empty()) throw TrainError(std::string(what) + ": no training samples");
    const std::vector<int>& dims0 = samples[0].input->dims;
    for (const SampleTask& s : samples) {
        if (s.input->dims != dims0 || (s.target && s.target->dims != dims0)) {
            throw TrainError(std::string(what) + ": all images must share one shape");
        }
    }
    if ((opt.resume_model == nullptr) != (opt.resume_state == nullptr)) {
        throw TrainError(std::string(what) + ": resume needs both model and optimizer state");
    }

    TrainResult result;
    if (opt.resume_model) {
        result.model = *opt.resume_model;
        result.state = *opt.resume_state;
    } else {
        result.model = build_attack_model<double>(ArchConfig{}, cfg.seed);
        result.state = init_adamw(result.model);
    }

    const long n = static_cast<long>(samples.size());
    const long steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    result.total_steps = static_cast<long>(cfg.epochs) * steps_per_epoch;
    if (result.state.t > result.total_steps) {
        throw TrainError(std::string(what) + ": resume state is past the configured schedule");
    }

    std::vector<int> order(samples.size());
    for (long epoch = 0; epoch < cfg.epochs; ++epoch) {
        if ((epoch + 1) * steps_per_epoch <= result.state.t) continue; // fully completed epoch
        std::iota(order.begin(), order.end(), 0);
        Rng rng = Rng::derive(cfg.seed, kShuffleStream + static_cast<std::uint64_t>(epoch));
        rng.shuffle(order);

        for (long b = 0; b < steps_per_epoch; ++b) {
            const long global_step = epoch * steps_per_epoch + b;
            if (global_step < result.state.t) continue; // replayed on resume

            const long lo = b * cfg.batch_size;
            const long hi = std::min<long>(lo + cfg.batch_size, n);
            const long batch = hi - lo;
            const double inv_batch = 1.0 / static_cast<double>(batch);

            ModelGrads<double> grads = zero_grads(result.model);
            double loss = 0.0;
            const long chunk = std::max(1, kernels::threads());
            std::vector<SampleOutcome> slot(static_cast<std::size_t>(std::min(chunk, batch)));
            for (long base = lo; base < hi; base += chunk) {
                const long top = std::min(hi, base + chunk);
#ifdef _OPENMP
#pragma omp parallel for schedule(static, 1) num_threads(kernels::threads()) \
    if (kernels::threads() > 1 && top - base > 1)
#endif
                for (long s = base; s < top; ++s) {
                    slot[static_cast<std::size_t>(s - base)] =
                        eval_sample(result.model, samples[static_cast<std::size_t>(order[static_cast<std::size_t>(s)])],
                                    inv_batch);
                }
                // reduce in sample order so results do not depend on threads
                for (long s = base; s < top; ++s) {
                    SampleOutcome& so = slot[static_cast<std::size_t>(s - base)];
                    loss += so.ratio;
                    add_grads(grads, so.grads);
                }
            }
            loss *= inv_batch;

            if (!std::isfinite(loss)) {
                if (!opt.abort_checkpoint_path.empty()) {
                    save_checkpoint(result.model, &result.state, opt.abort_checkpoint_path);
                }
                throw TrainError(std::string(what) + ": loss diverged (non-finite) at step " +
                                 std::to_string(result.state.t) +
                                 (opt.abort_checkpoint_path.empty()
                                      ? ""
                                      : "; last good state saved to " + opt.abort_checkpoint_path));
            }

            const double lr = cosine_lr(result.state.t, result.total_steps, cfg.lr0, cfg.lr_min);
            try {
                adamw_step(result.model, grads, result.state, lr, cfg);
            } catch (const TrainError&) {
                if (!opt.abort_checkpoint_path.empty()) {
                    save_checkpoint(result.model, &result.state, opt.abort_checkpoint_path);
                }
                throw;
            }
            result.loss_history.push_back(loss);
            if (opt.on_step) opt.on_step(result.state.t - 1, loss);
        }
    }
    return result;
}

} // namespace

TrainResult train_attack(const std::vector<SamplePair>& pairs, const TrainConfig& cfg,
                         const TrainOptions& opt) {
    std::vector<SampleTask> samples;
    samples.reserve(pairs.size());
    for (const SamplePair& p : pairs) samples.push_back({&p.gan, &p.simulated_real});
    return run_training(samples, cfg, opt, "train_attack");
}

TrainResult train_remover(const std::vector<Image>& real_images, const TrainConfig& cfg,
                          const TrainOptions& opt) {
    std::vector<SampleTask> samples;
    samples.reserve(real_images.size());
    for (const Image& img : real_images) samples.push_back({&img, nullptr});
    return run_training(samples, cfg, opt, "train_remover");
}

} // namespace ganevade
