#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ganevade/attack_model.hpp"
#include "ganevade/detector.hpp"
#include "ganevade/sample.hpp"
#include "ganevade/trainer.hpp"

namespace ganevade {

struct PipelineConfig {
    double t1 = 0.8;
    double t2 = 0.7;
    void validate() const;
};

struct StageRejection {
    int index = 0; // position in the original candidate list
    double score = 0.0;
};

struct PipelineManifest {
    int stage1_in = 0;
    int stage1_out = 0;
    int stage2_out = 0;
    int stage3_out = 0;
    std::vector<StageRejection> rejected; // stage-3 discards
    std::string to_json() const;
};

// Fingerprint removal step; the autoencoder is the production choice, the
// Gaussian fallback keeps pipeline tests cheap.
class Remover {
public:
    virtual ~Remover() = default;
    virtual Image apply(const Image& img) const = 0;
};

class AutoencoderRemover final : public Remover {
public:
    explicit AutoencoderRemover(AttackModel<double> model) : model_(std::move(model)) {}
    Image apply(const Image& img) const override; // forward pass, clamped to [0,1]
    const AttackModel<double>& model() const { return model_; }

private:
    AttackModel<double> model_;
};

class GaussianRemover final : public Remover {
public:
    explicit GaussianRemover(int kernel = 5) : kernel_(kernel) {}
    Image apply(const Image& img) const override;

private:
    int kernel_;
};

// Keeps candidates with P_GAN strictly above t1, order preserved.
std::vector<Image> stage1_select(const std::vector<Image>& candidates, DetectorOracle& det, double t1);

// Runs every image through the remover.
std::vector<Image> stage2_remove(const std::vector<Image>& images, const Remover& remover);
std::vector<Image> stage2_remove(const std::vector<Image>& images, const AttackModel<double>& remover);

// Keeps pairs whose simulated-real candidate scores strictly below 1 - t2.
// Rejections (with scores) are appended to `rejected` when provided.
std::vector<SamplePair> stage3_check(const std::vector<std::pair<Image, Image>>& pairs,
                                     DetectorOracle& det, double t2,
                                     std::vector<StageRejection>* rejected = nullptr);

struct BuildResult {
    std::vector<SamplePair> pairs;
    PipelineManifest manifest;
    AttackModel<double> remover;
};

// Trains the one-class remover on real_images, then runs stages 1-3 over
// gan_images. Throws PipelineError when no pair survives.
BuildResult build_training_set(const std::vector<Image>& gan_images,
                               const std::vector<Image>& real_images, DetectorOracle& det,
                               const PipelineConfig& cfg, const TrainConfig& remover_cfg);

// Variant with a caller-supplied remover (skips training).
BuildResult build_training_set(const std::vector<Image>& gan_images, const Remover& remover,
                               DetectorOracle& det, const PipelineConfig& cfg);

} // namespace ganevade
