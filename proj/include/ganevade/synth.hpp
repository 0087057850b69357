#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ganevade/detector.hpp"
#include "ganevade/metrics.hpp"
#include "ganevade/pipeline.hpp"

namespace ganevade {

// Zero-mean, unit-L2 planted pattern standing in for a generator's
// periodic artifacts.
struct FingerprintPattern {
    Tensor<double> pattern; // 3xHxW
    double amplitude = 0.04;
};

// Product-of-sinusoids grid at `cycles` cycles per axis with per-channel
// phase offsets. At integer cycles it is exactly orthogonal to the base
// image content produced by gen_base_images.
FingerprintPattern make_fingerprint(int h, int w, double amplitude, int cycles = 3);

// Smooth random fields: sums of low-frequency integer-cycle waves with
// random phases plus mild uniform noise, values inside [0,1].
std::vector<Image> gen_base_images(int n, int h, int w, std::uint64_t seed);

// clamp(img + amplitude * pattern, 0, 1)
Image plant_fingerprint(const Image& img, const FingerprintPattern& fp);

// Matched filter through a logistic: sigmoid(alpha * (<img - mean(img), pattern> - beta)).
class SyntheticDetector final : public DetectorOracle {
public:
    SyntheticDetector(Tensor<double> pattern, double alpha, double beta);
    double score(const Image& img) override;
    std::string id() const override { return "synthetic"; }

    double correlation(const Image& img) const;
    double alpha() const { return alpha_; }
    double beta() const { return beta_; }
    const Tensor<double>& pattern() const { return pattern_; }

    void save(const std::string& dir) const;           // pattern.tns + calibration.json
    static SyntheticDetector load(const std::string& dir);

private:
    Tensor<double> pattern_;
    double alpha_;
    double beta_;
};

double synth_detector_score(const SyntheticDetector& det, const Image& img);

struct CalibrationStats {
    double base_mean = 0.0;
    double gan_mean = 0.0;
    double base_pd = 0.0; // false positives at tau 0.5
    double gan_pd = 0.0;
};

// Places beta between the two correlation means and scales alpha so the
// means land near scores 0.05 / 0.95.
SyntheticDetector calibrate_detector(const Tensor<double>& pattern, const std::vector<Image>& base,
                                     const std::vector<Image>& fingerprinted,
                                     CalibrationStats* stats = nullptr);

struct BenchConfig {
    int n_base = 400; // split into remover-training, pipeline candidates, held-out test
    int n_real = 100;
    int n_test = 100;
    int height = 32;
    int width = 32;
    double amplitude = 0.04;
    int n_train_pairs = 200;
    int steps = 600;         // attack-model steps (epochs are derived)
    int remover_steps = 240;
    std::uint64_t seed = 7;
    double t1 = 0.8;
    double t2 = 0.7;
    double tau = 0.5;
    std::string out_dir; // empty: nothing written

    // artifact-level acceptance targets
    double min_pre_pd = 0.95;
    double max_model_pd = 0.30;
    double min_psnr = 30.0;
    double min_ssim = 0.90;

    void validate() const;
};

struct BenchAssertion {
    std::string name;
    double value = 0.0;
    std::string relation; // ">=", "<=", "<"
    double threshold = 0.0;
    bool pass = false;
};

struct BenchResult {
    AttackReport report;
    PipelineManifest pipeline_manifest;
    CalibrationStats calibration;
    std::vector<double> attack_loss_history;
    long train_steps = 0;
    int pairs_used = 0;
    double remover_recon_psnr = 0.0; // on held-out real images
    std::vector<BenchAssertion> assertions;
    bool all_pass = false;

    std::string manifest_json() const;
};

// End-to-end desk-scale run: plant fingerprints, calibrate the detector,
// build pairs through the pipeline, train the attack model, evaluate
// {no attack, gf3, gf5, mf3, mf5, remover, model} and check the acceptance
// targets. Deterministic under cfg.seed.
BenchResult run_benchmark(const BenchConfig& cfg);

} // namespace ganevade
