#include "ganevade/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ganevade/baselines.hpp"
#include "ganevade/rng.hpp"

namespace ganevade {

namespace {
constexpr double kTwoPi = 6.283185307179586477;
}

FingerprintPattern make_fingerprint(int h, int w, double amplitude, int cycles) {
    if (h < 2 || w < 2) throw ShapeError("make_fingerprint: image too small");
    if (amplitude <= 0.0) throw Error("make_fingerprint: amplitude must be > 0");
    FingerprintPattern fp;
    fp.amplitude = amplitude;
    fp.pattern = Tensor<double>({3, h, w});
    for (int c = 0; c < 3; ++c) {
        const double phase_r = c * kTwoPi / 3.0;
        const double phase_c = c * kTwoPi / 3.0 + kTwoPi / 8.0;
        for (int i = 0; i < h; ++i) {
            const double si = std::sin(kTwoPi * cycles * i / static_cast<double>(h) + phase_r);
            for (int j = 0; j < w; ++j) {
                const double sj = std::sin(kTwoPi * cycles * j / static_cast<double>(w) + phase_c);
                fp.pattern.at(c, i, j) = si * sj;
            }
        }
    }
    const double mu = mean(fp.pattern);
    for (double& v : fp.pattern.data) v -= mu;
    const double norm = l2_norm(fp.pattern);
    for (double& v : fp.pattern.data) v /= norm;
    return fp;
}

std::vector<Image> gen_base_images(int n, int h, int w, std::uint64_t seed) {
    if (h % 8 != 0) throw ShapeError("gen_base_images: height not divisible by 8", 1);
    if (w % 8 != 0) throw ShapeError("gen_base_images: width not divisible by 8", 2);
    std::vector<Image> out;
    out.reserve(static_cast<std::size_t>(n));
    // wave frequencies stay at or below 2 cycles per axis so the planted
    // pattern (3 cycles, diagonal) lives in an orthogonal band
    static const double amps[4] = {0.15, 0.10, 0.06, 0.04};
    for (int k = 0; k < n; ++k) {
        Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(k));
        Image img({3, h, w});
        for (int c = 0; c < 3; ++c) {
            for (int m = 0; m < 4; ++m) {
                int fx = 0, fy = 0;
                while (fx == 0 && fy == 0) {
                    fx = static_cast<int>(rng.below(3));
                    fy = static_cast<int>(rng.below(3));
                }
                const double phase = rng.uniform(0.0, kTwoPi);
                const double a = amps[m];
                for (int i = 0; i < h; ++i) {
                    for (int j = 0; j < w; ++j) {
                        img.at(c, i, j) += a * std::sin(kTwoPi * (fx * j / static_cast<double>(w) +
                                                                  fy * i / static_cast<double>(h)) +
                                                        phase);
                    }
                }
            }
            for (int i = 0; i < h; ++i) {
                for (int j = 0; j < w; ++j) {
                    img.at(c, i, j) += 0.5 + rng.uniform(-0.01, 0.01);
                }
            }
        }
        out.push_back(clamp01(img));
    }
    return out;
}

Image plant_fingerprint(const Image& img, const FingerprintPattern& fp) {
    if (img.dims != fp.pattern.dims) {
        throw ShapeError("plant_fingerprint: image " + shape_str(img) + " does not match pattern " +
                         shape_str(fp.pattern));
    }
    Image out = img;
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out.data[i] += fp.amplitude * fp.pattern.data[i];
    }
    return clamp01(out);
}

SyntheticDetector::SyntheticDetector(Tensor<double> pattern, double alpha, double beta)
    : pattern_(std::move(pattern)), alpha_(alpha), beta_(beta) {
    if (pattern_.ndim() != 3) throw ShapeError("synthetic detector: pattern must be 3xHxW");
}

double SyntheticDetector::correlation(const Image& img) const {
    if (img.dims != pattern_.dims) {
        throw DetectorError("synthetic detector: image " + shape_str(img) + " does not match pattern " +
                            shape_str(pattern_));
    }
    const double mu = mean(img);
    double acc = 0.0;
    for (std::size_t i = 0; i < img.numel(); ++i) {
        acc += (img.data[i] - mu) * pattern_.data[i];
    }
    return acc;
}

double SyntheticDetector::score(const Image& img) {
    const double corr = correlation(img);
    return 1.0 / (1.0 + std::exp(-alpha_ * (corr - beta_)));
}

double synth_detector_score(const SyntheticDetector& det, const Image& img) {
    return 1.0 / (1.0 + std::exp(-det.alpha() * (det.correlation(img) - det.beta())));
}

void SyntheticDetector::save(const std::string& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    save_tensor_file(pattern_, (fs::path(dir) / "pattern.tns").string());
    nlohmann::json doc;
    doc["alpha"] = alpha_;
    doc["beta"] = beta_;
    std::ofstream out(fs::path(dir) / "calibration.json");
    out << doc.dump(2) << "\n";
    if (!out) throw FormatError("synthetic detector: cannot write " + dir);
}

SyntheticDetector SyntheticDetector::load(const std::string& dir) {
    namespace fs = std::filesystem;
    TensorAny pattern = load_tensor_file((fs::path(dir) / "pattern.tns").string());
    auto* p64 = std::get_if<Tensor<double>>(&pattern);
    if (!p64) throw FormatError("synthetic detector: pattern.tns must be f64");
    std::ifstream in(fs::path(dir) / "calibration.json");
    if (!in) throw FormatError("synthetic detector: missing calibration.json in " + dir);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("synthetic detector: bad calibration.json: ") + e.what());
    }
    return SyntheticDetector(std::move(*p64), doc.at("alpha").get<double>(), doc.at("beta").get<double>());
}

SyntheticDetector calibrate_detector(const Tensor<double>& pattern, const std::vector<Image>& base,
                                     const std::vector<Image>& fingerprinted, CalibrationStats* stats) {
    if (base.empty() || fingerprinted.empty()) {
        throw DetectorError("calibrate_detector: need base and fingerprinted samples");
    }
    SyntheticDetector probe(pattern, 1.0, 0.0);
    double mb = 0.0, mg = 0.0;
    for (const Image& img : base) mb += probe.correlation(img);
    for (const Image& img : fingerprinted) mg += probe.correlation(img);
    mb /= static_cast<double>(base.size());
    mg /= static_cast<double>(fingerprinted.size());
    if (mg <= mb) {
        throw DetectorError("calibrate_detector: fingerprinted images do not correlate above base");
    }
    const double beta = 0.5 * (mb + mg);
    const double alpha = 6.0 / (mg - mb);
    SyntheticDetector det(pattern, alpha, beta);
    if (stats) {
        stats->base_mean = mb;
        stats->gan_mean = mg;
        int fp_hits = 0, gan_hits = 0;
        for (const Image& img : base) fp_hits += det.score(img) > 0.5 ? 1 : 0;
        for (const Image& img : fingerprinted) gan_hits += det.score(img) > 0.5 ? 1 : 0;
        stats->base_pd = static_cast<double>(fp_hits) / static_cast<double>(base.size());
        stats->gan_pd = static_cast<double>(gan_hits) / static_cast<double>(fingerprinted.size());
    }
    return det;
}

void BenchConfig::validate() const {
    if (height % 8 != 0 || width % 8 != 0) throw ConfigError("bench config: size must be divisible by 8");
    if (height < 16 || width < 16) throw ConfigError("bench config: size must be at least 16");
    if (n_real < 1 || n_test < 1) throw ConfigError("bench config: n_real and n_test must be >= 1");
    if (n_base - n_real - n_test < 1) {
        throw ConfigError("bench config: no candidate images left after the real/test split");
    }
    if (amplitude <= 0.0) throw ConfigError("bench config: amplitude must be > 0");
    if (steps < 1 || remover_steps < 1) throw ConfigError("bench config: steps must be >= 1");
    if (n_train_pairs < 1) throw ConfigError("bench config: n_train_pairs must be >= 1");
}

namespace {

int epochs_for_steps(int target_steps, long n_samples, int batch) {
    const long spe = (n_samples + batch - 1) / batch;
    return static_cast<int>((target_steps + spe - 1) / spe);
}

} // namespace

std::string BenchResult::manifest_json() const {
    nlohmann::json doc;
    doc["pipeline"] = nlohmann::json::parse(pipeline_manifest.to_json());
    doc["calibration"] = {{"base_mean", calibration.base_mean},
                          {"gan_mean", calibration.gan_mean},
                          {"base_pd", calibration.base_pd},
                          {"gan_pd", calibration.gan_pd}};
    doc["train_steps"] = train_steps;
    doc["pairs_used"] = pairs_used;
    doc["remover_recon_psnr"] = remover_recon_psnr;
    doc["loss_first"] = attack_loss_history.empty() ? 0.0 : attack_loss_history.front();
    doc["loss_last"] = attack_loss_history.empty() ? 0.0 : attack_loss_history.back();
    doc["assertions"] = nlohmann::json::array();
    for (const BenchAssertion& a : assertions) {
        doc["assertions"].push_back({{"name", a.name},
                                     {"value", a.value},
                                     {"relation", a.relation},
                                     {"threshold", a.threshold},
                                     {"pass", a.pass}});
    }
    doc["all_pass"] = all_pass;
    return doc.dump(2);
}

BenchResult run_benchmark(const BenchConfig& cfg) {
    cfg.validate();
    BenchResult result;

    std::vector<Image> base = gen_base_images(cfg.n_base, cfg.height, cfg.width, cfg.seed);
    const int n_candidates = cfg.n_base - cfg.n_real - cfg.n_test;
    std::vector<Image> real(base.begin(), base.begin() + cfg.n_real);
    std::vector<Image> cand_base(base.begin() + cfg.n_real, base.begin() + cfg.n_real + n_candidates);
    std::vector<Image> test_base(base.begin() + cfg.n_real + n_candidates, base.end());

    const FingerprintPattern fp = make_fingerprint(cfg.height, cfg.width, cfg.amplitude);
    std::vector<Image> gan_candidates, gan_test;
    for (const Image& img : cand_base) gan_candidates.push_back(plant_fingerprint(img, fp));
    for (const Image& img : test_base) gan_test.push_back(plant_fingerprint(img, fp));

    SyntheticDetector detector = calibrate_detector(fp.pattern, real, gan_candidates, &result.calibration);

    TrainConfig remover_cfg;
    remover_cfg.seed = cfg.seed + 1;
    remover_cfg.epochs = epochs_for_steps(cfg.remover_steps, static_cast<long>(real.size()),
                                          remover_cfg.batch_size);

    PipelineConfig pipe_cfg;
    pipe_cfg.t1 = cfg.t1;
    pipe_cfg.t2 = cfg.t2;
    BuildResult built = build_training_set(gan_candidates, real, detector, pipe_cfg, remover_cfg);
    result.pipeline_manifest = built.manifest;

    std::vector<SamplePair> pairs = std::move(built.pairs);
    if (static_cast<int>(pairs.size()) > cfg.n_train_pairs) {
        pairs.resize(static_cast<std::size_t>(cfg.n_train_pairs));
    }
    result.pairs_used = static_cast<int>(pairs.size());

    TrainConfig attack_cfg;
    attack_cfg.seed = cfg.seed;
    attack_cfg.epochs = epochs_for_steps(cfg.steps, static_cast<long>(pairs.size()), attack_cfg.batch_size);

    TrainResult trained = train_attack(pairs, attack_cfg);
    result.attack_loss_history = trained.loss_history;
    result.train_steps = trained.total_steps;

    // reconstruction quality of the one-class remover on held-out real images
    {
        double acc = 0.0;
        for (const Image& img : test_base) {
            acc += psnr(img, clamp01(attack_forward(built.remover, img)));
        }
        result.remover_recon_psnr = acc / static_cast<double>(test_base.size());
    }

    const AttackModel<double>& attack_net = trained.model;
    const AttackModel<double>& remover_net = built.remover;
    std::vector<AttackMethod> attacks = {
        {"GF (3x3)", true, [](const Image& img) { return gaussian_filter(img, 3); }},
        {"GF (5x5)", true, [](const Image& img) { return gaussian_filter(img, 5); }},
        {"MF (3x3)", true, [](const Image& img) { return median_filter(img, 3); }},
        {"MF (5x5)", true, [](const Image& img) { return median_filter(img, 5); }},
        {"Remover", true, [&remover_net](const Image& img) { return clamp01(attack_forward(remover_net, img)); }},
        {"Model", true, [&attack_net](const Image& img) { return clamp01(attack_forward(attack_net, img)); }},
    };

    std::map<std::string, std::vector<Image>> groups;
    groups["synthetic"] = gan_test;
    std::vector<DetectorOracle*> detectors = {&detector};
    result.report = evaluate(groups, attacks, detectors, cfg.tau);

    const std::string det_id = detector.id();
    auto pd = [&](const std::string& attack) {
        return result.report.cells.at(attack).at("synthetic").p_d.at(det_id);
    };
    const double pre_pd = pd("Without attack");
    const double model_pd = pd("Model");
    const double remover_pd = pd("Remover");
    const double filter_pd_min = std::min({pd("GF (3x3)"), pd("GF (5x5)"), pd("MF (3x3)"), pd("MF (5x5)")});
    const ReportCell& model_cell = result.report.cells.at("Model").at("synthetic");

    auto push = [&result](std::string name, double value, std::string rel, double threshold) {
        BenchAssertion a;
        a.name = std::move(name);
        a.value = value;
        a.relation = std::move(rel);
        a.threshold = threshold;
        a.pass = a.relation == ">=" ? value >= threshold : (a.relation == "<=" ? value <= threshold : value < threshold);
        result.assertions.push_back(std::move(a));
    };
    push("pre_attack_pd", pre_pd, ">=", cfg.min_pre_pd);
    push("base_false_positive", result.calibration.base_pd, "<=", 0.05);
    push("model_pd", model_pd, "<=", cfg.max_model_pd);
    push("model_psnr", model_cell.psnr_db, ">=", cfg.min_psnr);
    push("model_ssim", model_cell.ssim_val, ">=", cfg.min_ssim);
    push("model_beats_remover", model_pd, "<", remover_pd);
    push("model_beats_filters", model_pd, "<", filter_pd_min);
    push("remover_beats_filters", remover_pd, "<=", filter_pd_min);
    push("direction", model_pd, "<", pre_pd);
    if (!result.attack_loss_history.empty()) {
        push("loss_halved", result.attack_loss_history.back(), "<=",
             0.5 * result.attack_loss_history.front());
    }
    result.all_pass = std::all_of(result.assertions.begin(), result.assertions.end(),
                                  [](const BenchAssertion& a) { return a.pass; });

    if (!cfg.out_dir.empty()) {
        namespace fs = std::filesystem;
        fs::create_directories(cfg.out_dir);
        const fs::path out(cfg.out_dir);
        {
            std::ofstream f(out / "report.csv");
            f << render_report(result.report, "csv");
        }
        {
            std::ofstream f(out / "report.md");
            f << render_report(result.report, "markdown");
        }
        {
            std::ofstream f(out / "manifest.json");
            f << result.manifest_json() << "\n";
        }
        {
            std::ofstream f(out / "loss.csv");
            f << "step,loss\n";
            for (std::size_t i = 0; i < result.attack_loss_history.size(); ++i) {
                f << i << "," << result.attack_loss_history[i] << "\n";
            }
        }
        save_checkpoint(attack_net, nullptr, (out / "model.cpab").string());
        save_checkpoint(remover_net, nullptr, (out / "remover.cpab").string());
        detector.save((out / "detector").string());
        fs::create_directories(out / "samples");
        const int n_samples = std::min<int>(4, static_cast<int>(gan_test.size()));
        for (int k = 0; k < n_samples; ++k) {
            char name[64];
            std::snprintf(name, sizeof name, "input_%02d.ppm", k);
            write_ppm(gan_test[static_cast<std::size_t>(k)], (out / "samples" / name).string());
            std::snprintf(name, sizeof name, "attacked_%02d.ppm", k);
            write_ppm(clamp01(attack_forward(attack_net, gan_test[static_cast<std::size_t>(k)])),
                      (out / "samples" / name).string());
        }
    }
    return result;
}

} // namespace ganevade
