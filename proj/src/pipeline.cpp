#include "ganevade/pipeline.hpp"

#include <sstream>

#include <json.hpp>

#include "ganevade/baselines.hpp"

namespace ganevade {

void PipelineConfig::validate() const {
    if (t1 <= 0.0 || t1 >= 1.0) throw ConfigError("pipeline config: t1 must be in (0,1)");
    if (t2 <= 0.0 || t2 >= 1.0) throw ConfigError("pipeline config: t2 must be in (0,1)");
}

std::string PipelineManifest::to_json() const {
    nlohmann::json doc;
    doc["stage1_in"] = stage1_in;
    doc["stage1_out"] = stage1_out;
    doc["stage2_out"] = stage2_out;
    doc["stage3_out"] = stage3_out;
    doc["rejected"] = nlohmann::json::array();
    for (const StageRejection& r : rejected) {
        doc["rejected"].push_back({{"index", r.index}, {"score", r.score}});
    }
    return doc.dump(2);
}

Image AutoencoderRemover::apply(const Image& img) const {
    return clamp01(attack_forward(model_, img));
}

Image GaussianRemover::apply(const Image& img) const { return gaussian_filter(img, kernel_); }

namespace {

double score_or_throw(DetectorOracle& det, const Image& img, int index, const char* stage) {
    try {
        return det.score(img);
    } catch (const std::exception& e) {
        throw PipelineError(std::string(stage) + ": detector failed on image " + std::to_string(index) +
                            ": " + e.what());
    }
}

struct ScoredIndex {
    int index;
    double score;
};

std::vector<ScoredIndex> select_indices(const std::vector<Image>& candidates, DetectorOracle& det,
                                        double t1) {
    std::vector<ScoredIndex> kept;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const double s = score_or_throw(det, candidates[i], static_cast<int>(i), "stage1_select");
        if (s > t1) kept.push_back({static_cast<int>(i), s});
    }
    return kept;
}

} // namespace

std::vector<Image> stage1_select(const std::vector<Image>& candidates, DetectorOracle& det, double t1) {
    std::vector<Image> out;
    for (const ScoredIndex& si : select_indices(candidates, det, t1)) {
        out.push_back(candidates[static_cast<std::size_t>(si.index)]);
    }
    return out;
}

std::vector<Image> stage2_remove(const std::vector<Image>& images, const Remover& remover) {
    std::vector<Image> out;
    out.reserve(images.size());
    for (const Image& img : images) out.push_back(remover.apply(img));
    return out;
}

std::vector<Image> stage2_remove(const std::vector<Image>& images, const AttackModel<double>& remover) {
    std::vector<Image> out;
    out.reserve(images.size());
    for (const Image& img : images) out.push_back(clamp01(attack_forward(remover, img)));
    return out;
}

std::vector<SamplePair> stage3_check(const std::vector<std::pair<Image, Image>>& pairs,
                                     DetectorOracle& det, double t2,
                                     std::vector<StageRejection>* rejected) {
    std::vector<SamplePair> out;
    const double cutoff = 1.0 - t2;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double s = score_or_throw(det, pairs[i].second, static_cast<int>(i), "stage3_check");
        if (s < cutoff) {
            SamplePair sp;
            sp.gan = pairs[i].first;
            sp.simulated_real = pairs[i].second;
            sp.score_sim = s;
            out.push_back(std::move(sp));
        } else if (rejected) {
            rejected->push_back({static_cast<int>(i), s});
        }
    }
    return out;
}

namespace {

BuildResult run_stages(const std::vector<Image>& gan_images, const Remover& remover,
                       DetectorOracle& det, const PipelineConfig& cfg) {
    cfg.validate();
    if (gan_images.empty()) throw PipelineError("build_training_set: no candidate images");

    BuildResult result;
    result.manifest.stage1_in = static_cast<int>(gan_images.size());

    const std::vector<ScoredIndex> selected = select_indices(gan_images, det, cfg.t1);
    result.manifest.stage1_out = static_cast<int>(selected.size());

    std::vector<std::pair<Image, Image>> pairs;
    pairs.reserve(selected.size());
    for (const ScoredIndex& si : selected) {
        const Image& gan = gan_images[static_cast<std::size_t>(si.index)];
        pairs.emplace_back(gan, remover.apply(gan));
    }
    result.manifest.stage2_out = static_cast<int>(pairs.size());

    std::vector<StageRejection> rejected_pos; // positions in the stage-2 list
    result.pairs = stage3_check(pairs, det, cfg.t2, &rejected_pos);

    std::vector<bool> rejected_at(pairs.size(), false);
    for (const StageRejection& r : rejected_pos) {
        rejected_at[static_cast<std::size_t>(r.index)] = true;
        // manifest rejections carry original candidate indices
        result.manifest.rejected.push_back({selected[static_cast<std::size_t>(r.index)].index, r.score});
    }
    std::size_t kept_pos = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (!rejected_at[i]) result.pairs[kept_pos++].score_gan = selected[i].score;
    }
    result.manifest.stage3_out = static_cast<int>(result.pairs.size());

    if (result.pairs.empty()) {
        throw PipelineError(
            "build_training_set: no simulated-real candidate passed stage 3; relax t1/t2 (current t1=" +
            std::to_string(cfg.t1) + ", t2=" + std::to_string(cfg.t2) + ")");
    }
    return result;
}

} // namespace

BuildResult build_training_set(const std::vector<Image>& gan_images,
                               const std::vector<Image>& real_images, DetectorOracle& det,
                               const PipelineConfig& cfg, const TrainConfig& remover_cfg) {
    if (real_images.empty()) throw PipelineError("build_training_set: no real images for the remover");
    TrainResult trained = train_remover(real_images, remover_cfg);
    AutoencoderRemover remover(std::move(trained.model));
    BuildResult result = run_stages(gan_images, remover, det, cfg);
    result.remover = remover.model();
    return result;
}

BuildResult build_training_set(const std::vector<Image>& gan_images, const Remover& remover,
                               DetectorOracle& det, const PipelineConfig& cfg) {
    return run_stages(gan_images, remover, det, cfg);
}

} // namespace ganevade
