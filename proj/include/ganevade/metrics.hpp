#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ganevade/detector.hpp"
#include "ganevade/image_io.hpp"

namespace ganevade {

// 10*log10(1/MSE) with MAX = 1.0, MSE over all channels jointly.
// Identical images give +inf (rendered as ">100").
double psnr(const Image& a, const Image& b);

// Mean local SSIM over an 11x11 Gaussian window (sigma 1.5), K1=0.01,
// K2=0.03, L=1, fully-inside windows only, channels averaged.
// Requires min(H, W) >= 11.
double ssim(const Image& a, const Image& b);

// Fraction of images scored strictly above tau.
double detection_rate(const std::vector<Image>& images, DetectorOracle& det, double tau = 0.5);

struct AttackMethod {
    std::string name;
    bool size_preserving = true;
    std::function<Image(const Image&)> apply;
};

struct ReportCell {
    std::map<std::string, double> p_d; // by detector id
    double psnr_db = 0.0;
    double ssim_val = 0.0;
    bool has_quality = false;
    int n = 0;
    std::string error; // non-fatal cell failure
};

struct AttackReport {
    std::vector<std::string> attacks;   // fixed order, "Without attack" first
    std::vector<std::string> groups;    // alphabetical
    std::vector<std::string> detectors;
    double tau = 0.5;
    std::string config_hash;
    std::map<std::string, std::map<std::string, ReportCell>> cells; // attack -> group

    ReportCell average(const std::string& attack) const;
};

// Applies every attack to every group, scores originals and attacked images
// with every detector, and fills PSNR/SSIM against the originals for
// size-preserving attacks. A "Without attack" identity row is always
// included. Cell-level failures are recorded, not fatal.
AttackReport evaluate(const std::map<std::string, std::vector<Image>>& groups,
                      const std::vector<AttackMethod>& attacks,
                      const std::vector<DetectorOracle*>& detectors, double tau,
                      const std::string& config_hash = "");

// fmt is "csv" or "markdown". Deterministic bytes for a given report.
std::string render_report(const AttackReport& report, const std::string& fmt);

} // namespace ganevade
