#pragma once

#include <functional>
#include <memory>
#include <string>

#include "ganevade/image_io.hpp"

namespace ganevade {

// Black-box scorer: image -> probability of being GAN-generated, in [0,1].
class DetectorOracle {
public:
    virtual ~DetectorOracle() = default;
    virtual double score(const Image& img) = 0;
    virtual std::string id() const = 0;
};

// Test/plumbing adapter around a plain function.
class FunctionDetector final : public DetectorOracle {
public:
    FunctionDetector(std::string id, std::function<double(const Image&)> fn)
        : id_(std::move(id)), fn_(std::move(fn)) {}
    double score(const Image& img) override { return fn_(img); }
    std::string id() const override { return id_; }

private:
    std::string id_;
    std::function<double(const Image&)> fn_;
};

struct ExternalDetectorConfig {
    std::string command;          // launched via /bin/sh -c
    double timeout_seconds = 30.0;
    bool batch_mode = true;       // keep the process resident across calls
};

// Line protocol: one absolute image path plus newline on the child's stdin,
// one decimal in [0,1] plus newline back on its stdout. Calls are
// serialized per instance.
class ExternalDetector final : public DetectorOracle {
public:
    explicit ExternalDetector(ExternalDetectorConfig cfg);
    ~ExternalDetector() override;

    ExternalDetector(const ExternalDetector&) = delete;
    ExternalDetector& operator=(const ExternalDetector&) = delete;

    // Writes a temporary PPM and scores it.
    double score(const Image& img) override;
    double score_path(const std::string& image_path);
    std::string id() const override;

private:
    struct Process;
    void ensure_running();
    void shutdown();

    ExternalDetectorConfig cfg_;
    std::unique_ptr<Process> proc_;
};

// One-shot convenience: spawn, score one path, tear down.
double external_detector_score(const ExternalDetectorConfig& cfg, const std::string& image_path);

} // namespace ganevade
