#include "ganevade/detector.hpp"

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <filesystem>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

namespace ganevade {

struct ExternalDetector::Process {
    pid_t pid = -1;
    int to_child = -1;   // our write end
    int from_child = -1; // our read end
    std::string buffered; // bytes read past the last newline

    ~Process() {
        if (to_child >= 0) ::close(to_child);
        if (from_child >= 0) ::close(from_child);
        if (pid > 0) {
            ::kill(pid, SIGKILL);
            int status = 0;
            ::waitpid(pid, &status, 0);
        }
    }
};

ExternalDetector::ExternalDetector(ExternalDetectorConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.command.empty()) throw DetectorError("external detector: empty command");
    // a dead child must surface as a read/write error, not SIGPIPE
    ::signal(SIGPIPE, SIG_IGN);
}

ExternalDetector::~ExternalDetector() { shutdown(); }

void ExternalDetector::shutdown() { proc_.reset(); }

std::string ExternalDetector::id() const { return "external:" + cfg_.command; }

void ExternalDetector::ensure_running() {
    if (proc_) return;
    int in_pipe[2], out_pipe[2];
    if (::pipe(in_pipe) != 0) throw DetectorError("external detector: pipe() failed");
    if (::pipe(out_pipe) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw DetectorError("external detector: pipe() failed");
    }
    const pid_t pid = ::fork();
    if (pid < 0) {
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
        throw DetectorError("external detector: fork() failed");
    }
    if (pid == 0) {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
        ::execl("/bin/sh", "sh", "-c", cfg_.command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    proc_ = std::make_unique<Process>();
    proc_->pid = pid;
    proc_->to_child = in_pipe[1];
    proc_->from_child = out_pipe[0];
}

double ExternalDetector::score_path(const std::string& image_path) {
    ensure_running();
    const std::string abs = std::filesystem::absolute(image_path).string();
    const std::string line = abs + "\n";

    ssize_t off = 0;
    while (off < static_cast<ssize_t>(line.size())) {
        const ssize_t n = ::write(proc_->to_child, line.data() + off, line.size() - static_cast<std::size_t>(off));
        if (n < 0) {
            shutdown();
            throw DetectorError("external detector: write to process failed (" +
                                std::string(std::strerror(errno)) + ")");
        }
        off += n;
    }

    std::string reply = std::move(proc_->buffered);
    proc_->buffered.clear();
    const double deadline_ms = cfg_.timeout_seconds * 1000.0;
    double waited_ms = 0.0;
    std::size_t nl;
    while ((nl = reply.find('\n')) == std::string::npos) {
        struct pollfd pfd{proc_->from_child, POLLIN, 0};
        const int step_ms = 50;
        const int rv = ::poll(&pfd, 1, step_ms);
        if (rv < 0) {
            shutdown();
            throw DetectorError("external detector: poll failed");
        }
        if (rv == 0) {
            waited_ms += step_ms;
            if (waited_ms >= deadline_ms) {
                shutdown();
                throw DetectorError("external detector: timeout after " +
                                    std::to_string(cfg_.timeout_seconds) + "s waiting for a score");
            }
            continue;
        }
        char buf[256];
        const ssize_t n = ::read(proc_->from_child, buf, sizeof buf);
        if (n <= 0) {
            shutdown();
            throw DetectorError("external detector: process closed its output (raw reply so far: '" +
                                reply + "')");
        }
        reply.append(buf, static_cast<std::size_t>(n));
    }
    proc_->buffered = reply.substr(nl + 1);
    std::string token = reply.substr(0, nl);
    while (!token.empty() && (token.back() == '\r' || token.back() == ' ')) token.pop_back();

    char* end = nullptr;
    errno = 0;
    const double value = std::strtod(token.c_str(), &end);
    if (token.empty() || end != token.c_str() + token.size() || errno != 0) {
        if (!cfg_.batch_mode) shutdown();
        throw DetectorError("external detector: non-numeric reply '" + token + "'");
    }
    if (!cfg_.batch_mode) shutdown();
    if (value < 0.0 || value > 1.0) {
        throw DetectorError("external detector: reply out of range [0,1]: '" + token + "'");
    }
    return value;
}

double ExternalDetector::score(const Image& img) {
    char tmpl[] = "/tmp/ganevade-det-XXXXXX.ppm";
    const int fd = ::mkstemps(tmpl, 4);
    if (fd < 0) throw DetectorError("external detector: cannot create temp image");
    ::close(fd);
    const std::string path = tmpl;
    try {
        write_ppm(img, path);
        const double v = score_path(path);
        ::unlink(path.c_str());
        return v;
    } catch (...) {
        ::unlink(path.c_str());
        throw;
    }
}

double external_detector_score(const ExternalDetectorConfig& cfg, const std::string& image_path) {
    ExternalDetectorConfig one = cfg;
    one.batch_mode = false;
    ExternalDetector det(std::move(one));
    return det.score_path(image_path);
}

} // namespace ganevade
