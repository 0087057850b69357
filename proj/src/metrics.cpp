#include "ganevade/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace ganevade {

double psnr(const Image& a, const Image& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("psnr: shape mismatch " + shape_str(a) + " vs " + shape_str(b));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    const double mse = acc / static_cast<double>(a.numel());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

namespace {

constexpr int kSsimWindow = 11;

std::vector<double> ssim_window() {
    std::vector<double> w(kSsimWindow);
    const double sigma = 1.5;
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - 5.0;
        w[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
        sum += w[static_cast<std::size_t>(i)];
    }
    for (double& v : w) v /= sum;
    return w;
}

// separable weighted sums over fully-inside windows: in (h x w) -> out (h-10 x w-10)
void valid_filter(const double* in, int h, int w, const std::vector<double>& win, std::vector<double>& tmp,
                  std::vector<double>& out) {
    const int ow = w - kSsimWindow + 1;
    const int oh = h - kSsimWindow + 1;
    tmp.assign(static_cast<std::size_t>(h) * ow, 0.0);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < ow; ++j) {
            double acc = 0.0;
            for (int t = 0; t < kSsimWindow; ++t) acc += win[static_cast<std::size_t>(t)] * in[i * w + j + t];
            tmp[static_cast<std::size_t>(i) * ow + j] = acc;
        }
    }
    out.assign(static_cast<std::size_t>(oh) * ow, 0.0);
    for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
            double acc = 0.0;
            for (int t = 0; t < kSsimWindow; ++t) acc += win[static_cast<std::size_t>(t)] * tmp[static_cast<std::size_t>(i + t) * ow + j];
            out[static_cast<std::size_t>(i) * ow + j] = acc;
        }
    }
}

} // namespace

double ssim(const Image& a, const Image& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("ssim: shape mismatch " + shape_str(a) + " vs " + shape_str(b));
    }
    if (a.ndim() != 3) throw ShapeError("ssim: images must be CxHxW");
    const int h = a.dims[1], w = a.dims[2];
    if (h < kSsimWindow || w < kSsimWindow) {
        throw ShapeError("ssim: image " + shape_str(a) + " smaller than the 11x11 window", 1);
    }
    const double c1 = (0.01 * 1.0) * (0.01 * 1.0);
    const double c2 = (0.03 * 1.0) * (0.03 * 1.0);
    static const std::vector<double> win = ssim_window();

    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<double> xx(plane), yy(plane), xy(plane);
    std::vector<double> tmp, mx, my, mxx, myy, mxy;
    double total = 0.0;
    for (int c = 0; c < a.dims[0]; ++c) {
        const double* x = a.data.data() + static_cast<std::size_t>(c) * plane;
        const double* y = b.data.data() + static_cast<std::size_t>(c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        valid_filter(x, h, w, win, tmp, mx);
        valid_filter(y, h, w, win, tmp, my);
        valid_filter(xx.data(), h, w, win, tmp, mxx);
        valid_filter(yy.data(), h, w, win, tmp, myy);
        valid_filter(xy.data(), h, w, win, tmp, mxy);
        double acc = 0.0;
        for (std::size_t i = 0; i < mx.size(); ++i) {
            const double mux = mx[i], muy = my[i];
            const double sx = mxx[i] - mux * mux;
            const double sy = myy[i] - muy * muy;
            const double sxy = mxy[i] - mux * muy;
            acc += ((2.0 * mux * muy + c1) * (2.0 * sxy + c2)) /
                   ((mux * mux + muy * muy + c1) * (sx + sy + c2));
        }
        total += acc / static_cast<double>(mx.size());
    }
    return total / static_cast<double>(a.dims[0]);
}

double detection_rate(const std::vector<Image>& images, DetectorOracle& det, double tau) {
    if (images.empty()) throw Error("detection_rate: empty image list");
    long hits = 0;
    for (const Image& img : images) {
        if (det.score(img) > tau) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(images.size());
}

ReportCell AttackReport::average(const std::string& attack) const {
    ReportCell avg;
    const auto it = cells.find(attack);
    if (it == cells.end()) return avg;
    int groups_used = 0;
    double psnr_sum = 0.0, ssim_sum = 0.0;
    int quality_used = 0;
    std::map<std::string, double> pd_sum;
    for (const std::string& g : groups) {
        const auto cit = it->second.find(g);
        if (cit == it->second.end() || !cit->second.error.empty()) continue;
        ++groups_used;
        avg.n += cit->second.n;
        for (const auto& [det, v] : cit->second.p_d) pd_sum[det] += v;
        if (cit->second.has_quality) {
            ++quality_used;
            psnr_sum += cit->second.psnr_db;
            ssim_sum += cit->second.ssim_val;
        }
    }
    if (groups_used == 0) {
        avg.error = "no data";
        return avg;
    }
    for (const auto& [det, v] : pd_sum) avg.p_d[det] = v / groups_used;
    if (quality_used == groups_used && quality_used > 0) {
        avg.has_quality = true;
        avg.psnr_db = psnr_sum / quality_used;
        avg.ssim_val = ssim_sum / quality_used;
    }
    return avg;
}

AttackReport evaluate(const std::map<std::string, std::vector<Image>>& groups,
                      const std::vector<AttackMethod>& attacks,
                      const std::vector<DetectorOracle*>& detectors, double tau,
                      const std::string& config_hash) {
    if (groups.empty()) throw Error("evaluate: no image groups");
    if (detectors.empty()) throw Error("evaluate: no detectors");
    for (const auto& [name, imgs] : groups) {
        if (name == "Average") throw Error("evaluate: group name 'Average' is reserved");
        if (imgs.empty()) throw Error("evaluate: group '" + name + "' is empty");
    }

    AttackReport report;
    report.tau = tau;
    report.config_hash = config_hash;
    for (DetectorOracle* d : detectors) report.detectors.push_back(d->id());
    for (const auto& [name, imgs] : groups) report.groups.push_back(name); // std::map is sorted

    std::vector<AttackMethod> all;
    all.push_back({"Without attack", true, [](const Image& img) { return img; }});
    for (const AttackMethod& a : attacks) all.push_back(a);
    for (const AttackMethod& a : all) report.attacks.push_back(a.name);

    for (const AttackMethod& attack : all) {
        for (const auto& [gname, imgs] : groups) {
            ReportCell cell;
            cell.n = static_cast<int>(imgs.size());
            try {
                std::vector<Image> attacked;
                attacked.reserve(imgs.size());
                for (const Image& img : imgs) attacked.push_back(attack.apply(img));
                for (std::size_t d = 0; d < detectors.size(); ++d) {
                    cell.p_d[report.detectors[d]] = detection_rate(attacked, *detectors[d], tau);
                }
                if (attack.size_preserving) {
                    double psum = 0.0, ssum = 0.0;
                    for (std::size_t i = 0; i < imgs.size(); ++i) {
                        psum += psnr(imgs[i], attacked[i]);
                        ssum += ssim(imgs[i], attacked[i]);
                    }
                    cell.psnr_db = psum / static_cast<double>(imgs.size());
                    cell.ssim_val = ssum / static_cast<double>(imgs.size());
                    cell.has_quality = true;
                }
            } catch (const std::exception& e) {
                cell = ReportCell{};
                cell.error = e.what();
            }
            report.cells[attack.name][gname] = std::move(cell);
        }
    }
    return report;
}

namespace {

std::string fmt_pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v * 100.0);
    return buf;
}

std::string fmt_psnr(double v) {
    if (std::isinf(v) || v > 100.0) return ">100";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
}

std::string fmt_ssim(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

} // namespace

std::string render_report(const AttackReport& r, const std::string& fmt) {
    std::ostringstream out;
    if (fmt == "csv") {
        out << "attack,group,detector,p_d,psnr_db,ssim,n\n";
        for (const std::string& attack : r.attacks) {
            auto emit = [&](const std::string& group, const ReportCell& cell) {
                for (const std::string& det : r.detectors) {
                    out << attack << "," << group << "," << det << ",";
                    if (cell.error.empty() && cell.p_d.count(det)) out << fmt_pct(cell.p_d.at(det));
                    out << ",";
                    if (cell.error.empty() && cell.has_quality) out << fmt_psnr(cell.psnr_db);
                    out << ",";
                    if (cell.error.empty() && cell.has_quality) out << fmt_ssim(cell.ssim_val);
                    out << "," << cell.n << "\n";
                }
            };
            const auto git = r.cells.find(attack);
            for (const std::string& group : r.groups) {
                static const ReportCell empty;
                const ReportCell* cell = &empty;
                if (git != r.cells.end()) {
                    const auto cit = git->second.find(group);
                    if (cit != git->second.end()) cell = &cit->second;
                }
                emit(group, *cell);
            }
            emit("Average", r.average(attack));
        }
        return out.str();
    }
    if (fmt != "markdown") throw Error("render_report: unknown format '" + fmt + "'");

    auto table_header = [&](std::ostringstream& os) {
        os << "| Attack |";
        for (const std::string& g : r.groups) os << " " << g << " |";
        os << " Average |\n|---|";
        for (std::size_t i = 0; i < r.groups.size() + 1; ++i) os << "---|";
        os << "\n";
    };

    out << "# Attack evaluation report\n\n";
    out << "Decision threshold tau = " << r.tau;
    if (!r.config_hash.empty()) out << ", config " << r.config_hash;
    out << ". Detection rates are percentages.\n";

    for (const std::string& det : r.detectors) {
        out << "\n## Detection rate P_d — " << det << "\n\n";
        table_header(out);
        for (const std::string& attack : r.attacks) {
            out << "| " << attack << " |";
            for (const std::string& g : r.groups) {
                const ReportCell& cell = r.cells.at(attack).at(g);
                if (!cell.error.empty() || !cell.p_d.count(det)) out << " err |";
                else out << " " << fmt_pct(cell.p_d.at(det)) << " |";
            }
            const ReportCell avg = r.average(attack);
            if (!avg.error.empty() || !avg.p_d.count(det)) out << " err |\n";
            else out << " " << fmt_pct(avg.p_d.at(det)) << " |\n";
        }
    }

    auto quality_table = [&](const char* title, bool use_psnr) {
        out << "\n## " << title << "\n\n";
        table_header(out);
        for (const std::string& attack : r.attacks) {
            bool any = false;
            for (const std::string& g : r.groups) {
                const ReportCell& cell = r.cells.at(attack).at(g);
                if (cell.error.empty() && cell.has_quality) any = true;
            }
            if (!any) continue;
            out << "| " << attack << " |";
            for (const std::string& g : r.groups) {
                const ReportCell& cell = r.cells.at(attack).at(g);
                if (!cell.error.empty() || !cell.has_quality) out << " - |";
                else out << " " << (use_psnr ? fmt_psnr(cell.psnr_db) : fmt_ssim(cell.ssim_val)) << " |";
            }
            const ReportCell avg = r.average(attack);
            if (!avg.error.empty() || !avg.has_quality) out << " - |\n";
            else out << " " << (use_psnr ? fmt_psnr(avg.psnr_db) : fmt_ssim(avg.ssim_val)) << " |\n";
        }
    };
    quality_table("PSNR (dB)", true);
    quality_table("SSIM", false);
    return out.str();
}

} // namespace ganevade
