// Line-protocol detector stub for tests: reads one image path per line,
// answers one score per line. The mode argument picks the behavior.
//
//   fixed <v>     always reply v
//   mean          reply mean(payload bytes)/255 of the ppm
//   bad-reply     reply "not-a-number"
//   out-of-range  reply "1.2"
//   hang          never reply
//   crash         exit immediately

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

namespace {

double ppm_mean(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return -1.0;
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    in.get();
    if (magic != "P6" || maxval != 255) return -1.0;
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    double acc = 0.0;
    for (unsigned char b : raw) acc += b;
    return acc / (255.0 * static_cast<double>(raw.size()));
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: stub_detector <mode> [arg]\n";
        return 2;
    }
    const std::string mode = argv[1];
    if (mode == "crash") return 3;

    std::string line;
    while (std::getline(std::cin, line)) {
        if (line.empty()) continue;
        if (mode == "fixed") {
            std::printf("%s\n", argc > 2 ? argv[2] : "0.5");
        } else if (mode == "mean") {
            const double v = ppm_mean(line);
            if (v < 0.0) {
                std::printf("unreadable\n");
            } else {
                std::printf("%.10f\n", v);
            }
        } else if (mode == "bad-reply") {
            std::printf("not-a-number\n");
        } else if (mode == "out-of-range") {
            std::printf("1.2\n");
        } else if (mode == "hang") {
            std::this_thread::sleep_for(std::chrono::seconds(3600));
        } else {
            std::fprintf(stderr, "unknown mode %s\n", mode.c_str());
            return 2;
        }
        std::fflush(stdout);
    }
    return 0;
}
