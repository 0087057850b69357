#include "ganevade/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>

namespace ganevade {

namespace {

// next whitespace-delimited token, skipping '#' comments
std::string next_token(std::istream& in, const std::string& path) {
    std::string tok;
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    if (tok.empty()) throw FormatError("ppm: truncated header in " + path);
    return tok;
}

int parse_dim(const std::string& tok, const std::string& what, const std::string& path) {
    std::size_t pos = 0;
    int v = 0;
    try {
        v = std::stoi(tok, &pos);
    } catch (const std::exception&) {
        throw FormatError("ppm: bad " + what + " '" + tok + "' in " + path);
    }
    if (pos != tok.size() || v < 1) {
        throw FormatError("ppm: bad " + what + " '" + tok + "' in " + path);
    }
    return v;
}

} // namespace

Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("ppm: cannot open " + path);
    if (next_token(in, path) != "P6") throw FormatError("ppm: not a P6 file: " + path);
    const int w = parse_dim(next_token(in, path), "width", path);
    const int h = parse_dim(next_token(in, path), "height", path);
    const std::string maxval = next_token(in, path);
    if (maxval != "255") throw FormatError("ppm: maxval " + maxval + " unsupported (need 255) in " + path);
    // the single whitespace after maxval was consumed by next_token

    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
        throw FormatError("ppm: truncated payload in " + path);
    }

    Image img({3, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const std::size_t p = (static_cast<std::size_t>(i) * w + j) * 3;
            const std::size_t q = static_cast<std::size_t>(i) * w + j;
            img.data[q] = raw[p] / 255.0;
            img.data[plane + q] = raw[p + 1] / 255.0;
            img.data[2 * plane + q] = raw[p + 2] / 255.0;
        }
    }
    return img;
}

void write_ppm(const Image& img, const std::string& path) {
    if (img.ndim() != 3 || img.dims[0] != 3) {
        throw ShapeError("ppm: image must be 3xHxW, got " + shape_str(img), 0);
    }
    const int h = img.dims[1], w = img.dims[2];
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("ppm: cannot open " + path + " for writing");
    out << "P6\n" << w << " " << h << "\n255\n";
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<unsigned char> raw(plane * 3);
    auto quantize = [](double v) {
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        return static_cast<unsigned char>(std::lround(v * 255.0));
    };
    for (std::size_t q = 0; q < plane; ++q) {
        raw[q * 3] = quantize(img.data[q]);
        raw[q * 3 + 1] = quantize(img.data[plane + q]);
        raw[q * 3 + 2] = quantize(img.data[2 * plane + q]);
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw FormatError("ppm: write failed for " + path);
}

std::vector<std::string> list_ppm_files(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw FormatError("not a directory: " + dir);
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".ppm") {
            files.push_back(entry.path().string());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<Image> read_ppm_dir(const std::string& dir) {
    std::vector<Image> images;
    for (const std::string& f : list_ppm_files(dir)) {
        images.push_back(read_ppm(f));
    }
    return images;
}

} // namespace ganevade
