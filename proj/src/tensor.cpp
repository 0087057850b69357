#include "ganevade/tensor.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace ganevade {

namespace {

constexpr char kMagic[4] = {'T', 'N', 'S', '1'};

void write_u32le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError("tensor file: truncated header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

static_assert(std::endian::native == std::endian::little,
              "tensor payload IO assumes a little-endian host");

template <typename T>
void save_tensor_impl(const Tensor<T>& t, std::ostream& out) {
    out.write(kMagic, 4);
    const unsigned char dtype = static_cast<unsigned char>(dtype_of<T>());
    out.put(static_cast<char>(dtype));
    if (t.ndim() > 255) throw FormatError("tensor file: more than 255 dims");
    out.put(static_cast<char>(t.ndim()));
    for (int d : t.dims) write_u32le(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(T)));
    if (!out) throw FormatError("tensor file: write failed");
}

template <typename T>
Tensor<T> load_payload(std::istream& in, std::vector<int> dims) {
    Tensor<T> t(std::move(dims));
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(T)));
    if (in.gcount() != static_cast<std::streamsize>(t.numel() * sizeof(T))) {
        throw FormatError("tensor file: truncated payload");
    }
    return t;
}

} // namespace

void save_tensor(const Tensor<float>& t, std::ostream& out) { save_tensor_impl(t, out); }
void save_tensor(const Tensor<double>& t, std::ostream& out) { save_tensor_impl(t, out); }

TensorAny load_tensor(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("tensor file: bad magic, expected TNS1");
    }
    const int dtype = in.get();
    const int ndim = in.get();
    if (dtype == EOF || ndim == EOF) throw FormatError("tensor file: truncated header");
    if (dtype != 0 && dtype != 1) {
        throw FormatError("tensor file: unknown dtype code " + std::to_string(dtype));
    }
    if (ndim < 1) throw FormatError("tensor file: ndim must be >= 1");
    std::vector<int> dims(static_cast<std::size_t>(ndim));
    for (auto& d : dims) {
        const std::uint32_t v = read_u32le(in);
        if (v == 0 || v > 0x7fffffffu) throw FormatError("tensor file: invalid dim " + std::to_string(v));
        d = static_cast<int>(v);
    }
    if (dtype == 0) return load_payload<float>(in, std::move(dims));
    return load_payload<double>(in, std::move(dims));
}

template <typename T>
Tensor<T> load_tensor_as(std::istream& in) {
    TensorAny any = load_tensor(in);
    if (auto* p = std::get_if<Tensor<T>>(&any)) return std::move(*p);
    throw FormatError("tensor file: dtype does not match the requested type");
}

template Tensor<float> load_tensor_as<float>(std::istream&);
template Tensor<double> load_tensor_as<double>(std::istream&);

namespace {
template <typename T>
void save_file_impl(const Tensor<T>& t, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("tensor file: cannot open " + path + " for writing");
    save_tensor(t, out);
}
} // namespace

void save_tensor_file(const Tensor<float>& t, const std::string& path) { save_file_impl(t, path); }
void save_tensor_file(const Tensor<double>& t, const std::string& path) { save_file_impl(t, path); }

TensorAny load_tensor_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("tensor file: cannot open " + path);
    return load_tensor(in);
}

} // namespace ganevade
