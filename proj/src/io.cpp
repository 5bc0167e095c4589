#include "vxr/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace vxr {

static void put_u32le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v & 0xFF), (unsigned char)((v >> 8) & 0xFF),
                          (unsigned char)((v >> 16) & 0xFF), (unsigned char)((v >> 24) & 0xFF)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

static std::uint32_t get_u32le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("VXD: truncated header");
    return (std::uint32_t)b[0] | ((std::uint32_t)b[1] << 8) | ((std::uint32_t)b[2] << 16) |
           ((std::uint32_t)b[3] << 24);
}

static void put_f32le(std::ostream& os, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32le(os, u);
}

static float get_f32le(std::istream& is) {
    std::uint32_t u = get_u32le(is);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

void write_vxd(std::ostream& os, const Tensor& t) {
    os.write("VXD1", 4);
    put_u32le(os, (std::uint32_t)t.rank());
    for (std::size_t d : t.shape()) put_u32le(os, (std::uint32_t)d);
    for (double v : t.data()) put_f32le(os, (float)v);
}

Tensor read_vxd(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "VXD1", 4) != 0) throw std::runtime_error("VXD: bad magic");
    const std::uint32_t rank = get_u32le(is);
    if (rank > 8) throw std::runtime_error("VXD: implausible rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = get_u32le(is);
    const std::size_t n = shape_numel(shape);
    std::vector<double> data(n);
    for (auto& v : data) v = (double)get_f32le(is);
    if (!is) throw std::runtime_error("VXD: truncated payload");
    return Tensor(std::move(shape), std::move(data));
}

void save_vxd(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path.string());
    write_vxd(os, t);
}

Tensor load_vxd(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path.string());
    return read_vxd(is);
}

static unsigned char to_byte(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return (unsigned char)std::lround(c * 255.0);
}

void save_ppm(const std::filesystem::path& path, const Tensor& pixels) {
    if (pixels.rank() != 3 || pixels.dim(0) != 3)
        throw ShapeError("PPM expects [3,H,W], got " + shape_str(pixels.shape()));
    const std::size_t H = pixels.dim(1), W = pixels.dim(2);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path.string());
    os << "P6\n" << W << " " << H << "\n255\n";
    std::vector<unsigned char> row(W * 3);
    for (std::size_t i = 0; i < H; ++i) {
        for (std::size_t j = 0; j < W; ++j)
            for (std::size_t c = 0; c < 3; ++c) row[j * 3 + c] = to_byte(pixels.at3(c, i, j));
        os.write(reinterpret_cast<const char*>(row.data()), (std::streamsize)row.size());
    }
}

Tensor load_ppm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path.string());
    std::string magic;
    is >> magic;
    if (magic != "P6") throw std::runtime_error("PPM: expected P6 in " + path.string());
    std::size_t W, H, maxval;
    is >> W >> H >> maxval;
    if (maxval != 255) throw std::runtime_error("PPM: expected maxval 255");
    is.get();  // single whitespace after header
    Tensor img({3, H, W});
    std::vector<unsigned char> row(W * 3);
    for (std::size_t i = 0; i < H; ++i) {
        is.read(reinterpret_cast<char*>(row.data()), (std::streamsize)row.size());
        if (!is) throw std::runtime_error("PPM: truncated payload in " + path.string());
        for (std::size_t j = 0; j < W; ++j)
            for (std::size_t c = 0; c < 3; ++c) img.at3(c, i, j) = (double)row[j * 3 + c] / 255.0;
    }
    return img;
}

Tensor quantize_ppm(const Tensor& pixels) {
    Tensor q(pixels.shape());
    for (std::size_t i = 0; i < pixels.size(); ++i) q[i] = (double)to_byte(pixels[i]) / 255.0;
    return q;
}

std::string fingerprint_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path.string());
    std::uint64_t h = 0xCBF29CE484222325ULL;
    char buf[4096];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
        for (std::streamsize i = 0; i < is.gcount(); ++i) {
            h ^= (unsigned char)buf[i];
            h *= 0x100000001B3ULL;
        }
        if (!is) break;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

}  // namespace vxr
