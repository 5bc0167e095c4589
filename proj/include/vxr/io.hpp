#pragma once

#include "vxr/tensor.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>

namespace vxr {

// VXD tensor container: magic "VXD1", u32 LE rank, rank x u32 LE dims,
// row-major LE float32 payload.
void write_vxd(std::ostream& os, const Tensor& t);
Tensor read_vxd(std::istream& is);
void save_vxd(const std::filesystem::path& path, const Tensor& t);
Tensor load_vxd(const std::filesystem::path& path);

// Binary PPM (P6, maxval 255). Pixels are a [3,H,W] tensor in [0,1].
void save_ppm(const std::filesystem::path& path, const Tensor& pixels);
Tensor load_ppm(const std::filesystem::path& path);

// Quantize to the 8-bit grid PPM uses, so in-memory images match their
// on-disk representation exactly.
Tensor quantize_ppm(const Tensor& pixels);

// FNV-1a 64-bit content fingerprint, hex-encoded. Used for reproducibility
// sidecars, not for security.
std::string fingerprint_file(const std::filesystem::path& path);

}  // namespace vxr
