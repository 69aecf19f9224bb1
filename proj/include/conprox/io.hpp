#pragma once

#include <filesystem>

#include "conprox/array.hpp"

namespace conprox {

// Binary container: 8-byte magic, little-endian u32 version and ndim, u64 sizes, 8-byte dtype tag
// ("f64le"), then values as little-endian 64-bit floats in row-major order. A JSON sidecar
// `<path>.json` repeats the metadata in readable form.

void write_dictionary(const std::filesystem::path& path, const Dictionary& dict);
Dictionary read_dictionary(const std::filesystem::path& path);

void write_maps(const std::filesystem::path& path, const CoefficientMaps& maps);
CoefficientMaps read_maps(const std::filesystem::path& path);

}  // namespace conprox
