#pragma once

#include <filesystem>

#include "segplex/features.hpp"

namespace segplex::tools {

// Decodes a PNG, JPEG or binary/ASCII Netpbm (PGM/PPM) file to Rec.601 grayscale in [0,1].
GrayImage load_gray_image(const std::filesystem::path& path);

}  // namespace segplex::tools
