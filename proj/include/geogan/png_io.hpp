#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace geogan {

// Minimal PNG encoder (8-bit RGB, zlib-deflated, filter 0). `rgb` is
// row-major, 3 bytes per pixel, length 3*w*h.
void write_png_rgb8(const std::string& path, int width, int height,
                    const std::vector<std::uint8_t>& rgb);

}  // namespace geogan
