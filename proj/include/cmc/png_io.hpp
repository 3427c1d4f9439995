// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cmc {

/// Minimal PNG support: 8-bit RGB(A) truecolor, non-interlaced. Enough to
/// dump result triptychs and read user-supplied training images; anything
/// fancier (palettes, 16-bit, interlace) is rejected with a clear error.
struct ImageU8 {
    int width = 0, height = 0, channels = 0;  // channels 3 or 4
    std::vector<std::uint8_t> pixels;         // row-major, interleaved
};

void write_png(const std::string& path, const ImageU8& img);
ImageU8 read_png(const std::string& path);

}  // namespace cmc
