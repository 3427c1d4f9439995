// SPDX-License-Identifier: Apache-2.0
#include "cmc/png_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "cmc/errors.hpp"

namespace cmc {
namespace {

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t len, std::uint32_t seed = 0) {
    return static_cast<std::uint32_t>(
        ::crc32(seed, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(len)));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t read_u32(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& payload) {
    put_u32(out, static_cast<std::uint32_t>(payload.size()));
    std::vector<std::uint8_t> body(type, type + 4);
    body.insert(body.end(), payload.begin(), payload.end());
    std::uint32_t crc = crc32_of(body.data(), body.size());
    out.insert(out.end(), body.begin(), body.end());
    put_u32(out, crc);
}

const std::uint8_t kMagic[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};

}  // namespace

void write_png(const std::string& path, const ImageU8& img) {
    if (img.channels != 3 && img.channels != 4)
        throw IoError("write_png: only RGB/RGBA supported");
    if (img.width <= 0 || img.height <= 0 ||
        img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * img.channels)
        throw IoError("write_png: inconsistent image buffer");

    // filter type 0 (None) per scanline
    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    std::vector<std::uint8_t> raw;
    raw.reserve((stride + 1) * static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);
        const std::uint8_t* row = img.pixels.data() + static_cast<std::size_t>(y) * stride;
        raw.insert(raw.end(), row, row + stride);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("write_png: deflate failed");
    compressed.resize(bound);

    std::vector<std::uint8_t> out(kMagic, kMagic + 8);
    std::vector<std::uint8_t> ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(img.width));
    put_u32(ihdr, static_cast<std::uint32_t>(img.height));
    ihdr.push_back(8);                                     // bit depth
    ihdr.push_back(img.channels == 3 ? 2 : 6);             // color type
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", compressed);
    append_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("write_png: cannot open " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write_png: write failed for " + path);
}

ImageU8 read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("read_png: cannot open " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
    if (buf.size() < 8 || std::memcmp(buf.data(), kMagic, 8) != 0)
        throw IoError("read_png: not a PNG file: " + path);

    ImageU8 img;
    std::vector<std::uint8_t> idat;
    std::size_t pos = 8;
    int bit_depth = 0, color_type = 0, interlace = 0;
    while (pos + 12 <= buf.size()) {
        const std::uint32_t len = read_u32(&buf[pos]);
        if (pos + 12 + len > buf.size()) throw IoError("read_png: truncated chunk in " + path);
        const char* type = reinterpret_cast<const char*>(&buf[pos + 4]);
        const std::uint8_t* payload = &buf[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            img.width = static_cast<int>(read_u32(payload));
            img.height = static_cast<int>(read_u32(payload + 4));
            bit_depth = payload[8];
            color_type = payload[9];
            interlace = payload[12];
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (bit_depth != 8 || (color_type != 2 && color_type != 6) || interlace != 0)
        throw IoError("read_png: unsupported PNG variant (need 8-bit RGB/RGBA, "
                      "non-interlaced): " + path);
    img.channels = color_type == 2 ? 3 : 4;

    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    std::vector<std::uint8_t> raw((stride + 1) * static_cast<std::size_t>(img.height));
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_len != raw.size())
        throw IoError("read_png: inflate failed for " + path);

    // undo per-scanline filters
    img.pixels.assign(stride * static_cast<std::size_t>(img.height), 0);
    const int bpp = img.channels;
    for (int y = 0; y < img.height; ++y) {
        const std::uint8_t filter = raw[static_cast<std::size_t>(y) * (stride + 1)];
        const std::uint8_t* src = &raw[static_cast<std::size_t>(y) * (stride + 1) + 1];
        std::uint8_t* dst = &img.pixels[static_cast<std::size_t>(y) * stride];
        const std::uint8_t* up = y > 0 ? dst - stride : nullptr;
        for (std::size_t x = 0; x < stride; ++x) {
            const int a = x >= static_cast<std::size_t>(bpp) ? dst[x - bpp] : 0;
            const int b = up ? up[x] : 0;
            const int c = (up && x >= static_cast<std::size_t>(bpp)) ? up[x - bpp] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: {
                    const int p = a + b - c;
                    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
                    v += (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
                    break;
                }
                default: throw IoError("read_png: unknown filter type in " + path);
            }
            dst[x] = static_cast<std::uint8_t>(v & 0xff);
        }
    }
    return img;
}

}  // namespace cmc
