// SPDX-License-Identifier: Apache-2.0
#include "cmc/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "cmc/png_io.hpp"
#include "cmc/rng.hpp"

namespace cmc {

std::vector<double> gaussian_taps(int size, double sigma) {
    if (size < 1 || size % 2 == 0) throw Error("gaussian_taps: size must be odd and positive");
    std::vector<double> w(static_cast<std::size_t>(size), 0.0);
    const int c = size / 2;
    if (sigma < 1e-8) {
        w[static_cast<std::size_t>(c)] = 1.0;
        return w;
    }
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        const double d = i - c;
        w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += w[static_cast<std::size_t>(i)];
    }
    for (double& v : w) v /= sum;
    return w;
}

namespace {

// mirror-with-edge-repeat index
inline int reflect(int i, int n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
    return i;
}

template <typename T>
void blur_image(Tensor4<T>& img, int ksize, double sigma) {
    const std::vector<double> taps = gaussian_taps(ksize, sigma);
    const int c = ksize / 2;
    const int H = img.height, W = img.width;
    std::vector<double> row(static_cast<std::size_t>(std::max(H, W)));
    for (int b = 0; b < img.batch; ++b)
        for (int ch = 0; ch < img.channels; ++ch) {
            // horizontal
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    double acc = 0.0;
                    for (int k = 0; k < ksize; ++k)
                        acc += taps[static_cast<std::size_t>(k)] *
                               static_cast<double>(img.at(b, ch, y, reflect(x + k - c, W)));
                    row[static_cast<std::size_t>(x)] = acc;
                }
                for (int x = 0; x < W; ++x) img.at(b, ch, y, x) = static_cast<T>(row[static_cast<std::size_t>(x)]);
            }
            // vertical
            for (int x = 0; x < W; ++x) {
                for (int y = 0; y < H; ++y) {
                    double acc = 0.0;
                    for (int k = 0; k < ksize; ++k)
                        acc += taps[static_cast<std::size_t>(k)] *
                               static_cast<double>(img.at(b, ch, reflect(y + k - c, H), x));
                    row[static_cast<std::size_t>(y)] = acc;
                }
                for (int y = 0; y < H; ++y) img.at(b, ch, y, x) = static_cast<T>(row[static_cast<std::size_t>(y)]);
            }
        }
}

// ---- JPEG-like blocking surrogate: 8x8 DCT quantization, not bitstream-exact.

// Annex-K luminance quantization table, applied to all channels.
constexpr int kQuantBase[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

struct Dct8 {
    double basis[8][8];  // basis[u][x] = alpha(u) * cos((2x+1) u pi / 16)
    Dct8() {
        for (int u = 0; u < 8; ++u) {
            const double a = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            for (int x = 0; x < 8; ++x)
                basis[u][x] = a * std::cos((2.0 * x + 1.0) * u * M_PI / 16.0);
        }
    }
};

void quant_table(double quality, double q[64]) {
    quality = std::min(100.0, std::max(1.0, quality));
    const double scale = quality < 50.0 ? 5000.0 / quality : 200.0 - 2.0 * quality;
    for (int i = 0; i < 64; ++i)
        q[i] = std::max(1.0, std::floor((kQuantBase[i] * scale + 50.0) / 100.0));
}

template <typename T>
void block_artifact(Tensor4<T>& img, double quality) {
    static const Dct8 dct;
    double q[64];
    quant_table(quality, q);
    const int H = img.height, W = img.width;
    double px[8][8], cf[8][8];
    for (int b = 0; b < img.batch; ++b)
        for (int ch = 0; ch < img.channels; ++ch)
            for (int by = 0; by < H; by += 8)
                for (int bx = 0; bx < W; bx += 8) {
                    // fetch on the 0..255 integer grid, replicating edges
                    for (int y = 0; y < 8; ++y)
                        for (int x = 0; x < 8; ++x) {
                            const int iy = std::min(by + y, H - 1);
                            const int ix = std::min(bx + x, W - 1);
                            px[y][x] = std::nearbyint(
                                           static_cast<double>(img.at(b, ch, iy, ix)) * 255.0) -
                                       128.0;
                        }
                    // forward DCT: C = B * px * B^T
                    for (int u = 0; u < 8; ++u)
                        for (int v = 0; v < 8; ++v) {
                            double acc = 0.0;
                            for (int y = 0; y < 8; ++y)
                                for (int x = 0; x < 8; ++x)
                                    acc += dct.basis[u][y] * dct.basis[v][x] * px[y][x];
                            cf[u][v] = acc;
                        }
                    // quantize
                    for (int u = 0; u < 8; ++u)
                        for (int v = 0; v < 8; ++v) {
                            const double step = q[u * 8 + v];
                            cf[u][v] = std::nearbyint(cf[u][v] / step) * step;
                        }
                    // inverse DCT + round back to the 8-bit grid
                    for (int y = 0; y < 8 && by + y < H; ++y)
                        for (int x = 0; x < 8 && bx + x < W; ++x) {
                            double acc = 0.0;
                            for (int u = 0; u < 8; ++u)
                                for (int v = 0; v < 8; ++v)
                                    acc += dct.basis[u][y] * dct.basis[v][x] * cf[u][v];
                            const double level =
                                std::min(255.0, std::max(0.0, std::nearbyint(acc + 128.0)));
                            img.at(b, ch, by + y, bx + x) = static_cast<T>(level / 255.0);
                        }
                }
}

template <typename T>
void rain_streaks(Tensor4<T>& img, const Degradation& d, Rng& rng) {
    const int H = img.height, W = img.width;
    const i64 n_streaks =
        static_cast<i64>(std::nearbyint(d.rain_density * static_cast<double>(H) * W));
    for (int b = 0; b < img.batch; ++b)
        for (i64 s = 0; s < n_streaks; ++s) {
            const double cx = rng.uniform(0.0, static_cast<double>(W));
            const double cy = rng.uniform(0.0, static_cast<double>(H));
            const double len = rng.uniform(d.rain_length_min, d.rain_length_max);
            const double ang =
                rng.uniform(d.rain_angle_min_deg, d.rain_angle_max_deg) * M_PI / 180.0;
            const double inten = rng.uniform(d.rain_intensity_min, d.rain_intensity_max);
            const double dx = std::cos(ang), dy = std::sin(ang);
            const int steps = static_cast<int>(std::ceil(len));
            for (int i = 0; i <= steps; ++i) {
                const double t = static_cast<double>(i) - 0.5 * len;
                const int x = static_cast<int>(std::lround(cx + t * dx));
                const int y = static_cast<int>(std::lround(cy + t * dy));
                if (x < 0 || x >= W || y < 0 || y >= H) continue;
                for (int ch = 0; ch < img.channels; ++ch)
                    img.at(b, ch, y, x) += static_cast<T>(inten);
            }
        }
}

}  // namespace

template <typename T>
Tensor4<T> degrade(const Tensor4<T>& clean, const Degradation& d, std::uint64_t sample_seed,
                   bool eval_mode) {
    if (d.kind == DegradationKind::gaussian_blur &&
        (d.blur_kernel_size < 1 || d.blur_kernel_size % 2 == 0))
        throw Error("degrade: blur kernel size must be odd");
    if (d.kind == DegradationKind::gaussian_noise && d.noise_sigma < 0.0)
        throw Error("degrade: negative noise sigma");

    Tensor4<T> out = clean;
    Rng rng(derive_seed(sample_seed, 7));
    switch (d.kind) {
        case DegradationKind::gaussian_noise: {
            const double sigma = d.noise_sigma / 255.0;
            if (sigma > 0.0)
                for (T& v : out.data) v += static_cast<T>(rng.normal(0.0, sigma));
            break;
        }
        case DegradationKind::gaussian_blur: {
            const double sigma =
                eval_mode ? d.blur_sigma_eval : rng.uniform(d.blur_sigma_min, d.blur_sigma_max);
            blur_image(out, d.blur_kernel_size, sigma);
            break;
        }
        case DegradationKind::block_artifact: {
            const double quality =
                eval_mode ? d.quality_eval : rng.uniform(d.quality_min, d.quality_max);
            block_artifact(out, quality);
            break;
        }
        case DegradationKind::rain_streaks: {
            rain_streaks(out, d, rng);
            break;
        }
    }
    clamp01_inplace(out);
    return out;
}

namespace {

template <typename T>
void normalize_channel(Tensor4<T>& img, int b, int c, double lo, double hi) {
    T mn = img.at(b, c, 0, 0), mx = mn;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const T v = img.at(b, c, y, x);
            mn = std::min(mn, v);
            mx = std::max(mx, v);
        }
    const double span = static_cast<double>(mx) - static_cast<double>(mn);
    const double scale = span > 1e-12 ? (hi - lo) / span : 0.0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            img.at(b, c, y, x) = static_cast<T>(
                lo + scale * (static_cast<double>(img.at(b, c, y, x)) - static_cast<double>(mn)));
}

template <typename T>
Tensor4<T> make_procedural(Rng& rng, int size, int kind) {
    Tensor4<T> img(1, 3, size, size);
    switch (kind & 3) {
        case 0: {  // smooth gradient with a sinusoid on top
            for (int c = 0; c < 3; ++c) {
                const double gx = rng.uniform(-1.0, 1.0), gy = rng.uniform(-1.0, 1.0);
                const double fx = rng.uniform(0.5, 3.0), fy = rng.uniform(0.5, 3.0);
                const double ph = rng.uniform(0.0, 2.0 * M_PI), amp = rng.uniform(0.1, 0.5);
                for (int y = 0; y < size; ++y)
                    for (int x = 0; x < size; ++x) {
                        const double u = static_cast<double>(x) / size;
                        const double v = static_cast<double>(y) / size;
                        img.at(0, c, y, x) = static_cast<T>(
                            gx * u + gy * v +
                            amp * std::sin(2.0 * M_PI * (fx * u + fy * v) + ph));
                    }
                normalize_channel(img, 0, c, 0.05, 0.95);
            }
            break;
        }
        case 1: {  // checkerboard
            const i64 cell = rng.uniform_int(4, 16);
            double c0[3], c1[3];
            for (int c = 0; c < 3; ++c) {
                c0[c] = rng.uniform(0.0, 1.0);
                c1[c] = rng.uniform(0.0, 1.0);
            }
            const double shade = rng.uniform(-0.2, 0.2);
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    const bool odd = ((x / cell) + (y / cell)) & 1;
                    for (int c = 0; c < 3; ++c) {
                        double v = (odd ? c1[c] : c0[c]) + shade * (static_cast<double>(y) / size);
                        img.at(0, c, y, x) = static_cast<T>(std::min(1.0, std::max(0.0, v)));
                    }
                }
            break;
        }
        case 2: {  // low-pass filtered noise
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < size; ++y)
                    for (int x = 0; x < size; ++x)
                        img.at(0, c, y, x) = static_cast<T>(rng.uniform());
            blur_image(img, 7, rng.uniform(1.0, 2.5));
            for (int c = 0; c < 3; ++c) normalize_channel(img, 0, c, 0.02, 0.98);
            break;
        }
        default: {  // geometric shapes over a vertical gradient
            double top[3], bot[3];
            for (int c = 0; c < 3; ++c) {
                top[c] = rng.uniform(0.0, 1.0);
                bot[c] = rng.uniform(0.0, 1.0);
            }
            for (int y = 0; y < size; ++y) {
                const double a = static_cast<double>(y) / size;
                for (int x = 0; x < size; ++x)
                    for (int c = 0; c < 3; ++c)
                        img.at(0, c, y, x) = static_cast<T>(top[c] * (1.0 - a) + bot[c] * a);
            }
            const i64 shapes = rng.uniform_int(3, 8);
            for (i64 s = 0; s < shapes; ++s) {
                const bool circle = rng.uniform() < 0.5;
                const double col[3] = {rng.uniform(), rng.uniform(), rng.uniform()};
                const int cx = static_cast<int>(rng.uniform_int(0, size - 1));
                const int cy = static_cast<int>(rng.uniform_int(0, size - 1));
                const int r = static_cast<int>(rng.uniform_int(size / 10 + 1, size / 3));
                for (int y = std::max(0, cy - r); y <= std::min(size - 1, cy + r); ++y)
                    for (int x = std::max(0, cx - r); x <= std::min(size - 1, cx + r); ++x) {
                        if (circle &&
                            (x - cx) * (x - cx) + (y - cy) * (y - cy) > r * r)
                            continue;
                        for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = static_cast<T>(col[c]);
                    }
            }
            break;
        }
    }
    return img;
}

}  // namespace

template <typename T>
CleanImageSource<T>::CleanImageSource(std::uint64_t seed, int image_size, int count) {
    if (image_size < 8 || count < 1) throw Error("CleanImageSource: invalid size/count");
    size_ = image_size;
    images_.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, 11, static_cast<std::uint64_t>(i)));
        images_.push_back(make_procedural<T>(rng, image_size, i));
    }
}

template <typename T>
CleanImageSource<T> CleanImageSource<T>::from_directory(const std::string& dir, int image_size) {
    CleanImageSource src;
    src.size_ = image_size;
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("CleanImageSource: no .png files in " + dir);
    for (const auto& p : files) {
        const ImageU8 im = read_png(p.string());
        if (im.width < image_size || im.height < image_size)
            throw IoError("CleanImageSource: " + p.string() + " smaller than " +
                          std::to_string(image_size) + " px");
        const int ox = (im.width - image_size) / 2;
        const int oy = (im.height - image_size) / 2;
        Tensor4<T> t(1, 3, image_size, image_size);
        for (int y = 0; y < image_size; ++y)
            for (int x = 0; x < image_size; ++x) {
                const std::size_t o =
                    (static_cast<std::size_t>(oy + y) * im.width + (ox + x)) * im.channels;
                for (int c = 0; c < 3; ++c)
                    t.at(0, c, y, x) = static_cast<T>(im.pixels[o + static_cast<std::size_t>(c)] / 255.0);
            }
        src.images_.push_back(std::move(t));
    }
    return src;
}

template <typename T>
PairStream<T>::PairStream(const CleanImageSource<T>* source, Degradation d, int patch_size,
                          int batch_size, std::uint64_t seed)
    : source_(source), degradation_(d), patch_(patch_size), batch_size_(batch_size), seed_(seed) {
    if (!source) throw Error("PairStream: null source");
    if (patch_size > source->image_size())
        throw Error("PairStream: patch " + std::to_string(patch_size) + " exceeds image size " +
                    std::to_string(source->image_size()));
    if (batch_size < 1) throw Error("PairStream: batch size must be positive");
}

template <typename T>
typename PairStream<T>::Batch PairStream<T>::batch(i64 index) const {
    Rng rng(derive_seed(seed_, 13, static_cast<std::uint64_t>(index)));
    Batch out;
    out.clean = Tensor4<T>(batch_size_, 3, patch_, patch_);
    out.degraded = Tensor4<T>(batch_size_, 3, patch_, patch_);
    for (int s = 0; s < batch_size_; ++s) {
        const int img_idx = static_cast<int>(rng.uniform_int(0, source_->count() - 1));
        const Tensor4<T>& img = source_->image(img_idx);
        const int oy = static_cast<int>(rng.uniform_int(0, img.height - patch_));
        const int ox = static_cast<int>(rng.uniform_int(0, img.width - patch_));
        Tensor4<T> clean(1, 3, patch_, patch_);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < patch_; ++y)
                for (int x = 0; x < patch_; ++x)
                    clean.at(0, c, y, x) = img.at(0, c, oy + y, ox + x);
        const Tensor4<T> noisy = degrade(clean, degradation_, rng.next_u64(), false);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < patch_; ++y)
                for (int x = 0; x < patch_; ++x) {
                    out.clean.at(s, c, y, x) = clean.at(0, c, y, x);
                    out.degraded.at(s, c, y, x) = noisy.at(0, c, y, x);
                }
    }
    return out;
}

template Tensor4<float> degrade(const Tensor4<float>&, const Degradation&, std::uint64_t, bool);
template Tensor4<double> degrade(const Tensor4<double>&, const Degradation&, std::uint64_t, bool);
template class CleanImageSource<float>;
template class CleanImageSource<double>;
template class PairStream<float>;
template class PairStream<double>;

}  // namespace cmc
