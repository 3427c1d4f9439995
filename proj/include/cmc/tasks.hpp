// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmc/tensor.hpp"

namespace cmc {

enum class DegradationKind { gaussian_noise, gaussian_blur, block_artifact, rain_streaks };

/// One degradation generator. Training draws per-sample parameters from the
/// configured ranges; eval mode pins them (blur sigma / block quality) so
/// evaluation sets are comparable across epochs.
struct Degradation {
    DegradationKind kind = DegradationKind::gaussian_noise;

    double noise_sigma = 25.0;  // std on the 0..255 scale

    int blur_kernel_size = 15;  // odd
    double blur_sigma_min = 0.2;
    double blur_sigma_max = 3.0;
    double blur_sigma_eval = 2.5;

    double quality_min = 10.0;
    double quality_max = 70.0;
    double quality_eval = 20.0;

    double rain_density = 0.002;  // streaks per pixel
    double rain_length_min = 8.0;
    double rain_length_max = 20.0;
    double rain_angle_min_deg = 70.0;  // from the horizontal axis
    double rain_angle_max_deg = 110.0;
    double rain_intensity_min = 0.15;
    double rain_intensity_max = 0.4;
};

/// Normalized 1-D Gaussian taps (sum 1). Degenerates to a discrete delta as
/// sigma -> 0.
std::vector<double> gaussian_taps(int size, double sigma);

/// Apply `d` to a clean [0,1] image (any batch; one parameter draw per call).
/// Deterministic given (clean, d, sample_seed); output clamped to [0,1].
template <typename T>
Tensor4<T> degrade(const Tensor4<T>& clean, const Degradation& d, std::uint64_t sample_seed,
                   bool eval_mode = false);

/// Deterministic pool of clean images: procedural textures (smooth gradients,
/// checkerboards, filtered noise, geometric shapes) or a directory of PNGs.
template <typename T>
class CleanImageSource {
public:
    CleanImageSource(std::uint64_t seed, int image_size, int count);
    static CleanImageSource from_directory(const std::string& dir, int image_size);

    int count() const { return static_cast<int>(images_.size()); }
    int image_size() const { return size_; }
    const Tensor4<T>& image(int index) const { return images_[static_cast<std::size_t>(index)]; }

    /// Keep only the first n images (used to split a directory pool).
    void truncate(int n) {
        if (n >= 1 && n < count()) images_.resize(static_cast<std::size_t>(n));
    }

private:
    CleanImageSource() = default;
    int size_ = 0;
    std::vector<Tensor4<T>> images_;
};

/// Infinite deterministic stream of (degraded, clean) patch batches; batch i
/// depends only on (seed, i).
template <typename T>
class PairStream {
public:
    PairStream(const CleanImageSource<T>* source, Degradation d, int patch_size, int batch_size,
               std::uint64_t seed);

    struct Batch {
        Tensor4<T> degraded;
        Tensor4<T> clean;
    };
    Batch batch(i64 index) const;

private:
    const CleanImageSource<T>* source_;
    Degradation degradation_;
    int patch_, batch_size_;
    std::uint64_t seed_;
};

}  // namespace cmc
