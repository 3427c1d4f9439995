// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <vector>

#include "cmc/errors.hpp"

namespace cmc {

/// Packed bitmap over the (t x m) memory grid, row-major: bit index = row*m + col.
/// Growing capacity appends whole rows, so existing bit indices never move.
class MaskBits {
public:
    MaskBits() = default;
    explicit MaskBits(std::int64_t nbits)
        : nbits_(nbits), words_((static_cast<std::size_t>(nbits) + 63) / 64, 0) {}

    std::int64_t nbits() const { return nbits_; }

    bool test(std::int64_t i) const {
        return (words_[static_cast<std::size_t>(i >> 6)] >> (i & 63)) & 1ULL;
    }
    void set(std::int64_t i) { words_[static_cast<std::size_t>(i >> 6)] |= 1ULL << (i & 63); }

    std::int64_t popcount() const {
        std::int64_t n = 0;
        for (std::uint64_t w : words_) n += std::popcount(w);
        return n;
    }

    bool intersects(const MaskBits& o) const {
        const std::size_t n = std::min(words_.size(), o.words_.size());
        for (std::size_t i = 0; i < n; ++i)
            if (words_[i] & o.words_[i]) return true;
        return false;
    }

    void or_with(const MaskBits& o) {
        for (std::size_t i = 0; i < std::min(words_.size(), o.words_.size()); ++i)
            words_[i] |= o.words_[i];
    }

    void append_zero_bits(std::int64_t extra) {
        nbits_ += extra;
        words_.resize((static_cast<std::size_t>(nbits_) + 63) / 64, 0);
    }

    const std::vector<std::uint64_t>& words() const { return words_; }
    std::vector<std::uint64_t>& words_mut() { return words_; }

private:
    std::int64_t nbits_ = 0;
    std::vector<std::uint64_t> words_;
};

/// Binary selection of the memory entries one task may train.
struct TaskMask {
    int task_id = 0;
    double fraction = 0.0;
    MaskBits bits;
};

}  // namespace cmc
