#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace statmap {

/// Philox4x64-10 counter-based generator. A (seed, stream) pair names an
/// independent stream whose output depends only on the counter, so parallel
/// consumers get identical draws regardless of scheduling.
class CounterRng {
  public:
    CounterRng(std::uint64_t seed, std::uint64_t stream) : key_{seed, stream} {}

    std::uint64_t next_raw() {
        if (buf_pos_ == 4) {
            block();
            buf_pos_ = 0;
        }
        return buf_[buf_pos_++];
    }

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(next_raw() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in (0, 1]; safe under log().
    double uniform_open() {
        return static_cast<double>((next_raw() >> 11) + 1) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; second draw of each pair is cached.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    /// Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t lim = n ? (~std::uint64_t{0} - (~std::uint64_t{0} % n)) : 0;
        std::uint64_t v;
        do {
            v = next_raw();
        } while (v >= lim);
        return v % n;
    }

    /// Fisher-Yates shuffle.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        shuffle(idx);
        return idx;
    }

  private:
    static void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi, std::uint64_t& lo) {
        const unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
        hi = static_cast<std::uint64_t>(p >> 64);
        lo = static_cast<std::uint64_t>(p);
    }

    void block() {
        static constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ULL;
        static constexpr std::uint64_t kMul1 = 0xCA5A826395121157ULL;
        static constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ULL;
        static constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73BULL;

        for (int i = 0; i < 4; ++i) {  // 256-bit pre-increment, reference ordering
            if (++ctr_[i] != 0) break;
        }
        std::uint64_t c0 = ctr_[0], c1 = ctr_[1], c2 = ctr_[2], c3 = ctr_[3];
        std::uint64_t k0 = key_[0], k1 = key_[1];
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                k0 += kWeyl0;
                k1 += kWeyl1;
            }
            std::uint64_t hi0, lo0, hi1, lo1;
            mulhilo(kMul0, c0, hi0, lo0);
            mulhilo(kMul1, c2, hi1, lo1);
            c0 = hi1 ^ c1 ^ k0;
            c1 = lo1;
            c2 = hi0 ^ c3 ^ k1;
            c3 = lo0;
        }
        buf_[0] = c0;
        buf_[1] = c1;
        buf_[2] = c2;
        buf_[3] = c3;
    }

    std::uint64_t key_[2];
    std::uint64_t ctr_[4] = {0, 0, 0, 0};
    std::uint64_t buf_[4] = {0, 0, 0, 0};
    int buf_pos_ = 4;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

/// Stream-id allocation: high bits tag the consumer, low bits index the
/// work item (permutation k, realization r, ...). Keeps every consumer of
/// one master seed on a private stream.
enum class StreamPurpose : std::uint64_t {
    ObservationNoise = 0,
    CovRealization = 1,
    Permutation = 2,
    NullField = 3,
    Trial = 4,
    Subject = 5,
};

inline std::uint64_t stream_id(StreamPurpose p, std::uint64_t k = 0) {
    return (static_cast<std::uint64_t>(p) << 48) | (k & 0xFFFFFFFFFFFFULL);
}

}  // namespace statmap
