#include "vidagg/sampling.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "vidagg/rng.hpp"

namespace vidagg {

namespace {

void check_key(int video_len, int key_idx) {
    if (video_len <= 0) throw std::out_of_range("sampling: empty video");
    if (key_idx < 0 || key_idx >= video_len)
        throw std::out_of_range("sampling: key_idx outside [0, video_len)");
}

}  // namespace

uint64_t draw_seed(uint64_t run_seed, uint32_t video_id, uint32_t key_idx) {
    return mix64(mix64(mix64(run_seed) ^ video_id) ^ key_idx);
}

std::vector<int> sample_global(int video_len, int f_g, int key_idx, uint64_t seed) {
    check_key(video_len, key_idx);
    if (f_g < 0) throw std::out_of_range("sampling: f_g must be >= 0");

    std::vector<int> out;
    if (f_g >= video_len - 1) {
        out.resize(video_len);
        std::iota(out.begin(), out.end(), 0);
        return out;
    }

    std::vector<int> pool;
    pool.reserve(video_len - 1);
    for (int i = 0; i < video_len; ++i)
        if (i != key_idx) pool.push_back(i);

    // Partial Fisher-Yates: the first f_g slots become the sample.
    std::mt19937_64 rng(seed);
    for (int i = 0; i < f_g; ++i) {
        const auto j = i + static_cast<size_t>(bounded(rng, pool.size() - i));
        std::swap(pool[i], pool[j]);
        out.push_back(pool[i]);
    }
    out.push_back(key_idx);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<int> sample_local(int video_len, int f_l, int key_idx) {
    check_key(video_len, key_idx);
    if (f_l < 0) throw std::out_of_range("sampling: f_l must be >= 0");

    if (f_l <= 1) return {key_idx};
    if (f_l >= video_len) {
        std::vector<int> out(video_len);
        std::iota(out.begin(), out.end(), 0);
        return out;
    }

    int start = key_idx - (f_l - 1) / 2;
    start = std::clamp(start, 0, video_len - f_l);
    std::vector<int> out(f_l);
    std::iota(out.begin(), out.end(), start);
    return out;
}

}  // namespace vidagg
