#ifndef VIDAGG_SAMPLING_HPP
#define VIDAGG_SAMPLING_HPP

#include <cstdint>
#include <vector>

namespace vidagg {

// Per-draw seed derived from (run seed, video, keyframe) so evaluation order
// can never change which references a keyframe sees.
uint64_t draw_seed(uint64_t run_seed, uint32_t video_id, uint32_t key_idx);

// key_idx plus f_g distinct frames drawn uniformly without replacement from
// the rest of the video (all frames once f_g >= video_len - 1). Sorted.
std::vector<int> sample_global(int video_len, int f_g, int key_idx, uint64_t seed);

// Window of f_l consecutive frames containing key_idx, shifted (not shrunk)
// at video boundaries. Sorted.
std::vector<int> sample_local(int video_len, int f_l, int key_idx);

}  // namespace vidagg

#endif
