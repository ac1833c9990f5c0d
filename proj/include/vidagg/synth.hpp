#ifndef VIDAGG_SYNTH_HPP
#define VIDAGG_SYNTH_HPP

#include <cstdint>
#include <string>

#include "vidagg/stream.hpp"

namespace vidagg {

// Synthetic video feature source standing in for a real backbone. Objects
// carry class prototype features and move on linear trajectories; a seeded
// subset of frames is degraded, which inflates feature noise and corrupts
// the detector scores.
struct SynthConfig {
    int num_videos = 5;
    int frames_per_video = 24;
    int num_classes = 5;
    int objects_per_video = 2;
    double canvas_size = 640.0;
    int d_q = 64;
    double feature_noise_clean = 0.05;   // sigma on clean frames
    double degrade_fraction = 0.3;       // fraction of frames degraded per video
    double degrade_noise = 0.18;         // sigma on degraded frames, > clean sigma
    double degrade_conf_scale = 0.45;    // multiplier on degraded-frame scores
    int background_preds_per_frame = 6;
    uint64_t seed = 7;

    void validate() const;  // throws ConfigError

    bool operator==(const SynthConfig&) const = default;
};

SynthConfig load_synth_config(const std::string& path);
void save_synth_config(const SynthConfig& cfg, const std::string& path);
SynthConfig synth_config_from_json_text(const std::string& text);
std::string synth_config_to_json_text(const SynthConfig& cfg);

// Fully deterministic for a given config; per-video sub-seeds keep videos
// independent of generation order.
StreamData generate(const SynthConfig& cfg);

}  // namespace vidagg

#endif
