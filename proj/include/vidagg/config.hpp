#ifndef VIDAGG_CONFIG_HPP
#define VIDAGG_CONFIG_HPP

#include <cstdint>
#include <string>

namespace vidagg {

enum class SamplingMode { global, local };
enum class PipelineMode { affinity, qk, cosine_diag, baseline };

std::string to_string(SamplingMode m);
std::string to_string(PipelineMode m);
SamplingMode sampling_mode_from_string(const std::string& s);
PipelineMode pipeline_mode_from_string(const std::string& s);

// Every tunable of the engine. Defaults mirror the reference operating point;
// ranges are enforced by validate().
struct PipelineConfig {
    int k = 750;                // predictions kept before NMS
    int a = 30;                 // proposal cap per frame after NMS
    double nms_select = 0.75;   // rough selection threshold
    double nms_final = 0.5;     // final detection threshold
    int f_g = 31;               // global reference frames (keyframe excluded)
    int f_l = 0;                // local window length (keyframe included)
    SamplingMode sampling_mode = SamplingMode::global;
    double tau = 0.75;          // similarity threshold for reference pooling
    int m = 4;                  // attention heads
    int d_head = 16;            // per-head dimension
    PipelineMode mode = PipelineMode::affinity;
    uint64_t seed = 1;

    void validate() const;  // throws ConfigError

    bool operator==(const PipelineConfig&) const = default;
};

// Key/value JSON document with exactly the fields above. Loading accepts a
// partial document (missing keys keep defaults) but rejects unknown keys.
PipelineConfig load_pipeline_config(const std::string& path);
void save_pipeline_config(const PipelineConfig& cfg, const std::string& path);
PipelineConfig pipeline_config_from_json_text(const std::string& text);
std::string pipeline_config_to_json_text(const PipelineConfig& cfg);

}  // namespace vidagg

#endif
