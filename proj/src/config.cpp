#include "vidagg/config.hpp"

#include <fstream>

#include <json.hpp>

#include "vidagg/errors.hpp"

namespace vidagg {

std::string to_string(SamplingMode m) {
    return m == SamplingMode::global ? "global" : "local";
}

std::string to_string(PipelineMode m) {
    switch (m) {
        case PipelineMode::affinity: return "affinity";
        case PipelineMode::qk: return "qk";
        case PipelineMode::cosine_diag: return "cosine_diag";
        case PipelineMode::baseline: return "baseline";
    }
    return "affinity";
}

SamplingMode sampling_mode_from_string(const std::string& s) {
    if (s == "global") return SamplingMode::global;
    if (s == "local") return SamplingMode::local;
    throw ConfigError("unknown sampling_mode '" + s + "'");
}

PipelineMode pipeline_mode_from_string(const std::string& s) {
    if (s == "affinity") return PipelineMode::affinity;
    if (s == "qk") return PipelineMode::qk;
    if (s == "cosine_diag") return PipelineMode::cosine_diag;
    if (s == "baseline") return PipelineMode::baseline;
    throw ConfigError("unknown mode '" + s + "'");
}

void PipelineConfig::validate() const {
    if (a < 1) throw ConfigError("a must be >= 1");
    if (k < a) throw ConfigError("k must be >= a");
    if (!(nms_select >= 0.0 && nms_select <= 1.0)) throw ConfigError("nms_select out of [0,1]");
    if (!(nms_final >= 0.0 && nms_final <= 1.0)) throw ConfigError("nms_final out of [0,1]");
    if (f_g < 0) throw ConfigError("f_g must be >= 0");
    if (f_l < 0) throw ConfigError("f_l must be >= 0");
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau out of [0,1]");
    if (m < 1) throw ConfigError("m must be >= 1");
    if (d_head < 1) throw ConfigError("d_head must be >= 1");
}

PipelineConfig pipeline_config_from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("invalid config json: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a json object");

    PipelineConfig cfg;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "k") cfg.k = value.get<int>();
            else if (key == "a") cfg.a = value.get<int>();
            else if (key == "nms_select") cfg.nms_select = value.get<double>();
            else if (key == "nms_final") cfg.nms_final = value.get<double>();
            else if (key == "f_g") cfg.f_g = value.get<int>();
            else if (key == "f_l") cfg.f_l = value.get<int>();
            else if (key == "sampling_mode") cfg.sampling_mode = sampling_mode_from_string(value.get<std::string>());
            else if (key == "tau") cfg.tau = value.get<double>();
            else if (key == "m") cfg.m = value.get<int>();
            else if (key == "d_head") cfg.d_head = value.get<int>();
            else if (key == "mode") cfg.mode = pipeline_mode_from_string(value.get<std::string>());
            else if (key == "seed") cfg.seed = value.get<uint64_t>();
            else throw ConfigError("unknown config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string pipeline_config_to_json_text(const PipelineConfig& cfg) {
    nlohmann::json j;
    j["k"] = cfg.k;
    j["a"] = cfg.a;
    j["nms_select"] = cfg.nms_select;
    j["nms_final"] = cfg.nms_final;
    j["f_g"] = cfg.f_g;
    j["f_l"] = cfg.f_l;
    j["sampling_mode"] = to_string(cfg.sampling_mode);
    j["tau"] = cfg.tau;
    j["m"] = cfg.m;
    j["d_head"] = cfg.d_head;
    j["mode"] = to_string(cfg.mode);
    j["seed"] = cfg.seed;
    return j.dump(2) + "\n";
}

PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return pipeline_config_from_json_text(text);
}

void save_pipeline_config(const PipelineConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("data error: cannot open " + path + " for writing");
    out << pipeline_config_to_json_text(cfg);
}

}  // namespace vidagg
