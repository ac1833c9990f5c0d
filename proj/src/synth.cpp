#include "vidagg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "vidagg/errors.hpp"
#include "vidagg/rng.hpp"

namespace vidagg {

namespace {

// Degraded features share a per-video direction with this amplitude on top
// of the isotropic noise, so degraded proposals resemble each other more
// than they resemble clean ones, mimicking frame-wide blur. The amplitude is
// absolute: prototypes are unit vectors, so the degraded-to-degraded
// affinity boost stays comparable to the clean-to-clean signal for any
// degrade_noise setting.
constexpr double kSharedDirAmp = 2.0;

std::vector<double> gauss_vector(std::mt19937_64& rng, int n, double sigma) {
    std::vector<double> v(n);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (double& x : v) x = dist(rng) * sigma;
    return v;
}

void normalize(std::vector<double>& v) {
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    const double inv = 1.0 / std::sqrt(n2);
    for (double& x : v) x *= inv;
}

// Seeded unit prototypes, mutually orthogonalized when they fit in d_q so
// cosine structure between classes is meaningful.
std::vector<std::vector<double>> make_prototypes(int num_classes, int d_q, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::vector<double>> protos;
    protos.reserve(num_classes);
    for (int c = 0; c < num_classes; ++c) {
        std::vector<double> p = gauss_vector(rng, d_q, 1.0);
        if (num_classes <= d_q) {
            for (const auto& q : protos) {
                double dot = 0.0;
                for (int i = 0; i < d_q; ++i) dot += p[i] * q[i];
                for (int i = 0; i < d_q; ++i) p[i] -= dot * q[i];
            }
        }
        normalize(p);
        protos.push_back(std::move(p));
    }
    return protos;
}

struct ObjectState {
    int class_id = 0;
    double w = 0.0, h = 0.0;
    double cx0 = 0.0, cy0 = 0.0;
    double vx = 0.0, vy = 0.0;
};

BoundingBox box_at(const ObjectState& obj, int frame, double canvas) {
    double cx = obj.cx0 + obj.vx * frame;
    double cy = obj.cy0 + obj.vy * frame;
    cx = std::clamp(cx, obj.w / 2, canvas - obj.w / 2);
    cy = std::clamp(cy, obj.h / 2, canvas - obj.h / 2);
    return {cx - obj.w / 2, cy - obj.h / 2, cx + obj.w / 2, cy + obj.h / 2};
}

}  // namespace

void SynthConfig::validate() const {
    if (num_videos < 1) throw ConfigError("num_videos must be >= 1");
    if (frames_per_video < 1) throw ConfigError("frames_per_video must be >= 1");
    if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
    if (objects_per_video < 1) throw ConfigError("objects_per_video must be >= 1");
    if (!(canvas_size > 0.0)) throw ConfigError("canvas_size must be positive");
    if (d_q < 2) throw ConfigError("d_q must be >= 2");
    if (!(feature_noise_clean >= 0.0)) throw ConfigError("feature_noise_clean must be >= 0");
    if (!(degrade_fraction >= 0.0 && degrade_fraction <= 1.0))
        throw ConfigError("degrade_fraction out of [0,1]");
    if (!(degrade_noise > feature_noise_clean))
        throw ConfigError("degrade_noise must exceed feature_noise_clean");
    if (!(degrade_conf_scale > 0.0 && degrade_conf_scale <= 1.0))
        throw ConfigError("degrade_conf_scale out of (0,1]");
    if (background_preds_per_frame < 0) throw ConfigError("background_preds_per_frame must be >= 0");
}

StreamData generate(const SynthConfig& cfg) {
    cfg.validate();

    const auto proto_cls = make_prototypes(cfg.num_classes, cfg.d_q, mix64(cfg.seed ^ 0xC1A55ull));
    const auto proto_reg = make_prototypes(cfg.num_classes, cfg.d_q, mix64(cfg.seed ^ 0x4E6ull));

    // Classes cycle through a seeded permutation so every class shows up in
    // any long enough run of videos; purely random assignment leaves classes
    // uncovered often enough to distort per-class evaluation.
    std::vector<int> class_cycle(cfg.num_classes);
    for (int c = 0; c < cfg.num_classes; ++c) class_cycle[c] = c;
    {
        std::mt19937_64 perm_rng(mix64(cfg.seed ^ 0x9e37ull));
        deterministic_shuffle(class_cycle, perm_rng);
    }

    std::vector<std::vector<FrameRecord>> per_video(cfg.num_videos);
#pragma omp parallel for schedule(dynamic)
    for (int v = 0; v < cfg.num_videos; ++v) {
        std::mt19937_64 rng(mix64(cfg.seed ^ mix64(0x51D50ull + v)));
        std::normal_distribution<double> gauss(0.0, 1.0);
        const double canvas = cfg.canvas_size;

        // Per-video degradation direction for each branch.
        std::vector<double> dir_cls = gauss_vector(rng, cfg.d_q, 1.0);
        normalize(dir_cls);
        std::vector<double> dir_reg = gauss_vector(rng, cfg.d_q, 1.0);
        normalize(dir_reg);

        std::vector<ObjectState> objects(cfg.objects_per_video);
        for (int o = 0; o < cfg.objects_per_video; ++o) {
            ObjectState& obj = objects[o];
            obj.class_id =
                class_cycle[(v * cfg.objects_per_video + o) % cfg.num_classes];
            obj.w = (0.10 + 0.12 * unit_uniform(rng)) * canvas;
            obj.h = (0.10 + 0.12 * unit_uniform(rng)) * canvas;
            obj.cx0 = obj.w / 2 + unit_uniform(rng) * (canvas - obj.w);
            obj.cy0 = obj.h / 2 + unit_uniform(rng) * (canvas - obj.h);
            const double span = 0.5 * canvas / std::max(1, cfg.frames_per_video);
            obj.vx = (2.0 * unit_uniform(rng) - 1.0) * span;
            obj.vy = (2.0 * unit_uniform(rng) - 1.0) * span;
        }

        // Exactly round(fraction * frames) degraded frames, chosen uniformly.
        const int degraded_count = static_cast<int>(
            std::llround(cfg.degrade_fraction * static_cast<double>(cfg.frames_per_video)));
        std::vector<int> frame_order(cfg.frames_per_video);
        for (int i = 0; i < cfg.frames_per_video; ++i) frame_order[i] = i;
        deterministic_shuffle(frame_order, rng);
        std::vector<bool> degraded(cfg.frames_per_video, false);
        for (int i = 0; i < degraded_count; ++i) degraded[frame_order[i]] = true;

        const double shared_amp = kSharedDirAmp;
        const double iid_deg_sigma = cfg.degrade_noise;

        per_video[v].reserve(cfg.frames_per_video);
        for (int f = 0; f < cfg.frames_per_video; ++f) {
            FrameRecord rec;
            rec.video_id = static_cast<uint32_t>(v);
            rec.frame_id = static_cast<uint32_t>(f);
            auto& gts = rec.ground_truth.emplace();
            uint32_t position = 0;

            for (const ObjectState& obj : objects) {
                const BoundingBox gt_box = box_at(obj, f, canvas);
                gts.push_back({rec.frame_id, gt_box, static_cast<uint32_t>(obj.class_id)});

                DensePrediction p;
                const double jitter = 0.008 * canvas;
                p.box.x1 = std::clamp(gt_box.x1 + gauss(rng) * jitter, 0.0, canvas);
                p.box.y1 = std::clamp(gt_box.y1 + gauss(rng) * jitter, 0.0, canvas);
                p.box.x2 = std::clamp(gt_box.x2 + gauss(rng) * jitter, 0.0, canvas);
                p.box.y2 = std::clamp(gt_box.y2 + gauss(rng) * jitter, 0.0, canvas);
                p.box.x2 = std::max(p.box.x2, p.box.x1 + 1e-3 * canvas);
                p.box.y2 = std::max(p.box.y2, p.box.y1 + 1e-3 * canvas);

                const bool deg = degraded[f];
                p.feature_cls.resize(cfg.d_q);
                p.feature_reg.resize(cfg.d_q);
                for (int i = 0; i < cfg.d_q; ++i) {
                    double fc = proto_cls[obj.class_id][i];
                    double fr = proto_reg[obj.class_id][i];
                    if (deg) {
                        fc += shared_amp * dir_cls[i] + gauss(rng) * iid_deg_sigma;
                        fr += shared_amp * dir_reg[i] + gauss(rng) * iid_deg_sigma;
                    } else {
                        fc += gauss(rng) * cfg.feature_noise_clean;
                        fr += gauss(rng) * cfg.feature_noise_clean;
                    }
                    p.feature_cls[i] = static_cast<float>(fc);
                    p.feature_reg[i] = static_cast<float>(fr);
                }

                p.class_scores.resize(cfg.num_classes);
                for (int c = 0; c < cfg.num_classes; ++c)
                    p.class_scores[c] = static_cast<float>(0.05 + 0.15 * unit_uniform(rng));
                p.class_scores[obj.class_id] = static_cast<float>(0.75 + 0.20 * unit_uniform(rng));
                double iou_s = 0.80 + 0.15 * unit_uniform(rng);
                if (deg) {
                    // Degradation suppresses the true class and promotes a
                    // distractor before the overall confidence collapse.
                    double true_s = p.class_scores[obj.class_id] * (0.25 + 0.30 * unit_uniform(rng));
                    p.class_scores[obj.class_id] = static_cast<float>(true_s);
                    if (cfg.num_classes > 1) {
                        int distractor = static_cast<int>(bounded(rng, cfg.num_classes - 1));
                        if (distractor >= obj.class_id) ++distractor;
                        p.class_scores[distractor] = static_cast<float>(0.45 + 0.30 * unit_uniform(rng));
                    }
                    for (float& s : p.class_scores) s = static_cast<float>(s * cfg.degrade_conf_scale);
                    iou_s *= cfg.degrade_conf_scale;
                }
                p.iou_score = static_cast<float>(iou_s);
                p.position_id = position++;
                rec.predictions.push_back(std::move(p));
            }

            for (int b = 0; b < cfg.background_preds_per_frame; ++b) {
                DensePrediction p;
                const double w = (0.05 + 0.25 * unit_uniform(rng)) * canvas;
                const double h = (0.05 + 0.25 * unit_uniform(rng)) * canvas;
                const double cx = w / 2 + unit_uniform(rng) * (canvas - w);
                const double cy = h / 2 + unit_uniform(rng) * (canvas - h);
                p.box = {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
                p.class_scores.resize(cfg.num_classes);
                for (float& s : p.class_scores) s = static_cast<float>(0.02 + 0.10 * unit_uniform(rng));
                p.iou_score = static_cast<float>(0.02 + 0.16 * unit_uniform(rng));
                const double bg_sigma = 1.0 / std::sqrt(static_cast<double>(cfg.d_q));
                p.feature_cls.resize(cfg.d_q);
                p.feature_reg.resize(cfg.d_q);
                for (int i = 0; i < cfg.d_q; ++i) {
                    p.feature_cls[i] = static_cast<float>(gauss(rng) * bg_sigma);
                    p.feature_reg[i] = static_cast<float>(gauss(rng) * bg_sigma);
                }
                p.position_id = position++;
                rec.predictions.push_back(std::move(p));
            }
            per_video[v].push_back(std::move(rec));
        }
    }

    StreamData stream;
    stream.num_classes = static_cast<uint16_t>(cfg.num_classes);
    stream.d_q = static_cast<uint16_t>(cfg.d_q);
    for (auto& video : per_video)
        for (auto& rec : video) stream.records.push_back(std::move(rec));
    return stream;
}

SynthConfig synth_config_from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("invalid synth config json: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("synth config must be a json object");

    SynthConfig cfg;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "num_videos") cfg.num_videos = value.get<int>();
            else if (key == "frames_per_video") cfg.frames_per_video = value.get<int>();
            else if (key == "num_classes") cfg.num_classes = value.get<int>();
            else if (key == "objects_per_video") cfg.objects_per_video = value.get<int>();
            else if (key == "canvas_size") cfg.canvas_size = value.get<double>();
            else if (key == "d_q") cfg.d_q = value.get<int>();
            else if (key == "feature_noise_clean") cfg.feature_noise_clean = value.get<double>();
            else if (key == "degrade_fraction") cfg.degrade_fraction = value.get<double>();
            else if (key == "degrade_noise") cfg.degrade_noise = value.get<double>();
            else if (key == "degrade_conf_scale") cfg.degrade_conf_scale = value.get<double>();
            else if (key == "background_preds_per_frame") cfg.background_preds_per_frame = value.get<int>();
            else if (key == "seed") cfg.seed = value.get<uint64_t>();
            else throw ConfigError("unknown synth config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad synth config value: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string synth_config_to_json_text(const SynthConfig& cfg) {
    nlohmann::json j;
    j["num_videos"] = cfg.num_videos;
    j["frames_per_video"] = cfg.frames_per_video;
    j["num_classes"] = cfg.num_classes;
    j["objects_per_video"] = cfg.objects_per_video;
    j["canvas_size"] = cfg.canvas_size;
    j["d_q"] = cfg.d_q;
    j["feature_noise_clean"] = cfg.feature_noise_clean;
    j["degrade_fraction"] = cfg.degrade_fraction;
    j["degrade_noise"] = cfg.degrade_noise;
    j["degrade_conf_scale"] = cfg.degrade_conf_scale;
    j["background_preds_per_frame"] = cfg.background_preds_per_frame;
    j["seed"] = cfg.seed;
    return j.dump(2) + "\n";
}

SynthConfig load_synth_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open synth config file " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return synth_config_from_json_text(text);
}

void save_synth_config(const SynthConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("data error: cannot open " + path + " for writing");
    out << synth_config_to_json_text(cfg);
}

}  // namespace vidagg
