#include "vidagg/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "vidagg/errors.hpp"
#include "vidagg/fsm.hpp"
#include "vidagg/sampling.hpp"

namespace vidagg {

namespace {

struct VideoView {
    uint32_t video_id = 0;
    std::vector<const FrameRecord*> frames;
};

std::vector<VideoView> split_videos(const StreamData& stream) {
    std::vector<VideoView> videos;
    for (const FrameRecord& rec : stream.records) {
        if (videos.empty() || videos.back().video_id != rec.video_id)
            videos.push_back({rec.video_id, {}});
        videos.back().frames.push_back(&rec);
    }
    return videos;
}

struct Candidate {
    BoundingBox box;
    int class_id = 0;
    double score = 0.0;
};

// Class-aware NMS plus deterministic ordering of the survivors.
std::vector<Detection> finalize_detections(std::vector<Candidate> cands, uint32_t video_id,
                                           uint32_t frame_id, double nms_final) {
    std::vector<Detection> out;
    std::vector<int> classes;
    for (const Candidate& c : cands) classes.push_back(c.class_id);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

    for (int cls : classes) {
        std::vector<BoundingBox> boxes;
        std::vector<double> scores;
        std::vector<int> src;
        for (size_t i = 0; i < cands.size(); ++i) {
            if (cands[i].class_id != cls) continue;
            boxes.push_back(cands[i].box);
            scores.push_back(cands[i].score);
            src.push_back(static_cast<int>(i));
        }
        for (int kept : nms(boxes, scores, nms_final)) {
            const Candidate& c = cands[src[kept]];
            out.push_back({video_id, frame_id, c.box, c.class_id, c.score});
        }
    }
    std::sort(out.begin(), out.end(), [](const Detection& lhs, const Detection& rhs) {
        if (lhs.score != rhs.score) return lhs.score > rhs.score;
        if (lhs.class_id != rhs.class_id) return lhs.class_id < rhs.class_id;
        if (lhs.box.x1 != rhs.box.x1) return lhs.box.x1 < rhs.box.x1;
        return lhs.box.y1 < rhs.box.y1;
    });
    return out;
}

std::vector<int> sample_reference_frames(int video_len, int key_pos, uint32_t video_id,
                                         uint32_t key_frame_id, const PipelineConfig& cfg) {
    if (cfg.sampling_mode == SamplingMode::global)
        return sample_global(video_len, cfg.f_g, key_pos, draw_seed(cfg.seed, video_id, key_frame_id));
    return sample_local(video_len, cfg.f_l, key_pos);
}

std::vector<Detection> keyframe_detections(const VideoView& video,
                                           const std::vector<FrameFeatureSet>& sets, int key_pos,
                                           const FamWeights* weights, const PipelineConfig& cfg,
                                           int stream_num_classes) {
    const FrameFeatureSet& key_set = sets[key_pos];
    const uint32_t frame_id = video.frames[key_pos]->frame_id;
    std::vector<Candidate> cands;

    if (cfg.mode == PipelineMode::baseline || cfg.mode == PipelineMode::cosine_diag) {
        for (int r = 0; r < key_set.a_eff(); ++r)
            cands.push_back({key_set.boxes[r], key_set.class_ids[r],
                             key_set.P(r, 0) * key_set.P(r, 1)});
        return finalize_detections(std::move(cands), video.video_id, frame_id, cfg.nms_final);
    }

    if (weights == nullptr) throw ConfigError("mode " + to_string(cfg.mode) + " requires weights");
    if (weights->num_classes != stream_num_classes && weights->num_classes != stream_num_classes + 1)
        throw SchemaError("weights expect " + std::to_string(weights->num_classes) +
                          " classes, stream has " + std::to_string(stream_num_classes));
    if (key_set.a_eff() == 0) return {};

    const std::vector<int> frame_idx = sample_reference_frames(
        static_cast<int>(video.frames.size()), key_pos, video.video_id, frame_id, cfg);

    std::vector<const FrameFeatureSet*> batch_sets;
    int key_slot = -1;
    for (size_t i = 0; i < frame_idx.size(); ++i) {
        if (frame_idx[i] == key_pos) key_slot = static_cast<int>(i);
        batch_sets.push_back(&sets[frame_idx[i]]);
    }
    AggregationBatch batch = build_batch(batch_sets);
    if (batch.rows() == 0) return {};

    const AttentionMode mode =
        cfg.mode == PipelineMode::affinity ? AttentionMode::affinity : AttentionMode::qk;
    const FamOutputs outs = fam_forward(batch, *weights, mode, cfg.tau);

    int key_row0 = 0;
    for (int i = 0; i < key_slot; ++i) key_row0 += batch_sets[i]->a_eff();

    for (int r = 0; r < key_set.a_eff(); ++r) {
        const int row = key_row0 + r;
        int best = 0;
        for (int c = 1; c < stream_num_classes; ++c)
            if (outs.probs(row, c) > outs.probs(row, best)) best = c;
        const double score = outs.probs(row, best) * key_set.iou_scores[r];
        cands.push_back({key_set.boxes[r], best, score});
    }
    return finalize_detections(std::move(cands), video.video_id, frame_id, cfg.nms_final);
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

std::vector<Detection> run_keyframe(const std::vector<FrameRecord>& video, int key_pos,
                                    const FamWeights* weights, const PipelineConfig& cfg,
                                    int stream_num_classes) {
    cfg.validate();
    if (key_pos < 0 || key_pos >= static_cast<int>(video.size()))
        throw std::out_of_range("run_keyframe: key_pos out of range");

    VideoView view;
    view.video_id = video.front().video_id;
    std::vector<FrameFeatureSet> sets;
    sets.reserve(video.size());
    for (const FrameRecord& rec : video) {
        view.frames.push_back(&rec);
        sets.push_back(select_features(rec, cfg));
    }
    return keyframe_detections(view, sets, key_pos, weights, cfg, stream_num_classes);
}

std::vector<Detection> run_stream(const StreamData& stream, const FamWeights* weights,
                                  const PipelineConfig& cfg) {
    cfg.validate();
    if (weights != nullptr) {
        if (weights->d_q != stream.d_q)
            throw SchemaError("weights d_q=" + std::to_string(weights->d_q) +
                              " does not match stream d_q=" + std::to_string(stream.d_q));
        if (weights->m != cfg.m || weights->d_head != cfg.d_head)
            throw ConfigError("config m/d_head do not match the weights file");
    }
    const std::vector<VideoView> videos = split_videos(stream);

    // Exceptions must not escape omp regions; capture the first one.
    std::exception_ptr error;

    // Selection is per frame and reused by every keyframe that samples it.
    std::vector<std::vector<FrameFeatureSet>> sets(videos.size());
    for (size_t v = 0; v < videos.size(); ++v) {
        sets[v].resize(videos[v].frames.size());
#pragma omp parallel for schedule(dynamic)
        for (int f = 0; f < static_cast<int>(videos[v].frames.size()); ++f) {
            try {
                sets[v][f] = select_features(*videos[v].frames[f], cfg);
            } catch (...) {
#pragma omp critical
                if (!error) error = std::current_exception();
            }
        }
    }
    if (error) std::rethrow_exception(error);

    std::vector<std::pair<int, int>> keyframes;
    for (size_t v = 0; v < videos.size(); ++v)
        for (size_t f = 0; f < videos[v].frames.size(); ++f)
            keyframes.emplace_back(static_cast<int>(v), static_cast<int>(f));

    std::vector<std::vector<Detection>> per_keyframe(keyframes.size());
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < static_cast<int>(keyframes.size()); ++i) {
        try {
            const auto& [v, f] = keyframes[i];
            per_keyframe[i] =
                keyframe_detections(videos[v], sets[v], f, weights, cfg, stream.num_classes);
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);

    std::vector<Detection> out;
    for (const auto& dets : per_keyframe) out.insert(out.end(), dets.begin(), dets.end());
    return out;
}

std::vector<FrameGt> collect_ground_truth(const StreamData& stream) {
    std::vector<FrameGt> gts;
    for (const FrameRecord& rec : stream.records)
        if (rec.ground_truth)
            for (const GroundTruthBox& g : *rec.ground_truth) gts.push_back({rec.video_id, g});
    return gts;
}

std::map<int, double> ap50_per_class(const std::vector<Detection>& detections,
                                     const std::vector<FrameGt>& gts) {
    std::map<int, double> result;
    if (gts.empty()) return result;

    // Ground truth grouped per (video, frame, class).
    using FrameKey = std::pair<uint32_t, uint32_t>;
    std::map<int, std::map<FrameKey, std::vector<BoundingBox>>> gt_boxes;
    std::map<int, int> npos;
    for (const FrameGt& g : gts) {
        gt_boxes[static_cast<int>(g.gt.class_id)][{g.video_id, g.gt.frame_id}].push_back(g.gt.box);
        ++npos[static_cast<int>(g.gt.class_id)];
    }

    for (const auto& [cls, frames] : gt_boxes) {
        std::vector<int> order;
        for (size_t i = 0; i < detections.size(); ++i)
            if (detections[i].class_id == cls) order.push_back(static_cast<int>(i));
        // Descending score; ties broken by position, never by score values,
        // which keeps the metric invariant under monotone rescoring.
        std::stable_sort(order.begin(), order.end(), [&](int lhs, int rhs) {
            return detections[lhs].score > detections[rhs].score;
        });

        std::map<FrameKey, std::vector<bool>> used;
        for (const auto& [key, boxes] : frames) used[key].assign(boxes.size(), false);

        const int total = npos.at(cls);
        std::vector<double> recall, precision;
        int tp = 0, fp = 0;
        for (int idx : order) {
            const Detection& det = detections[idx];
            const FrameKey key{det.video_id, det.frame_id};
            double best_iou = 0.0;
            int best_j = -1;
            auto it = frames.find(key);
            if (it != frames.end()) {
                for (size_t j = 0; j < it->second.size(); ++j) {
                    const double v = iou(det.box, it->second[j]);
                    if (v > best_iou) {
                        best_iou = v;
                        best_j = static_cast<int>(j);
                    }
                }
            }
            if (best_iou >= 0.5 && !used[key][best_j]) {
                used[key][best_j] = true;
                ++tp;
            } else {
                ++fp;
            }
            recall.push_back(static_cast<double>(tp) / total);
            precision.push_back(static_cast<double>(tp) / (tp + fp));
        }

        // Area under the precision envelope (all-point interpolation).
        double ap = 0.0;
        const int n = static_cast<int>(recall.size());
        std::vector<double> envelope(n);
        double running = 0.0;
        for (int i = n - 1; i >= 0; --i) {
            running = std::max(running, precision[i]);
            envelope[i] = running;
        }
        double prev_recall = 0.0;
        for (int i = 0; i < n; ++i) {
            if (recall[i] > prev_recall) {
                ap += (recall[i] - prev_recall) * envelope[i];
                prev_recall = recall[i];
            }
        }
        result[cls] = ap;
    }
    return result;
}

double ap50(const std::vector<Detection>& detections, const std::vector<FrameGt>& gts) {
    if (gts.empty()) return -1.0;
    const std::map<int, double> per_class = ap50_per_class(detections, gts);
    double sum = 0.0;
    for (const auto& [cls, ap] : per_class) sum += ap;
    return sum / static_cast<double>(per_class.size());
}

void write_detections(const std::vector<Detection>& dets, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("data error: cannot open " + path + " for writing");
    for (const Detection& d : dets) {
        out << d.video_id << ' ' << d.frame_id << ' ' << format_double(d.box.x1) << ' '
            << format_double(d.box.y1) << ' ' << format_double(d.box.x2) << ' '
            << format_double(d.box.y2) << ' ' << d.class_id << ' ' << format_double(d.score)
            << '\n';
    }
    if (!out) throw DataError("data error: write failed for " + path);
}

std::vector<Detection> read_detections(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("data error: cannot open " + path);
    std::vector<Detection> dets;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        Detection d;
        if (!(ss >> d.video_id >> d.frame_id >> d.box.x1 >> d.box.y1 >> d.box.x2 >> d.box.y2 >>
              d.class_id >> d.score))
            throw FormatError("bad detection line " + std::to_string(line_no) + " in " + path);
        if (!d.box.valid() || !std::isfinite(d.score))
            throw DataError("data error: invalid detection at line " + std::to_string(line_no));
        dets.push_back(d);
    }
    return dets;
}

std::vector<AblationRow> ablate(const StreamData& stream, const FamWeights* weights,
                                const PipelineConfig& base_cfg, const std::string& param,
                                const std::vector<std::string>& values) {
    base_cfg.validate();
    if (values.empty()) throw ConfigError("ablate: empty value list");
    const std::vector<FrameGt> gts = collect_ground_truth(stream);
    if (gts.empty()) throw DataError("data error: ablation stream carries no ground truth");

    std::vector<AblationRow> rows;
    for (const std::string& value : values) {
        PipelineConfig cfg = base_cfg;
        try {
            if (param == "f_g") cfg.f_g = std::stoi(value);
            else if (param == "f_l") cfg.f_l = std::stoi(value);
            else if (param == "a") cfg.a = std::stoi(value);
            else if (param == "tau") cfg.tau = std::stod(value);
            else if (param == "mode") cfg.mode = pipeline_mode_from_string(value);
            else throw ConfigError("unknown sweep parameter '" + param + "'");
        } catch (const std::invalid_argument&) {
            throw ConfigError("bad sweep value '" + value + "' for parameter " + param);
        }
        cfg.validate();

        const auto t0 = std::chrono::steady_clock::now();
        const std::vector<Detection> dets = run_stream(stream, weights, cfg);
        const auto t1 = std::chrono::steady_clock::now();
        const double ms =
            std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(t1 - t0).count();

        AblationRow row;
        row.value = value;
        row.ap50 = ap50(dets, gts);
        row.mean_ms_per_frame = ms / static_cast<double>(stream.records.size());
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_ablation_table(const std::vector<AblationRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("data error: cannot open " + path + " for writing");
    out << "value,ap50,mean_ms_per_frame\n";
    for (const AblationRow& r : rows)
        out << r.value << ',' << format_double(r.ap50) << ',' << format_double(r.mean_ms_per_frame)
            << '\n';
}

void write_ablation_plot(const std::vector<AblationRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("data error: cannot open " + path + " for writing");
    for (size_t i = 0; i < rows.size(); ++i) {
        double x;
        try {
            x = std::stod(rows[i].value);
        } catch (const std::invalid_argument&) {
            x = static_cast<double>(i);  // categorical sweeps plot by index
        }
        out << format_double(x) << ' ' << format_double(rows[i].ap50) << '\n';
    }
}

OpCounts count_ops(const PipelineConfig& cfg, long long n, int d_q, int num_classes) {
    if (n < 1) throw std::invalid_argument("count_ops: N must be >= 1");
    const long long m = cfg.m, dh = cfg.d_head;
    const long long d = m * dh;
    OpCounts c;
    c.projection_macs = 5 * m * n * d_q * dh;
    c.logit_macs_per_head_branch = n * n * dh;
    c.logit_macs = 2 * m * n * n * dh;
    c.apply_macs = 2 * m * n * n * dh;
    c.similarity_macs = n * n * d;
    c.classifier_macs = n * 4 * d * num_classes;
    c.pooling_adds_worst = n * n * 2 * d;
    return c;
}

void write_cosine_diagnostics(const StreamData& stream, const PipelineConfig& cfg, int top_n,
                              const std::string& path) {
    cfg.validate();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("data error: cannot open " + path + " for writing");
    out << "# video frame key_row ref_rank batch_row ref_frame\n";

    const std::vector<VideoView> videos = split_videos(stream);
    for (const VideoView& video : videos) {
        std::vector<FrameFeatureSet> sets;
        sets.reserve(video.frames.size());
        for (const FrameRecord* rec : video.frames) sets.push_back(select_features(*rec, cfg));

        for (int key_pos = 0; key_pos < static_cast<int>(video.frames.size()); ++key_pos) {
            if (sets[key_pos].a_eff() == 0) continue;
            const std::vector<int> frame_idx =
                sample_reference_frames(static_cast<int>(video.frames.size()), key_pos,
                                        video.video_id, video.frames[key_pos]->frame_id, cfg);
            std::vector<const FrameFeatureSet*> batch_sets;
            int key_slot = -1;
            for (size_t i = 0; i < frame_idx.size(); ++i) {
                if (frame_idx[i] == key_pos) key_slot = static_cast<int>(i);
                batch_sets.push_back(&sets[frame_idx[i]]);
            }
            AggregationBatch batch = build_batch(batch_sets);
            if (batch.rows() == 0) continue;
            int key_row0 = 0;
            for (int i = 0; i < key_slot; ++i) key_row0 += batch_sets[i]->a_eff();

            for (int r = 0; r < sets[key_pos].a_eff(); ++r) {
                const std::vector<int> top = cosine_select(batch, key_row0 + r, top_n);
                for (size_t rank = 0; rank < top.size(); ++rank) {
                    const int ref_frame = frame_idx[batch.frame_of_row[top[rank]]];
                    out << video.video_id << ' ' << video.frames[key_pos]->frame_id << ' ' << r
                        << ' ' << rank << ' ' << top[rank] << ' '
                        << video.frames[ref_frame]->frame_id << '\n';
                }
            }
        }
    }
}

}  // namespace vidagg
