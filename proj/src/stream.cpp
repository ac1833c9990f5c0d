#include "vidagg/stream.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "vidagg/errors.hpp"

namespace vidagg {

namespace {

constexpr char kMagic[4] = {'V', 'A', 'G', 'G'};
constexpr uint16_t kVersion = 1;

void put_u16(std::string& buf, uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& buf, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u32(buf, bits);
}

class Reader {
public:
    Reader(const uint8_t* data, size_t size) : data_(data), size_(size) {}

    size_t remaining() const { return size_ - pos_; }

    uint16_t u16() {
        need(2, "u16");
        uint16_t v = static_cast<uint16_t>(data_[pos_]) | static_cast<uint16_t>(data_[pos_ + 1]) << 8;
        pos_ += 2;
        return v;
    }

    uint32_t u32() {
        need(4, "u32");
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }

    void raw(char* out, size_t n) {
        need(n, "raw bytes");
        std::memcpy(out, data_ + pos_, n);
        pos_ += n;
    }

private:
    void need(size_t n, const char* what) const {
        if (size_ - pos_ < n) throw FormatError(std::string("truncated stream while reading ") + what);
    }

    const uint8_t* data_;
    size_t size_;
    size_t pos_ = 0;
};

size_t prediction_bytes(uint16_t num_classes, uint16_t d_q) {
    return 4 * 4 + 4 * num_classes + 4 + 4 * static_cast<size_t>(d_q) * 2 + 4;
}

void check_score(float v, uint32_t video_id, uint32_t frame_id, const char* what) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
        throw DataError("data error: " + std::string(what) + " out of [0,1] at video " +
                        std::to_string(video_id) + " frame " + std::to_string(frame_id));
}

void validate_prediction(const DensePrediction& p, uint16_t num_classes, uint16_t d_q,
                         uint32_t video_id, uint32_t frame_id) {
    const std::string where =
        " at video " + std::to_string(video_id) + " frame " + std::to_string(frame_id);
    if (p.class_scores.size() != num_classes)
        throw SchemaError("prediction has " + std::to_string(p.class_scores.size()) +
                          " class scores, header declares " + std::to_string(num_classes) + where);
    if (p.feature_cls.size() != d_q || p.feature_reg.size() != d_q)
        throw SchemaError("feature length does not match header d_q=" + std::to_string(d_q) + where);
    if (!p.box.valid()) throw DataError("data error: degenerate box" + where);
    for (float s : p.class_scores) check_score(s, video_id, frame_id, "class score");
    check_score(p.iou_score, video_id, frame_id, "iou score");
    for (float v : p.feature_cls)
        if (!std::isfinite(v)) throw DataError("data error: non-finite feature_cls value" + where);
    for (float v : p.feature_reg)
        if (!std::isfinite(v)) throw DataError("data error: non-finite feature_reg value" + where);
}

}  // namespace

bool StreamData::has_ground_truth() const {
    return std::any_of(records.begin(), records.end(),
                       [](const FrameRecord& r) { return r.ground_truth.has_value(); });
}

double confidence(const DensePrediction& p) {
    double best = 0.0;
    for (float s : p.class_scores) best = std::max(best, static_cast<double>(s));
    return best * static_cast<double>(p.iou_score);
}

int argmax_class(const DensePrediction& p) {
    int best = 0;
    for (int c = 1; c < static_cast<int>(p.class_scores.size()); ++c)
        if (p.class_scores[c] > p.class_scores[best]) best = c;
    return best;
}

void write_feature_stream(const StreamData& stream, const std::string& path) {
    const bool with_gt = stream.has_ground_truth();

    for (const FrameRecord& rec : stream.records) {
        for (const DensePrediction& p : rec.predictions)
            validate_prediction(p, stream.num_classes, stream.d_q, rec.video_id, rec.frame_id);
        if (with_gt && !rec.ground_truth.has_value())
            throw SchemaError("ground truth missing for frame " + std::to_string(rec.frame_id) +
                              " in a stream carrying ground truth");
    }

    std::string buf;
    buf.append(kMagic, 4);
    put_u16(buf, kVersion);
    put_u16(buf, stream.num_classes);
    put_u16(buf, stream.d_q);
    put_u16(buf, with_gt ? 1 : 0);

    for (const FrameRecord& rec : stream.records) {
        std::string frame;
        put_u32(frame, rec.video_id);
        put_u32(frame, rec.frame_id);
        put_u32(frame, static_cast<uint32_t>(rec.predictions.size()));
        for (const DensePrediction& p : rec.predictions) {
            put_f32(frame, static_cast<float>(p.box.x1));
            put_f32(frame, static_cast<float>(p.box.y1));
            put_f32(frame, static_cast<float>(p.box.x2));
            put_f32(frame, static_cast<float>(p.box.y2));
            for (float s : p.class_scores) put_f32(frame, s);
            put_f32(frame, p.iou_score);
            for (float v : p.feature_cls) put_f32(frame, v);
            for (float v : p.feature_reg) put_f32(frame, v);
            put_u32(frame, p.position_id);
        }
        if (with_gt) {
            const auto& gts = *rec.ground_truth;
            put_u32(frame, static_cast<uint32_t>(gts.size()));
            for (const GroundTruthBox& g : gts) {
                put_u32(frame, g.frame_id);
                put_f32(frame, static_cast<float>(g.box.x1));
                put_f32(frame, static_cast<float>(g.box.y1));
                put_f32(frame, static_cast<float>(g.box.x2));
                put_f32(frame, static_cast<float>(g.box.y2));
                put_u32(frame, g.class_id);
            }
        }
        put_u32(buf, static_cast<uint32_t>(frame.size()));
        buf += frame;
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("data error: cannot open " + path + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("data error: write failed for " + path);
}

StreamData read_feature_stream(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("data error: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Reader r(reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size());
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad magic in " + path);
    const uint16_t version = r.u16();
    if (version != kVersion) throw FormatError("unsupported stream version " + std::to_string(version));

    StreamData stream;
    stream.num_classes = r.u16();
    stream.d_q = r.u16();
    const uint16_t flags = r.u16();
    const bool with_gt = (flags & 1) != 0;
    const size_t pred_bytes = prediction_bytes(stream.num_classes, stream.d_q);

    bool have_prev = false;
    std::pair<uint32_t, uint32_t> prev{0, 0};
    while (r.remaining() > 0) {
        const uint32_t frame_len = r.u32();
        if (frame_len > r.remaining()) throw FormatError("frame length exceeds remaining bytes");
        const size_t frame_end = r.remaining() - frame_len;

        FrameRecord rec;
        rec.video_id = r.u32();
        rec.frame_id = r.u32();
        const uint32_t n_pred = r.u32();

        // Payload arithmetic must agree with the declared dimensions before
        // any prediction is decoded.
        size_t expected = 12 + static_cast<size_t>(n_pred) * pred_bytes;
        if (!with_gt && frame_len != expected)
            throw SchemaError("frame payload of " + std::to_string(frame_len) +
                              " bytes does not match declared dimensions at frame " +
                              std::to_string(rec.frame_id));
        if (with_gt && frame_len < expected + 4)
            throw SchemaError("frame payload of " + std::to_string(frame_len) +
                              " bytes does not match declared dimensions at frame " +
                              std::to_string(rec.frame_id));

        rec.predictions.resize(n_pred);
        for (DensePrediction& p : rec.predictions) {
            p.box.x1 = r.f32();
            p.box.y1 = r.f32();
            p.box.x2 = r.f32();
            p.box.y2 = r.f32();
            p.class_scores.resize(stream.num_classes);
            for (float& s : p.class_scores) s = r.f32();
            p.iou_score = r.f32();
            p.feature_cls.resize(stream.d_q);
            for (float& v : p.feature_cls) v = r.f32();
            p.feature_reg.resize(stream.d_q);
            for (float& v : p.feature_reg) v = r.f32();
            p.position_id = r.u32();
            validate_prediction(p, stream.num_classes, stream.d_q, rec.video_id, rec.frame_id);
        }

        if (with_gt) {
            const uint32_t n_gt = r.u32();
            expected += 4 + static_cast<size_t>(n_gt) * 24;
            if (frame_len != expected)
                throw SchemaError("ground-truth payload does not match declared count at frame " +
                                  std::to_string(rec.frame_id));
            auto& gts = rec.ground_truth.emplace();
            gts.resize(n_gt);
            for (GroundTruthBox& g : gts) {
                g.frame_id = r.u32();
                g.box.x1 = r.f32();
                g.box.y1 = r.f32();
                g.box.x2 = r.f32();
                g.box.y2 = r.f32();
                g.class_id = r.u32();
                if (!g.box.valid())
                    throw DataError("data error: degenerate ground-truth box at frame " +
                                    std::to_string(rec.frame_id));
                if (g.class_id >= stream.num_classes)
                    throw DataError("data error: ground-truth class out of range at frame " +
                                    std::to_string(rec.frame_id));
            }
        }

        if (r.remaining() != frame_end) throw SchemaError("frame parser overran declared length");

        const std::pair<uint32_t, uint32_t> key{rec.video_id, rec.frame_id};
        if (have_prev && key <= prev)
            throw DataError("data error: frames not in strictly increasing (video_id, frame_id) order");
        prev = key;
        have_prev = true;
        stream.records.push_back(std::move(rec));
    }
    return stream;
}

}  // namespace vidagg
