#pragma once

// Dataset handling: gesture samples, preprocessing, augmentation (flip /
// rotation / brightness), stratified splitting, the synthetic gesture
// generator, and the on-disk dataset layout.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tristream/features.hpp"
#include "tristream/image.hpp"
#include "tristream/rng.hpp"
#include "tristream/tensor.hpp"

namespace tristream {

enum class Provenance { Original, Flipped, Rotated, Brightened, Synthetic };

inline const char* provenance_name(Provenance p) {
    switch (p) {
        case Provenance::Original: return "original";
        case Provenance::Flipped: return "flipped";
        case Provenance::Rotated: return "rotated";
        case Provenance::Brightened: return "brightened";
        case Provenance::Synthetic: return "synthetic";
    }
    return "?";
}

inline std::vector<std::string> gesture_class_names() {
    return {"Left", "Right", "Up",    "Down",      "Hi",
            "Bye",  "Open",  "Close", "Thumbs up", "Thumbs down"};
}

struct GestureSample {
    Tensor frames;  // T x H x W x C, values in [0,1]
    std::optional<Tensor> keypoints;  // T x 258
    int label = 0;
    std::string subject_id;
    std::string sample_id;
    std::string root_id;  // lineage: id of the original this was derived from
    Provenance provenance = Provenance::Original;
};

struct Dataset {
    std::vector<GestureSample> samples;
    std::vector<std::string> class_names;
};

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

// raw_frames: per-frame H x W x C tensors with integer 0-255 values.
inline Tensor resize_normalize(const std::vector<Tensor>& raw_frames, std::size_t out_h = 128,
                               std::size_t out_w = 128) {
    if (raw_frames.empty()) throw DataError("resize_normalize: empty frame list");
    std::size_t C = raw_frames.front().shape[2];
    Tensor out({raw_frames.size(), out_h, out_w, C});
    std::size_t frame_sz = out_h * out_w * C;
    for (std::size_t t = 0; t < raw_frames.size(); ++t) {
        const Tensor& rf = raw_frames[t];
        if (rf.ndim() != 3 || rf.shape[2] != C)
            throw DataError("resize_normalize: inconsistent frame shapes");
        if (rf.shape[0] == 0 || rf.shape[1] == 0)
            throw DataError("resize_normalize: zero dimension frame");
        Tensor resized = bilinear_resize(rf, out_h, out_w);
        for (std::size_t i = 0; i < frame_sz; ++i)
            out.data[t * frame_sz + i] = resized.data[i] / 255.0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Keypoint-aware augmentation
// ---------------------------------------------------------------------------

// Mediapipe 33-point pose left/right pairs (nose 0 is central).
inline const std::vector<std::pair<std::size_t, std::size_t>>& pose_mirror_pairs() {
    static const std::vector<std::pair<std::size_t, std::size_t>> pairs = {
        {1, 4},   {2, 5},   {3, 6},   {7, 8},   {9, 10},  {11, 12}, {13, 14}, {15, 16},
        {17, 18}, {19, 20}, {21, 22}, {23, 24}, {25, 26}, {27, 28}, {29, 30}, {31, 32}};
    return pairs;
}

inline void flip_keypoint_row(double* row) {
    // mirror x in every block
    for (std::size_t p = 0; p < kPosePoints; ++p) row[p * 4] = 1.0 - row[p * 4];
    for (std::size_t block : {kLeftHandOffset, kRightHandOffset})
        for (std::size_t p = 0; p < kHandPoints; ++p)
            row[block + p * 3] = 1.0 - row[block + p * 3];
    // swap pose left/right pairs
    for (auto [a, b] : pose_mirror_pairs())
        for (std::size_t f = 0; f < 4; ++f) std::swap(row[a * 4 + f], row[b * 4 + f]);
    // swap the hand blocks
    for (std::size_t j = 0; j < kHandBlock; ++j)
        std::swap(row[kLeftHandOffset + j], row[kRightHandOffset + j]);
}

inline GestureSample horizontal_flip(const GestureSample& s) {
    GestureSample out = s;
    std::size_t T = s.frames.shape[0];
    std::size_t frame_sz = s.frames.size() / T;
    for (std::size_t t = 0; t < T; ++t) {
        Tensor frame({s.frames.shape[1], s.frames.shape[2], s.frames.shape[3]},
                     std::vector<double>(s.frames.data.begin() + t * frame_sz,
                                         s.frames.data.begin() + (t + 1) * frame_sz));
        Tensor flipped = flip_frame_horizontal(frame);
        std::copy(flipped.data.begin(), flipped.data.end(), out.frames.data.begin() + t * frame_sz);
    }
    if (out.keypoints)
        for (std::size_t t = 0; t < out.keypoints->shape[0]; ++t)
            flip_keypoint_row(out.keypoints->data.data() + t * kKeypointWidth);
    out.provenance = Provenance::Flipped;
    out.sample_id = s.sample_id + "_flip";
    return out;
}

inline void rotate_keypoint_row(double* row, const Rotation2D& rot) {
    auto rot_xy = [&](double& x, double& y) {
        rot.apply(x, y, 0.5, 0.5);
        x = std::clamp(x, 0.0, 1.0);
        y = std::clamp(y, 0.0, 1.0);
    };
    for (std::size_t p = 0; p < kPosePoints; ++p) rot_xy(row[p * 4], row[p * 4 + 1]);
    for (std::size_t block : {kLeftHandOffset, kRightHandOffset})
        for (std::size_t p = 0; p < kHandPoints; ++p)
            rot_xy(row[block + p * 3], row[block + p * 3 + 1]);
}

inline GestureSample rotate10(const GestureSample& s, double degrees_clockwise = 10.0) {
    GestureSample out = s;
    Rotation2D rot(degrees_clockwise);
    std::size_t T = s.frames.shape[0];
    std::size_t frame_sz = s.frames.size() / T;
    for (std::size_t t = 0; t < T; ++t) {
        Tensor frame({s.frames.shape[1], s.frames.shape[2], s.frames.shape[3]},
                     std::vector<double>(s.frames.data.begin() + t * frame_sz,
                                         s.frames.data.begin() + (t + 1) * frame_sz));
        Tensor rotated = rotate_frame(frame, degrees_clockwise);
        std::copy(rotated.data.begin(), rotated.data.end(), out.frames.data.begin() + t * frame_sz);
    }
    if (out.keypoints)
        for (std::size_t t = 0; t < out.keypoints->shape[0]; ++t)
            rotate_keypoint_row(out.keypoints->data.data() + t * kKeypointWidth, rot);
    out.provenance = Provenance::Rotated;
    out.sample_id = s.sample_id + "_rot";
    return out;
}

inline GestureSample adjust_brightness(const GestureSample& s, double factor) {
    if (factor < 0.5 || factor > 1.5)
        throw DataError("adjust_brightness: factor " + std::to_string(factor) +
                        " outside configured range [0.5, 1.5]");
    GestureSample out = s;
    for (double& v : out.frames.data) v = std::clamp(v * factor, 0.0, 1.0);
    out.provenance = Provenance::Brightened;
    out.sample_id = s.sample_id + "_bright";
    return out;
}

// ---------------------------------------------------------------------------
// Splitting (stratified, lineage-aware, seeded)
// ---------------------------------------------------------------------------

struct SplitSpec {
    double train = 0.60, val = 0.20, test = 0.20;
    std::uint64_t seed = 0;
};

struct SplitItem {
    int label = 0;
    std::string root_id;
};

struct SplitResult {
    std::vector<std::size_t> train, val, test;
};

// 80/20 test split, then 75/25 of the 80 for validation, stratified per
// class. Samples sharing a root lineage always land in the same split.
inline SplitResult split_dataset(const std::vector<SplitItem>& items, int num_classes,
                                 const SplitSpec& spec) {
    if (std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-9)
        throw DataError("split: fractions must sum to 1");
    // lineage groups per class, in first-seen order
    std::map<int, std::vector<std::string>> class_groups;
    std::map<std::string, std::vector<std::size_t>> group_members;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& it = items[i];
        if (it.label < 0 || it.label >= num_classes)
            throw DataError("split: label " + std::to_string(it.label) + " out of range");
        auto& members = group_members[it.root_id];
        if (members.empty()) class_groups[it.label].push_back(it.root_id);
        members.push_back(i);
    }
    SplitResult result;
    for (int c = 0; c < num_classes; ++c) {
        auto found = class_groups.find(c);
        std::size_t n = found == class_groups.end() ? 0 : found->second.size();
        std::size_t train80 = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));
        std::size_t n_test = n - train80;
        std::size_t n_train =
            static_cast<std::size_t>(std::llround(0.75 * static_cast<double>(train80)));
        std::size_t n_val = train80 - n_train;
        if (n_train == 0 || n_val == 0 || n_test == 0)
            throw DataError("split: class " + std::to_string(c) + " has only " +
                            std::to_string(n) + " lineage groups, too few for a 60/20/20 split");
        std::vector<std::string> groups = found->second;
        Rng rng = substream(spec.seed, "split", static_cast<std::uint64_t>(c));
        shuffle(groups, rng);
        auto emit = [&](std::vector<std::size_t>& dst, std::size_t lo, std::size_t hi) {
            for (std::size_t g = lo; g < hi; ++g)
                for (std::size_t idx : group_members[groups[g]]) dst.push_back(idx);
        };
        emit(result.train, 0, n_train);
        emit(result.val, n_train, n_train + n_val);
        emit(result.test, n_train + n_val, n);
    }
    std::sort(result.train.begin(), result.train.end());
    std::sort(result.val.begin(), result.val.end());
    std::sort(result.test.begin(), result.test.end());
    return result;
}

// ---------------------------------------------------------------------------
// Augmentation pipelines
// ---------------------------------------------------------------------------

struct AugmentConfig {
    bool flip = false;        // applied to the whole set, before splitting
    bool rotate = false;      // training split only
    bool brightness = false;  // training split only
    std::uint64_t seed = 0;
};

// Pre-split flip: appends one mirrored derivative per existing sample.
inline void apply_flip_augmentation(std::vector<GestureSample>& samples) {
    std::size_t n = samples.size();
    samples.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) samples.push_back(horizontal_flip(samples[i]));
}

// Post-split, training set only: each sample yields original + rotated +
// brightened (for the enabled transforms). Brightness factor is drawn per
// derived sample from a counter-based substream.
inline std::vector<GestureSample> augment_training_set(const std::vector<GestureSample>& train,
                                                       const AugmentConfig& cfg) {
    std::vector<GestureSample> out;
    out.reserve(train.size() * 3);
    for (std::size_t i = 0; i < train.size(); ++i) {
        out.push_back(train[i]);
        if (cfg.rotate) out.push_back(rotate10(train[i]));
        if (cfg.brightness) {
            Rng rng = substream(cfg.seed, "augment.brightness", i);
            out.push_back(adjust_brightness(train[i], rng.uniform(0.7, 1.3)));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic gesture generator
// ---------------------------------------------------------------------------

struct SynthConfig {
    int num_classes = 10;
    int per_class = 20;
    std::size_t T = 30;
    std::size_t image_size = 64;
    std::uint64_t seed = 0;
};

namespace detail {

struct BlobState {
    double cx, cy;      // blob center, normalized
    double radius;
    double spike_dx, spike_dy;  // spike offset from center (0 if none)
    double spike_intensity;
};

// Class-specific trajectory. Classes are built so that per-frame pixel
// marginals overlap heavily between paired classes while the sequence
// (and the keypoint trail) separates them.
inline BlobState blob_at(int cls, double u /*t/(T-1)*/, double jx, double jy, double phase) {
    BlobState b{0.5, 0.5, 0.10, 0.0, 0.0, 0.0};
    switch (cls) {
        case 0:  // Left: right -> left
            b.cx = 0.75 - 0.5 * u;
            b.cy = 0.5;
            break;
        case 1:  // Right: left -> right
            b.cx = 0.25 + 0.5 * u;
            b.cy = 0.5;
            break;
        case 2:  // Up: down -> up
            b.cx = 0.5;
            b.cy = 0.75 - 0.5 * u;
            break;
        case 3:  // Down
            b.cx = 0.5;
            b.cy = 0.25 + 0.5 * u;
            break;
        case 4:  // Hi: lateral oscillation near the top
            b.cx = 0.5 + 0.22 * std::sin(2.0 * M_PI * (2.0 * u) + phase);
            b.cy = 0.30;
            break;
        case 5:  // Bye: oscillation in the same band, different rhythm
            b.cx = 0.5 + 0.22 * std::sin(2.0 * M_PI * (3.5 * u) + phase + 1.3);
            b.cy = 0.30;
            break;
        case 6:  // Open: radius grows
            b.radius = 0.05 + 0.13 * u;
            break;
        case 7:  // Close: radius shrinks
            b.radius = 0.18 - 0.13 * u;
            break;
        case 8:  // Thumbs up: static blob, faint spike extending upward
            b.cy = 0.55;
            b.spike_dy = -(0.10 + 0.14 * u);
            b.spike_intensity = 0.35;
            break;
        case 9:  // Thumbs down
            b.cy = 0.45;
            b.spike_dy = (0.10 + 0.14 * u);
            b.spike_intensity = 0.35;
            break;
        default:
            throw DataError("synth: class " + std::to_string(cls) + " has no trajectory");
    }
    b.cx = std::clamp(b.cx + jx, 0.05, 0.95);
    b.cy = std::clamp(b.cy + jy, 0.05, 0.95);
    return b;
}

inline void render_blob(Tensor& frame, const BlobState& b, double noise_amp, Rng& noise_rng) {
    std::size_t H = frame.shape[0], W = frame.shape[1], C = frame.shape[2];
    double sigma = b.radius;
    double spike_sigma = 0.035;
    for (std::size_t y = 0; y < H; ++y) {
        double ny = (y + 0.5) / H;
        for (std::size_t x = 0; x < W; ++x) {
            double nx = (x + 0.5) / W;
            double d2 = (nx - b.cx) * (nx - b.cx) + (ny - b.cy) * (ny - b.cy);
            double v = 0.9 * std::exp(-d2 / (2.0 * sigma * sigma));
            if (b.spike_intensity > 0) {
                double sx = b.cx + b.spike_dx, sy = b.cy + b.spike_dy;
                double sd2 = (nx - sx) * (nx - sx) + (ny - sy) * (ny - sy);
                v += b.spike_intensity * std::exp(-sd2 / (2.0 * spike_sigma * spike_sigma));
            }
            v += noise_amp * (noise_rng.next_double() - 0.5);
            double pv = std::clamp(v, 0.0, 1.0);
            for (std::size_t c = 0; c < C; ++c) frame.data[(y * W + x) * C + c] = pv;
        }
    }
}

// 21 fixed unit offsets forming a small hand around the centroid.
inline const std::vector<std::pair<double, double>>& hand_offsets() {
    static std::vector<std::pair<double, double>> offs = [] {
        std::vector<std::pair<double, double>> v;
        v.emplace_back(0.0, 0.0);  // wrist/centroid
        for (int f = 0; f < 5; ++f)
            for (int j = 0; j < 4; ++j) {
                double ang = -0.9 + 0.45 * f;
                double len = 0.25 + 0.25 * j;
                v.emplace_back(len * std::sin(ang), -len * std::cos(ang));
            }
        return v;
    }();
    return offs;
}

// Snap to the 2^-24 grid: both k/2^24 and (2^24-k)/2^24 are exactly
// representable, so mirroring x as 1-x stays a bit-exact involution.
inline double snap_unit(double v) {
    return std::round(v * 16777216.0) / 16777216.0;
}

inline void fill_keypoint_row(double* row, const BlobState& b) {
    // pose block: fixed schematic upper body, fully visible
    static const double pose_x[kPosePoints] = {
        0.50, 0.47, 0.46, 0.45, 0.53, 0.54, 0.55, 0.42, 0.58, 0.47, 0.53,
        0.38, 0.62, 0.33, 0.67, 0.30, 0.70, 0.28, 0.72, 0.29, 0.71, 0.30,
        0.70, 0.42, 0.58, 0.41, 0.59, 0.40, 0.60, 0.39, 0.61, 0.41, 0.59};
    static const double pose_y[kPosePoints] = {
        0.20, 0.18, 0.18, 0.18, 0.18, 0.18, 0.18, 0.20, 0.20, 0.23, 0.23,
        0.33, 0.33, 0.45, 0.45, 0.56, 0.56, 0.60, 0.60, 0.59, 0.59, 0.58,
        0.58, 0.62, 0.62, 0.78, 0.78, 0.92, 0.92, 0.94, 0.94, 0.96, 0.96};
    for (std::size_t p = 0; p < kPosePoints; ++p) {
        row[p * 4] = snap_unit(pose_x[p]);
        row[p * 4 + 1] = pose_y[p];
        row[p * 4 + 2] = -0.1;
        row[p * 4 + 3] = 1.0;
    }
    // left hand: resting position
    const auto& offs = hand_offsets();
    for (std::size_t p = 0; p < kHandPoints; ++p) {
        row[kLeftHandOffset + p * 3] = snap_unit(std::clamp(0.30 + 0.05 * offs[p].first, 0.0, 1.0));
        row[kLeftHandOffset + p * 3 + 1] = std::clamp(0.80 + 0.05 * offs[p].second, 0.0, 1.0);
        row[kLeftHandOffset + p * 3 + 2] = 0.0;
    }
    // right hand: follows the blob; the thumb tip (point 4) carries the spike
    double scale = b.radius;
    for (std::size_t p = 0; p < kHandPoints; ++p) {
        double dx = scale * offs[p].first, dy = scale * offs[p].second;
        if (p == 4 && b.spike_intensity > 0) {
            dx = b.spike_dx;
            dy = b.spike_dy;
        }
        row[kRightHandOffset + p * 3] = snap_unit(std::clamp(b.cx + dx, 0.0, 1.0));
        row[kRightHandOffset + p * 3 + 1] = std::clamp(b.cy + dy, 0.0, 1.0);
        row[kRightHandOffset + p * 3 + 2] = 0.0;
    }
}

}  // namespace detail

inline Dataset synthesize_gestures(const SynthConfig& cfg) {
    if (cfg.per_class < 1) throw DataError("synth: per_class must be >= 1");
    if (cfg.num_classes < 2 || cfg.num_classes > 10)
        throw DataError("synth: class count must be in [2, 10]");
    Dataset ds;
    ds.class_names = gesture_class_names();
    ds.class_names.resize(cfg.num_classes);
    std::size_t S = cfg.image_size;
    for (int c = 0; c < cfg.num_classes; ++c) {
        for (int n = 0; n < cfg.per_class; ++n) {
            std::uint64_t idx = static_cast<std::uint64_t>(c) * 100000ULL + n;
            Rng rng = substream(cfg.seed, "synth", idx);
            double jx = rng.uniform(-0.08, 0.08);
            double jy = rng.uniform(-0.08, 0.08);
            double phase = rng.uniform(0.0, 0.6);
            GestureSample s;
            s.frames = Tensor({cfg.T, S, S, 1});
            s.keypoints = Tensor({cfg.T, kKeypointWidth});
            s.label = c;
            s.subject_id = "synth" + std::to_string(n % 5);
            char id[64];
            std::snprintf(id, sizeof(id), "c%02d_s%04d", c, n);
            s.sample_id = id;
            s.root_id = id;
            s.provenance = Provenance::Synthetic;
            std::size_t frame_sz = S * S;
            for (std::size_t t = 0; t < cfg.T; ++t) {
                double u = cfg.T > 1 ? static_cast<double>(t) / (cfg.T - 1) : 0.0;
                detail::BlobState b = detail::blob_at(c, u, jx, jy, phase);
                Tensor frame({S, S, 1});
                detail::render_blob(frame, b, 0.06, rng);
                std::copy(frame.data.begin(), frame.data.end(),
                          s.frames.data.begin() + t * frame_sz);
                detail::fill_keypoint_row(s.keypoints->data.data() + t * kKeypointWidth, b);
            }
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// On-disk layout:  <root>/<Class_name>/<sample_id>/frame_%04d.png
//                  + optional keypoints.kp, manifest.tsv (path label subject)
// ---------------------------------------------------------------------------

inline std::string class_dir_name(const std::string& class_name) {
    std::string s = class_name;
    std::replace(s.begin(), s.end(), ' ', '_');
    return s;
}

inline void save_dataset(const std::string& root, const Dataset& ds) {
    namespace fs = std::filesystem;
    fs::create_directories(root);
    std::ofstream manifest(root + "/manifest.tsv");
    if (!manifest) throw DataError(root + ": cannot write manifest");
    manifest << "path\tlabel\tsubject\n";
    for (const auto& s : ds.samples) {
        std::string cls = class_dir_name(ds.class_names.at(s.label));
        std::string rel = cls + "/" + s.sample_id;
        fs::create_directories(root + "/" + rel);
        std::size_t T = s.frames.shape[0];
        std::size_t frame_sz = s.frames.size() / T;
        for (std::size_t t = 0; t < T; ++t) {
            Tensor frame({s.frames.shape[1], s.frames.shape[2], s.frames.shape[3]},
                         std::vector<double>(s.frames.data.begin() + t * frame_sz,
                                             s.frames.data.begin() + (t + 1) * frame_sz));
            char name[32];
            std::snprintf(name, sizeof(name), "frame_%04zu.png", t);
            png_write_frame(root + "/" + rel + "/" + name, frame);
        }
        if (s.keypoints)
            save_keypoints(root + "/" + rel + "/keypoints.kp", KeypointSequence{*s.keypoints});
        manifest << rel << "\t" << ds.class_names.at(s.label) << "\t" << s.subject_id << "\n";
    }
}

// Loads the manifest layout, resizing pixels to image_size and normalizing
// to [0,1].
inline Dataset load_dataset(const std::string& root, std::size_t image_size) {
    namespace fs = std::filesystem;
    std::ifstream manifest(root + "/manifest.tsv");
    if (!manifest) throw DataError(root + "/manifest.tsv: cannot open");
    Dataset ds;
    ds.class_names = gesture_class_names();
    std::string line;
    std::getline(manifest, line);  // header
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        std::size_t t1 = line.find('\t');
        std::size_t t2 = line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos)
            throw DataError(root + "/manifest.tsv: malformed row '" + line + "'");
        std::string rel = line.substr(0, t1);
        std::string label_name = line.substr(t1 + 1, t2 - t1 - 1);
        std::string subject = line.substr(t2 + 1);
        auto it = std::find(ds.class_names.begin(), ds.class_names.end(), label_name);
        if (it == ds.class_names.end())
            throw DataError(root + "/manifest.tsv: unknown class '" + label_name + "'");
        GestureSample s;
        s.label = static_cast<int>(it - ds.class_names.begin());
        s.subject_id = subject;
        std::size_t slash = rel.rfind('/');
        s.sample_id = slash == std::string::npos ? rel : rel.substr(slash + 1);
        s.root_id = s.sample_id;
        std::vector<Tensor> raw;
        for (std::size_t t = 0;; ++t) {
            char name[32];
            std::snprintf(name, sizeof(name), "frame_%04zu.png", t);
            std::string path = root + "/" + rel + "/" + name;
            if (!fs::exists(path)) break;
            raw.push_back(png_read_frame(path));
        }
        if (raw.empty()) throw DataError(root + "/" + rel + ": no frames found");
        s.frames = resize_normalize(raw, image_size, image_size);
        std::string kp_path = root + "/" + rel + "/keypoints.kp";
        if (fs::exists(kp_path)) s.keypoints = load_keypoints(kp_path).points;
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.empty()) throw DataError(root + ": dataset is empty");
    return ds;
}

}  // namespace tristream
