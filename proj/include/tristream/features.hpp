#pragma once

// Per-frame feature plumbing: precomputed-feature files, keypoint sequence
// validation (258-wide pose/left-hand/right-hand layout), anchor-frame
// subsampling.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tristream/tensor.hpp"

namespace tristream {

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// 33 pose points x (x,y,z,visibility) + 21 left-hand + 21 right-hand x (x,y,z)
constexpr std::size_t kPosePoints = 33;
constexpr std::size_t kHandPoints = 21;
constexpr std::size_t kPoseBlock = kPosePoints * 4;          // 132
constexpr std::size_t kHandBlock = kHandPoints * 3;          // 63
constexpr std::size_t kKeypointWidth = kPoseBlock + 2 * kHandBlock;  // 258
constexpr std::size_t kLeftHandOffset = kPoseBlock;          // 132
constexpr std::size_t kRightHandOffset = kPoseBlock + kHandBlock;  // 195

constexpr std::size_t kDefaultAnchors[] = {0, 7, 15, 22, 29};

enum class FeatureSource { TinyCNN, Precomputed };

struct FrameFeatureSequence {
    Tensor features;  // T x D
    FeatureSource source = FeatureSource::Precomputed;

    std::size_t length() const { return features.shape[0]; }
    std::size_t width() const { return features.shape[1]; }
};

struct KeypointSequence {
    Tensor points;  // T x 258

    std::size_t length() const { return points.shape[0]; }
};

// ---------------------------------------------------------------------------
// Keypoint validation
// ---------------------------------------------------------------------------

inline KeypointSequence validate_keypoints(const Tensor& raw) {
    if (raw.ndim() != 2 || raw.shape[1] != kKeypointWidth)
        throw DataError("keypoints: layout must be T x " + std::to_string(kKeypointWidth) +
                        " (pose 33x4 + left hand 21x3 + right hand 21x3), got " +
                        shape_to_string(raw.shape));
    if (raw.shape[0] == 0) throw DataError("keypoints: empty sequence");
    for (std::size_t t = 0; t < raw.shape[0]; ++t) {
        const double* row = raw.data.data() + t * kKeypointWidth;
        for (std::size_t pnt = 0; pnt < kPosePoints; ++pnt) {
            double x = row[pnt * 4], y = row[pnt * 4 + 1], vis = row[pnt * 4 + 3];
            if (x < 0 || x > 1 || y < 0 || y > 1)
                throw DataError("keypoints: pose point " + std::to_string(pnt) + " at t=" +
                                std::to_string(t) + " has x/y outside [0,1]");
            if (vis < 0 || vis > 1)
                throw DataError("keypoints: pose point " + std::to_string(pnt) + " at t=" +
                                std::to_string(t) + " has visibility outside [0,1]");
        }
        for (std::size_t block : {kLeftHandOffset, kRightHandOffset}) {
            for (std::size_t pnt = 0; pnt < kHandPoints; ++pnt) {
                double x = row[block + pnt * 3], y = row[block + pnt * 3 + 1];
                if (x < 0 || x > 1 || y < 0 || y > 1)
                    throw DataError("keypoints: hand point " + std::to_string(pnt) +
                                    " (block offset " + std::to_string(block) + ") at t=" +
                                    std::to_string(t) + " has x/y outside [0,1]");
            }
        }
        // z is unbounded; only finiteness is required
        for (std::size_t j = 0; j < kKeypointWidth; ++j)
            if (!std::isfinite(row[j]))
                throw DataError("keypoints: non-finite value at t=" + std::to_string(t));
    }
    return KeypointSequence{raw};
}

// ---------------------------------------------------------------------------
// Anchor-frame subsampling
// ---------------------------------------------------------------------------

inline Tensor subsample_frames(const Tensor& seq, const std::vector<std::size_t>& indices) {
    if (seq.ndim() < 1 || seq.shape[0] == 0) throw ShapeError("subsample_frames: empty sequence");
    std::size_t T = seq.shape[0];
    std::size_t row_sz = seq.size() / T;
    std::vector<std::size_t> out_shape = seq.shape;
    out_shape[0] = indices.size();
    Tensor out(out_shape);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= T)
            throw ShapeError("subsample_frames: index " + std::to_string(indices[i]) +
                             " out of range for length " + std::to_string(T));
        std::copy(seq.data.begin() + indices[i] * row_sz,
                  seq.data.begin() + (indices[i] + 1) * row_sz,
                  out.data.begin() + i * row_sz);
    }
    return out;
}

inline std::vector<std::size_t> default_anchor_indices() {
    return {std::begin(kDefaultAnchors), std::end(kDefaultAnchors)};
}

// ---------------------------------------------------------------------------
// Feature files:  TRISTREAM-FEAT v1 T=<int> D=<int>
//   text mode: T lines of D decimal floats
//   binary mode: header line, then T*D little-endian 64-bit floats
// ---------------------------------------------------------------------------

namespace detail {

inline void parse_feat_header(const std::string& line, const char* magic, std::size_t& T,
                              std::size_t& D, bool want_d, const std::string& path) {
    std::istringstream is(line);
    std::string tag, ver, tkv, dkv;
    is >> tag >> ver >> tkv;
    if (want_d) is >> dkv;
    if (tag != magic || ver != "v1" || tkv.rfind("T=", 0) != 0 ||
        (want_d && dkv.rfind("D=", 0) != 0))
        throw DataError(path + ": malformed header '" + line + "'");
    long t = std::stol(tkv.substr(2));
    if (t <= 0) throw DataError(path + ": header declares non-positive T");
    T = static_cast<std::size_t>(t);
    if (want_d) {
        long d = std::stol(dkv.substr(2));
        if (d <= 0) throw DataError(path + ": header declares non-positive D");
        D = static_cast<std::size_t>(d);
    }
}

inline Tensor read_rows(std::istream& in, std::size_t T, std::size_t width, bool binary,
                        const std::string& path) {
    Tensor out({T, width});
    if (binary) {
        in.read(reinterpret_cast<char*>(out.data.data()),
                static_cast<std::streamsize>(T * width * sizeof(double)));
        if (static_cast<std::size_t>(in.gcount()) != T * width * sizeof(double))
            throw DataError(path + ": expected " + std::to_string(T) + " rows of " +
                            std::to_string(width) + " values, file truncated");
    } else {
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < width; ++j)
                if (!(in >> out.data[t * width + j]))
                    throw DataError(path + ": expected " + std::to_string(T) + " rows of " +
                                    std::to_string(width) + " values, found only " +
                                    std::to_string(t) + " complete rows");
        double extra;
        if (in >> extra)
            throw DataError(path + ": trailing values beyond declared " + std::to_string(T) +
                            " rows");
    }
    if (!out.all_finite()) throw DataError(path + ": non-finite values");
    return out;
}

inline void write_rows(std::ostream& out, const Tensor& rows, bool binary) {
    if (binary) {
        out.write(reinterpret_cast<const char*>(rows.data.data()),
                  static_cast<std::streamsize>(rows.size() * sizeof(double)));
    } else {
        char buf[40];
        std::size_t width = rows.shape[1];
        for (std::size_t t = 0; t < rows.shape[0]; ++t) {
            for (std::size_t j = 0; j < width; ++j) {
                std::snprintf(buf, sizeof(buf), "%.17g", rows.data[t * width + j]);
                out << (j ? " " : "") << buf;
            }
            out << "\n";
        }
    }
}

}  // namespace detail

inline void save_features(const std::string& path, const FrameFeatureSequence& seq,
                          bool binary = false) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path + ": cannot open for writing");
    out << "TRISTREAM-FEAT v1 T=" << seq.length() << " D=" << seq.width()
        << (binary ? " bin" : "") << "\n";
    detail::write_rows(out, seq.features, binary);
}

inline FrameFeatureSequence load_precomputed_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path + ": cannot open");
    std::string header;
    std::getline(in, header);
    bool binary = header.size() >= 4 && header.substr(header.size() - 4) == " bin";
    if (binary) header = header.substr(0, header.size() - 4);
    std::size_t T = 0, D = 0;
    detail::parse_feat_header(header, "TRISTREAM-FEAT", T, D, true, path);
    FrameFeatureSequence seq;
    seq.features = detail::read_rows(in, T, D, binary, path);
    seq.source = FeatureSource::Precomputed;
    return seq;
}

// Keypoint files:  TRISTREAM-KP v1 T=<int>, then T rows of 258 floats.

inline void save_keypoints(const std::string& path, const KeypointSequence& seq,
                           bool binary = false) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path + ": cannot open for writing");
    out << "TRISTREAM-KP v1 T=" << seq.length() << (binary ? " bin" : "") << "\n";
    detail::write_rows(out, seq.points, binary);
}

inline KeypointSequence load_keypoints(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path + ": cannot open");
    std::string header;
    std::getline(in, header);
    bool binary = header.size() >= 4 && header.substr(header.size() - 4) == " bin";
    if (binary) header = header.substr(0, header.size() - 4);
    std::size_t T = 0, D = 0;
    detail::parse_feat_header(header, "TRISTREAM-KP", T, D, false, path);
    Tensor raw = detail::read_rows(in, T, kKeypointWidth, binary, path);
    return validate_keypoints(raw);
}

}  // namespace tristream
