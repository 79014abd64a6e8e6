#pragma once

// Frame geometry (bilinear resize, rotation, horizontal flip) and PNG I/O.
// A frame is a Tensor [H x W x C]; pixel values are [0,1] inside the
// pipeline and 0-255 at the file boundary.

#include <png.h>

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "tristream/features.hpp"  // DataError
#include "tristream/tensor.hpp"

namespace tristream {

// ---------------------------------------------------------------------------
// PNG (8-bit gray or RGB)
// ---------------------------------------------------------------------------

// values expected in [0,1]; quantized to 8 bits
inline void png_write_frame(const std::string& path, const Tensor& frame) {
    if (frame.ndim() != 3 || (frame.shape[2] != 1 && frame.shape[2] != 3))
        throw DataError("png_write: frame must be H x W x 1 or H x W x 3, got " +
                        shape_to_string(frame.shape));
    std::size_t H = frame.shape[0], W = frame.shape[1], C = frame.shape[2];
    std::vector<unsigned char> buf(H * W * C);
    for (std::size_t i = 0; i < buf.size(); ++i) {
        double v = frame.data[i];
        v = v < 0 ? 0 : (v > 1 ? 1 : v);
        buf[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(W);
    img.height = static_cast<png_uint_32>(H);
    img.format = C == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr))
        throw DataError(path + ": png write failed: " + img.message);
}

// returns raw 0-255 values as doubles, H x W x C
inline Tensor png_read_frame(const std::string& path) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        throw DataError(path + ": png read failed: " + img.message);
    std::size_t C = (img.format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1;
    img.format = C == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr))
        throw DataError(path + ": png read failed: " + img.message);
    Tensor frame({img.height, img.width, C});
    for (std::size_t i = 0; i < frame.size(); ++i) frame.data[i] = static_cast<double>(buf[i]);
    return frame;
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

inline Tensor bilinear_resize(const Tensor& frame, std::size_t out_h, std::size_t out_w) {
    if (frame.ndim() != 3) throw ShapeError("resize: frame must be H x W x C");
    std::size_t H = frame.shape[0], W = frame.shape[1], C = frame.shape[2];
    if (H == 0 || W == 0 || out_h == 0 || out_w == 0)
        throw DataError("resize: zero dimension (input " + shape_to_string(frame.shape) + ")");
    Tensor out({out_h, out_w, C});
    double sy = static_cast<double>(H) / out_h;
    double sx = static_cast<double>(W) / out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
        double fy = (oy + 0.5) * sy - 0.5;
        double y0f = std::floor(fy);
        double wy = fy - y0f;
        long y0 = static_cast<long>(y0f);
        long y1 = y0 + 1;
        y0 = std::max(0L, std::min<long>(y0, H - 1));
        y1 = std::max(0L, std::min<long>(y1, H - 1));
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            double fx = (ox + 0.5) * sx - 0.5;
            double x0f = std::floor(fx);
            double wx = fx - x0f;
            long x0 = static_cast<long>(x0f);
            long x1 = x0 + 1;
            x0 = std::max(0L, std::min<long>(x0, W - 1));
            x1 = std::max(0L, std::min<long>(x1, W - 1));
            for (std::size_t c = 0; c < C; ++c) {
                double v00 = frame.data[(y0 * W + x0) * C + c];
                double v01 = frame.data[(y0 * W + x1) * C + c];
                double v10 = frame.data[(y1 * W + x0) * C + c];
                double v11 = frame.data[(y1 * W + x1) * C + c];
                out.data[(oy * out_w + ox) * C + c] =
                    (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
            }
        }
    }
    return out;
}

inline Tensor flip_frame_horizontal(const Tensor& frame) {
    std::size_t H = frame.shape[0], W = frame.shape[1], C = frame.shape[2];
    Tensor out(frame.shape);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            for (std::size_t c = 0; c < C; ++c)
                out.data[(y * W + x) * C + c] = frame.data[(y * W + (W - 1 - x)) * C + c];
    return out;
}

// Clockwise planar rotation in screen coordinates (x right, y down):
//   R(theta) = [[cos, -sin], [sin, cos]]
// Used for both pixel resampling (via the inverse map) and keypoints.
struct Rotation2D {
    double c, s;
    explicit Rotation2D(double degrees_clockwise) {
        double rad = degrees_clockwise * M_PI / 180.0;
        c = std::cos(rad);
        s = std::sin(rad);
    }
    void apply(double& x, double& y, double cx, double cy) const {
        double dx = x - cx, dy = y - cy;
        x = cx + c * dx - s * dy;
        y = cy + s * dx + c * dy;
    }
    void apply_inverse(double& x, double& y, double cx, double cy) const {
        double dx = x - cx, dy = y - cy;
        x = cx + c * dx + s * dy;
        y = cy - s * dx + c * dy;
    }
};

// Rotation about the image center, bilinear resampling, out-of-frame = 0.
inline Tensor rotate_frame(const Tensor& frame, double degrees_clockwise) {
    std::size_t H = frame.shape[0], W = frame.shape[1], C = frame.shape[2];
    Rotation2D rot(degrees_clockwise);
    double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;
    Tensor out(frame.shape);
    for (std::size_t oy = 0; oy < H; ++oy) {
        for (std::size_t ox = 0; ox < W; ++ox) {
            double sx = static_cast<double>(ox), sy = static_cast<double>(oy);
            rot.apply_inverse(sx, sy, cx, cy);
            long x0 = static_cast<long>(std::floor(sx));
            long y0 = static_cast<long>(std::floor(sy));
            double wx = sx - x0, wy = sy - y0;
            for (std::size_t c = 0; c < C; ++c) {
                auto sample = [&](long y, long x) -> double {
                    if (y < 0 || y >= static_cast<long>(H) || x < 0 || x >= static_cast<long>(W))
                        return 0.0;
                    return frame.data[(y * W + x) * C + c];
                };
                out.data[(oy * W + ox) * C + c] =
                    (1 - wy) * ((1 - wx) * sample(y0, x0) + wx * sample(y0, x0 + 1)) +
                    wy * ((1 - wx) * sample(y0 + 1, x0) + wx * sample(y0 + 1, x0 + 1));
            }
        }
    }
    return out;
}

}  // namespace tristream
