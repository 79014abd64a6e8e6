#pragma once

// Small trainable per-frame CNN (time-distributed feature backbone) and the
// dense layer shared with the classifier head. Convolutions are 3x3 valid,
// each stage followed by relu and 2x2 max-pool.

#include <cstddef>
#include <string>
#include <vector>

#include "tristream/recurrent.hpp"
#include "tristream/tensor.hpp"

namespace tristream {

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

struct DenseParams {
    Tensor W;  // out x in
    Tensor b;  // out
    bool relu_output = false;

    static DenseParams create(std::size_t in, std::size_t out, bool relu_out = false) {
        DenseParams p;
        p.W = Tensor::zeros({out, in});
        p.b = Tensor::zeros({out});
        p.relu_output = relu_out;
        return p;
    }

    std::size_t in_width() const { return W.shape[1]; }
    std::size_t out_width() const { return W.shape[0]; }

    void init(Rng& rng) { glorot_init(W, rng); }

    template <typename F>
    void visit(F&& f) {
        f("W", W);
        f("b", b);
    }

    DenseParams zeros_like() const { return create(in_width(), out_width(), relu_output); }
};

struct DenseCache {
    Tensor x, y;  // input and post-activation output
};

inline Tensor dense_forward(const DenseParams& p, const Tensor& x, DenseCache* cache = nullptr) {
    if (x.size() != p.in_width())
        throw ShapeError("dense_forward: input width " + std::to_string(x.size()) +
                         " vs layer " + std::to_string(p.in_width()));
    Tensor y = add(matvec(p.W, x), p.b);
    if (p.relu_output) y = relu(y);
    if (cache) {
        cache->x = x;
        cache->y = y;
    }
    return y;
}

inline Tensor dense_backward(const DenseParams& p, const DenseCache& c, const Tensor& grad_y,
                             DenseParams& grads) {
    Tensor g = grad_y;
    if (p.relu_output)
        for (std::size_t i = 0; i < g.size(); ++i)
            if (c.y.data[i] <= 0.0) g.data[i] = 0.0;
    accumulate_outer(grads.W, g, c.x);
    axpy(1.0, g, grads.b);
    return matvec_transposed(p.W, g);
}

// ---------------------------------------------------------------------------
// Convolution / pooling primitives (HWC layout; weights ky,kx,ic,oc)
// ---------------------------------------------------------------------------

inline Tensor conv3x3_valid(const Tensor& in, const Tensor& w, const Tensor& b) {
    std::size_t H = in.shape[0], W = in.shape[1], C = in.shape[2];
    std::size_t OC = w.shape[3];
    if (w.shape[0] != 3 || w.shape[1] != 3 || w.shape[2] != C)
        throw ShapeError("conv3x3: weight shape " + shape_to_string(w.shape) +
                         " does not match input " + shape_to_string(in.shape));
    if (H < 3 || W < 3) throw ShapeError("conv3x3: spatial size too small " + shape_to_string(in.shape));
    std::size_t OH = H - 2, OW = W - 2;
    Tensor out({OH, OW, OC});
    const double* I = in.data.data();
    const double* Wd = w.data.data();
    double* O = out.data.data();
    for (std::size_t y = 0; y < OH; ++y) {
        for (std::size_t x = 0; x < OW; ++x) {
            double* acc = O + (y * OW + x) * OC;
            for (std::size_t oc = 0; oc < OC; ++oc) acc[oc] = b.data[oc];
            for (std::size_t ky = 0; ky < 3; ++ky) {
                const double* Irow = I + ((y + ky) * W + x) * C;
                for (std::size_t kx = 0; kx < 3; ++kx) {
                    for (std::size_t ic = 0; ic < C; ++ic) {
                        double v = Irow[kx * C + ic];
                        const double* wp = Wd + (((ky * 3 + kx) * C) + ic) * OC;
                        for (std::size_t oc = 0; oc < OC; ++oc) acc[oc] += v * wp[oc];
                    }
                }
            }
        }
    }
    return out;
}

// Accumulates into grad_in / grad_w / grad_b.
inline void conv3x3_valid_backward(const Tensor& in, const Tensor& w, const Tensor& grad_out,
                                   Tensor& grad_in, Tensor& grad_w, Tensor& grad_b) {
    std::size_t H = in.shape[0], W = in.shape[1], C = in.shape[2];
    std::size_t OC = w.shape[3];
    std::size_t OH = H - 2, OW = W - 2;
    const double* I = in.data.data();
    const double* Wd = w.data.data();
    const double* GO = grad_out.data.data();
    double* GI = grad_in.data.data();
    double* GW = grad_w.data.data();
    for (std::size_t y = 0; y < OH; ++y) {
        for (std::size_t x = 0; x < OW; ++x) {
            const double* go = GO + (y * OW + x) * OC;
            for (std::size_t oc = 0; oc < OC; ++oc) grad_b.data[oc] += go[oc];
            for (std::size_t ky = 0; ky < 3; ++ky) {
                const double* Irow = I + ((y + ky) * W + x) * C;
                double* GIrow = GI + ((y + ky) * W + x) * C;
                for (std::size_t kx = 0; kx < 3; ++kx) {
                    for (std::size_t ic = 0; ic < C; ++ic) {
                        double v = Irow[kx * C + ic];
                        const double* wp = Wd + (((ky * 3 + kx) * C) + ic) * OC;
                        double* gwp = GW + (((ky * 3 + kx) * C) + ic) * OC;
                        double gi = 0.0;
                        for (std::size_t oc = 0; oc < OC; ++oc) {
                            gi += go[oc] * wp[oc];
                            gwp[oc] += go[oc] * v;
                        }
                        GIrow[kx * C + ic] += gi;
                    }
                }
            }
        }
    }
}

// 2x2 max-pool, stride 2, floor division of the spatial size.
// argmax stores the flat index of the winning element (first in scan order).
inline Tensor maxpool2(const Tensor& in, std::vector<std::size_t>* argmax = nullptr) {
    std::size_t H = in.shape[0], W = in.shape[1], C = in.shape[2];
    std::size_t OH = H / 2, OW = W / 2;
    Tensor out({OH, OW, C});
    if (argmax) argmax->assign(OH * OW * C, 0);
    for (std::size_t y = 0; y < OH; ++y) {
        for (std::size_t x = 0; x < OW; ++x) {
            for (std::size_t c = 0; c < C; ++c) {
                double best = -1e300;
                std::size_t best_idx = 0;
                for (std::size_t dy = 0; dy < 2; ++dy) {
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        std::size_t idx = ((2 * y + dy) * W + (2 * x + dx)) * C + c;
                        if (in.data[idx] > best) {
                            best = in.data[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.data[(y * OW + x) * C + c] = best;
                if (argmax) (*argmax)[(y * OW + x) * C + c] = best_idx;
            }
        }
    }
    return out;
}

inline void maxpool2_backward(const std::vector<std::size_t>& argmax, const Tensor& grad_out,
                              Tensor& grad_in) {
    for (std::size_t i = 0; i < grad_out.size(); ++i) grad_in.data[argmax[i]] += grad_out.data[i];
}

// ---------------------------------------------------------------------------
// TinyCNN backbone
// ---------------------------------------------------------------------------

struct TinyCNNParams {
    std::size_t in_h = 0, in_w = 0, in_c = 0, out_dim = 0;
    std::size_t c1 = 8, c2 = 16;
    Tensor conv1_w, conv1_b;  // [3,3,in_c,c1], [c1]
    Tensor conv2_w, conv2_b;  // [3,3,c1,c2], [c2]
    DenseParams dense;        // out_dim x flat

    std::size_t h1() const { return (in_h - 2) / 2; }  // after conv1+pool
    std::size_t w1() const { return (in_w - 2) / 2; }
    std::size_t h2() const { return (h1() - 2) / 2; }  // after conv2+pool
    std::size_t w2() const { return (w1() - 2) / 2; }
    std::size_t flat() const { return h2() * w2() * c2; }

    static TinyCNNParams create(std::size_t h, std::size_t w, std::size_t c, std::size_t d,
                                std::size_t ch1 = 8, std::size_t ch2 = 16) {
        TinyCNNParams p;
        p.in_h = h;
        p.in_w = w;
        p.in_c = c;
        p.out_dim = d;
        p.c1 = ch1;
        p.c2 = ch2;
        p.conv1_w = Tensor::zeros({3, 3, c, ch1});
        p.conv1_b = Tensor::zeros({ch1});
        p.conv2_w = Tensor::zeros({3, 3, ch1, ch2});
        p.conv2_b = Tensor::zeros({ch2});
        p.dense = DenseParams::create(p.flat(), d, false);
        return p;
    }

    void init(Rng& rng) {
        glorot_init(conv1_w, rng);
        glorot_init(conv2_w, rng);
        dense.init(rng);
    }

    template <typename F>
    void visit(F&& f) {
        f("conv1_w", conv1_w);
        f("conv1_b", conv1_b);
        f("conv2_w", conv2_w);
        f("conv2_b", conv2_b);
        f("dense.W", dense.W);
        f("dense.b", dense.b);
    }

    TinyCNNParams zeros_like() const { return create(in_h, in_w, in_c, out_dim, c1, c2); }
};

struct TinyCNNFrameCache {
    Tensor frame;              // H x W x C input
    Tensor a1;                 // conv1 output post-relu
    std::vector<std::size_t> pool1_argmax;
    Tensor p1;                 // pooled
    Tensor a2;                 // conv2 output post-relu
    std::vector<std::size_t> pool2_argmax;
    DenseCache dense;
};

struct TinyCNNCache {
    std::vector<TinyCNNFrameCache> frames;
};

inline Tensor tinycnn_frame_forward(const TinyCNNParams& p, const Tensor& frame,
                                    TinyCNNFrameCache* cache) {
    if (frame.ndim() != 3 || frame.shape[0] != p.in_h || frame.shape[1] != p.in_w ||
        frame.shape[2] != p.in_c)
        throw ShapeError("tinycnn: frame " + shape_to_string(frame.shape) + " expected [" +
                         std::to_string(p.in_h) + "x" + std::to_string(p.in_w) + "x" +
                         std::to_string(p.in_c) + "]");
    Tensor a1 = relu(conv3x3_valid(frame, p.conv1_w, p.conv1_b));
    std::vector<std::size_t> am1;
    Tensor p1 = maxpool2(a1, cache ? &am1 : nullptr);
    Tensor a2 = relu(conv3x3_valid(p1, p.conv2_w, p.conv2_b));
    std::vector<std::size_t> am2;
    Tensor p2 = maxpool2(a2, cache ? &am2 : nullptr);
    Tensor flat = p2.reshaped({p.flat()});
    DenseCache dc;
    Tensor out = dense_forward(p.dense, flat, cache ? &dc : nullptr);
    if (cache) {
        cache->frame = frame;
        cache->a1 = std::move(a1);
        cache->pool1_argmax = std::move(am1);
        cache->p1 = std::move(p1);
        cache->a2 = std::move(a2);
        cache->pool2_argmax = std::move(am2);
        cache->dense = std::move(dc);
    }
    return out;
}

// frames: T x H x W x C -> features T x D. The identical per-frame map is
// applied independently to each frame (time-distributed contract).
inline Tensor tinycnn_forward(const TinyCNNParams& p, const Tensor& frames,
                              TinyCNNCache* cache = nullptr) {
    if (frames.ndim() != 4)
        throw ShapeError("tinycnn_forward: frames must be T x H x W x C, got " +
                         shape_to_string(frames.shape));
    std::size_t T = frames.shape[0];
    Tensor features({T, p.out_dim});
    if (cache) cache->frames.assign(T, TinyCNNFrameCache{});
    std::size_t frame_sz = frames.shape[1] * frames.shape[2] * frames.shape[3];
    for (std::size_t t = 0; t < T; ++t) {
        Tensor frame({frames.shape[1], frames.shape[2], frames.shape[3]},
                     std::vector<double>(frames.data.begin() + t * frame_sz,
                                         frames.data.begin() + (t + 1) * frame_sz));
        Tensor f = tinycnn_frame_forward(p, frame, cache ? &cache->frames[t] : nullptr);
        features.set_row(t, f);
    }
    return features;
}

struct TinyCNNGrads {
    TinyCNNParams param_grads;
    Tensor grad_frames;  // T x H x W x C
};

inline TinyCNNGrads tinycnn_backward(const TinyCNNParams& p, const TinyCNNCache& cache,
                                     const Tensor& grad_features) {
    std::size_t T = cache.frames.size();
    if (grad_features.ndim() != 2 || grad_features.shape[0] != T ||
        grad_features.shape[1] != p.out_dim)
        throw ShapeError("tinycnn_backward: grad_features " + shape_to_string(grad_features.shape) +
                         " does not match cache of length " + std::to_string(T));
    TinyCNNGrads out;
    out.param_grads = p.zeros_like();
    out.grad_frames = Tensor::zeros({T, p.in_h, p.in_w, p.in_c});
    std::size_t frame_sz = p.in_h * p.in_w * p.in_c;
    for (std::size_t t = 0; t < T; ++t) {
        const TinyCNNFrameCache& fc = cache.frames[t];
        Tensor gf = grad_features.row(t);
        Tensor gflat = dense_backward(p.dense, fc.dense, gf, out.param_grads.dense);
        Tensor gp2 = gflat.reshaped({p.h2(), p.w2(), p.c2});
        Tensor ga2 = Tensor::zeros(fc.a2.shape);
        maxpool2_backward(fc.pool2_argmax, gp2, ga2);
        for (std::size_t i = 0; i < ga2.size(); ++i)
            if (fc.a2.data[i] <= 0.0) ga2.data[i] = 0.0;
        Tensor gp1 = Tensor::zeros(fc.p1.shape);
        conv3x3_valid_backward(fc.p1, p.conv2_w, ga2, gp1, out.param_grads.conv2_w,
                               out.param_grads.conv2_b);
        Tensor ga1 = Tensor::zeros(fc.a1.shape);
        maxpool2_backward(fc.pool1_argmax, gp1, ga1);
        for (std::size_t i = 0; i < ga1.size(); ++i)
            if (fc.a1.data[i] <= 0.0) ga1.data[i] = 0.0;
        Tensor gframe = Tensor::zeros({p.in_h, p.in_w, p.in_c});
        conv3x3_valid_backward(fc.frame, p.conv1_w, ga1, gframe, out.param_grads.conv1_w,
                               out.param_grads.conv1_b);
        std::copy(gframe.data.begin(), gframe.data.end(),
                  out.grad_frames.data.begin() + t * frame_sz);
    }
    return out;
}

}  // namespace tristream
