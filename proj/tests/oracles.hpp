#pragma once

// Independent test oracles. Everything here is deliberately naive and kept
// separate from the implementation paths it checks.

#include <cmath>
#include <functional>
#include <vector>

#include "tristream/rng.hpp"
#include "tristream/tensor.hpp"

namespace oracles {

using tristream::Tensor;

// direct triple-loop summation
inline Tensor matmul_naive(const Tensor& a, const Tensor& b) {
    std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0;
            for (std::size_t p = 0; p < k; ++p) s += a.at2(i, p) * b.at2(p, j);
            c.at2(i, j) = s;
        }
    return c;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// scalar GRU step, written out by hand (standard form, w = [w_h, w_x])
struct ScalarGruOut {
    double z, r, hcand, h_new;
};
inline ScalarGruOut gru_scalar(double wz_h, double wz_x, double wr_h, double wr_x, double wh_h,
                               double wh_x, double bz, double br, double bh, double h_prev,
                               double x) {
    ScalarGruOut o;
    o.z = sigmoid(wz_h * h_prev + wz_x * x + bz);
    o.r = sigmoid(wr_h * h_prev + wr_x * x + br);
    o.hcand = std::tanh(wh_h * (o.r * h_prev) + wh_x * x + bh);
    o.h_new = (1 - o.z) * h_prev + o.z * o.hcand;
    return o;
}

// scalar LSTM step by hand
struct ScalarLstmOut {
    double f, i, o, g, c_new, h_new;
};
inline ScalarLstmOut lstm_scalar(double wf_h, double wf_x, double wi_h, double wi_x, double wo_h,
                                 double wo_x, double wg_h, double wg_x, double bf, double bi,
                                 double bo, double bg, double h_prev, double c_prev, double x) {
    ScalarLstmOut s;
    s.f = sigmoid(wf_h * h_prev + wf_x * x + bf);
    s.i = sigmoid(wi_h * h_prev + wi_x * x + bi);
    s.o = sigmoid(wo_h * h_prev + wo_x * x + bo);
    s.g = std::tanh(wg_h * h_prev + wg_x * x + bg);
    s.c_new = s.f * c_prev + s.i * s.g;
    s.h_new = s.o * std::tanh(s.c_new);
    return s;
}

// direct sliding-window convolution, 3x3 valid, HWC input, (ky,kx,ic,oc) weights
inline Tensor conv3x3_naive(const Tensor& in, const Tensor& w, const Tensor& b) {
    std::size_t H = in.shape[0], W = in.shape[1], C = in.shape[2], OC = w.shape[3];
    Tensor out({H - 2, W - 2, OC});
    for (std::size_t y = 0; y + 2 < H; ++y)
        for (std::size_t x = 0; x + 2 < W; ++x)
            for (std::size_t oc = 0; oc < OC; ++oc) {
                double s = b.data[oc];
                for (std::size_t ky = 0; ky < 3; ++ky)
                    for (std::size_t kx = 0; kx < 3; ++kx)
                        for (std::size_t ic = 0; ic < C; ++ic)
                            s += in.data[((y + ky) * W + (x + kx)) * C + ic] *
                                 w.data[(((ky * 3 + kx) * C) + ic) * OC + oc];
                out.data[((y * (W - 2)) + x) * OC + oc] = s;
            }
    return out;
}

// central finite difference of a scalar-valued function over a list of tensors
inline double finite_difference(std::vector<Tensor*> params, std::size_t tensor_idx,
                                std::size_t elem_idx, const std::function<double()>& f,
                                double eps = 1e-5) {
    double orig = params[tensor_idx]->data[elem_idx];
    params[tensor_idx]->data[elem_idx] = orig + eps;
    double fp = f();
    params[tensor_idx]->data[elem_idx] = orig - eps;
    double fm = f();
    params[tensor_idx]->data[elem_idx] = orig;
    return (fp - fm) / (2 * eps);
}

inline void fill_random(Tensor& t, tristream::Rng& rng, double lo = -0.5, double hi = 0.5) {
    for (double& v : t.data) v = rng.uniform(lo, hi);
}

}  // namespace oracles
