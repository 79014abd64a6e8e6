#pragma once

// GRU and LSTM cells with sequence unrolling, manual backpropagation
// through time, and finite-difference gradient verification.

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tristream/rng.hpp"
#include "tristream/tensor.hpp"

namespace tristream {

// Glorot-uniform fill: +-sqrt(6/(fan_in+fan_out)).
inline void glorot_init(Tensor& w, Rng& rng) {
    double fan_in = static_cast<double>(w.shape.size() == 2 ? w.shape[1] : w.size());
    double fan_out = static_cast<double>(w.shape.size() == 2 ? w.shape[0] : w.size());
    double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : w.data) v = rng.uniform(-limit, limit);
}

// ---------------------------------------------------------------------------
// GRU
// ---------------------------------------------------------------------------

struct GRUCellParams {
    Tensor Wz, Wr, Wh;  // each h x (h+d); gate input is [h_prev, x]
    Tensor bz, br, bh;  // each h
    std::size_t input_width = 0;
    std::size_t hidden_width = 0;
    // Standard candidate uses the reset gate: tanh(Wh * [r.h_prev, x]).
    // Literal mode drops r, matching the printed gate equations verbatim.
    bool reset_in_candidate = true;
    bool use_bias = true;

    static GRUCellParams create(std::size_t d, std::size_t h) {
        GRUCellParams p;
        p.input_width = d;
        p.hidden_width = h;
        p.Wz = Tensor::zeros({h, h + d});
        p.Wr = Tensor::zeros({h, h + d});
        p.Wh = Tensor::zeros({h, h + d});
        p.bz = Tensor::zeros({h});
        p.br = Tensor::zeros({h});
        p.bh = Tensor::zeros({h});
        return p;
    }

    void init(Rng& rng) {
        glorot_init(Wz, rng);
        glorot_init(Wr, rng);
        glorot_init(Wh, rng);
    }

    template <typename F>
    void visit(F&& f) {
        f("Wz", Wz);
        f("Wr", Wr);
        f("Wh", Wh);
        if (use_bias) {
            f("bz", bz);
            f("br", br);
            f("bh", bh);
        }
    }

    GRUCellParams zeros_like() const {
        GRUCellParams g = create(input_width, hidden_width);
        g.reset_in_candidate = reset_in_candidate;
        g.use_bias = use_bias;
        return g;
    }
};

struct GRUStepCache {
    Tensor h_prev, x;
    Tensor hx;         // [h_prev, x]
    Tensor z, r, hcand;
    Tensor cand_in;    // [r.h_prev, x] (or hx in literal mode)
};

inline Tensor gru_step(const GRUCellParams& p, const Tensor& h_prev, const Tensor& x,
                       GRUStepCache* cache = nullptr) {
    if (h_prev.size() != p.hidden_width || x.size() != p.input_width)
        throw ShapeError("gru_step: state/input widths " + shape_to_string(h_prev.shape) + "/" +
                         shape_to_string(x.shape) + " do not match cell (h=" +
                         std::to_string(p.hidden_width) + ", d=" + std::to_string(p.input_width) + ")");
    Tensor hx = concat_vec(h_prev, x);
    Tensor az = matvec(p.Wz, hx);
    Tensor ar = matvec(p.Wr, hx);
    if (p.use_bias) {
        az = add(az, p.bz);
        ar = add(ar, p.br);
    }
    Tensor z = sigmoid(az);
    Tensor r = sigmoid(ar);
    Tensor cand_in = p.reset_in_candidate ? concat_vec(mul(r, h_prev), x) : hx;
    Tensor ah = matvec(p.Wh, cand_in);
    if (p.use_bias) ah = add(ah, p.bh);
    Tensor hcand = tanh_t(ah);
    Tensor h_new({p.hidden_width});
    for (std::size_t i = 0; i < p.hidden_width; ++i)
        h_new.data[i] = (1.0 - z.data[i]) * h_prev.data[i] + z.data[i] * hcand.data[i];
    if (cache) {
        cache->h_prev = h_prev;
        cache->x = x;
        cache->hx = std::move(hx);
        cache->z = std::move(z);
        cache->r = std::move(r);
        cache->hcand = std::move(hcand);
        cache->cand_in = std::move(cand_in);
    }
    return h_new;
}

// Accumulates parameter gradients into `grads`; returns (grad_h_prev, grad_x).
inline std::pair<Tensor, Tensor> gru_step_backward(const GRUCellParams& p,
                                                   const GRUStepCache& c,
                                                   const Tensor& grad_h_new,
                                                   GRUCellParams& grads) {
    std::size_t h = p.hidden_width, d = p.input_width;
    Tensor dh_prev({h}), dx({d});
    Tensor dhc({h}), dz({h});
    for (std::size_t i = 0; i < h; ++i) {
        dhc.data[i] = grad_h_new.data[i] * c.z.data[i];
        dz.data[i] = grad_h_new.data[i] * (c.hcand.data[i] - c.h_prev.data[i]);
        dh_prev.data[i] = grad_h_new.data[i] * (1.0 - c.z.data[i]);
    }
    Tensor dah({h});
    for (std::size_t i = 0; i < h; ++i)
        dah.data[i] = dhc.data[i] * (1.0 - c.hcand.data[i] * c.hcand.data[i]);
    accumulate_outer(grads.Wh, dah, c.cand_in);
    if (p.use_bias) axpy(1.0, dah, grads.bh);
    Tensor dcand = matvec_transposed(p.Wh, dah);

    Tensor dr({h});
    for (std::size_t i = 0; i < h; ++i) {
        if (p.reset_in_candidate) {
            dh_prev.data[i] += dcand.data[i] * c.r.data[i];
            dr.data[i] = dcand.data[i] * c.h_prev.data[i];
        } else {
            dh_prev.data[i] += dcand.data[i];
        }
    }
    for (std::size_t j = 0; j < d; ++j) dx.data[j] += dcand.data[h + j];

    Tensor dar({h}), daz({h});
    for (std::size_t i = 0; i < h; ++i) {
        dar.data[i] = dr.data[i] * c.r.data[i] * (1.0 - c.r.data[i]);
        daz.data[i] = dz.data[i] * c.z.data[i] * (1.0 - c.z.data[i]);
    }
    accumulate_outer(grads.Wr, dar, c.hx);
    accumulate_outer(grads.Wz, daz, c.hx);
    if (p.use_bias) {
        axpy(1.0, dar, grads.br);
        axpy(1.0, daz, grads.bz);
    }
    Tensor dhx = matvec_transposed(p.Wr, dar);
    Tensor dhx2 = matvec_transposed(p.Wz, daz);
    for (std::size_t i = 0; i < h; ++i) dh_prev.data[i] += dhx.data[i] + dhx2.data[i];
    for (std::size_t j = 0; j < d; ++j) dx.data[j] += dhx.data[h + j] + dhx2.data[h + j];
    return {std::move(dh_prev), std::move(dx)};
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

struct LSTMCellParams {
    Tensor Wf, Wi, Wo, Wg;  // each h x (h+d)
    Tensor bf, bi, bo, bg;  // each h
    std::size_t input_width = 0;
    std::size_t hidden_width = 0;

    static LSTMCellParams create(std::size_t d, std::size_t h) {
        LSTMCellParams p;
        p.input_width = d;
        p.hidden_width = h;
        p.Wf = Tensor::zeros({h, h + d});
        p.Wi = Tensor::zeros({h, h + d});
        p.Wo = Tensor::zeros({h, h + d});
        p.Wg = Tensor::zeros({h, h + d});
        p.bf = Tensor::zeros({h});
        p.bi = Tensor::zeros({h});
        p.bo = Tensor::zeros({h});
        p.bg = Tensor::zeros({h});
        return p;
    }

    void init(Rng& rng) {
        glorot_init(Wf, rng);
        glorot_init(Wi, rng);
        glorot_init(Wo, rng);
        glorot_init(Wg, rng);
        std::fill(bf.data.begin(), bf.data.end(), 1.0);  // forget bias 1
    }

    template <typename F>
    void visit(F&& f) {
        f("Wf", Wf);
        f("Wi", Wi);
        f("Wo", Wo);
        f("Wg", Wg);
        f("bf", bf);
        f("bi", bi);
        f("bo", bo);
        f("bg", bg);
    }

    LSTMCellParams zeros_like() const { return create(input_width, hidden_width); }
};

struct LSTMStepCache {
    Tensor h_prev, c_prev, x, hx;
    Tensor f, i, o, g, c_new;
};

struct LSTMStepResult {
    Tensor h, c;
};

inline LSTMStepResult lstm_step(const LSTMCellParams& p, const Tensor& h_prev,
                                const Tensor& c_prev, const Tensor& x,
                                LSTMStepCache* cache = nullptr) {
    if (h_prev.size() != p.hidden_width || c_prev.size() != p.hidden_width ||
        x.size() != p.input_width)
        throw ShapeError("lstm_step: state/input widths do not match cell (h=" +
                         std::to_string(p.hidden_width) + ", d=" + std::to_string(p.input_width) +
                         "), got h_prev " + shape_to_string(h_prev.shape) + ", c_prev " +
                         shape_to_string(c_prev.shape) + ", x " + shape_to_string(x.shape));
    Tensor hx = concat_vec(h_prev, x);
    Tensor f = sigmoid(add(matvec(p.Wf, hx), p.bf));
    Tensor i = sigmoid(add(matvec(p.Wi, hx), p.bi));
    Tensor o = sigmoid(add(matvec(p.Wo, hx), p.bo));
    Tensor g = tanh_t(add(matvec(p.Wg, hx), p.bg));
    std::size_t h = p.hidden_width;
    Tensor c_new({h}), h_new({h});
    for (std::size_t k = 0; k < h; ++k) {
        c_new.data[k] = f.data[k] * c_prev.data[k] + i.data[k] * g.data[k];
        h_new.data[k] = o.data[k] * std::tanh(c_new.data[k]);
    }
    if (cache) {
        cache->h_prev = h_prev;
        cache->c_prev = c_prev;
        cache->x = x;
        cache->hx = std::move(hx);
        cache->f = std::move(f);
        cache->i = std::move(i);
        cache->o = std::move(o);
        cache->g = std::move(g);
        cache->c_new = c_new;
    }
    return {std::move(h_new), std::move(c_new)};
}

struct LSTMStepGradIn {
    Tensor grad_h;  // dL/dh_new
    Tensor grad_c;  // dL/dc_new arriving from the future (may be zeros)
};

struct LSTMStepGradOut {
    Tensor grad_h_prev, grad_c_prev, grad_x;
};

inline LSTMStepGradOut lstm_step_backward(const LSTMCellParams& p, const LSTMStepCache& c,
                                          const LSTMStepGradIn& gin, LSTMCellParams& grads) {
    std::size_t h = p.hidden_width, d = p.input_width;
    Tensor dc({h}), do_({h});
    for (std::size_t k = 0; k < h; ++k) {
        double tc = std::tanh(c.c_new.data[k]);
        do_.data[k] = gin.grad_h.data[k] * tc;
        dc.data[k] = gin.grad_c.data[k] + gin.grad_h.data[k] * c.o.data[k] * (1.0 - tc * tc);
    }
    Tensor df({h}), di({h}), dg({h}), dc_prev({h});
    for (std::size_t k = 0; k < h; ++k) {
        df.data[k] = dc.data[k] * c.c_prev.data[k];
        di.data[k] = dc.data[k] * c.g.data[k];
        dg.data[k] = dc.data[k] * c.i.data[k];
        dc_prev.data[k] = dc.data[k] * c.f.data[k];
    }
    Tensor daf({h}), dai({h}), dao({h}), dag({h});
    for (std::size_t k = 0; k < h; ++k) {
        daf.data[k] = df.data[k] * c.f.data[k] * (1.0 - c.f.data[k]);
        dai.data[k] = di.data[k] * c.i.data[k] * (1.0 - c.i.data[k]);
        dao.data[k] = do_.data[k] * c.o.data[k] * (1.0 - c.o.data[k]);
        dag.data[k] = dg.data[k] * (1.0 - c.g.data[k] * c.g.data[k]);
    }
    accumulate_outer(grads.Wf, daf, c.hx);
    accumulate_outer(grads.Wi, dai, c.hx);
    accumulate_outer(grads.Wo, dao, c.hx);
    accumulate_outer(grads.Wg, dag, c.hx);
    axpy(1.0, daf, grads.bf);
    axpy(1.0, dai, grads.bi);
    axpy(1.0, dao, grads.bo);
    axpy(1.0, dag, grads.bg);

    Tensor dhx = matvec_transposed(p.Wf, daf);
    axpy(1.0, matvec_transposed(p.Wi, dai), dhx);
    axpy(1.0, matvec_transposed(p.Wo, dao), dhx);
    axpy(1.0, matvec_transposed(p.Wg, dag), dhx);

    Tensor dh_prev({h}), dx({d});
    for (std::size_t k = 0; k < h; ++k) dh_prev.data[k] = dhx.data[k];
    for (std::size_t j = 0; j < d; ++j) dx.data[j] = dhx.data[h + j];
    return {std::move(dh_prev), std::move(dc_prev), std::move(dx)};
}

// ---------------------------------------------------------------------------
// Layers, unrolling, stacks
// ---------------------------------------------------------------------------

enum class CellKind { GRU, LSTM };

struct RecurrentLayer {
    CellKind kind = CellKind::GRU;
    GRUCellParams gru;
    LSTMCellParams lstm;

    static RecurrentLayer make_gru(std::size_t d, std::size_t h) {
        RecurrentLayer l;
        l.kind = CellKind::GRU;
        l.gru = GRUCellParams::create(d, h);
        return l;
    }
    static RecurrentLayer make_lstm(std::size_t d, std::size_t h) {
        RecurrentLayer l;
        l.kind = CellKind::LSTM;
        l.lstm = LSTMCellParams::create(d, h);
        return l;
    }

    std::size_t input_width() const {
        return kind == CellKind::GRU ? gru.input_width : lstm.input_width;
    }
    std::size_t hidden_width() const {
        return kind == CellKind::GRU ? gru.hidden_width : lstm.hidden_width;
    }

    void init(Rng& rng) {
        if (kind == CellKind::GRU) gru.init(rng);
        else lstm.init(rng);
    }

    template <typename F>
    void visit(F&& f) {
        if (kind == CellKind::GRU) gru.visit(f);
        else lstm.visit(f);
    }

    RecurrentLayer zeros_like() const {
        RecurrentLayer g = *this;
        if (kind == CellKind::GRU) g.gru = gru.zeros_like();
        else g.lstm = lstm.zeros_like();
        return g;
    }
};

struct UnrollCache {
    std::vector<GRUStepCache> gru_steps;
    std::vector<LSTMStepCache> lstm_steps;
    std::size_t length() const { return std::max(gru_steps.size(), lstm_steps.size()); }
};

// inputs: T x d. Returns T x h outputs (row t is h_t) plus the cache.
inline Tensor unroll_forward(const RecurrentLayer& layer, const Tensor& inputs,
                             UnrollCache* cache = nullptr, const Tensor* h0 = nullptr,
                             const Tensor* c0 = nullptr) {
    if (inputs.ndim() != 2) throw ShapeError("unroll_forward: inputs must be T x d");
    std::size_t T = inputs.shape[0];
    if (T == 0) throw ShapeError("unroll_forward: empty sequence");
    if (inputs.shape[1] != layer.input_width())
        throw ShapeError("unroll_forward: input width " + std::to_string(inputs.shape[1]) +
                         " does not match layer width " + std::to_string(layer.input_width()));
    std::size_t h = layer.hidden_width();
    Tensor outputs({T, h});
    Tensor hstate = h0 ? *h0 : Tensor::zeros({h});
    Tensor cstate = c0 ? *c0 : Tensor::zeros({h});
    if (hstate.size() != h || cstate.size() != h)
        throw ShapeError("unroll_forward: initial state width mismatch");
    if (cache) {
        cache->gru_steps.clear();
        cache->lstm_steps.clear();
    }
    for (std::size_t t = 0; t < T; ++t) {
        Tensor x = inputs.row(t);
        if (layer.kind == CellKind::GRU) {
            GRUStepCache sc;
            hstate = gru_step(layer.gru, hstate, x, cache ? &sc : nullptr);
            if (cache) cache->gru_steps.push_back(std::move(sc));
        } else {
            LSTMStepCache sc;
            auto res = lstm_step(layer.lstm, hstate, cstate, x, cache ? &sc : nullptr);
            hstate = std::move(res.h);
            cstate = std::move(res.c);
            if (cache) cache->lstm_steps.push_back(std::move(sc));
        }
        outputs.set_row(t, hstate);
    }
    return outputs;
}

struct UnrollGrads {
    RecurrentLayer param_grads;  // weight tensors hold gradients
    Tensor grad_inputs;          // T x d
    Tensor grad_h0;
};

inline UnrollGrads unroll_backward(const RecurrentLayer& layer, const UnrollCache& cache,
                                   const Tensor& grad_outputs) {
    std::size_t T = cache.length();
    if (grad_outputs.ndim() != 2 || grad_outputs.shape[0] != T ||
        grad_outputs.shape[1] != layer.hidden_width())
        throw ShapeError("unroll_backward: grad_outputs " + shape_to_string(grad_outputs.shape) +
                         " does not match cache length " + std::to_string(T));
    std::size_t h = layer.hidden_width(), d = layer.input_width();
    UnrollGrads out;
    out.param_grads = layer.zeros_like();
    out.grad_inputs = Tensor::zeros({T, d});
    Tensor dh = Tensor::zeros({h});
    Tensor dcell = Tensor::zeros({h});
    for (std::size_t t = T; t-- > 0;) {
        Tensor g = add(dh, grad_outputs.row(t));
        if (layer.kind == CellKind::GRU) {
            auto [dhp, dx] = gru_step_backward(layer.gru, cache.gru_steps[t], g,
                                               out.param_grads.gru);
            dh = std::move(dhp);
            out.grad_inputs.set_row(t, dx);
        } else {
            LSTMStepGradIn gin{std::move(g), std::move(dcell)};
            auto res = lstm_step_backward(layer.lstm, cache.lstm_steps[t], gin,
                                          out.param_grads.lstm);
            dh = std::move(res.grad_h_prev);
            dcell = std::move(res.grad_c_prev);
            out.grad_inputs.set_row(t, res.grad_x);
        }
    }
    out.grad_h0 = std::move(dh);
    return out;
}

struct RecurrentStack {
    std::vector<RecurrentLayer> layers;

    void init(Rng& rng) {
        for (auto& l : layers) l.init(rng);
    }

    std::size_t hidden_width() const { return layers.back().hidden_width(); }

    template <typename F>
    void visit_named(const std::string& prefix, F&& f) {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            std::string p = prefix + ".layer" + std::to_string(i) + ".";
            layers[i].visit([&](const std::string& n, Tensor& t) { f(p + n, t); });
        }
    }

    RecurrentStack zeros_like() const {
        RecurrentStack g;
        g.layers.reserve(layers.size());
        for (const auto& l : layers) g.layers.push_back(l.zeros_like());
        return g;
    }
};

struct StackCache {
    std::vector<UnrollCache> per_layer;
};

// Sequence goes through every layer; output is the last layer's T x h matrix.
inline Tensor stack_forward(const RecurrentStack& stack, const Tensor& inputs,
                            StackCache* cache = nullptr) {
    Tensor cur = inputs;
    if (cache) cache->per_layer.assign(stack.layers.size(), UnrollCache{});
    for (std::size_t i = 0; i < stack.layers.size(); ++i)
        cur = unroll_forward(stack.layers[i], cur, cache ? &cache->per_layer[i] : nullptr);
    return cur;
}

struct StackGrads {
    RecurrentStack param_grads;
    Tensor grad_inputs;
};

inline StackGrads stack_backward(const RecurrentStack& stack, const StackCache& cache,
                                 const Tensor& grad_outputs) {
    StackGrads out;
    out.param_grads = stack.zeros_like();
    Tensor g = grad_outputs;
    for (std::size_t i = stack.layers.size(); i-- > 0;) {
        UnrollGrads ug = unroll_backward(stack.layers[i], cache.per_layer[i], g);
        out.param_grads.layers[i] = std::move(ug.param_grads);
        g = std::move(ug.grad_inputs);
    }
    out.grad_inputs = std::move(g);
    return out;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check
// ---------------------------------------------------------------------------

struct GradCheckEntry {
    std::string name;
    std::size_t index = 0;
    double analytic = 0, numeric = 0, rel_error = 0;
};

struct GradCheckReport {
    std::size_t checked = 0;
    double max_rel_error = 0;
    GradCheckEntry worst;
    std::vector<GradCheckEntry> failures;
    bool passed(double tol) const { return max_rel_error < tol; }
};

// params and analytic_grads must be aligned element for element. The forward
// function is re-evaluated with perturbed parameters; it must be deterministic.
inline GradCheckReport gradient_check(
    const std::vector<std::pair<std::string, Tensor*>>& params,
    const std::vector<std::pair<std::string, const Tensor*>>& analytic_grads,
    const std::function<double()>& forward, double eps = 1e-5, double tol = 1e-4) {
    if (params.size() != analytic_grads.size())
        throw ShapeError("gradient_check: param/grad list size mismatch");
    double base1 = forward();
    double base2 = forward();
    if (base1 != base2)
        throw NumericError("gradient_check: forward function is not deterministic (" +
                           std::to_string(base1) + " vs " + std::to_string(base2) + ")");
    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor* t = params[pi].second;
        const Tensor* g = analytic_grads[pi].second;
        if (!t->same_shape(*g))
            throw ShapeError("gradient_check: grad shape mismatch for " + params[pi].first);
        for (std::size_t i = 0; i < t->size(); ++i) {
            double orig = t->data[i];
            t->data[i] = orig + eps;
            double fp = forward();
            t->data[i] = orig - eps;
            double fm = forward();
            t->data[i] = orig;
            double numeric = (fp - fm) / (2.0 * eps);
            double analytic = g->data[i];
            double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            double rel = std::abs(analytic - numeric) / denom;
            ++report.checked;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst = {params[pi].first, i, analytic, numeric, rel};
            }
            if (rel >= tol)
                report.failures.push_back({params[pi].first, i, analytic, numeric, rel});
        }
    }
    return report;
}

}  // namespace tristream
