#pragma once

// The three-stream hybrid network: two pixel-feature streams (each a
// recurrent branch plus an anchor-frame gather branch), a keypoint stream
// with stacked recurrence, concatenation fusion, and a softmax classifier.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "tristream/cnn.hpp"
#include "tristream/dataio.hpp"
#include "tristream/features.hpp"
#include "tristream/recurrent.hpp"
#include "tristream/tensor.hpp"

namespace tristream {

struct ThreeStreamConfig {
    std::size_t T = 30;
    std::vector<std::size_t> anchors = {0, 7, 15, 22, 29};
    std::size_t image_size = 128;
    std::size_t channels = 1;
    std::size_t D1 = 64, D2 = 64;        // pixel feature widths
    std::size_t hidden = 64;             // recurrent width, all layers
    std::size_t dense_width = 64;        // in-stream dense width
    double dropout_rate = 0.3;
    int K = 10;
    bool use_stream1 = true, use_stream2 = true, use_stream3 = true;
    bool precomputed_features = false;   // ingest feature files instead of TinyCNN

    std::size_t s1_width() const { return dense_width + hidden; }
    std::size_t s2_width() const { return dense_width + hidden; }
    std::size_t s3_width() const { return hidden; }

    std::size_t fusion_width() const {
        std::size_t w = 0;
        if (use_stream1) w += s1_width();
        if (use_stream2) w += s2_width();
        if (use_stream3) w += s3_width();
        return w;
    }

    void validate() const {
        if (K < 2) throw DataError("config: K must be >= 2");
        if (!use_stream1 && !use_stream2 && !use_stream3)
            throw DataError("config: at least one stream must be enabled");
        if (anchors.empty()) throw DataError("config: empty anchor set");
        for (std::size_t i = 0; i < anchors.size(); ++i) {
            if (anchors[i] >= T)
                throw DataError("config: anchor " + std::to_string(anchors[i]) +
                                " out of range for T=" + std::to_string(T));
            if (i > 0 && anchors[i] <= anchors[i - 1])
                throw DataError("config: anchors must be strictly increasing");
        }
        if (dropout_rate < 0 || dropout_rate >= 1)
            throw DataError("config: dropout rate must be in [0,1)");
    }
};

struct ThreeStreamParams {
    ThreeStreamConfig config;
    TinyCNNParams backboneA, backboneB;
    RecurrentStack s1_main;    // LSTM -> GRU
    DenseParams s1_dense;
    RecurrentStack s1_gather;  // 3x LSTM over anchor frames
    RecurrentStack s2_main;    // GRU -> GRU
    DenseParams s2_dense;
    RecurrentStack s2_gather;  // 3x LSTM, independent weights
    RecurrentStack s3_stack;   // LSTM x3 -> GRU x2
    DenseParams classifier;    // fusion -> K, linear + softmax

    static ThreeStreamParams create(const ThreeStreamConfig& cfg) {
        cfg.validate();
        ThreeStreamParams m;
        m.config = cfg;
        std::size_t h = cfg.hidden;
        if (cfg.use_stream1) {
            if (!cfg.precomputed_features)
                m.backboneA = TinyCNNParams::create(cfg.image_size, cfg.image_size, cfg.channels,
                                                    cfg.D1);
            m.s1_main.layers = {RecurrentLayer::make_lstm(cfg.D1, h),
                                RecurrentLayer::make_gru(h, h)};
            m.s1_dense = DenseParams::create(h, cfg.dense_width, true);
            m.s1_gather.layers = {RecurrentLayer::make_lstm(cfg.D1, h),
                                  RecurrentLayer::make_lstm(h, h),
                                  RecurrentLayer::make_lstm(h, h)};
        }
        if (cfg.use_stream2) {
            if (!cfg.precomputed_features)
                m.backboneB = TinyCNNParams::create(cfg.image_size, cfg.image_size, cfg.channels,
                                                    cfg.D2);
            m.s2_main.layers = {RecurrentLayer::make_gru(cfg.D2, h),
                                RecurrentLayer::make_gru(h, h)};
            m.s2_dense = DenseParams::create(h, cfg.dense_width, true);
            m.s2_gather.layers = {RecurrentLayer::make_lstm(cfg.D2, h),
                                  RecurrentLayer::make_lstm(h, h),
                                  RecurrentLayer::make_lstm(h, h)};
        }
        if (cfg.use_stream3) {
            m.s3_stack.layers = {RecurrentLayer::make_lstm(kKeypointWidth, h),
                                 RecurrentLayer::make_lstm(h, h),
                                 RecurrentLayer::make_lstm(h, h),
                                 RecurrentLayer::make_gru(h, h),
                                 RecurrentLayer::make_gru(h, h)};
        }
        m.classifier = DenseParams::create(cfg.fusion_width(), cfg.K, false);
        m.audit();
        return m;
    }

    // Asserts every layer's output width feeds the next layer's input width.
    void audit() const {
        auto check_chain = [](const RecurrentStack& st, std::size_t in, const char* name) {
            std::size_t w = in;
            for (const auto& l : st.layers) {
                if (l.input_width() != w)
                    throw ShapeError(std::string("audit: ") + name + " layer input width " +
                                     std::to_string(l.input_width()) + " != " + std::to_string(w));
                w = l.hidden_width();
            }
        };
        if (config.use_stream1) {
            check_chain(s1_main, config.D1, "stream1 main");
            check_chain(s1_gather, config.D1, "stream1 gather");
            if (s1_dense.in_width() != config.hidden)
                throw ShapeError("audit: stream1 dense input width mismatch");
        }
        if (config.use_stream2) {
            check_chain(s2_main, config.D2, "stream2 main");
            check_chain(s2_gather, config.D2, "stream2 gather");
            if (s2_dense.in_width() != config.hidden)
                throw ShapeError("audit: stream2 dense input width mismatch");
        }
        if (config.use_stream3) check_chain(s3_stack, kKeypointWidth, "stream3");
        if (classifier.in_width() != config.fusion_width())
            throw ShapeError("audit: classifier input width " +
                             std::to_string(classifier.in_width()) + " != fusion width " +
                             std::to_string(config.fusion_width()));
    }

    void init(Rng& rng) {
        if (config.use_stream1) {
            if (!config.precomputed_features) backboneA.init(rng);
            s1_main.init(rng);
            s1_dense.init(rng);
            s1_gather.init(rng);
        }
        if (config.use_stream2) {
            if (!config.precomputed_features) backboneB.init(rng);
            s2_main.init(rng);
            s2_dense.init(rng);
            s2_gather.init(rng);
        }
        if (config.use_stream3) s3_stack.init(rng);
        classifier.init(rng);
    }

    template <typename F>
    void visit_named(F&& f) {
        auto dense_visit = [&](const std::string& prefix, DenseParams& d) {
            d.visit([&](const std::string& n, Tensor& t) { f(prefix + n, t); });
        };
        if (config.use_stream1) {
            if (!config.precomputed_features)
                backboneA.visit([&](const std::string& n, Tensor& t) { f("backboneA." + n, t); });
            s1_main.visit_named("s1.main", f);
            dense_visit("s1.dense.", s1_dense);
            s1_gather.visit_named("s1.gather", f);
        }
        if (config.use_stream2) {
            if (!config.precomputed_features)
                backboneB.visit([&](const std::string& n, Tensor& t) { f("backboneB." + n, t); });
            s2_main.visit_named("s2.main", f);
            dense_visit("s2.dense.", s2_dense);
            s2_gather.visit_named("s2.gather", f);
        }
        if (config.use_stream3) s3_stack.visit_named("s3.stack", f);
        dense_visit("classifier.", classifier);
    }

    ThreeStreamParams zeros_like() const {
        ThreeStreamParams g = ThreeStreamParams::create(config);
        return g;
    }

    std::size_t param_count() {
        std::size_t n = 0;
        visit_named([&](const std::string&, Tensor& t) { n += t.size(); });
        return n;
    }
};

// Stream-subset variant: same layer sizes, classifier width adjusted.
inline ThreeStreamParams ablate(const ThreeStreamConfig& base, bool s1, bool s2, bool s3) {
    ThreeStreamConfig cfg = base;
    cfg.use_stream1 = s1;
    cfg.use_stream2 = s2;
    cfg.use_stream3 = s3;
    return ThreeStreamParams::create(cfg);
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

struct ModelCache {
    TinyCNNCache bbA, bbB;
    Tensor featA, featB;           // T x D inputs to the streams
    Tensor gatheredA, gatheredB;   // anchor rows
    StackCache s1_main_c, s1_gather_c, s2_main_c, s2_gather_c, s3_c;
    std::size_t s1_T = 0, s2_T = 0, s3_T = 0, gather_T = 0;
    DenseCache s1_dense_c, s2_dense_c, cls_c;
    Tensor s2_dropout_mask;        // empty when dropout inactive
    Tensor fused;
    Tensor probs;
};

struct ModelInput {
    const Tensor* frames = nullptr;     // T x H x W x C (TinyCNN mode)
    const Tensor* featuresA = nullptr;  // T x D1 (precomputed mode)
    const Tensor* featuresB = nullptr;  // T x D2
    const Tensor* keypoints = nullptr;  // T x 258
};

inline ModelInput input_from_sample(const ThreeStreamConfig& cfg, const GestureSample& s) {
    ModelInput in;
    in.frames = &s.frames;
    if (cfg.use_stream3) {
        if (!s.keypoints)
            throw DataError("sample '" + s.sample_id +
                            "' has no keypoints but stream 3 is enabled");
        in.keypoints = &*s.keypoints;
    }
    return in;
}

// mode: dropout is active only when train_mode is true and rate > 0; the
// caller provides the rng that draws the mask.
inline Tensor model_forward(const ThreeStreamParams& m, const ModelInput& in, bool train_mode,
                            Rng* dropout_rng, ModelCache* cache) {
    const ThreeStreamConfig& cfg = m.config;
    std::vector<Tensor> parts;

    auto last_row = [](const Tensor& outputs) { return outputs.row(outputs.shape[0] - 1); };

    if (cfg.use_stream1 || cfg.use_stream2) {
        if (cfg.precomputed_features) {
            if ((cfg.use_stream1 && !in.featuresA) || (cfg.use_stream2 && !in.featuresB))
                throw DataError("model: precomputed mode needs feature sequences");
        } else if (!in.frames) {
            throw DataError("model: pixel streams enabled but no frames given");
        }
    }

    if (cfg.use_stream1) {
        Tensor feat = cfg.precomputed_features
                          ? *in.featuresA
                          : tinycnn_forward(m.backboneA, *in.frames, cache ? &cache->bbA : nullptr);
        if (feat.shape[1] != cfg.D1)
            throw ShapeError("stream1: feature width " + std::to_string(feat.shape[1]) +
                             " != D1 " + std::to_string(cfg.D1));
        Tensor main_out = stack_forward(m.s1_main, feat, cache ? &cache->s1_main_c : nullptr);
        DenseCache dc;
        Tensor b1 = dense_forward(m.s1_dense, last_row(main_out), cache ? &dc : nullptr);
        Tensor gathered = subsample_frames(feat, cfg.anchors);
        Tensor gout = stack_forward(m.s1_gather, gathered, cache ? &cache->s1_gather_c : nullptr);
        Tensor b2 = last_row(gout);
        if (cache) {
            cache->featA = std::move(feat);
            cache->gatheredA = std::move(gathered);
            cache->s1_T = main_out.shape[0];
            cache->gather_T = gout.shape[0];
            cache->s1_dense_c = std::move(dc);
        }
        parts.push_back(concat_vec(b1, b2));
    }

    if (cfg.use_stream2) {
        Tensor feat = cfg.precomputed_features
                          ? *in.featuresB
                          : tinycnn_forward(m.backboneB, *in.frames, cache ? &cache->bbB : nullptr);
        if (feat.shape[1] != cfg.D2)
            throw ShapeError("stream2: feature width " + std::to_string(feat.shape[1]) +
                             " != D2 " + std::to_string(cfg.D2));
        Tensor main_out = stack_forward(m.s2_main, feat, cache ? &cache->s2_main_c : nullptr);
        Tensor summary = last_row(main_out);
        Tensor mask;
        if (train_mode && cfg.dropout_rate > 0.0) {
            if (!dropout_rng) throw DataError("model: training with dropout needs an rng");
            double keep = 1.0 - cfg.dropout_rate;
            mask = Tensor({summary.size()});
            for (double& v : mask.data)
                v = dropout_rng->next_double() < keep ? 1.0 / keep : 0.0;  // inverted dropout
            summary = mul(summary, mask);
        }
        DenseCache dc;
        Tensor b1 = dense_forward(m.s2_dense, summary, cache ? &dc : nullptr);
        Tensor gathered = subsample_frames(feat, cfg.anchors);
        Tensor gout = stack_forward(m.s2_gather, gathered, cache ? &cache->s2_gather_c : nullptr);
        Tensor b2 = last_row(gout);
        if (cache) {
            cache->featB = std::move(feat);
            cache->gatheredB = std::move(gathered);
            cache->s2_T = main_out.shape[0];
            cache->s2_dense_c = std::move(dc);
            cache->s2_dropout_mask = std::move(mask);
            cache->gather_T = cfg.anchors.size();
        }
        parts.push_back(concat_vec(b1, b2));
    }

    if (cfg.use_stream3) {
        if (!in.keypoints) throw DataError("model: stream 3 enabled but no keypoints given");
        if (in.keypoints->ndim() != 2 || in.keypoints->shape[1] != kKeypointWidth)
            throw ShapeError("stream3: keypoints must be T x " + std::to_string(kKeypointWidth));
        Tensor out = stack_forward(m.s3_stack, *in.keypoints, cache ? &cache->s3_c : nullptr);
        if (cache) cache->s3_T = out.shape[0];
        parts.push_back(last_row(out));
    }

    Tensor fused = parts.size() == 1 ? parts[0] : concat(parts, 0);
    DenseCache cc;
    Tensor logits = dense_forward(m.classifier, fused, cache ? &cc : nullptr);
    Tensor probs = softmax(logits);
    if (cache) {
        cache->fused = std::move(fused);
        cache->cls_c = std::move(cc);
        cache->probs = probs;
    }
    return probs;
}

// grad_logits is dL/dlogits (for cross-entropy after softmax: p - onehot).
// Returns gradients for every parameter of every enabled component.
inline ThreeStreamParams model_backward(const ThreeStreamParams& m, const ModelCache& cache,
                                        const Tensor& grad_logits) {
    const ThreeStreamConfig& cfg = m.config;
    ThreeStreamParams grads = m.zeros_like();
    Tensor grad_fused = dense_backward(m.classifier, cache.cls_c, grad_logits, grads.classifier);

    std::size_t offset = 0;
    auto take = [&](std::size_t n) {
        Tensor g({n});
        std::copy(grad_fused.data.begin() + offset, grad_fused.data.begin() + offset + n,
                  g.data.begin());
        offset += n;
        return g;
    };

    auto backprop_summary = [](const RecurrentStack& stack, const StackCache& sc, std::size_t T,
                               const Tensor& grad_summary, RecurrentStack& stack_grads) {
        Tensor go = Tensor::zeros({T, grad_summary.size()});
        go.set_row(T - 1, grad_summary);
        StackGrads sg = stack_backward(stack, sc, go);
        stack_grads = std::move(sg.param_grads);
        return std::move(sg.grad_inputs);
    };

    if (cfg.use_stream1) {
        Tensor g1 = take(cfg.dense_width);
        Tensor g2 = take(cfg.hidden);
        Tensor grad_sum = dense_backward(m.s1_dense, cache.s1_dense_c, g1, grads.s1_dense);
        Tensor grad_feat_main =
            backprop_summary(m.s1_main, cache.s1_main_c, cache.s1_T, grad_sum, grads.s1_main);
        Tensor grad_gathered =
            backprop_summary(m.s1_gather, cache.s1_gather_c, cfg.anchors.size(), g2,
                             grads.s1_gather);
        Tensor grad_feat = grad_feat_main;
        for (std::size_t i = 0; i < cfg.anchors.size(); ++i)
            for (std::size_t j = 0; j < cfg.D1; ++j)
                grad_feat.at2(cfg.anchors[i], j) += grad_gathered.at2(i, j);
        if (!cfg.precomputed_features) {
            TinyCNNGrads bg = tinycnn_backward(m.backboneA, cache.bbA, grad_feat);
            grads.backboneA = std::move(bg.param_grads);
        }
    }

    if (cfg.use_stream2) {
        Tensor g1 = take(cfg.dense_width);
        Tensor g2 = take(cfg.hidden);
        Tensor grad_sum = dense_backward(m.s2_dense, cache.s2_dense_c, g1, grads.s2_dense);
        if (cache.s2_dropout_mask.size() > 0) grad_sum = mul(grad_sum, cache.s2_dropout_mask);
        Tensor grad_feat_main =
            backprop_summary(m.s2_main, cache.s2_main_c, cache.s2_T, grad_sum, grads.s2_main);
        Tensor grad_gathered =
            backprop_summary(m.s2_gather, cache.s2_gather_c, cfg.anchors.size(), g2,
                             grads.s2_gather);
        Tensor grad_feat = grad_feat_main;
        for (std::size_t i = 0; i < cfg.anchors.size(); ++i)
            for (std::size_t j = 0; j < cfg.D2; ++j)
                grad_feat.at2(cfg.anchors[i], j) += grad_gathered.at2(i, j);
        if (!cfg.precomputed_features) {
            TinyCNNGrads bg = tinycnn_backward(m.backboneB, cache.bbB, grad_feat);
            grads.backboneB = std::move(bg.param_grads);
        }
    }

    if (cfg.use_stream3) {
        Tensor g3 = take(cfg.hidden);
        backprop_summary(m.s3_stack, cache.s3_c, cache.s3_T, g3, grads.s3_stack);
    }

    return grads;
}

}  // namespace tristream
