#pragma once

// Loss, optimizers, the training loop, confusion-matrix evaluation and
// per-class metric reporting.

#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tristream/model.hpp"
#include "tristream/tensor.hpp"

namespace tristream {

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

struct LossResult {
    double loss = 0;
    Tensor grad_logits;  // p - onehot(label)
};

inline LossResult cross_entropy(const Tensor& probabilities, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= probabilities.size())
        throw DataError("cross_entropy: label " + std::to_string(label) + " out of range for K=" +
                        std::to_string(probabilities.size()));
    LossResult r;
    double p = probabilities.data[label];
    r.loss = -std::log(std::max(p, 1e-300));
    r.grad_logits = probabilities;
    r.grad_logits.data[label] -= 1.0;
    return r;
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

enum class OptimizerKind { SGD, Adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct OptimizerState {
    std::size_t step = 0;
    std::vector<Tensor> m, v;  // Adam moments, aligned with the param list
};

using ParamRefs = std::vector<std::pair<std::string, Tensor*>>;

inline ParamRefs collect_params(ThreeStreamParams& model) {
    ParamRefs refs;
    model.visit_named([&](const std::string& n, Tensor& t) { refs.emplace_back(n, &t); });
    return refs;
}

inline void optimizer_step(const ParamRefs& params, const ParamRefs& grads, OptimizerState& state,
                           const OptimizerConfig& cfg) {
    if (params.size() != grads.size())
        throw ShapeError("optimizer_step: param/grad list size mismatch");
    if (cfg.kind == OptimizerKind::Adam && state.m.empty()) {
        for (auto& [n, t] : params) {
            state.m.push_back(Tensor::zeros(t->shape));
            state.v.push_back(Tensor::zeros(t->shape));
        }
    }
    ++state.step;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor* p = params[i].second;
        const Tensor* g = grads[i].second;
        if (!p->same_shape(*g))
            throw ShapeError("optimizer_step: shape mismatch for " + params[i].first + ", " +
                             shape_to_string(p->shape) + " vs " + shape_to_string(g->shape));
        if (cfg.kind == OptimizerKind::SGD) {
            for (std::size_t j = 0; j < p->size(); ++j) p->data[j] -= cfg.lr * g->data[j];
        } else {
            Tensor& m = state.m[i];
            Tensor& v = state.v[i];
            double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
            double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
            for (std::size_t j = 0; j < p->size(); ++j) {
                double gj = g->data[j];
                m.data[j] = cfg.beta1 * m.data[j] + (1.0 - cfg.beta1) * gj;
                v.data[j] = cfg.beta2 * v.data[j] + (1.0 - cfg.beta2) * gj * gj;
                double mhat = m.data[j] / bc1;
                double vhat = v.data[j] / bc2;
                p->data[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct ConfusionMatrix {
    int K = 0;
    std::vector<long> counts;  // K x K, rows = true class, cols = predicted

    explicit ConfusionMatrix(int k = 0) : K(k), counts(static_cast<std::size_t>(k) * k, 0) {}

    long& at(int truth, int pred) { return counts[truth * K + pred]; }
    long at(int truth, int pred) const { return counts[truth * K + pred]; }

    long total() const {
        long t = 0;
        for (long c : counts) t += c;
        return t;
    }
    long trace() const {
        long t = 0;
        for (int i = 0; i < K; ++i) t += at(i, i);
        return t;
    }
};

// argmax with ties broken toward the lower class index
inline int predict_class(const Tensor& probs) {
    int best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
        if (probs.data[i] > probs.data[best]) best = static_cast<int>(i);
    return best;
}

inline ConfusionMatrix evaluate(const ThreeStreamParams& model,
                                const std::vector<GestureSample>& samples) {
    ConfusionMatrix cm(model.config.K);
    for (const auto& s : samples) {
        ModelInput in = input_from_sample(model.config, s);
        Tensor probs = model_forward(model, in, false, nullptr, nullptr);
        ++cm.at(s.label, predict_class(probs));
    }
    return cm;
}

struct ClassMetrics {
    std::string name;
    double precision = 0, recall = 0, f_score = 0, accuracy = 0;  // percent
    bool defined = true;
};

struct MetricsReport {
    std::vector<ClassMetrics> per_class;
    double macro_precision = 0, macro_recall = 0, macro_f_score = 0, macro_accuracy = 0;
    double overall_accuracy = 0;  // trace/total, percent
    std::vector<std::string> warnings;
};

inline double f_score_of(double precision, double recall) {
    if (precision + recall == 0) return 0;
    return 2.0 * precision * recall / (precision + recall);
}

inline MetricsReport compute_metrics(const ConfusionMatrix& cm,
                                     const std::vector<std::string>& class_names) {
    if (cm.total() == 0) throw DataError("compute_metrics: empty confusion matrix");
    MetricsReport rep;
    double psum = 0, rsum = 0, fsum = 0, asum = 0;
    int defined = 0;
    for (int c = 0; c < cm.K; ++c) {
        ClassMetrics m;
        m.name = c < static_cast<int>(class_names.size()) ? class_names[c]
                                                          : "class" + std::to_string(c);
        long tp = cm.at(c, c);
        long col = 0, row = 0;
        for (int i = 0; i < cm.K; ++i) {
            col += cm.at(i, c);
            row += cm.at(c, i);
        }
        long fp = col - tp, fn = row - tp;
        if (row == 0 && col == 0) {
            m.defined = false;
            rep.warnings.push_back("class '" + m.name +
                                   "' has no true or predicted samples; metrics undefined, "
                                   "excluded from macro averages");
        } else {
            m.precision = tp + fp == 0 ? 0.0 : 100.0 * tp / static_cast<double>(tp + fp);
            m.recall = tp + fn == 0 ? 0.0 : 100.0 * tp / static_cast<double>(tp + fn);
            m.f_score = f_score_of(m.precision, m.recall);
            m.accuracy = m.recall;  // per-class accuracy reported as recall
            psum += m.precision;
            rsum += m.recall;
            fsum += m.f_score;
            asum += m.accuracy;
            ++defined;
        }
        rep.per_class.push_back(m);
    }
    if (defined > 0) {
        rep.macro_precision = psum / defined;
        rep.macro_recall = rsum / defined;
        rep.macro_f_score = fsum / defined;
        rep.macro_accuracy = asum / defined;
    }
    rep.overall_accuracy = 100.0 * cm.trace() / static_cast<double>(cm.total());
    return rep;
}

// Human-readable per-class table with a macro-average row.
inline std::string format_report_table(const MetricsReport& rep) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << std::left << std::setw(14) << "Gesture" << std::right << std::setw(12) << "Precision"
       << std::setw(10) << "Recall" << std::setw(11) << "F-score" << std::setw(11) << "Accuracy"
       << "\n";
    for (const auto& m : rep.per_class) {
        os << std::left << std::setw(14) << m.name << std::right;
        if (m.defined)
            os << std::setw(12) << m.precision << std::setw(10) << m.recall << std::setw(11)
               << m.f_score << std::setw(11) << m.accuracy << "\n";
        else
            os << std::setw(12) << "-" << std::setw(10) << "-" << std::setw(11) << "-"
               << std::setw(11) << "-" << "\n";
    }
    os << std::left << std::setw(14) << "Average" << std::right << std::setw(12)
       << rep.macro_precision << std::setw(10) << rep.macro_recall << std::setw(11)
       << rep.macro_f_score << std::setw(11) << rep.macro_accuracy << "\n";
    os << "Overall accuracy: " << rep.overall_accuracy << "\n";
    for (const auto& w : rep.warnings) os << "warning: " << w << "\n";
    return os.str();
}

// Machine-readable key-value document.
inline std::string format_report_kv(const MetricsReport& rep) {
    std::ostringstream os;
    os << std::setprecision(17);
    for (const auto& m : rep.per_class) {
        std::string key = class_dir_name(m.name);
        if (!m.defined) {
            os << "class." << key << ".defined=0\n";
            continue;
        }
        os << "class." << key << ".precision=" << m.precision << "\n";
        os << "class." << key << ".recall=" << m.recall << "\n";
        os << "class." << key << ".f_score=" << m.f_score << "\n";
        os << "class." << key << ".accuracy=" << m.accuracy << "\n";
    }
    os << "macro.precision=" << rep.macro_precision << "\n";
    os << "macro.recall=" << rep.macro_recall << "\n";
    os << "macro.f_score=" << rep.macro_f_score << "\n";
    os << "macro.accuracy=" << rep.macro_accuracy << "\n";
    os << "overall.accuracy=" << rep.overall_accuracy << "\n";
    return os.str();
}

inline MetricsReport parse_report_kv(const std::string& text,
                                     const std::vector<std::string>& class_names) {
    std::map<std::string, double> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = std::stod(line.substr(eq + 1));
    }
    MetricsReport rep;
    for (const auto& name : class_names) {
        std::string key = class_dir_name(name);
        ClassMetrics m;
        m.name = name;
        if (kv.count("class." + key + ".defined")) {
            m.defined = false;
        } else {
            m.precision = kv.at("class." + key + ".precision");
            m.recall = kv.at("class." + key + ".recall");
            m.f_score = kv.at("class." + key + ".f_score");
            m.accuracy = kv.at("class." + key + ".accuracy");
        }
        rep.per_class.push_back(m);
    }
    rep.macro_precision = kv.at("macro.precision");
    rep.macro_recall = kv.at("macro.recall");
    rep.macro_f_score = kv.at("macro.f_score");
    rep.macro_accuracy = kv.at("macro.accuracy");
    rep.overall_accuracy = kv.at("overall.accuracy");
    return rep;
}

inline std::string format_confusion_matrix(const ConfusionMatrix& cm,
                                           const std::vector<std::string>& class_names) {
    std::ostringstream os;
    os << "true\\pred";
    for (int c = 0; c < cm.K; ++c) os << "\t" << class_dir_name(class_names.at(c));
    os << "\n";
    for (int r = 0; r < cm.K; ++r) {
        os << class_dir_name(class_names.at(r));
        for (int c = 0; c < cm.K; ++c) os << "\t" << cm.at(r, c);
        os << "\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    double lr = 1e-3;
    int epochs = 50;       // target epoch count (absolute, for resumed runs)
    int start_epoch = 0;
    int batch_size = 16;
    std::uint64_t seed = 0;
    OptimizerKind optimizer = OptimizerKind::Adam;
    int patience = 10;  // early stop on validation accuracy
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0, train_acc = 0, val_loss = 0, val_acc = 0;
};

using History = std::vector<EpochStats>;

inline void save_history(const std::string& path, const History& h) {
    std::ofstream out(path);
    if (!out) throw DataError(path + ": cannot write history");
    out << "epoch\ttrain_loss\ttrain_acc\tval_loss\tval_acc\n";
    out << std::setprecision(17);
    for (const auto& e : h)
        out << e.epoch << "\t" << e.train_loss << "\t" << e.train_acc << "\t" << e.val_loss
            << "\t" << e.val_acc << "\n";
}

struct TrainCallbacks {
    // called after each epoch; return false to stop (used by overfit runs)
    std::function<bool(const EpochStats&)> on_epoch;
};

inline std::pair<double, double> dataset_loss_acc(const ThreeStreamParams& model,
                                                  const std::vector<GestureSample>& samples) {
    double loss = 0;
    long correct = 0;
    for (const auto& s : samples) {
        ModelInput in = input_from_sample(model.config, s);
        Tensor probs = model_forward(model, in, false, nullptr, nullptr);
        loss += cross_entropy(probs, s.label).loss;
        if (predict_class(probs) == s.label) ++correct;
    }
    double n = static_cast<double>(samples.size());
    return {loss / n, 100.0 * correct / n};
}

// Mini-batch loop with seeded shuffling. Gradient accumulation within a
// batch runs in a fixed order, so runs are bit-reproducible.
inline History train(ThreeStreamParams& model, const std::vector<GestureSample>& train_set,
                     const std::vector<GestureSample>& val_set, const TrainConfig& cfg,
                     const TrainCallbacks& callbacks = {}) {
    if (train_set.empty()) throw DataError("train: empty training set");
    ParamRefs params = collect_params(model);
    OptimizerConfig ocfg;
    ocfg.kind = cfg.optimizer;
    ocfg.lr = cfg.lr;
    OptimizerState ostate;
    History history;

    ThreeStreamParams best = model;
    double best_val = -1;
    int since_best = 0;

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = cfg.start_epoch; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng = substream(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
        shuffle(order, shuffle_rng);
        double epoch_loss = 0;
        long correct = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t end = std::min(order.size(), start + cfg.batch_size);
            ThreeStreamParams batch_grads = model.zeros_like();
            ParamRefs grad_refs = collect_params(batch_grads);
            for (std::size_t bi = start; bi < end; ++bi) {
                const GestureSample& s = train_set[order[bi]];
                ModelInput in = input_from_sample(model.config, s);
                Rng dropout_rng = substream(
                    cfg.seed, "dropout",
                    static_cast<std::uint64_t>(epoch) * 1000000ULL + order[bi]);
                ModelCache cache;
                Tensor probs = model_forward(model, in, true, &dropout_rng, &cache);
                LossResult lr = cross_entropy(probs, s.label);
                if (!std::isfinite(lr.loss))
                    throw NumericError("train: non-finite loss at epoch " +
                                       std::to_string(epoch) + ", sample '" + s.sample_id + "'");
                epoch_loss += lr.loss;
                if (predict_class(probs) == s.label) ++correct;
                ThreeStreamParams g = model_backward(model, cache, lr.grad_logits);
                ParamRefs gr = collect_params(g);
                for (std::size_t i = 0; i < gr.size(); ++i)
                    axpy(1.0, *gr[i].second, *grad_refs[i].second);
            }
            double inv = 1.0 / static_cast<double>(end - start);
            for (auto& [n, t] : grad_refs)
                for (double& v : t->data) v *= inv;
            optimizer_step(params, grad_refs, ostate, ocfg);
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss / static_cast<double>(train_set.size());
        stats.train_acc = 100.0 * correct / static_cast<double>(train_set.size());
        if (!val_set.empty()) {
            auto [vl, va] = dataset_loss_acc(model, val_set);
            stats.val_loss = vl;
            stats.val_acc = va;
            if (va > best_val) {
                best_val = va;
                best = model;
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                history.push_back(stats);
                break;
            }
        }
        history.push_back(stats);
        if (callbacks.on_epoch && !callbacks.on_epoch(stats)) break;
    }
    if (!val_set.empty() && best_val >= 0) model = best;
    return history;
}

}  // namespace tristream
