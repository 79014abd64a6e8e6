// tristream: synthetic data generation, training, evaluation, prediction and
// gradient checking for the three-stream gesture classifier.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "tristream/checkpoint.hpp"
#include "tristream/dataio.hpp"
#include "tristream/model.hpp"
#include "tristream/traineval.hpp"

using namespace tristream;
namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

// ---------------------------------------------------------------------------
// Flat key=value run configuration
// ---------------------------------------------------------------------------

const std::set<std::string> kKnownKeys = {
    "seed",        "data.dir",     "out.dir",   "image_size", "channels",
    "T",           "anchors",      "D1",        "D2",         "hidden",
    "dense_width", "dropout",      "K",         "streams",    "optimizer",
    "lr",          "epochs",       "batch",     "patience",   "augment.flip",
    "augment.rotate", "augment.brightness", "precomputed_features"};

struct RunConfig {
    std::map<std::string, std::string> kv;

    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = kv.find(key);
        return it == kv.end() ? fallback : it->second;
    }
    double num(const std::string& key, double fallback) const {
        auto it = kv.find(key);
        return it == kv.end() ? fallback : std::stod(it->second);
    }
    bool flag(const std::string& key, bool fallback) const {
        auto it = kv.find(key);
        if (it == kv.end()) return fallback;
        return it->second == "1" || it->second == "true" || it->second == "yes";
    }

    void set_pair(const std::string& spec) {
        auto eq = spec.find('=');
        if (eq == std::string::npos)
            throw DataError("config override '" + spec + "' is not key=value");
        std::string key = spec.substr(0, eq);
        if (!kKnownKeys.count(key)) throw DataError("unknown config key '" + key + "'");
        kv[key] = spec.substr(eq + 1);
    }

    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError(path + ": cannot open config file");
        std::string line;
        while (std::getline(in, line)) {
            auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            while (!line.empty() && (line.back() == ' ' || line.back() == '\r')) line.pop_back();
            if (line.empty()) continue;
            set_pair(line);
        }
    }

    ThreeStreamConfig model_config() const {
        ThreeStreamConfig c;
        c.T = static_cast<std::size_t>(num("T", 30));
        c.image_size = static_cast<std::size_t>(num("image_size", 128));
        c.channels = static_cast<std::size_t>(num("channels", 1));
        c.D1 = static_cast<std::size_t>(num("D1", 64));
        c.D2 = static_cast<std::size_t>(num("D2", 64));
        c.hidden = static_cast<std::size_t>(num("hidden", 64));
        c.dense_width = static_cast<std::size_t>(num("dense_width", 64));
        c.dropout_rate = num("dropout", 0.3);
        c.K = static_cast<int>(num("K", 10));
        c.precomputed_features = flag("precomputed_features", false);
        std::string anchors = get("anchors", "0,7,15,22,29");
        c.anchors.clear();
        std::istringstream as(anchors);
        std::string tok;
        while (std::getline(as, tok, ',')) c.anchors.push_back(std::stoul(tok));
        std::string streams = get("streams", "1,2,3");
        c.use_stream1 = streams.find('1') != std::string::npos;
        c.use_stream2 = streams.find('2') != std::string::npos;
        c.use_stream3 = streams.find('3') != std::string::npos;
        c.validate();
        return c;
    }

    TrainConfig train_config() const {
        TrainConfig t;
        t.lr = num("lr", 1e-3);
        t.epochs = static_cast<int>(num("epochs", 50));
        t.batch_size = static_cast<int>(num("batch", 16));
        t.seed = static_cast<std::uint64_t>(num("seed", 0));
        t.patience = static_cast<int>(num("patience", 10));
        std::string opt = get("optimizer", "adam");
        if (opt == "adam") t.optimizer = OptimizerKind::Adam;
        else if (opt == "sgd") t.optimizer = OptimizerKind::SGD;
        else throw DataError("unknown optimizer '" + opt + "'");
        return t;
    }

    AugmentConfig augment_config() const {
        AugmentConfig a;
        a.flip = flag("augment.flip", false);
        a.rotate = flag("augment.rotate", false);
        a.brightness = flag("augment.brightness", false);
        a.seed = static_cast<std::uint64_t>(num("seed", 0));
        return a;
    }

    void echo(const std::string& path) const {
        std::ofstream out(path);
        for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
    }
};

std::vector<GestureSample> gather(const Dataset& ds, const std::vector<std::size_t>& idx) {
    std::vector<GestureSample> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(ds.samples[i]);
    return out;
}

SplitResult run_split(const Dataset& ds, std::uint64_t seed, int K) {
    std::vector<SplitItem> items;
    items.reserve(ds.samples.size());
    for (const auto& s : ds.samples) items.push_back({s.label, s.root_id});
    SplitSpec spec;
    spec.seed = seed;
    return split_dataset(items, K, spec);
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_synth(int n_per_class, std::uint64_t seed, const std::string& out_dir, int classes,
              std::size_t T, std::size_t size) {
    SynthConfig cfg;
    cfg.per_class = n_per_class;
    cfg.num_classes = classes;
    cfg.T = T;
    cfg.image_size = size;
    cfg.seed = seed;
    Dataset ds = synthesize_gestures(cfg);
    save_dataset(out_dir, ds);
    std::map<int, int> counts;
    for (const auto& s : ds.samples) ++counts[s.label];
    for (const auto& [c, n] : counts)
        std::cout << ds.class_names[c] << ": " << n << " samples\n";
    std::cout << "wrote " << ds.samples.size() << " samples to " << out_dir << "\n";
    return 0;
}

int cmd_train(const RunConfig& rc, const std::string& resume_path) {
    std::string data_dir = rc.get("data.dir", "");
    std::string out_dir = rc.get("out.dir", "out");
    if (data_dir.empty()) throw DataError("config: data.dir is required for train");
    ThreeStreamConfig mc = rc.model_config();
    TrainConfig tc = rc.train_config();
    AugmentConfig ac = rc.augment_config();

    Dataset ds = load_dataset(data_dir, mc.image_size);
    if (ac.flip) apply_flip_augmentation(ds.samples);
    SplitResult split = run_split(ds, tc.seed, mc.K);
    std::vector<GestureSample> train_set = gather(ds, split.train);
    std::vector<GestureSample> val_set = gather(ds, split.val);
    AugmentConfig post = ac;
    post.flip = false;
    train_set = augment_training_set(train_set, post);

    fs::create_directories(out_dir);
    rc.echo(out_dir + "/resolved.cfg");
    {
        std::ofstream sp(out_dir + "/splits.tsv");
        sp << "sample_id\tsplit\n";
        for (auto i : split.train) sp << ds.samples[i].sample_id << "\ttrain\n";
        for (auto i : split.val) sp << ds.samples[i].sample_id << "\tval\n";
        for (auto i : split.test) sp << ds.samples[i].sample_id << "\ttest\n";
    }

    ThreeStreamParams model = ThreeStreamParams::create(mc);
    History prior;
    if (!resume_path.empty()) {
        Checkpoint ck = load_checkpoint(resume_path);
        model = std::move(ck.model);
        tc.start_epoch = ck.epoch + 1;
        std::ifstream hist(out_dir + "/history.tsv");
        if (hist) {
            std::string line;
            std::getline(hist, line);
            while (std::getline(hist, line)) {
                EpochStats e;
                std::istringstream is(line);
                is >> e.epoch >> e.train_loss >> e.train_acc >> e.val_loss >> e.val_acc;
                prior.push_back(e);
            }
        }
    } else {
        Rng init_rng = substream(tc.seed, "init");
        model.init(init_rng);
    }
    std::cout << "training on " << train_set.size() << " samples (" << val_set.size()
              << " validation), " << model.param_count() << " parameters\n";

    TrainCallbacks cb;
    cb.on_epoch = [](const EpochStats& e) {
        std::cout << "epoch " << e.epoch << ": train loss " << e.train_loss << ", train acc "
                  << e.train_acc << "%, val acc " << e.val_acc << "%\n";
        return true;
    };
    History hist = train(model, train_set, val_set, tc, cb);
    int last_epoch = hist.empty() ? tc.start_epoch : hist.back().epoch;
    prior.insert(prior.end(), hist.begin(), hist.end());
    save_history(out_dir + "/history.tsv", prior);
    save_checkpoint(out_dir + "/checkpoint.ckpt", model, last_epoch);
    std::cout << "wrote " << out_dir << "/checkpoint.ckpt\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& out_dir, const std::string& splits_path,
             const std::string& which_split) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    Dataset ds = load_dataset(data_dir, ck.model.config.image_size);
    for (const auto& s : ds.samples)
        if (s.label >= ck.model.config.K)
            throw DataError("dataset class index " + std::to_string(s.label) +
                            " exceeds checkpoint K=" + std::to_string(ck.model.config.K));
    std::vector<GestureSample> eval_set;
    if (!splits_path.empty()) {
        std::ifstream sp(splits_path);
        if (!sp) throw DataError(splits_path + ": cannot open splits file");
        std::set<std::string> wanted;
        std::string line;
        std::getline(sp, line);
        while (std::getline(sp, line)) {
            auto tab = line.find('\t');
            if (tab == std::string::npos) continue;
            if (line.substr(tab + 1) == which_split) wanted.insert(line.substr(0, tab));
        }
        for (const auto& s : ds.samples)
            if (wanted.count(s.sample_id)) eval_set.push_back(s);
    } else {
        eval_set = ds.samples;
    }
    if (eval_set.empty()) throw DataError("evaluation set is empty, no report written");

    ConfusionMatrix cm = evaluate(ck.model, eval_set);
    MetricsReport rep = compute_metrics(cm, ds.class_names);
    fs::create_directories(out_dir);
    std::ofstream(out_dir + "/confusion.tsv") << format_confusion_matrix(cm, ds.class_names);
    std::ofstream(out_dir + "/report.txt") << format_report_table(rep);
    std::ofstream(out_dir + "/report.kv") << format_report_kv(rep);
    std::cout << format_report_table(rep);
    return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& sample_dir) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    const ThreeStreamConfig& cfg = ck.model.config;
    std::vector<Tensor> raw;
    for (std::size_t t = 0;; ++t) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04zu.png", t);
        std::string path = sample_dir + "/" + name;
        if (!fs::exists(path)) break;
        raw.push_back(png_read_frame(path));
    }
    if (raw.empty()) throw DataError(sample_dir + ": no frame_%04d.png files found");
    if (raw.size() != cfg.T)
        throw DataError(sample_dir + ": sample has " + std::to_string(raw.size()) +
                        " frames, model expects T=" + std::to_string(cfg.T));
    GestureSample s;
    s.frames = resize_normalize(raw, cfg.image_size, cfg.image_size);
    std::string kp_path = sample_dir + "/keypoints.kp";
    if (fs::exists(kp_path)) s.keypoints = load_keypoints(kp_path).points;
    else if (cfg.use_stream3)
        throw DataError(sample_dir + ": stream 3 is enabled but keypoints.kp is missing");
    s.sample_id = sample_dir;

    ModelInput in = input_from_sample(cfg, s);
    Tensor probs = model_forward(ck.model, in, false, nullptr, nullptr);
    auto names = gesture_class_names();
    int pred = predict_class(probs);
    std::cout << "prediction: " << names.at(pred) << "\n";
    for (int c = 0; c < cfg.K; ++c)
        std::cout << "  " << names.at(c) << ": " << probs.data[c] << "\n";
    return 0;
}

// Gradient-check suites over small deterministic configurations.
int cmd_gradcheck(const std::string& scope) {
    bool all = scope == "all";
    bool ok = true;
    auto run = [&](const std::string& name, const GradCheckReport& rep, double tol) {
        bool pass = rep.passed(tol);
        ok = ok && pass;
        std::printf("%-24s %5zu params  max rel err %.3e  %s\n", name.c_str(), rep.checked,
                    rep.max_rel_error, pass ? "PASS" : "FAIL");
        if (!pass) {
            std::printf("  %zu failing entries; worst: %s[%zu] analytic %.6e numeric %.6e\n",
                        rep.failures.size(), rep.worst.name.c_str(), rep.worst.index,
                        rep.worst.analytic, rep.worst.numeric);
            for (std::size_t i = 0; i < rep.failures.size() && i < 8; ++i) {
                const auto& e = rep.failures[i];
                std::printf("  fail %s[%zu] analytic %.6e numeric %.6e rel %.3e\n",
                            e.name.c_str(), e.index, e.analytic, e.numeric, e.rel_error);
            }
        }
    };

    auto fill = [](Tensor& t, Rng& rng, double lo = -0.5, double hi = 0.5) {
        for (double& v : t.data) v = rng.uniform(lo, hi);
    };

    auto check_stack = [&](const std::string& name, RecurrentStack stack, std::size_t T,
                           std::size_t d, std::uint64_t seed) {
        Rng rng(seed);
        stack.init(rng);
        Tensor inputs({T, d});
        fill(inputs, rng);
        Tensor weights({T, stack.hidden_width()});
        fill(weights, rng);
        auto forward = [&]() {
            Tensor out = stack_forward(stack, inputs, nullptr);
            return dot(out, weights);
        };
        StackCache cache;
        Tensor out = stack_forward(stack, inputs, &cache);
        StackGrads grads = stack_backward(stack, cache, weights);
        std::vector<std::pair<std::string, Tensor*>> prefs;
        std::vector<std::pair<std::string, const Tensor*>> grefs;
        stack.visit_named(name, [&](const std::string& n, Tensor& t) { prefs.emplace_back(n, &t); });
        grads.param_grads.visit_named(name, [&](const std::string& n, Tensor& t) {
            grefs.emplace_back(n, &t);
        });
        run(name, gradient_check(prefs, grefs, forward), 1e-4);
    };

    if (all || scope == "gru") {
        RecurrentStack s;
        s.layers = {RecurrentLayer::make_gru(3, 4)};
        check_stack("gru", s, 5, 3, 11);
    }
    if (all || scope == "lstm") {
        RecurrentStack s;
        s.layers = {RecurrentLayer::make_lstm(3, 4)};
        check_stack("lstm", s, 5, 3, 12);
    }
    if (all || scope == "stack") {
        RecurrentStack s;
        s.layers = {RecurrentLayer::make_lstm(8, 8), RecurrentLayer::make_gru(8, 8),
                    RecurrentLayer::make_lstm(8, 8)};
        check_stack("stack3", s, 8, 8, 13);
    }
    if (all || scope == "cnn") {
        Rng rng(14);
        auto fill = [](Tensor& t, Rng& rng) {
            for (double& v : t.data) v = rng.uniform(-0.5, 0.5);
        };
        TinyCNNParams cnn = TinyCNNParams::create(8, 8, 1, 4);
        cnn.init(rng);
        Tensor frames({2, 8, 8, 1});
        fill(frames, rng);
        Tensor weights({2, 4});
        fill(weights, rng);
        auto forward = [&]() { return dot(tinycnn_forward(cnn, frames, nullptr), weights); };
        TinyCNNCache cache;
        tinycnn_forward(cnn, frames, &cache);
        TinyCNNGrads grads = tinycnn_backward(cnn, cache, weights);
        std::vector<std::pair<std::string, Tensor*>> prefs;
        std::vector<std::pair<std::string, const Tensor*>> grefs;
        cnn.visit([&](const std::string& n, Tensor& t) { prefs.emplace_back(n, &t); });
        grads.param_grads.visit(
            [&](const std::string& n, Tensor& t) { grefs.emplace_back(n, &t); });
        run("tinycnn", gradient_check(prefs, grefs, forward), 1e-4);
    }
    if (all || scope == "model") {
        ThreeStreamConfig cfg;
        cfg.T = 4;
        cfg.anchors = {0, 1, 3};
        cfg.image_size = 16;
        cfg.channels = 1;
        cfg.D1 = cfg.D2 = 6;
        cfg.hidden = 8;
        cfg.dense_width = 6;
        cfg.dropout_rate = 0.0;
        cfg.K = 3;
        ThreeStreamParams model = ThreeStreamParams::create(cfg);
        Rng rng(15);
        model.init(rng);
        // Boost weights and randomize biases: keeps every gradient well above
        // the finite-difference noise floor without saturating the gates.
        model.visit_named([&](const std::string& n, Tensor& t) {
            bool is_bias = t.ndim() == 1;
            for (double& v : t.data)
                v = is_bias ? rng.uniform(-0.4, 0.4) : 1.8 * v;
        });
        Tensor frames({cfg.T, 16, 16, 1});
        for (double& v : frames.data) v = rng.uniform(0.0, 1.0);
        Tensor kp({cfg.T, kKeypointWidth});
        for (double& v : kp.data) v = rng.uniform(0.0, 1.0);
        ModelInput in;
        in.frames = &frames;
        in.keypoints = &kp;
        int label = 1;
        auto forward = [&]() {
            Tensor probs = model_forward(model, in, false, nullptr, nullptr);
            return cross_entropy(probs, label).loss;
        };
        ModelCache cache;
        Tensor probs = model_forward(model, in, false, nullptr, &cache);
        ThreeStreamParams grads = model_backward(model, cache, cross_entropy(probs, label).grad_logits);
        std::vector<std::pair<std::string, Tensor*>> prefs;
        std::vector<std::pair<std::string, const Tensor*>> grefs;
        model.visit_named([&](const std::string& n, Tensor& t) { prefs.emplace_back(n, &t); });
        grads.visit_named([&](const std::string& n, Tensor& t) { grefs.emplace_back(n, &t); });
        run("three-stream model", gradient_check(prefs, grefs, forward), 1e-4);
    }
    if (!all && scope != "gru" && scope != "lstm" && scope != "stack" && scope != "cnn" &&
        scope != "model")
        throw CLI::ValidationError("unknown gradcheck scope '" + scope + "'");
    return ok ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"three-stream dynamic hand-gesture sequence classifier"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    std::string out_dir = "out";
    std::string config_path;
    std::vector<std::string> overrides;

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic gesture dataset");
    int n_per_class = 0;
    int classes = 10;
    std::size_t synth_T = 30, synth_size = 64;
    synth->add_option("--n", n_per_class, "samples per class")->required();
    synth->add_option("--seed", seed, "root seed");
    synth->add_option("--out", out_dir, "output dataset directory")->required();
    synth->add_option("--classes", classes, "number of classes (2-10)");
    synth->add_option("--frames", synth_T, "frames per sample");
    synth->add_option("--size", synth_size, "square image size");

    // train
    auto* tr = app.add_subcommand("train", "train a model from a config file");
    std::string resume;
    tr->add_option("--config", config_path, "key=value config file");
    tr->add_option("--set", overrides, "config overrides key=value");
    tr->add_option("--seed", seed, "root seed override");
    tr->add_option("--out", out_dir, "output directory override");
    tr->add_option("--resume", resume, "checkpoint to resume from");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string ckpt_path, data_dir, splits_path, which_split = "test";
    ev->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    ev->add_option("--data", data_dir, "dataset directory")->required();
    ev->add_option("--out", out_dir, "report directory");
    ev->add_option("--splits", splits_path, "splits.tsv from training (optional)");
    ev->add_option("--split", which_split, "which split to evaluate when --splits is given");

    // predict
    auto* pr = app.add_subcommand("predict", "classify a single sample directory");
    std::string sample_dir;
    pr->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    pr->add_option("--sample", sample_dir, "sample directory")->required();

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    std::string scope = "all";
    gc->add_option("--scope", scope, "gru|lstm|stack|cnn|model|all");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*synth) {
            if (n_per_class <= 0) {
                std::cerr << "usage error: --n must be positive\n";
                return kExitUsage;
            }
            return cmd_synth(n_per_class, seed, out_dir, classes, synth_T, synth_size);
        }
        if (*tr) {
            RunConfig rc;
            if (!config_path.empty()) rc.load_file(config_path);
            for (const auto& o : overrides) rc.set_pair(o);
            for (auto* opt : {tr->get_option("--seed")})
                if (!opt->empty()) rc.kv["seed"] = std::to_string(seed);
            if (!tr->get_option("--out")->empty()) rc.kv["out.dir"] = out_dir;
            return cmd_train(rc, resume);
        }
        if (*ev) return cmd_eval(ckpt_path, data_dir, out_dir, splits_path, which_split);
        if (*pr) return cmd_predict(ckpt_path, sample_dir);
        if (*gc) return cmd_gradcheck(scope);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const ShapeError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
