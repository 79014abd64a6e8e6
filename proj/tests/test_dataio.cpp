#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "oracles.hpp"
#include "tristream/dataio.hpp"

using namespace tristream;
namespace fs = std::filesystem;

namespace {

GestureSample make_sample(std::size_t T, std::size_t S, Rng& rng, const std::string& id) {
    GestureSample s;
    s.frames = Tensor({T, S, S, 1});
    for (double& v : s.frames.data) v = rng.next_double();
    s.keypoints = Tensor({T, kKeypointWidth});
    for (std::size_t t = 0; t < T; ++t) {
        double* row = s.keypoints->data.data() + t * kKeypointWidth;
        for (std::size_t j = 0; j < kKeypointWidth; ++j) row[j] = rng.next_double();
    }
    s.sample_id = id;
    s.root_id = id;
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

TEST_CASE("resize_normalize maps 0-255 frames into [0,1] at the target size") {
    Rng rng(80);
    std::vector<Tensor> raw;
    for (int t = 0; t < 3; ++t) {
        Tensor f({20, 30, 1});
        for (double& v : f.data) v = std::floor(rng.uniform(0, 256));
        raw.push_back(f);
    }
    Tensor out = resize_normalize(raw, 16, 16);
    REQUIRE(out.shape == std::vector<std::size_t>{3, 16, 16, 1});
    for (double v : out.data) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
    }
}

TEST_CASE("resize at the native size is the identity") {
    Rng rng(81);
    Tensor f({8, 8, 1});
    for (double& v : f.data) v = rng.uniform(0, 255);
    Tensor r = bilinear_resize(f, 8, 8);
    for (std::size_t i = 0; i < f.size(); ++i)
        REQUIRE(r.data[i] == Catch::Approx(f.data[i]).margin(1e-12));
}

TEST_CASE("constant frames stay constant after resize") {
    std::vector<Tensor> raw = {Tensor::full({11, 17, 1}, 100.0)};
    Tensor out = resize_normalize(raw, 7, 7);
    for (double v : out.data) REQUIRE(v == Catch::Approx(100.0 / 255.0).margin(1e-12));
}

// ---------------------------------------------------------------------------
// Horizontal flip
// ---------------------------------------------------------------------------

TEST_CASE("pixel flip is an exact involution") {
    Rng rng(82);
    GestureSample s = make_sample(2, 6, rng, "a");
    GestureSample once = horizontal_flip(s);
    GestureSample twice = horizontal_flip(once);
    REQUIRE(twice.frames.data == s.frames.data);  // pure permutation, bit-exact
}

TEST_CASE("keypoint flip mirrors x, swaps pose pairs and hand blocks") {
    Rng rng(83);
    GestureSample s = make_sample(1, 4, rng, "a");
    double* row = s.keypoints->data.data();
    double nose_x = row[0];
    double left_sh_x = row[11 * 4], right_sh_x = row[12 * 4];
    double lh0_y = row[kLeftHandOffset + 1], rh0_y = row[kRightHandOffset + 1];

    GestureSample f = horizontal_flip(s);
    const double* fr = f.keypoints->data.data();
    REQUIRE(fr[0] == Catch::Approx(1.0 - nose_x).margin(1e-15));
    // left shoulder (11) takes the mirrored right shoulder (12) position
    REQUIRE(fr[11 * 4] == Catch::Approx(1.0 - right_sh_x).margin(1e-15));
    REQUIRE(fr[12 * 4] == Catch::Approx(1.0 - left_sh_x).margin(1e-15));
    // hand blocks swap; y channels move unchanged
    REQUIRE(fr[kLeftHandOffset + 1] == rh0_y);
    REQUIRE(fr[kRightHandOffset + 1] == lh0_y);
}

TEST_CASE("keypoint flip is an involution and keeps lineage") {
    Rng rng(84);
    GestureSample s = make_sample(3, 4, rng, "orig0");
    GestureSample twice = horizontal_flip(horizontal_flip(s));
    for (std::size_t i = 0; i < s.keypoints->size(); ++i)
        REQUIRE(twice.keypoints->data[i] == Catch::Approx(s.keypoints->data[i]).margin(1e-15));

    GestureSample f = horizontal_flip(s);
    REQUIRE(f.sample_id == "orig0_flip");
    REQUIRE(f.root_id == "orig0");
    REQUIRE(f.provenance == Provenance::Flipped);
}

TEST_CASE("keypoint flip is bit-exact involutive on pipeline data") {
    // generator coordinates sit on the 2^-24 grid, where 1-x is exact
    SynthConfig sc;
    sc.num_classes = 3;
    sc.per_class = 2;
    sc.T = 5;
    sc.image_size = 16;
    sc.seed = 85;
    for (const auto& s : synthesize_gestures(sc).samples) {
        GestureSample twice = horizontal_flip(horizontal_flip(s));
        REQUIRE(twice.keypoints->data == s.keypoints->data);
        REQUIRE(twice.frames.data == s.frames.data);
    }
}

// ---------------------------------------------------------------------------
// Rotation
// ---------------------------------------------------------------------------

TEST_CASE("Rotation2D closed-form examples, clockwise screen convention") {
    Rotation2D r90(90.0);
    double x = 1.0, y = 0.5;  // point right of center
    r90.apply(x, y, 0.5, 0.5);
    REQUIRE(x == Catch::Approx(0.5).margin(1e-12));
    REQUIRE(y == Catch::Approx(1.0).margin(1e-12));  // moves to the bottom

    // inverse undoes apply
    r90.apply_inverse(x, y, 0.5, 0.5);
    REQUIRE(x == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(y == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("rotating a frame by 90 degrees moves top-middle to right-middle") {
    Tensor f = Tensor::zeros({3, 3, 1});
    f.data[0 * 3 + 1] = 1.0;  // top middle
    Tensor r = rotate_frame(f, 90.0);
    REQUIRE(r.data[1 * 3 + 2] == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(r.data[0 * 3 + 1] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("zero-degree rotation is the identity for pixels and keypoints") {
    Rng rng(85);
    GestureSample s = make_sample(2, 5, rng, "a");
    GestureSample r = rotate10(s, 0.0);
    for (std::size_t i = 0; i < s.frames.size(); ++i)
        REQUIRE(r.frames.data[i] == Catch::Approx(s.frames.data[i]).margin(1e-12));
    for (std::size_t i = 0; i < s.keypoints->size(); ++i)
        REQUIRE(r.keypoints->data[i] == Catch::Approx(s.keypoints->data[i]).margin(1e-12));
    REQUIRE(r.sample_id == "a_rot");
}

TEST_CASE("rotation keeps the center keypoint fixed and results in [0,1]") {
    Rng rng(86);
    GestureSample s = make_sample(1, 5, rng, "a");
    double* row = s.keypoints->data.data();
    row[0] = 0.5;
    row[1] = 0.5;
    GestureSample r = rotate10(s, 10.0);
    REQUIRE(r.keypoints->data[0] == Catch::Approx(0.5).margin(1e-12));
    REQUIRE(r.keypoints->data[1] == Catch::Approx(0.5).margin(1e-12));
    for (std::size_t p = 0; p < kPosePoints; ++p) {
        REQUIRE(r.keypoints->data[p * 4] >= 0.0);
        REQUIRE(r.keypoints->data[p * 4] <= 1.0);
    }
}

TEST_CASE("pixels and keypoints rotate consistently") {
    // single bright pixel at a known keypoint location; after rotation the
    // brightest pixel sits where the rotated keypoint points
    std::size_t S = 41;
    GestureSample s;
    s.frames = Tensor({1, S, S, 1});
    s.keypoints = Tensor({1, kKeypointWidth});
    double kx = 0.75, ky = 0.5;
    std::size_t px = static_cast<std::size_t>(kx * (S - 1));
    std::size_t py = static_cast<std::size_t>(ky * (S - 1));
    s.frames.data[py * S + px] = 1.0;
    (*s.keypoints).data[0] = kx;
    (*s.keypoints).data[1] = ky;
    s.keypoints->data[3] = 1.0;

    GestureSample r = rotate10(s, 30.0);
    double bx = r.keypoints->data[0], by = r.keypoints->data[1];
    // locate the brightest rotated pixel
    std::size_t best = 0;
    for (std::size_t i = 0; i < S * S; ++i)
        if (r.frames.data[i] > r.frames.data[best]) best = i;
    double fx = static_cast<double>(best % S) / (S - 1);
    double fy = static_cast<double>(best / S) / (S - 1);
    REQUIRE(std::abs(fx - bx) < 2.0 / S);
    REQUIRE(std::abs(fy - by) < 2.0 / S);
}

// ---------------------------------------------------------------------------
// Brightness
// ---------------------------------------------------------------------------

TEST_CASE("brightness scales and clamps") {
    GestureSample s;
    s.frames = Tensor({1, 1, 2, 1}, {0.5, 0.9});
    GestureSample b = adjust_brightness(s, 1.3);
    REQUIRE(b.frames.data[0] == Catch::Approx(0.65).margin(1e-12));
    REQUIRE(b.frames.data[1] == 1.0);  // clamped
    REQUIRE(b.sample_id == "_bright");

    GestureSample d = adjust_brightness(s, 0.5);
    REQUIRE(d.frames.data[0] == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("brightness factor outside [0.5, 1.5] is rejected") {
    GestureSample s;
    s.frames = Tensor::zeros({1, 1, 1, 1});
    REQUIRE_THROWS_AS(adjust_brightness(s, 0.4), DataError);
    REQUIRE_THROWS_AS(adjust_brightness(s, 1.6), DataError);
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

TEST_CASE("25500 samples split 15300/5100/5100 with per-class stratification") {
    std::vector<SplitItem> items;
    for (int c = 0; c < 10; ++c)
        for (int n = 0; n < 2550; ++n)
            items.push_back({c, "c" + std::to_string(c) + "_" + std::to_string(n)});
    SplitSpec spec;
    spec.seed = 7;
    SplitResult r = split_dataset(items, 10, spec);
    REQUIRE(r.train.size() == 15300);
    REQUIRE(r.val.size() == 5100);
    REQUIRE(r.test.size() == 5100);

    // disjoint and complete
    std::set<std::size_t> all;
    for (const auto* part : {&r.train, &r.val, &r.test})
        for (std::size_t i : *part) REQUIRE(all.insert(i).second);
    REQUIRE(all.size() == items.size());

    // per-class 1530/510/510
    std::map<int, int> train_counts;
    for (std::size_t i : r.train) ++train_counts[items[i].label];
    for (int c = 0; c < 10; ++c) REQUIRE(train_counts[c] == 1530);
}

TEST_CASE("splitting is deterministic in the seed") {
    std::vector<SplitItem> items;
    for (int c = 0; c < 3; ++c)
        for (int n = 0; n < 40; ++n)
            items.push_back({c, "g" + std::to_string(c * 100 + n)});
    SplitSpec spec;
    spec.seed = 11;
    SplitResult a = split_dataset(items, 3, spec);
    SplitResult b = split_dataset(items, 3, spec);
    REQUIRE(a.train == b.train);
    REQUIRE(a.val == b.val);
    REQUIRE(a.test == b.test);

    spec.seed = 12;
    SplitResult c = split_dataset(items, 3, spec);
    REQUIRE(a.train != c.train);  // different seed shuffles differently
}

TEST_CASE("flip derivatives never cross split boundaries") {
    // originals plus flipped twins sharing root_id
    std::vector<SplitItem> items;
    for (int c = 0; c < 2; ++c)
        for (int n = 0; n < 30; ++n) {
            std::string root = "r" + std::to_string(c * 100 + n);
            items.push_back({c, root});
            items.push_back({c, root});  // the flipped twin
        }
    SplitSpec spec;
    spec.seed = 3;
    SplitResult r = split_dataset(items, 2, spec);
    auto split_of = [&](std::size_t idx) {
        if (std::find(r.train.begin(), r.train.end(), idx) != r.train.end()) return 0;
        if (std::find(r.val.begin(), r.val.end(), idx) != r.val.end()) return 1;
        return 2;
    };
    for (std::size_t i = 0; i < items.size(); i += 2)
        REQUIRE(split_of(i) == split_of(i + 1));
}

TEST_CASE("too few lineage groups for a split is an error") {
    std::vector<SplitItem> items = {{0, "a"}, {0, "b"}, {0, "c"}};
    SplitSpec spec;
    REQUIRE_THROWS_AS(split_dataset(items, 1, spec), DataError);
}

// ---------------------------------------------------------------------------
// Augmentation pipelines
// ---------------------------------------------------------------------------

TEST_CASE("flip augmentation doubles the set and preserves lineage") {
    Rng rng(87);
    std::vector<GestureSample> set = {make_sample(1, 4, rng, "s0"), make_sample(1, 4, rng, "s1")};
    apply_flip_augmentation(set);
    REQUIRE(set.size() == 4);
    REQUIRE(set[2].sample_id == "s0_flip");
    REQUIRE(set[2].root_id == "s0");
    REQUIRE(set[3].root_id == "s1");
}

TEST_CASE("training augmentation emits original + rotated + brightened deterministically") {
    Rng rng(88);
    std::vector<GestureSample> train = {make_sample(1, 6, rng, "a"), make_sample(1, 6, rng, "b")};
    AugmentConfig cfg;
    cfg.rotate = true;
    cfg.brightness = true;
    cfg.seed = 5;
    auto out1 = augment_training_set(train, cfg);
    REQUIRE(out1.size() == 6);
    REQUIRE(out1[0].sample_id == "a");
    REQUIRE(out1[1].sample_id == "a_rot");
    REQUIRE(out1[2].sample_id == "a_bright");

    auto out2 = augment_training_set(train, cfg);
    for (std::size_t i = 0; i < out1.size(); ++i)
        REQUIRE(out1[i].frames.data == out2[i].frames.data);

    cfg.rotate = false;
    cfg.brightness = false;
    REQUIRE(augment_training_set(train, cfg).size() == 2);
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

TEST_CASE("synthesis is deterministic and well-ranged") {
    SynthConfig cfg;
    cfg.num_classes = 4;
    cfg.per_class = 2;
    cfg.T = 6;
    cfg.image_size = 16;
    cfg.seed = 123;
    Dataset a = synthesize_gestures(cfg);
    Dataset b = synthesize_gestures(cfg);
    REQUIRE(a.samples.size() == 8);
    REQUIRE(a.class_names.size() == 4);
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        REQUIRE(a.samples[i].frames.data == b.samples[i].frames.data);
        REQUIRE(a.samples[i].keypoints->data == b.samples[i].keypoints->data);
        for (double v : a.samples[i].frames.data) {
            REQUIRE(v >= 0.0);
            REQUIRE(v <= 1.0);
        }
        validate_keypoints(*a.samples[i].keypoints);  // throws on violation
        REQUIRE(a.samples[i].provenance == Provenance::Synthetic);
    }
    REQUIRE(a.samples[0].sample_id == "c00_s0000");
}

TEST_CASE("Left gestures move the right-hand wrist strictly right to left") {
    SynthConfig cfg;
    cfg.num_classes = 2;
    cfg.per_class = 5;
    cfg.T = 10;
    cfg.image_size = 16;
    cfg.seed = 9;
    Dataset ds = synthesize_gestures(cfg);
    for (const auto& s : ds.samples) {
        std::vector<double> xs;
        for (std::size_t t = 0; t < cfg.T; ++t)
            xs.push_back(s.keypoints->at2(t, kRightHandOffset));  // wrist x
        for (std::size_t t = 1; t < xs.size(); ++t) {
            if (s.label == 0) REQUIRE(xs[t] < xs[t - 1]);  // Left: decreasing
            if (s.label == 1) REQUIRE(xs[t] > xs[t - 1]);  // Right: increasing
        }
    }
}

TEST_CASE("synthesis rejects bad configurations") {
    SynthConfig cfg;
    cfg.per_class = 0;
    REQUIRE_THROWS_AS(synthesize_gestures(cfg), DataError);
    cfg.per_class = 1;
    cfg.num_classes = 1;
    REQUIRE_THROWS_AS(synthesize_gestures(cfg), DataError);
    cfg.num_classes = 11;
    REQUIRE_THROWS_AS(synthesize_gestures(cfg), DataError);
}

// ---------------------------------------------------------------------------
// Disk layout
// ---------------------------------------------------------------------------

TEST_CASE("class directory names replace spaces") {
    REQUIRE(class_dir_name("Thumbs up") == "Thumbs_up");
    REQUIRE(class_dir_name("Left") == "Left");
}

TEST_CASE("dataset save/load round trip") {
    SynthConfig cfg;
    cfg.num_classes = 2;
    cfg.per_class = 2;
    cfg.T = 3;
    cfg.image_size = 12;
    cfg.seed = 77;
    Dataset ds = synthesize_gestures(cfg);
    std::string root = (fs::temp_directory_path() / "tristream_ds_rt").string();
    fs::remove_all(root);
    save_dataset(root, ds);
    REQUIRE(fs::exists(root + "/manifest.tsv"));
    REQUIRE(fs::exists(root + "/Left/c00_s0000/frame_0000.png"));
    REQUIRE(fs::exists(root + "/Left/c00_s0000/keypoints.kp"));

    Dataset back = load_dataset(root, 12);
    REQUIRE(back.samples.size() == ds.samples.size());
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& orig = ds.samples[i];
        const auto& got = back.samples[i];
        REQUIRE(got.label == orig.label);
        REQUIRE(got.sample_id == orig.sample_id);
        REQUIRE(got.subject_id == orig.subject_id);
        REQUIRE(got.keypoints->data == orig.keypoints->data);  // text round trip, exact
        REQUIRE(got.frames.shape == orig.frames.shape);
        for (std::size_t j = 0; j < got.frames.size(); ++j)  // 8-bit quantization
            REQUIRE(std::abs(got.frames.data[j] - orig.frames.data[j]) <= 0.5 / 255.0 + 1e-9);
    }
    fs::remove_all(root);
}

TEST_CASE("loading a dataset with a missing manifest fails cleanly") {
    REQUIRE_THROWS_AS(load_dataset((fs::temp_directory_path() / "no_such_ds").string(), 8),
                      DataError);
}
