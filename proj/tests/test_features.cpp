#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "tristream/features.hpp"

using namespace tristream;
namespace fs = std::filesystem;

namespace {

std::string tmp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

Tensor valid_keypoint_rows(std::size_t T, Rng& rng) {
    Tensor raw({T, kKeypointWidth});
    for (std::size_t t = 0; t < T; ++t) {
        double* row = raw.data.data() + t * kKeypointWidth;
        for (std::size_t p = 0; p < kPosePoints; ++p) {
            row[p * 4] = rng.next_double();
            row[p * 4 + 1] = rng.next_double();
            row[p * 4 + 2] = rng.uniform(-3, 3);  // z unbounded
            row[p * 4 + 3] = rng.next_double();
        }
        for (std::size_t block : {kLeftHandOffset, kRightHandOffset})
            for (std::size_t p = 0; p < kHandPoints; ++p) {
                row[block + p * 3] = rng.next_double();
                row[block + p * 3 + 1] = rng.next_double();
                row[block + p * 3 + 2] = rng.uniform(-3, 3);
            }
    }
    return raw;
}

}  // namespace

// ---------------------------------------------------------------------------
// Layout constants
// ---------------------------------------------------------------------------

TEST_CASE("keypoint layout constants") {
    REQUIRE(kPoseBlock == 132);
    REQUIRE(kHandBlock == 63);
    REQUIRE(kKeypointWidth == 258);
    REQUIRE(kLeftHandOffset == 132);
    REQUIRE(kRightHandOffset == 195);
    REQUIRE(default_anchor_indices() == std::vector<std::size_t>{0, 7, 15, 22, 29});
}

// ---------------------------------------------------------------------------
// Keypoint validation
// ---------------------------------------------------------------------------

TEST_CASE("validate_keypoints accepts in-range rows with unbounded z") {
    Rng rng(70);
    Tensor raw = valid_keypoint_rows(4, rng);
    KeypointSequence seq = validate_keypoints(raw);
    REQUIRE(seq.length() == 4);
    REQUIRE(seq.points.data == raw.data);
}

TEST_CASE("validate_keypoints rejects width 257") {
    REQUIRE_THROWS_WITH(validate_keypoints(Tensor::zeros({3, 257})),
                        Catch::Matchers::ContainsSubstring("258"));
}

TEST_CASE("validate_keypoints rejects out-of-range coordinates") {
    Rng rng(71);
    Tensor raw = valid_keypoint_rows(2, rng);
    SECTION("pose x above 1") {
        raw.at2(1, 0) = 1.2;
        REQUIRE_THROWS_AS(validate_keypoints(raw), DataError);
    }
    SECTION("pose visibility negative") {
        raw.at2(0, 3) = -0.1;
        REQUIRE_THROWS_AS(validate_keypoints(raw), DataError);
    }
    SECTION("right-hand y below 0") {
        raw.at2(0, kRightHandOffset + 1) = -0.5;
        REQUIRE_THROWS_AS(validate_keypoints(raw), DataError);
    }
    SECTION("non-finite z") {
        raw.at2(0, 2) = std::numeric_limits<double>::quiet_NaN();
        REQUIRE_THROWS_AS(validate_keypoints(raw), DataError);
    }
    SECTION("empty sequence") {
        REQUIRE_THROWS_AS(validate_keypoints(Tensor::zeros({0, 258})), DataError);
    }
}

// ---------------------------------------------------------------------------
// Anchor subsampling
// ---------------------------------------------------------------------------

TEST_CASE("subsample_frames picks exactly the requested rows") {
    Tensor seq({6, 3});
    for (std::size_t i = 0; i < seq.size(); ++i) seq.data[i] = static_cast<double>(i);
    Tensor out = subsample_frames(seq, {0, 2, 5});
    REQUIRE(out.shape == std::vector<std::size_t>{3, 3});
    REQUIRE(out.data == std::vector<double>{0, 1, 2, 6, 7, 8, 15, 16, 17});
}

TEST_CASE("default anchors over a 150x2048 sequence give 5x2048") {
    Tensor seq({150, 2048});
    Rng rng(72);
    for (std::size_t i = 0; i < 4096; ++i) seq.data[i] = rng.next_double();
    REQUIRE(seq.size() == 307200);
    Tensor out = subsample_frames(seq, default_anchor_indices());
    REQUIRE(out.shape == std::vector<std::size_t>{5, 2048});
    for (std::size_t j = 0; j < 2048; ++j) REQUIRE(out.at2(0, j) == seq.at2(0, j));
}

TEST_CASE("subsample_frames rejects out-of-range indices") {
    Tensor seq({5, 2});
    REQUIRE_THROWS_AS(subsample_frames(seq, {0, 5}), ShapeError);
}

// ---------------------------------------------------------------------------
// Feature files
// ---------------------------------------------------------------------------

TEST_CASE("feature file round trip, text and binary") {
    Rng rng(73);
    FrameFeatureSequence seq;
    seq.features = Tensor({4, 7});
    oracles::fill_random(seq.features, rng, -5, 5);
    seq.features.data[3] = 1.0 / 3.0;  // exercise full precision

    for (bool binary : {false, true}) {
        std::string path = tmp_path(binary ? "feat_bin.feat" : "feat_txt.feat");
        save_features(path, seq, binary);
        FrameFeatureSequence back = load_precomputed_features(path);
        REQUIRE(back.length() == 4);
        REQUIRE(back.width() == 7);
        REQUIRE(back.features.data == seq.features.data);  // bit-exact
        fs::remove(path);
    }
}

TEST_CASE("feature file header is the documented magic line") {
    FrameFeatureSequence seq;
    seq.features = Tensor::zeros({2, 3});
    std::string path = tmp_path("feat_hdr.feat");
    save_features(path, seq);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    REQUIRE(header == "TRISTREAM-FEAT v1 T=2 D=3");
    fs::remove(path);
}

TEST_CASE("truncated feature file reports expected vs found") {
    std::string path = tmp_path("feat_trunc.feat");
    std::ofstream(path) << "TRISTREAM-FEAT v1 T=3 D=2\n1 2\n3 4\n";
    REQUIRE_THROWS_WITH(load_precomputed_features(path),
                        Catch::Matchers::ContainsSubstring("3") &&
                            Catch::Matchers::ContainsSubstring("2 complete rows"));
    fs::remove(path);
}

TEST_CASE("trailing values beyond the declared length are rejected") {
    std::string path = tmp_path("feat_trail.feat");
    std::ofstream(path) << "TRISTREAM-FEAT v1 T=1 D=2\n1 2 3\n";
    REQUIRE_THROWS_WITH(load_precomputed_features(path),
                        Catch::Matchers::ContainsSubstring("trailing"));
    fs::remove(path);
}

TEST_CASE("malformed feature headers are rejected") {
    std::string path = tmp_path("feat_bad.feat");
    for (const char* hdr : {"TRISTREAM-FEAT v2 T=1 D=2", "FEAT v1 T=1 D=2",
                            "TRISTREAM-FEAT v1 D=2", "TRISTREAM-FEAT v1 T=0 D=2"}) {
        std::ofstream(path) << hdr << "\n1 2\n";
        REQUIRE_THROWS_AS(load_precomputed_features(path), DataError);
    }
    fs::remove(path);
}

TEST_CASE("non-finite feature values are rejected") {
    std::string path = tmp_path("feat_nan.feat");
    std::ofstream(path) << "TRISTREAM-FEAT v1 T=1 D=2\n1 nan\n";
    REQUIRE_THROWS_AS(load_precomputed_features(path), DataError);
    fs::remove(path);
}

// ---------------------------------------------------------------------------
// Keypoint files
// ---------------------------------------------------------------------------

TEST_CASE("keypoint file round trip, text and binary") {
    Rng rng(74);
    KeypointSequence seq{valid_keypoint_rows(3, rng)};
    for (bool binary : {false, true}) {
        std::string path = tmp_path(binary ? "kp_bin.kp" : "kp_txt.kp");
        save_keypoints(path, seq, binary);
        KeypointSequence back = load_keypoints(path);
        REQUIRE(back.length() == 3);
        REQUIRE(back.points.data == seq.points.data);
        fs::remove(path);
    }
}

TEST_CASE("keypoint file header carries only T and loading validates ranges") {
    Rng rng(75);
    KeypointSequence seq{valid_keypoint_rows(2, rng)};
    std::string path = tmp_path("kp_hdr.kp");
    save_keypoints(path, seq);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    REQUIRE(header == "TRISTREAM-KP v1 T=2");
    in.close();

    // corrupt an x coordinate beyond [0,1]; the loader must reject it
    seq.points.at2(0, 0) = 7.0;
    save_keypoints(path, seq);
    REQUIRE_THROWS_AS(load_keypoints(path), DataError);
    fs::remove(path);
}
