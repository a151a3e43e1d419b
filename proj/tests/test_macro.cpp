#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "weakseg/macro.hpp"
#include "weakseg/weaksynth.hpp"

using namespace weakseg;

namespace {

GrayImage random_image(Rng& rng, int w, int h) {
    GrayImage img(w, h, 0.0);
    for (auto& v : img.data()) v = rng.uniform01();
    return img;
}

bool params_equal(const MacroParams& a, const MacroParams& b) {
    MacroParams ca = a, cb = b;
    const auto va = parameter_view(ca), vb = parameter_view(cb);
    if (va.size() != vb.size()) return false;
    for (std::size_t i = 0; i < va.size(); ++i)
        if (*va[i] != *vb[i]) return false;
    return true;
}

}  // namespace

TEST_CASE("infer_macro: output matches input dimensions") {
    MacroTrainConfig cfg;
    cfg.seed = 2;
    const MacroParams params = init_macro(cfg);
    Rng rng(4);
    const ProbMap out = infer_macro(params, random_image(rng, 64, 64));
    CHECK(out.width() == 64);
    CHECK(out.height() == 64);
    for (double v : out.data()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("infer_macro: rejects dimensions not divisible by 4") {
    const MacroParams params = init_macro(MacroTrainConfig{});
    CHECK_THROWS_AS(infer_macro(params, GrayImage(63, 64, 0.5)), std::invalid_argument);
    CHECK_THROWS_AS(infer_macro(params, GrayImage(64, 30, 0.5)), std::invalid_argument);
}

TEST_CASE("infer_macro: zero parameters give a uniform 0.5 map") {
    MacroParams params = init_macro(MacroTrainConfig{});
    for (double* p : parameter_view(params)) *p = 0.0;
    Rng rng(5);
    const ProbMap out = infer_macro(params, random_image(rng, 32, 32));
    for (double v : out.data()) CHECK(v == 0.5);
}

TEST_CASE("infer_macro: constant input gives a constant map") {
    MacroTrainConfig cfg;
    cfg.seed = 11;
    const MacroParams params = init_macro(cfg);
    const ProbMap out = infer_macro(params, GrayImage(32, 32, 0.37));
    for (double v : out.data()) CHECK(v == out.data()[0]);
}

TEST_CASE("init_macro: layer shapes follow the 7-layer stride plan") {
    const MacroParams p = init_macro(MacroTrainConfig{});
    REQUIRE(MacroParams::kLayers == 7);
    CHECK(MacroParams::kStrides == std::array<int, 7>{1, 2, 1, 2, 1, 1, 1});
    CHECK(p.weights[0].size() == 6u * 1 * 9);
    for (int l = 1; l < 6; ++l) CHECK(p.weights[l].size() == 6u * 6 * 9);
    CHECK(p.weights[6].size() == 1u * 6 * 9);
    CHECK(p.biases[6].size() == 1u);
}

TEST_CASE("train_macro: zero learning rate returns the initialization") {
    Rng rng(6);
    std::vector<GrayImage> images{random_image(rng, 16, 16)};
    std::vector<BinaryMask> masks{BinaryMask(16, 16, 0)};
    masks[0].at(8, 8) = 1;
    MacroTrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 2;
    cfg.seed = 3;
    CHECK(params_equal(train_macro(images, masks, cfg), init_macro(cfg)));
}

TEST_CASE("train_macro: deterministic and loss decreases on the toy benchmark") {
    ToyConfig toy;
    toy.image_size = 64;
    toy.seed = 77;
    std::vector<GrayImage> images;
    std::vector<BinaryMask> masks;
    for (std::uint64_t i = 0; i < 8; ++i) {
        auto [img, mask] = gen_toy_sample(toy, i);
        images.push_back(std::move(img));
        masks.push_back(std::move(mask));
    }
    MacroTrainConfig cfg;
    cfg.epochs = 12;
    cfg.seed = 5;
    std::vector<double> losses;
    const MacroParams a = train_macro(images, masks, cfg, &losses);
    REQUIRE(losses.size() == 12);
    for (int e = 1; e <= 10; ++e) CHECK(losses[e] < losses[e - 1]);

    const MacroParams b = train_macro(images, masks, cfg);
    CHECK(params_equal(a, b));
}

TEST_CASE("macro_grad_check: analytic gradients match finite differences") {
    MacroTrainConfig cfg;
    cfg.hidden = 3;
    int done = 0;
    for (std::uint64_t seed = 0; done < 3 && seed < 300; ++seed) {
        Rng rng(derive_seed(1234, seed));
        cfg.seed = rng.next_u64();
        const MacroParams params = init_macro(cfg);
        const GrayImage img = random_image(rng, 8, 8);
        BinaryMask mask(8, 8, 0);
        for (auto& v : mask.data()) v = rng.uniform01() < 0.3;
        const auto stats = macro_activation_stats(params, img);
        if (stats.min_abs_preact < 1e-4 || stats.max_abs_logit > 15.0) continue;
        CHECK(macro_grad_check(params, img, mask) <= 1e-5);
        ++done;
    }
    CHECK(done == 3);
}

TEST_CASE("PMAP: export/import round trip is exact for f32-representable values") {
    namespace fs = std::filesystem;
    ProbMap map(7, 5, 0.0);
    for (std::size_t i = 0; i < map.size(); ++i)
        map.data()[i] = static_cast<double>(i % 256) / 256.0;  // dyadic: exact in f32
    const auto path = (fs::temp_directory_path() / "weakseg_test.pmap").string();
    export_pmap(map, path);
    const ProbMap loaded = import_probmap(path);
    CHECK(loaded == map);
    fs::remove(path);
}

TEST_CASE("PMAP: error variants are distinguishable") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path();

    const auto bad_magic = (dir / "weakseg_badmagic.pmap").string();
    {
        std::ofstream os(bad_magic, std::ios::binary);
        os << "XXXX\x02\x00\x00\x00\x02\x00\x00\x00";
    }
    CHECK_THROWS_MATCHES(import_probmap(bad_magic), io_error,
                         Catch::Matchers::Predicate<io_error>([](const io_error& e) {
                             return e.kind() == io_error::Kind::format;
                         }));

    const auto truncated = (dir / "weakseg_trunc.pmap").string();
    {
        export_pmap(ProbMap(4, 4, 0.5), truncated);
        fs::resize_file(truncated, 20);
    }
    CHECK_THROWS_MATCHES(import_probmap(truncated), io_error,
                         Catch::Matchers::Predicate<io_error>([](const io_error& e) {
                             return e.kind() == io_error::Kind::truncated;
                         }));

    const auto huge = (dir / "weakseg_huge.pmap").string();
    {
        std::ofstream os(huge, std::ios::binary);
        os << "PMAP";
        const unsigned char dims[8] = {0xff, 0xff, 0xff, 0x0f, 0xff, 0xff, 0xff, 0x0f};
        os.write(reinterpret_cast<const char*>(dims), 8);
    }
    CHECK_THROWS_MATCHES(import_probmap(huge), io_error,
                         Catch::Matchers::Predicate<io_error>([](const io_error& e) {
                             return e.kind() == io_error::Kind::dimension;
                         }));

    fs::remove(bad_magic);
    fs::remove(truncated);
    fs::remove(huge);
}

TEST_CASE("PMAP: import clamps out-of-range values") {
    namespace fs = std::filesystem;
    const auto path = (fs::temp_directory_path() / "weakseg_clamp.pmap").string();
    {
        std::ofstream os(path, std::ios::binary);
        os << "PMAP";
        binio::write_u32le(os, 2);
        binio::write_u32le(os, 1);
        binio::write_f32le(os, 1.5f);
        binio::write_f32le(os, -0.25f);
    }
    const ProbMap m = import_probmap(path);
    CHECK(m.data()[0] == 1.0);
    CHECK(m.data()[1] == 0.0);
    fs::remove(path);
}

TEST_CASE("MAC1 serialization round-trips") {
    namespace fs = std::filesystem;
    MacroTrainConfig cfg;
    cfg.hidden = 4;
    cfg.seed = 9;
    const MacroParams params = init_macro(cfg);
    const auto path = (fs::temp_directory_path() / "weakseg_test.mac1").string();
    save_macro(params, path);
    const MacroParams loaded = load_macro(path);
    CHECK(loaded.hidden == 4);
    save_macro(loaded, path);
    CHECK(params_equal(load_macro(path), loaded));
    fs::remove(path);
}
