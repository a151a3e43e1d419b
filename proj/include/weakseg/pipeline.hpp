#pragma once

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "weakseg/dataset.hpp"
#include "weakseg/fusion.hpp"
#include "weakseg/macro.hpp"
#include "weakseg/metrics.hpp"
#include "weakseg/myopic.hpp"
#include "weakseg/parallel.hpp"
#include "weakseg/png_io.hpp"
#include "weakseg/raster.hpp"
#include "weakseg/shrink.hpp"
#include "weakseg/weaksynth.hpp"

namespace weakseg {

using ordered_json = nlohmann::ordered_json;

enum class MacroSource { builtin, imported };

/// Everything one end-to-end run depends on. The master seed is the only
/// random input: each stage derives its own stream from it.
struct PipelineConfig {
    std::uint64_t seed = 1;
    bool use_micro = true;
    MacroSource macro_source = MacroSource::builtin;
    SynthConfig synth;
    MyopicTrainConfig myopic;
    ShrinkConfig shrink;
    MacroTrainConfig macro;
    DarknessConfig darkness;
    double grid_step = 0.01;
};

namespace detail {

inline void check_keys(const ordered_json& j, std::initializer_list<const char*> allowed,
                       const std::string& context) {
    if (!j.is_object()) throw std::runtime_error("config: " + context + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* a : allowed)
            if (it.key() == a) { known = true; break; }
        if (!known)
            throw std::runtime_error("config: unknown key '" + it.key() + "' in " + context);
    }
}

template <typename T>
T get_or(const ordered_json& j, const char* key, T fallback, const std::string& context) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw std::runtime_error("config: bad type for '" + std::string(key) + "' in " + context);
    }
}

}  // namespace detail

inline PipelineConfig parse_pipeline_config(const ordered_json& j) {
    using detail::check_keys;
    using detail::get_or;
    check_keys(j, {"seed", "use_micro", "macro_source", "synth", "myopic", "shrink", "macro",
                   "darkness", "metrics"},
               "top level");
    PipelineConfig cfg;
    cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed, "top level");
    cfg.use_micro = get_or<bool>(j, "use_micro", cfg.use_micro, "top level");
    const std::string source =
        get_or<std::string>(j, "macro_source", "builtin", "top level");
    if (source == "builtin")
        cfg.macro_source = MacroSource::builtin;
    else if (source == "import")
        cfg.macro_source = MacroSource::imported;
    else
        throw std::runtime_error("config: macro_source must be 'builtin' or 'import'");

    if (j.contains("synth")) {
        const auto& s = j.at("synth");
        check_keys(s, {"n_dil", "sigma", "alpha_affine", "r_low", "r_high", "alpha_min",
                       "alpha_max", "max_iters"},
                   "synth");
        cfg.synth.n_dil = get_or<int>(s, "n_dil", cfg.synth.n_dil, "synth");
        cfg.synth.sigma = get_or<double>(s, "sigma", cfg.synth.sigma, "synth");
        cfg.synth.alpha_affine = get_or<double>(s, "alpha_affine", cfg.synth.alpha_affine, "synth");
        cfg.synth.r_low = get_or<double>(s, "r_low", cfg.synth.r_low, "synth");
        cfg.synth.r_high = get_or<double>(s, "r_high", cfg.synth.r_high, "synth");
        cfg.synth.alpha_min = get_or<double>(s, "alpha_min", cfg.synth.alpha_min, "synth");
        cfg.synth.alpha_max = get_or<double>(s, "alpha_max", cfg.synth.alpha_max, "synth");
        cfg.synth.max_iters = get_or<int>(s, "max_iters", cfg.synth.max_iters, "synth");
        if (cfg.synth.n_dil < 0) throw std::runtime_error("config: synth.n_dil must be >= 0");
        if (!(cfg.synth.sigma > 0)) throw std::runtime_error("config: synth.sigma must be > 0");
        if (!(cfg.synth.r_low > 0 && cfg.synth.r_low < cfg.synth.r_high && cfg.synth.r_high <= 1))
            throw std::runtime_error("config: synth recall bounds must satisfy 0 < r_low < r_high <= 1");
        if (!(cfg.synth.alpha_min < cfg.synth.alpha_max))
            throw std::runtime_error("config: synth.alpha_min must be < alpha_max");
    }
    if (j.contains("myopic")) {
        const auto& m = j.at("myopic");
        check_keys(m, {"c1", "c2", "learning_rate", "momentum", "epochs", "q"}, "myopic");
        cfg.myopic.c1 = get_or<int>(m, "c1", cfg.myopic.c1, "myopic");
        cfg.myopic.c2 = get_or<int>(m, "c2", cfg.myopic.c2, "myopic");
        cfg.myopic.learning_rate =
            get_or<double>(m, "learning_rate", cfg.myopic.learning_rate, "myopic");
        cfg.myopic.momentum = get_or<double>(m, "momentum", cfg.myopic.momentum, "myopic");
        cfg.myopic.epochs = get_or<int>(m, "epochs", cfg.myopic.epochs, "myopic");
        cfg.myopic.q = get_or<double>(m, "q", cfg.myopic.q, "myopic");
        if (!(cfg.myopic.q > 0 && cfg.myopic.q <= 1))
            throw std::runtime_error("config: myopic.q must be in (0,1]");
        if (!(cfg.myopic.learning_rate > 0))
            throw std::runtime_error("config: myopic.learning_rate must be > 0");
    }
    if (j.contains("shrink")) {
        const auto& s = j.at("shrink");
        check_keys(s, {"delta", "max_steps"}, "shrink");
        cfg.shrink.delta = get_or<double>(s, "delta", cfg.shrink.delta, "shrink");
        cfg.shrink.max_steps = get_or<int>(s, "max_steps", cfg.shrink.max_steps, "shrink");
        if (cfg.shrink.delta < 0 || cfg.shrink.delta > 1)
            throw std::runtime_error("config: shrink.delta must be in [0,1]");
    }
    if (j.contains("macro")) {
        const auto& m = j.at("macro");
        check_keys(m, {"hidden", "learning_rate", "momentum", "epochs"}, "macro");
        cfg.macro.hidden = get_or<int>(m, "hidden", cfg.macro.hidden, "macro");
        cfg.macro.learning_rate =
            get_or<double>(m, "learning_rate", cfg.macro.learning_rate, "macro");
        cfg.macro.momentum = get_or<double>(m, "momentum", cfg.macro.momentum, "macro");
        cfg.macro.epochs = get_or<int>(m, "epochs", cfg.macro.epochs, "macro");
        if (!(cfg.macro.learning_rate > 0))
            throw std::runtime_error("config: macro.learning_rate must be > 0");
    }
    if (j.contains("darkness")) {
        const auto& d = j.at("darkness");
        check_keys(d, {"normalization", "clip_low", "clip_high"}, "darkness");
        const std::string norm =
            get_or<std::string>(d, "normalization", "percentile", "darkness");
        if (norm == "minmax")
            cfg.darkness.normalization = DarknessNormalization::minmax;
        else if (norm == "percentile")
            cfg.darkness.normalization = DarknessNormalization::percentile_clip;
        else if (norm == "global")
            cfg.darkness.normalization = DarknessNormalization::global;
        else
            throw std::runtime_error(
                "config: darkness.normalization must be minmax, percentile, or global");
        cfg.darkness.clip_low = get_or<double>(d, "clip_low", cfg.darkness.clip_low, "darkness");
        cfg.darkness.clip_high =
            get_or<double>(d, "clip_high", cfg.darkness.clip_high, "darkness");
        if (!(cfg.darkness.clip_low < cfg.darkness.clip_high))
            throw std::runtime_error("config: darkness.clip_low must be < clip_high");
    }
    if (j.contains("metrics")) {
        const auto& m = j.at("metrics");
        check_keys(m, {"grid_step"}, "metrics");
        cfg.grid_step = get_or<double>(m, "grid_step", cfg.grid_step, "metrics");
        if (!(cfg.grid_step > 0 && cfg.grid_step < 1))
            throw std::runtime_error("config: metrics.grid_step must be in (0,1)");
    }
    return cfg;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path.string());
    ordered_json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("config: parse error in " + path.string() + ": " + e.what());
    }
    return parse_pipeline_config(j);
}

inline ordered_json pipeline_config_json(const PipelineConfig& cfg) {
    ordered_json j;
    j["seed"] = cfg.seed;
    j["use_micro"] = cfg.use_micro;
    j["macro_source"] = cfg.macro_source == MacroSource::builtin ? "builtin" : "import";
    j["synth"] = {{"n_dil", cfg.synth.n_dil},
                  {"sigma", cfg.synth.sigma},
                  {"alpha_affine", cfg.synth.alpha_affine},
                  {"r_low", cfg.synth.r_low},
                  {"r_high", cfg.synth.r_high},
                  {"alpha_min", cfg.synth.alpha_min},
                  {"alpha_max", cfg.synth.alpha_max},
                  {"max_iters", cfg.synth.max_iters}};
    j["myopic"] = {{"c1", cfg.myopic.c1},
                   {"c2", cfg.myopic.c2},
                   {"learning_rate", cfg.myopic.learning_rate},
                   {"momentum", cfg.myopic.momentum},
                   {"epochs", cfg.myopic.epochs},
                   {"q", cfg.myopic.q}};
    j["shrink"] = {{"delta", cfg.shrink.delta}, {"max_steps", cfg.shrink.max_steps}};
    j["macro"] = {{"hidden", cfg.macro.hidden},
                  {"learning_rate", cfg.macro.learning_rate},
                  {"momentum", cfg.macro.momentum},
                  {"epochs", cfg.macro.epochs}};
    const char* norm = cfg.darkness.normalization == DarknessNormalization::minmax ? "minmax"
                       : cfg.darkness.normalization == DarknessNormalization::global ? "global"
                                                                                     : "percentile";
    j["darkness"] = {{"normalization", norm},
                     {"clip_low", cfg.darkness.clip_low},
                     {"clip_high", cfg.darkness.clip_high}};
    j["metrics"] = {{"grid_step", cfg.grid_step}};
    return j;
}

// --- shared helpers ----------------------------------------------------------

/// Replicate-pads an image on the right/bottom so both dimensions are
/// divisible by 4 (the macro net's stride product).
inline GrayImage pad_to_multiple_of_4(const GrayImage& image) {
    const int pw = (4 - image.width() % 4) % 4;
    const int ph = (4 - image.height() % 4) % 4;
    if (pw == 0 && ph == 0) return image;
    GrayImage out(image.width() + pw, image.height() + ph, 0.0);
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x)
            out.at(x, y) = image.at(std::min(x, image.width() - 1), std::min(y, image.height() - 1));
    return out;
}

inline ProbMap crop_probmap(const ProbMap& map, int width, int height) {
    if (map.width() == width && map.height() == height) return map;
    ProbMap out(width, height, 0.0);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) out.at(x, y) = map.at(x, y);
    return out;
}

/// Macro inference with transparent padding and cropping.
inline ProbMap infer_macro_padded(const MacroParams& params, const GrayImage& image) {
    return crop_probmap(infer_macro(params, pad_to_multiple_of_4(image)),
                        image.width(), image.height());
}

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error(io_error::Kind::open, "cannot write " + path.string());
    os << text;
}

[[noreturn]] inline void stage_fail(const std::string& stage, const std::string& what,
                                    const std::string& sample = {}) {
    std::string msg = "pipeline stage '" + stage + "' failed";
    if (!sample.empty()) msg += " at sample '" + sample + "'";
    throw std::runtime_error(msg + ": " + what);
}

}  // namespace detail

// --- subcommand bodies ---------------------------------------------------------

/// Writes `count` toy image/precise-mask pairs in the dataset layout; the
/// last `test_count` stems become splits/test.txt.
inline void cmd_make_toy(const ToyConfig& cfg, int count, int test_count,
                         const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    if (count < 0) throw std::invalid_argument("make-toy: count must be >= 0");
    if (test_count < 0 || test_count > count)
        throw std::invalid_argument("make-toy: test count must be in [0, count]");
    fs::create_directories(out_dir / "images");
    fs::create_directories(out_dir / "masks_precise");
    std::vector<std::string> stems(count);
    for (int i = 0; i < count; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "sample_%03d", i);
        stems[i] = buf;
    }
    parallel_for(static_cast<std::size_t>(count), [&](std::size_t i) {
        const auto [image, mask] = gen_toy_sample(cfg, i);
        write_gray_png(image, (out_dir / "images" / (stems[i] + ".png")).string());
        write_mask_png(mask, (out_dir / "masks_precise" / (stems[i] + ".png")).string());
    });
    if (test_count > 0) {
        fs::create_directories(out_dir / "splits");
        std::string text;
        for (int i = count - test_count; i < count; ++i) text += stems[i] + "\n";
        detail::write_text_file(out_dir / "splits" / "test.txt", text);
    }
}

struct GenWeakStats {
    int total = 0;
    int succeeded = 0;
    int failed = 0;        // search budget exhausted; sample skipped
    int skipped_empty = 0;  // empty precise mask; sample skipped
};

/// One weak mask per precise mask, written to masks_weak/, with a CSV log
/// of (recall, alpha, iterations) per sample. Non-converged samples are
/// skipped and logged.
inline GenWeakStats cmd_gen_weak(const std::filesystem::path& dataset_dir,
                                 const SynthConfig& cfg) {
    namespace fs = std::filesystem;
    const Dataset ds = scan_dataset(dataset_dir);
    std::vector<const DatasetEntry*> with_precise;
    for (const auto& e : ds.entries)
        if (e.precise) with_precise.push_back(&e);
    if (with_precise.empty())
        throw std::runtime_error("gen-weak: no precise masks under " + dataset_dir.string());
    fs::create_directories(dataset_dir / "masks_weak");

    struct Row {
        std::string stem, status;
        double recall = 0.0, alpha = 0.0;
        int iterations = 0;
    };
    std::vector<Row> rows(with_precise.size());
    std::vector<std::optional<BinaryMask>> results(with_precise.size());
    parallel_for(with_precise.size(), [&](std::size_t i) {
        const auto& entry = *with_precise[i];
        rows[i].stem = entry.stem;
        const BinaryMask precise = read_mask_png(entry.precise->string());
        if (count_nonzero(precise) == 0) {
            rows[i].status = "skipped_empty";
            return;
        }
        SynthConfig sample_cfg = cfg;
        sample_cfg.seed = derive_seed(cfg.seed, i);
        const SynthResult r = synthesize_weak(precise, sample_cfg);
        rows[i].recall = r.achieved_recall;
        rows[i].alpha = r.alpha_used;
        rows[i].iterations = r.iterations;
        rows[i].status = r.converged ? "ok" : "failed";
        if (r.converged) results[i] = std::move(r.weak_mask);
    });

    GenWeakStats stats;
    stats.total = static_cast<int>(with_precise.size());
    std::string csv = "stem,status,recall,alpha,iterations\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        csv += r.stem + "," + r.status + "," + std::to_string(r.recall) + "," +
               std::to_string(r.alpha) + "," + std::to_string(r.iterations) + "\n";
        if (r.status == "ok") {
            write_mask_png(*results[i],
                           (dataset_dir / "masks_weak" / (r.stem + ".png")).string());
            ++stats.succeeded;
        } else if (r.status == "failed") {
            ++stats.failed;
        } else {
            ++stats.skipped_empty;
        }
    }
    detail::write_text_file(dataset_dir / "masks_weak" / "synth_log.csv", csv);
    return stats;
}

// --- the end-to-end pipeline -----------------------------------------------

struct PipelineOutcome {
    EvalReport report;
    std::filesystem::path report_json;
    std::filesystem::path report_csv;
    std::filesystem::path manifest_json;
};

namespace detail {

inline ordered_json eval_report_json(const EvalReport& report, const PipelineConfig& cfg,
                                     const std::vector<std::string>& stems) {
    ordered_json j;
    j["n"] = report.n;
    j["ods"] = report.ods;
    j["best_t"] = report.best_t;
    j["grid_step"] = cfg.grid_step;
    j["use_micro"] = cfg.use_micro;
    j["macro_source"] = cfg.macro_source == MacroSource::builtin ? "builtin" : "import";
    ordered_json per = ordered_json::array();
    for (std::size_t i = 0; i < stems.size(); ++i) {
        per.push_back(ordered_json{{"stem", stems[i]},
                                   {"f1_at_best_t", report.per_image_f1_at_best_t[i]}});
    }
    j["per_image"] = per;
    return j;
}

}  // namespace detail

/// Runs the full framework: train the Myopic model on weak masks, shrink-
/// refine them, train (or import) the Macro branch, infer on the test
/// split with optional darkness fusion, and evaluate. All artifacts land
/// under out_dir; the whole run is a pure function of (dataset, config).
inline PipelineOutcome run_pipeline(const std::filesystem::path& dataset_dir,
                                    const std::filesystem::path& out_dir,
                                    const PipelineConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    const Dataset ds = scan_dataset(dataset_dir);
    const auto train_entries = ds.train();
    const auto test_entries = ds.test();
    if (train_entries.empty()) detail::stage_fail("load", "no training images in dataset");
    if (test_entries.empty())
        detail::stage_fail("load", "no test split (splits/test.txt) in dataset");

    // --- load train images and obtain weak masks --------------------------
    std::vector<GrayImage> train_images(train_entries.size());
    parallel_for(train_entries.size(), [&](std::size_t i) {
        train_images[i] = read_gray_png(train_entries[i]->image.string());
    });

    const std::uint64_t synth_seed = derive_seed(cfg.seed, 1);
    std::vector<std::optional<BinaryMask>> weak_opt(train_entries.size());
    std::vector<std::string> synth_written;
    parallel_for(train_entries.size(), [&](std::size_t i) {
        const auto& entry = *train_entries[i];
        if (entry.weak) {
            weak_opt[i] = read_mask_png(entry.weak->string());
            return;
        }
        if (!entry.precise)
            detail::stage_fail("weak-masks", "no weak or precise mask", entry.stem);
        const BinaryMask precise = read_mask_png(entry.precise->string());
        if (count_nonzero(precise) == 0) return;  // skipped, logged below
        SynthConfig sample_cfg = cfg.synth;
        sample_cfg.seed = derive_seed(synth_seed, i);
        SynthResult r = synthesize_weak(precise, sample_cfg);
        if (r.converged) weak_opt[i] = std::move(r.weak_mask);
    });

    std::vector<GrayImage> images;
    std::vector<BinaryMask> weak_masks;
    std::vector<const DatasetEntry*> kept;
    fs::create_directories(out_dir / "masks_weak");
    for (std::size_t i = 0; i < train_entries.size(); ++i) {
        if (!weak_opt[i]) {
            std::cerr << "[pipeline] skipping train sample '" << train_entries[i]->stem
                      << "' (weak-annotation synthesis did not converge)\n";
            continue;
        }
        if (!train_entries[i]->weak)
            write_mask_png(*weak_opt[i],
                           (out_dir / "masks_weak" / (train_entries[i]->stem + ".png")).string());
        images.push_back(std::move(train_images[i]));
        weak_masks.push_back(std::move(*weak_opt[i]));
        kept.push_back(train_entries[i]);
    }
    if (images.empty()) detail::stage_fail("weak-masks", "no usable training samples");

    MacroParams macro_params;
    if (cfg.macro_source == MacroSource::builtin) {
        // --- step 1: Myopic model on weak annotations ----------------------
        MyopicTrainConfig myopic_cfg = cfg.myopic;
        myopic_cfg.seed = derive_seed(cfg.seed, 2);
        MyopicParams myopic_params;
        try {
            myopic_params = train_myopic(images, weak_masks, myopic_cfg);
        } catch (const std::exception& e) {
            detail::stage_fail("train-myopic", e.what());
        }
        save_myopic(myopic_params, (out_dir / "myopic.myo1").string());

        // --- step 2: shrink refinement -------------------------------------
        std::vector<BinaryMask> refined(images.size());
        fs::create_directories(out_dir / "masks_refined");
        parallel_for(images.size(), [&](std::size_t i) {
            try {
                const ProbMap m = myopic_forward(myopic_params, images[i]);
                refined[i] = refine_annotation(weak_masks[i], m, cfg.shrink);
            } catch (const std::exception& e) {
                detail::stage_fail("refine", e.what(), kept[i]->stem);
            }
        });
        for (std::size_t i = 0; i < refined.size(); ++i)
            write_mask_png(refined[i],
                           (out_dir / "masks_refined" / (kept[i]->stem + ".png")).string());

        // --- step 3: Macro branch on refined annotations -------------------
        MacroTrainConfig macro_cfg = cfg.macro;
        macro_cfg.seed = derive_seed(cfg.seed, 3);
        try {
            macro_params = train_macro(images, refined, macro_cfg);
        } catch (const std::exception& e) {
            detail::stage_fail("train-macro", e.what());
        }
        save_macro(macro_params, (out_dir / "macro.mac1").string());
    }

    // --- step 4: inference on the test split, optional darkness fusion ----
    std::vector<GrayImage> test_images(test_entries.size());
    std::vector<ProbMap> final_maps(test_entries.size());
    parallel_for(test_entries.size(), [&](std::size_t i) {
        const auto& entry = *test_entries[i];
        test_images[i] = read_gray_png(entry.image.string());
        ProbMap map;
        if (cfg.macro_source == MacroSource::imported) {
            if (!entry.probmap)
                detail::stage_fail("infer", "no imported probability map", entry.stem);
            map = import_probmap(entry.probmap->string());
            if (map.width() != test_images[i].width() || map.height() != test_images[i].height())
                detail::stage_fail("infer", "imported map dimensions do not match image",
                                   entry.stem);
        } else {
            map = infer_macro_padded(macro_params, test_images[i]);
        }
        if (cfg.use_micro) map = fuse(map, darkness_map(test_images[i], cfg.darkness));
        final_maps[i] = std::move(map);
    });
    fs::create_directories(out_dir / "probmaps");
    for (std::size_t i = 0; i < test_entries.size(); ++i) {
        export_pmap(final_maps[i],
                    (out_dir / "probmaps" / (test_entries[i]->stem + ".pmap")).string());
        write_prob_png(final_maps[i],
                       (out_dir / "probmaps" / (test_entries[i]->stem + ".png")).string());
    }

    // --- step 5: evaluation ------------------------------------------------
    std::vector<BinaryMask> gts(test_entries.size());
    parallel_for(test_entries.size(), [&](std::size_t i) {
        if (!test_entries[i]->precise)
            detail::stage_fail("eval", "no precise mask for test sample", test_entries[i]->stem);
        gts[i] = read_mask_png(test_entries[i]->precise->string());
    });
    EvalReport report;
    try {
        report = ods(final_maps, gts, threshold_grid(cfg.grid_step));
    } catch (const std::exception& e) {
        detail::stage_fail("eval", e.what());
    }

    fs::create_directories(out_dir / "overlays");
    parallel_for(test_entries.size(), [&](std::size_t i) {
        write_overlay_png(test_images[i], binarize(final_maps[i], report.best_t), &gts[i],
                          (out_dir / "overlays" / (test_entries[i]->stem + ".png")).string());
    });

    // --- reports and manifest ----------------------------------------------
    std::vector<std::string> test_stems;
    for (const auto* e : test_entries) test_stems.push_back(e->stem);
    const ordered_json report_json = detail::eval_report_json(report, cfg, test_stems);

    PipelineOutcome outcome;
    outcome.report = report;
    outcome.report_json = out_dir / "report.json";
    outcome.report_csv = out_dir / "report.csv";
    outcome.manifest_json = out_dir / "manifest.json";
    detail::write_text_file(outcome.report_json, report_json.dump(2) + "\n");

    std::string csv = "stem,f1_at_best_t\n";
    for (std::size_t i = 0; i < test_stems.size(); ++i)
        csv += test_stems[i] + "," + std::to_string(report.per_image_f1_at_best_t[i]) + "\n";
    detail::write_text_file(outcome.report_csv, csv);

    ordered_json manifest;
    manifest["tool"] = "weakseg";
    manifest["format_version"] = 1;
    manifest["dataset"] = fs::weakly_canonical(dataset_dir).string();
    manifest["config"] = pipeline_config_json(cfg);
    ordered_json train_stems = ordered_json::array();
    for (const auto* e : kept) train_stems.push_back(e->stem);
    manifest["train_stems"] = train_stems;
    manifest["test_stems"] = test_stems;
    detail::write_text_file(outcome.manifest_json, manifest.dump(2) + "\n");
    return outcome;
}

// --- standalone stage commands ----------------------------------------------

inline std::filesystem::path cmd_train_myopic(const std::filesystem::path& dataset_dir,
                                              const std::filesystem::path& out_path,
                                              const MyopicTrainConfig& cfg) {
    const Dataset ds = scan_dataset(dataset_dir);
    std::vector<GrayImage> images;
    std::vector<BinaryMask> masks;
    for (const auto* e : ds.train()) {
        if (!e->weak) continue;
        images.push_back(read_gray_png(e->image.string()));
        masks.push_back(read_mask_png(e->weak->string()));
    }
    if (images.empty())
        throw std::runtime_error("train-myopic: no training samples with weak masks");
    const MyopicParams params = train_myopic(images, masks, cfg);
    if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
    save_myopic(params, out_path.string());
    return out_path;
}

inline void cmd_refine(const std::filesystem::path& dataset_dir,
                       const std::filesystem::path& myopic_path,
                       const std::filesystem::path& out_dir, const ShrinkConfig& cfg) {
    const Dataset ds = scan_dataset(dataset_dir);
    const MyopicParams params = load_myopic(myopic_path.string());
    std::vector<const DatasetEntry*> entries;
    for (const auto* e : ds.train())
        if (e->weak) entries.push_back(e);
    if (entries.empty()) throw std::runtime_error("refine: no training samples with weak masks");
    std::filesystem::create_directories(out_dir);
    std::vector<BinaryMask> refined(entries.size());
    parallel_for(entries.size(), [&](std::size_t i) {
        const GrayImage image = read_gray_png(entries[i]->image.string());
        const BinaryMask weak = read_mask_png(entries[i]->weak->string());
        refined[i] = refine_annotation(weak, myopic_forward(params, image), cfg);
    });
    for (std::size_t i = 0; i < entries.size(); ++i)
        write_mask_png(refined[i], (out_dir / (entries[i]->stem + ".png")).string());
}

/// Trains the Macro branch on masks from an arbitrary directory (refined,
/// weak, or precise), pairing by stem; test-split samples are excluded.
inline std::filesystem::path cmd_train_macro(const std::filesystem::path& dataset_dir,
                                             const std::filesystem::path& masks_dir,
                                             const std::filesystem::path& out_path,
                                             const MacroTrainConfig& cfg) {
    const Dataset ds = scan_dataset(dataset_dir);
    std::vector<GrayImage> images;
    std::vector<BinaryMask> masks;
    for (const auto* e : ds.train()) {
        const auto mask_path = masks_dir / (e->stem + ".png");
        if (!std::filesystem::is_regular_file(mask_path)) continue;
        images.push_back(read_gray_png(e->image.string()));
        masks.push_back(read_mask_png(mask_path.string()));
    }
    if (images.empty())
        throw std::runtime_error("train-macro: no train-split masks found under " +
                                 masks_dir.string());
    const MacroParams params = train_macro(images, masks, cfg);
    if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
    save_macro(params, out_path.string());
    return out_path;
}

/// Inference over the test split (or every sample when no split exists):
/// writes PMAP files and 8-bit previews into out_dir.
inline void cmd_infer(const std::filesystem::path& dataset_dir, MacroSource source,
                      const std::filesystem::path& macro_path,
                      const std::filesystem::path& out_dir, bool use_micro,
                      const DarknessConfig& darkness) {
    const Dataset ds = scan_dataset(dataset_dir);
    std::vector<const DatasetEntry*> entries = ds.test();
    if (entries.empty())
        for (const auto& e : ds.entries) entries.push_back(&e);
    MacroParams params;
    if (source == MacroSource::builtin) params = load_macro(macro_path.string());
    std::filesystem::create_directories(out_dir);
    std::vector<ProbMap> maps(entries.size());
    parallel_for(entries.size(), [&](std::size_t i) {
        const GrayImage image = read_gray_png(entries[i]->image.string());
        ProbMap map;
        if (source == MacroSource::imported) {
            if (!entries[i]->probmap)
                throw std::runtime_error("infer: no probmaps/" + entries[i]->stem + ".pmap");
            map = import_probmap(entries[i]->probmap->string());
        } else {
            map = infer_macro_padded(params, image);
        }
        if (use_micro) map = fuse(map, darkness_map(image, darkness));
        maps[i] = std::move(map);
    });
    for (std::size_t i = 0; i < entries.size(); ++i) {
        export_pmap(maps[i], (out_dir / (entries[i]->stem + ".pmap")).string());
        write_prob_png(maps[i], (out_dir / (entries[i]->stem + ".png")).string());
    }
}

/// Evaluates PMAP predictions in pred_dir against the precise masks of the
/// test split (or of every sample when no split exists).
inline EvalReport cmd_eval(const std::filesystem::path& dataset_dir,
                           const std::filesystem::path& pred_dir, double grid_step,
                           const std::filesystem::path& out_dir) {
    const Dataset ds = scan_dataset(dataset_dir);
    std::vector<const DatasetEntry*> entries = ds.test();
    if (entries.empty())
        for (const auto& e : ds.entries) entries.push_back(&e);
    std::vector<ProbMap> maps;
    std::vector<BinaryMask> gts;
    std::vector<std::string> stems;
    for (const auto* e : entries) {
        const auto pmap_path = pred_dir / (e->stem + ".pmap");
        if (!std::filesystem::is_regular_file(pmap_path)) continue;
        if (!e->precise)
            throw std::runtime_error("eval: no precise mask for sample " + e->stem);
        maps.push_back(import_probmap(pmap_path.string()));
        gts.push_back(read_mask_png(e->precise->string()));
        stems.push_back(e->stem);
    }
    if (maps.empty())
        throw std::runtime_error("eval: no predictions found under " + pred_dir.string());
    const EvalReport report = ods(maps, gts, threshold_grid(grid_step));

    std::filesystem::create_directories(out_dir);
    PipelineConfig cfg;
    cfg.grid_step = grid_step;
    detail::write_text_file(out_dir / "report.json",
                            detail::eval_report_json(report, cfg, stems).dump(2) + "\n");
    std::string csv = "stem,f1_at_best_t\n";
    for (std::size_t i = 0; i < stems.size(); ++i)
        csv += stems[i] + "," + std::to_string(report.per_image_f1_at_best_t[i]) + "\n";
    detail::write_text_file(out_dir / "report.csv", csv);
    return report;
}

}  // namespace weakseg
