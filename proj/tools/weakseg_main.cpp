// Command-line front end for the weak-annotation refinement toolkit.
//
// Typical flow on the toy benchmark:
//   weakseg make-toy --out ds --count 48 --test-count 16 --seed 1
//   weakseg gen-weak --dataset ds --ndil 4 --seed 1
//   weakseg pipeline --dataset ds --out run --seed 1

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include "weakseg/pipeline.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
    CLI::App app{"weakseg: refines over-drawn annotations of thin dark structures "
                 "and trains a small segmentation model on the result"};
    app.require_subcommand(1);

    std::string dataset_dir, out_path, config_path, masks_dir, params_path, pred_dir;
    std::string macro_source = "builtin", preset = "dark";
    std::uint64_t seed = 1;
    int count = 48, test_count = -1, size = 128, ndil = -1;
    double delta = -1.0, grid_step = -1.0;
    bool no_micro = false;

    auto* make_toy = app.add_subcommand("make-toy", "generate a procedural toy dataset");
    make_toy->add_option("--out", out_path, "dataset directory to create")->required();
    make_toy->add_option("--count", count, "number of samples");
    make_toy->add_option("--test-count", test_count, "samples reserved for the test split "
                                                     "(default count/4)");
    make_toy->add_option("--size", size, "image side length in pixels");
    make_toy->add_option("--seed", seed, "generator seed");
    make_toy->add_option("--preset", preset, "contrast preset: dark | bright")
        ->check(CLI::IsMember({"dark", "bright"}));

    auto* gen_weak = app.add_subcommand("gen-weak", "synthesize weak masks from precise ones");
    gen_weak->add_option("--dataset", dataset_dir, "dataset directory")->required();
    gen_weak->add_option("--ndil", ndil, "dilations before deformation");
    gen_weak->add_option("--seed", seed, "synthesis seed");
    gen_weak->add_option("--config", config_path, "JSON config (synth section)");

    auto* train_myopic_cmd = app.add_subcommand("train-myopic", "train the Myopic model "
                                                                "on weak masks");
    train_myopic_cmd->add_option("--dataset", dataset_dir, "dataset directory")->required();
    train_myopic_cmd->add_option("--out", out_path, "output parameter file (.myo1)")->required();
    train_myopic_cmd->add_option("--seed", seed, "training seed");
    train_myopic_cmd->add_option("--config", config_path, "JSON config (myopic section)");

    auto* refine = app.add_subcommand("refine", "shrink-refine weak masks using a trained "
                                                "Myopic model");
    refine->add_option("--dataset", dataset_dir, "dataset directory")->required();
    refine->add_option("--myopic", params_path, "Myopic parameter file")->required();
    refine->add_option("--out", out_path, "directory for refined masks")->required();
    refine->add_option("--delta", delta, "probability rise threshold");
    refine->add_option("--config", config_path, "JSON config (shrink section)");

    auto* train_macro_cmd = app.add_subcommand("train-macro", "train the Macro branch on "
                                                              "a mask directory");
    train_macro_cmd->add_option("--dataset", dataset_dir, "dataset directory")->required();
    train_macro_cmd->add_option("--masks", masks_dir, "mask directory (refined/weak/precise)")
        ->required();
    train_macro_cmd->add_option("--out", out_path, "output parameter file (.mac1)")->required();
    train_macro_cmd->add_option("--seed", seed, "training seed");
    train_macro_cmd->add_option("--config", config_path, "JSON config (macro section)");

    auto* infer = app.add_subcommand("infer", "run inference over the test split");
    infer->add_option("--dataset", dataset_dir, "dataset directory")->required();
    infer->add_option("--out", out_path, "directory for probability maps")->required();
    infer->add_option("--macro-source", macro_source, "builtin | import")
        ->check(CLI::IsMember({"builtin", "import"}));
    infer->add_option("--params", params_path, "Macro parameter file (builtin source)");
    infer->add_flag("--no-micro", no_micro, "skip the darkness branch");
    infer->add_option("--config", config_path, "JSON config (darkness section)");

    auto* eval = app.add_subcommand("eval", "score PMAP predictions against precise masks");
    eval->add_option("--dataset", dataset_dir, "dataset directory")->required();
    eval->add_option("--pred", pred_dir, "directory of .pmap predictions")->required();
    eval->add_option("--out", out_path, "report directory")->required();
    eval->add_option("--grid-step", grid_step, "threshold grid step");

    auto* pipeline = app.add_subcommand("pipeline", "end-to-end: train, refine, train, "
                                                    "infer, evaluate");
    pipeline->add_option("--dataset", dataset_dir, "dataset directory")->required();
    pipeline->add_option("--out", out_path, "output directory")->required();
    pipeline->add_option("--config", config_path, "JSON config file");
    pipeline->add_option("--seed", seed, "master seed (overrides config)");
    pipeline->add_flag("--no-micro", no_micro, "skip the darkness branch");
    pipeline->add_option("--macro-source", macro_source, "builtin | import")
        ->check(CLI::IsMember({"builtin", "import"}));
    pipeline->add_option("--ndil", ndil, "synthesis dilations (overrides config)");
    pipeline->add_option("--delta", delta, "shrink threshold (overrides config)");
    pipeline->add_option("--grid-step", grid_step, "threshold grid step (overrides config)");

    CLI11_PARSE(app, argc, argv);

    try {
        weakseg::PipelineConfig cfg;
        if (!config_path.empty()) cfg = weakseg::load_pipeline_config(config_path);
        if (ndil >= 0) cfg.synth.n_dil = ndil;
        if (delta >= 0.0) cfg.shrink.delta = delta;
        if (grid_step > 0.0) cfg.grid_step = grid_step;
        if (no_micro) cfg.use_micro = false;
        if (macro_source == "import") cfg.macro_source = weakseg::MacroSource::imported;

        if (make_toy->parsed()) {
            weakseg::ToyConfig toy = preset == "bright" ? weakseg::ToyConfig::bright_cracks()
                                                        : weakseg::ToyConfig::dark_cracks();
            toy.image_size = size;
            toy.seed = seed;
            if (test_count < 0) test_count = count / 4;
            weakseg::cmd_make_toy(toy, count, test_count, out_path);
            std::cout << "wrote " << count << " samples (" << test_count << " test) to "
                      << out_path << "\n";
        } else if (gen_weak->parsed()) {
            weakseg::SynthConfig synth = cfg.synth;
            synth.seed = seed;
            const auto stats = weakseg::cmd_gen_weak(dataset_dir, synth);
            std::cout << "gen-weak: " << stats.succeeded << "/" << stats.total << " ok, "
                      << stats.failed << " failed, " << stats.skipped_empty
                      << " empty-skipped (log: masks_weak/synth_log.csv)\n";
        } else if (train_myopic_cmd->parsed()) {
            weakseg::MyopicTrainConfig mcfg = cfg.myopic;
            mcfg.seed = seed;
            weakseg::cmd_train_myopic(dataset_dir, out_path, mcfg);
            std::cout << "wrote " << out_path << "\n";
        } else if (refine->parsed()) {
            weakseg::cmd_refine(dataset_dir, params_path, out_path, cfg.shrink);
            std::cout << "refined masks in " << out_path << "\n";
        } else if (train_macro_cmd->parsed()) {
            weakseg::MacroTrainConfig mcfg = cfg.macro;
            mcfg.seed = seed;
            weakseg::cmd_train_macro(dataset_dir, masks_dir, out_path, mcfg);
            std::cout << "wrote " << out_path << "\n";
        } else if (infer->parsed()) {
            const auto source = macro_source == "import" ? weakseg::MacroSource::imported
                                                         : weakseg::MacroSource::builtin;
            if (source == weakseg::MacroSource::builtin && params_path.empty())
                throw std::runtime_error("infer: --params required with builtin macro source");
            weakseg::cmd_infer(dataset_dir, source, params_path, out_path, !no_micro,
                               cfg.darkness);
            std::cout << "probability maps in " << out_path << "\n";
        } else if (eval->parsed()) {
            const auto report = weakseg::cmd_eval(dataset_dir, pred_dir,
                                                  grid_step > 0.0 ? grid_step : 0.01, out_path);
            std::cout << "ODS " << report.ods << " at t=" << report.best_t << " over "
                      << report.n << " images\n";
        } else if (pipeline->parsed()) {
            if (pipeline->count("--seed")) cfg.seed = seed;
            const auto outcome = weakseg::run_pipeline(dataset_dir, out_path, cfg);
            std::cout << "ODS " << outcome.report.ods << " at t=" << outcome.report.best_t
                      << " over " << outcome.report.n << " images\n"
                      << "report: " << outcome.report_json.string() << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
