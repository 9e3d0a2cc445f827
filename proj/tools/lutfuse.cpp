#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lutfuse/checkpoint.hpp"
#include "lutfuse/cube_io.hpp"
#include "lutfuse/dataset.hpp"
#include "lutfuse/error.hpp"
#include "lutfuse/image_io.hpp"
#include "lutfuse/lut.hpp"
#include "lutfuse/metrics.hpp"
#include "lutfuse/networks.hpp"
#include "lutfuse/parallel.hpp"
#include "lutfuse/trainer.hpp"

namespace fs = std::filesystem;
using namespace lutfuse;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitFailure = 2;

struct TrainArgs {
    fs::path manifest, out, resume, log;
    fs::path teacher;
    int steps = 0;
    int log_every = 50;
    bool no_clip = false;
    std::string prep = "crop";
    TrainConfig cfg;
};

void add_train_options(CLI::App* cmd, TrainArgs& a, Phase phase) {
    a.cfg.phase = phase;
    cmd->add_option("--manifest", a.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", a.out, "Output checkpoint")->required();
    cmd->add_option("--resume", a.resume, "Continue from a checkpoint of the same phase")->check(CLI::ExistingFile);
    cmd->add_option("--log", a.log, "Write the training log as TSV");
    cmd->add_option("--log-every", a.log_every, "Progress line interval on stderr (0 = silent)")->check(CLI::NonNegativeNumber);
    cmd->add_option("--seed", a.cfg.seed, "Random seed");
    cmd->add_option("--lr", a.cfg.lr, "Learning rate");
    cmd->add_option("--lr-decay", a.cfg.lr_decay, "Learning-rate decay factor");
    cmd->add_option("--decay-epochs", a.cfg.decay_epochs, "Epochs at which the rate decays (default 50% and 75%)");
    cmd->add_option("--weight-decay", a.cfg.weight_decay, "AdamW decoupled weight decay");
    cmd->add_option("--epochs", a.cfg.epochs, "Training epochs");
    cmd->add_option("--steps", a.steps, "Stop after this many optimizer steps (0 = all epochs)")->check(CLI::NonNegativeNumber);
    cmd->add_option("--batch", a.cfg.batch, "Records per optimizer step");
    cmd->add_option("--crop", a.cfg.crop, "Maximum training image side");
    cmd->add_option("--prep", a.prep, "Reduce large inputs by center crop or resize")->check(CLI::IsMember({"crop", "resize"}));
    cmd->add_flag("--no-clip", a.no_clip, "Disable gradient-norm clipping");
    cmd->add_flag("--augment", a.cfg.augment_exposures, "Re-synthesize stacks from ground truth each step");
    cmd->add_flag("--unpaired", a.cfg.unpaired_mef_ssim, "Add the MEF-SSIM term against the input stack");
    cmd->add_option("--lambda1", a.cfg.loss.lambda1, "Paired-loss weight with --unpaired");
    cmd->add_option("--lambda2", a.cfg.loss.lambda2, "MEF-SSIM weight with --unpaired");
    cmd->add_option("--checkpoint-every", a.cfg.checkpoint_every, "Write --out every N steps during training");
    if (phase == Phase::student) {
        cmd->add_option("--teacher", a.teacher, "Teacher checkpoint")->required()->check(CLI::ExistingFile);
        cmd->add_option("--alpha", a.cfg.loss.alpha, "Grid distillation weight");
        cmd->add_option("--beta", a.cfg.loss.beta, "Long-range loss weight");
        cmd->add_option("--grid", a.cfg.grid_n, "Training grid size (must be 64 with --alpha > 0)");
        cmd->add_option("--d1-samples", a.cfg.d1_samples, "Lattice nodes sampled per step for grid distillation");
        cmd->add_option("--long-range-every", a.cfg.long_range_every, "Steps between long-range loss evaluations");
    }
}

int run_training(TrainArgs& a) {
    a.cfg.max_steps = a.steps;
    a.cfg.prep = a.prep == "resize" ? InputPrep::resize : InputPrep::crop;
    if (a.no_clip) a.cfg.clip_norm = 0.0f;
    if (a.cfg.checkpoint_every > 0) a.cfg.checkpoint_path = a.out;
    const auto manifest = read_manifest(a.manifest);
    std::optional<ad::Checkpoint> resume;
    if (!a.resume.empty()) resume = ad::Checkpoint::load(a.resume);

    const char* phase = phase_name(a.cfg.phase);
    auto progress = [&](const LogRecord& r) {
        if (a.log_every > 0 && r.step % a.log_every == 0) {
            std::fprintf(stderr, "%s step %lld: total %.6f l1 %.6f d1 %.6f lr %.6f (%.0f ms)\n", phase,
                         static_cast<long long>(r.step), r.loss_total, r.loss_l1, r.loss_d1, r.loss_lr, r.wall_ms);
        }
    };
    TrainResult res;
    if (a.cfg.phase == Phase::teacher) {
        res = train_teacher(manifest, a.cfg, resume, progress);
    } else {
        const auto teacher = nn::Teacher::from_checkpoint(ad::Checkpoint::load(a.teacher));
        res = train_student(manifest, a.cfg, teacher, resume, progress);
    }
    res.checkpoint.save(a.out);
    if (!a.log.empty()) {
        std::ofstream f(a.log);
        if (!f) throw IoError("cannot open '" + a.log.string() + "' for writing");
        f << res.log.to_tsv();
    }
    if (!res.log.records.empty()) {
        const auto& last = res.log.records.back();
        std::fprintf(stderr, "%s: %zu steps, final loss %.6f, log digest %016llx, wrote %s\n", phase,
                     res.log.records.size(), last.loss_total, static_cast<unsigned long long>(res.log.digest()),
                     a.out.string().c_str());
    }
    return 0;
}

std::vector<SynthSource> read_sources(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (e.is_regular_file() && (ext == ".png" || ext == ".ppm")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ConfigError("no .png or .ppm images in '" + dir.string() + "'");
    std::vector<SynthSource> out;
    for (const auto& f : files) out.push_back({f.stem().string(), read_image(f)});
    return out;
}

double mean_brightness(const ImageRgb& img) {
    double s = 0;
    for (float v : img.pixels()) s += v;
    return s / static_cast<double>(img.pixels().size());
}

ExposureStack read_stack(const std::vector<fs::path>& paths) {
    ExposureStack stack;
    for (const auto& p : paths) stack.images.push_back(read_image(p));
    stack.validate();
    for (std::size_t i = 1; i < stack.images.size(); ++i) {
        if (mean_brightness(stack.images[i]) < mean_brightness(stack.images[i - 1])) {
            std::fprintf(stderr, "warning: mean brightness is not ascending (%s is darker than %s); "
                                 "exposures are expected darkest first\n",
                         paths[i].string().c_str(), paths[i - 1].string().c_str());
            break;
        }
    }
    return stack;
}

nn::Student load_student(const fs::path& path) {
    const auto ckpt = ad::Checkpoint::load(path);
    if (!ckpt.contains("student/encoder/conv0/weight")) {
        throw ConfigError("'" + path.string() + "' is not a student checkpoint");
    }
    return nn::Student::from_checkpoint(ckpt);
}

void print_eval(const EvalResult& r) {
    std::printf("grid %d\n%-24s %10s %8s %12s\n", r.grid_n, "item", "psnr_db", "ssim", "best_input");
    for (const auto& row : r.rows) {
        std::printf("%-24s %10.3f %8.4f %12.3f\n", row.name.c_str(), row.psnr, row.ssim, row.best_input_psnr);
    }
    std::printf("%-24s %10.3f %8.4f %12.3f\n", "mean", r.mean_psnr, r.mean_ssim, r.mean_best_input_psnr);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lutfuse: multi-exposure fusion through implicit 3D lookup tables"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    // synth
    fs::path synth_in, synth_out;
    SynthOptions synth_opts;
    int synth_count = 20, synth_size = 128;
    auto* synth = app.add_subcommand("synth", "Synthesize exposure stacks and a manifest");
    synth->add_option("--in", synth_in, "Directory of ground-truth images (default: procedural scenes)")
        ->check(CLI::ExistingDirectory);
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--seed", synth_opts.seed, "Random seed");
    synth->add_option("--k", synth_opts.k, "Exposures per stack (2 or 3)")->check(CLI::IsMember({2, 3}));
    synth->add_option("--test-fraction", synth_opts.test_fraction, "Share of records in the test split")
        ->check(CLI::Range(0.0, 1.0));
    synth->add_option("--count", synth_count, "Procedural scene count when --in is absent")->check(CLI::PositiveNumber);
    synth->add_option("--size", synth_size, "Procedural scene side length")->check(CLI::PositiveNumber);

    TrainArgs teacher_args, student_args;
    auto* train_teacher_cmd = app.add_subcommand("train-teacher", "Train the teacher under pixel L1");
    add_train_options(train_teacher_cmd, teacher_args, Phase::teacher);
    auto* train_student_cmd = app.add_subcommand("train-student", "Train the student against a frozen teacher");
    add_train_options(train_student_cmd, student_args, Phase::student);

    // fuse / export-lut
    fs::path fuse_ckpt, fuse_out;
    int fuse_grid = 32;
    std::vector<fs::path> fuse_inputs;
    auto* fuse = app.add_subcommand("fuse", "Fuse an exposure stack into one image");
    fuse->add_option("--ckpt", fuse_ckpt, "Student checkpoint")->required()->check(CLI::ExistingFile);
    fuse->add_option("--grid", fuse_grid, "LUT grid size")->check(CLI::Range(2, 256));
    fuse->add_option("--out", fuse_out, "Output image (.png or .ppm)")->required();
    fuse->add_option("images", fuse_inputs, "Exposures, darkest first")->required()->check(CLI::ExistingFile);

    fs::path export_ckpt, export_out;
    int export_grid = 33;
    std::vector<fs::path> export_inputs;
    auto* export_lut = app.add_subcommand("export-lut", "Write the LUT predicted for a stack as a .cube file");
    export_lut->add_option("--ckpt", export_ckpt, "Student checkpoint")->required()->check(CLI::ExistingFile);
    export_lut->add_option("--grid", export_grid, "LUT grid size")->check(CLI::Range(2, 256));
    export_lut->add_option("--out", export_out, "Output .cube file")->required();
    export_lut->add_option("images", export_inputs, "Exposures, darkest first")->required()->check(CLI::ExistingFile);

    // eval
    fs::path eval_ckpt, eval_manifest;
    std::vector<int> eval_grids{64};
    std::string eval_split = "test";
    auto* eval = app.add_subcommand("eval", "PSNR/SSIM table for a manifest split");
    eval->add_option("--ckpt", eval_ckpt, "Student or teacher checkpoint")->required()->check(CLI::ExistingFile);
    eval->add_option("--manifest", eval_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    eval->add_option("--split", eval_split, "Split to evaluate")->check(CLI::IsMember({"train", "test"}));
    eval->add_option("--grid", eval_grids, "Grid sizes to sweep (student only)")->check(CLI::Range(2, 256));

    // lut-stats
    fs::path stats_cube;
    bool stats_hist = false;
    auto* stats = app.add_subcommand("lut-stats", "Mean, variance and range of a .cube LUT");
    stats->add_option("cube", stats_cube, ".cube file")->required()->check(CLI::ExistingFile);
    stats->add_flag("--histogram", stats_hist, "Also print the 64-bin histogram");

    // bench
    int bench_grid = 33, bench_w = 3840, bench_h = 2160, bench_threads = 0, bench_iters = 5;
    bool bench_tsv = false;
    fs::path bench_cube;
    auto* bench = app.add_subcommand("bench", "Time LUT application on a synthetic image");
    bench->add_option("--grid", bench_grid, "Identity LUT grid size")->check(CLI::Range(2, 256));
    bench->add_option("--cube", bench_cube, "Benchmark this .cube LUT instead")->check(CLI::ExistingFile);
    bench->add_option("--width", bench_w, "Image width")->check(CLI::PositiveNumber);
    bench->add_option("--height", bench_h, "Image height")->check(CLI::PositiveNumber);
    bench->add_option("--threads", bench_threads, "Worker threads (0 = LUTFUSE_THREADS or all cores)")
        ->check(CLI::NonNegativeNumber);
    bench->add_option("--iterations", bench_iters, "Timed iterations")->check(CLI::Range(3, 100000));
    bench->add_flag("--tsv", bench_tsv, "Print one tab-separated line instead of the text report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*synth) {
            const auto sources =
                synth_in.empty() ? procedural_sources(synth_count, synth_size, synth_size, synth_opts.seed) : read_sources(synth_in);
            synth_opts.threads = default_thread_count();
            const auto m = synthesize_dataset(sources, synth_out, synth_opts);
            std::fprintf(stderr, "wrote %zu stacks (%zu train, %zu test) and %s\n", m.records.size(),
                         m.split(Split::train).size(), m.split(Split::test).size(),
                         (synth_out / "manifest.tsv").string().c_str());
        } else if (*train_teacher_cmd) {
            return run_training(teacher_args);
        } else if (*train_student_cmd) {
            return run_training(student_args);
        } else if (*fuse) {
            const auto student = load_student(fuse_ckpt);
            const auto out = nn::student_forward(student, read_stack(fuse_inputs), fuse_grid);
            write_image(fuse_out, out.enhanced);
        } else if (*export_lut) {
            const auto student = load_student(export_ckpt);
            const auto stack = read_stack(export_inputs);
            auto lut = nn::generate_lut(student.inn, nn::encode_latent(student, nn::stack_input(stack)), export_grid);
            std::size_t clamped = 0;
            for (float& v : lut.values()) {
                const float c = std::clamp(v, 0.0f, 1.0f);
                clamped += c != v;
                v = c;
            }
            if (clamped > 0) std::fprintf(stderr, "note: clamped %zu LUT values to [0,1]\n", clamped);
            write_cube(export_out, lut, "lutfuse student LUT");
        } else if (*eval) {
            const auto manifest = read_manifest(eval_manifest);
            const auto split = eval_split == "train" ? Split::train : Split::test;
            const auto ckpt = ad::Checkpoint::load(eval_ckpt);
            if (ckpt.contains("teacher/iw/conv0/weight")) {
                const auto teacher = nn::Teacher::from_checkpoint(ckpt);
                std::printf("teacher parameters: %lld\n", static_cast<long long>(teacher.params.count()));
                print_eval(evaluate_teacher(teacher, manifest, split));
            } else {
                const auto student = nn::Student::from_checkpoint(ckpt);
                std::printf("student parameters: %lld\n", static_cast<long long>(student.parameter_count()));
                for (int n : eval_grids) print_eval(evaluate(student, manifest, split, n));
            }
        } else if (*stats) {
            const auto s = lut_stats(read_cube(stats_cube));
            std::printf("mean      %.6f\nvariance  %.6f\nmin       %.6f\nmax       %.6f\n", s.mean, s.variance, s.min, s.max);
            if (stats_hist) {
                for (std::size_t i = 0; i < s.histogram.size(); ++i) {
                    std::printf("bin %2zu    %llu\n", i, static_cast<unsigned long long>(s.histogram[i]));
                }
            }
        } else if (*bench) {
            const auto lut = bench_cube.empty() ? identity_lut(bench_grid) : read_cube(bench_cube);
            const auto r = bench_apply(lut, bench_h, bench_w, bench_threads, bench_iters);
            if (bench_tsv) {
                std::printf("%s\n", format_bench_tsv(r).c_str());
            } else {
                std::fputs(format_bench_text(r).c_str(), stdout);
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFailure;
    }
    return 0;
}
