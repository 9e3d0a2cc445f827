// Acceptance runner: prints one PASS/FAIL line per criterion and exits
// non-zero when any hard criterion fails.

#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "lutfuse/dataset.hpp"
#include "lutfuse/error.hpp"
#include "lutfuse/networks.hpp"
#include "lutfuse/trainer.hpp"

namespace fs = std::filesystem;
using namespace lutfuse;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

struct Outcome {
    int id;
    bool pass;
    bool soft;
    std::string name;
    std::string detail;
};

std::vector<Outcome> outcomes;

void report(int id, bool pass, const std::string& name, const std::string& detail, bool soft = false) {
    outcomes.push_back({id, pass, soft, name, detail});
    std::printf("%s criterion %d (%s)%s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), soft ? " [soft gate]" : "",
                detail.c_str());
    std::fflush(stdout);
}

struct CommandResult {
    int status = -1;
    std::string output;
    double seconds = 0.0;
};

CommandResult run_command(const std::string& cmd) {
    CommandResult r;
    const auto t0 = Clock::now();
    std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen((cmd + " 2>&1").c_str(), "r"), pclose);
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), buf.size(), pipe.get())) r.output += buf.data();
    const int raw = pclose(pipe.release());
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.seconds = seconds_since(t0);
    return r;
}

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

// Runs a gtest filter and checks it passed, ran at least one test, and
// stayed within the time limit.
void gtest_suite(int id, const std::string& name, const fs::path& tests, const std::string& filter, double limit_s) {
    if (tests.empty()) {
        report(id, false, name, "unit test binary not given (--tests)");
        return;
    }
    const auto r = run_command(quote(tests) + " --gtest_brief=1 --gtest_filter='" + filter + "'");
    int ran = 0;
    if (const auto pos = r.output.find("[==========] "); pos != std::string::npos) ran = std::atoi(r.output.c_str() + pos + 13);
    const bool pass = r.status == 0 && ran > 0 && r.seconds < limit_s;
    std::string detail = std::to_string(ran) + " tests, " + fmt("%.1f s (limit %.0f s)", r.seconds, limit_s);
    if (r.status != 0) detail += ", exit status " + std::to_string(r.status);
    report(id, pass, name, detail);
    if (r.status != 0) std::fputs(r.output.c_str(), stdout);
}

struct ToyOptions {
    int sources = 20;
    int size = 128;
    std::uint64_t seed = 2024;
    int teacher_steps = 800;
    int student_steps = 1500;
    float teacher_lr = 2e-3f;
    float student_lr = 5e-3f;
    int long_range_every = 25;
};

struct ToyRun {
    fs::path dir;
    DatasetManifest manifest;
    TrainLog teacher_log, student_log;
    fs::path teacher_ckpt, student_ckpt;
    EvalResult eval;
    double seconds = 0.0;
};

TrainConfig toy_config(Phase phase, int steps, float lr, std::size_t train_records, const ToyOptions& o) {
    TrainConfig c;
    c.phase = phase;
    c.lr = lr;
    c.seed = o.seed;
    c.epochs = static_cast<int>((steps + train_records - 1) / train_records);
    c.max_steps = steps;
    c.long_range_every = o.long_range_every;
    return c;
}

ToyRun toy_run(const fs::path& dir, const ToyOptions& o, bool verbose) {
    ToyRun run;
    run.dir = dir;
    const auto t0 = Clock::now();
    fs::remove_all(dir);
    SynthOptions so;
    so.seed = o.seed;
    run.manifest = synthesize_dataset(procedural_sources(o.sources, o.size, o.size, o.seed), dir / "data", so);
    const auto train_n = run.manifest.split(Split::train).size();

    auto progress = [&](const char* phase, int total) {
        return [=](const LogRecord& r) {
            if (verbose && (r.step % 100 == 0 || r.step + 1 == total)) {
                std::fprintf(stderr, "  %s step %lld/%d total %.5f l1 %.5f d1 %.5f lr %.5f (%.0f ms)\n", phase,
                             static_cast<long long>(r.step), total, r.loss_total, r.loss_l1, r.loss_d1, r.loss_lr,
                             r.wall_ms);
            }
        };
    };

    const auto tcfg = toy_config(Phase::teacher, o.teacher_steps, o.teacher_lr, train_n, o);
    auto teacher_res = train_teacher(run.manifest, tcfg, std::nullopt, progress("teacher", o.teacher_steps));
    run.teacher_ckpt = dir / "teacher.ckpt";
    teacher_res.checkpoint.save(run.teacher_ckpt);
    run.teacher_log = std::move(teacher_res.log);
    const auto teacher = nn::Teacher::from_checkpoint(teacher_res.checkpoint);

    auto scfg = toy_config(Phase::student, o.student_steps, o.student_lr, train_n, o);
    scfg.augment_exposures = true;
    auto student_res = train_student(run.manifest, scfg, teacher, std::nullopt, progress("student", o.student_steps));
    run.student_ckpt = dir / "student.ckpt";
    student_res.checkpoint.save(run.student_ckpt);
    run.student_log = std::move(student_res.log);
    run.seconds = seconds_since(t0);

    const auto student = nn::Student::from_checkpoint(student_res.checkpoint);
    run.eval = evaluate(student, run.manifest, Split::test, nn::kTeacherGrid);
    return run;
}

double smoothed_delta(const std::vector<LogRecord>& log, float LogRecord::*field, double& start, double& end) {
    std::vector<double> v;
    for (const auto& r : log) v.push_back(r.*field);
    const int window = 20;
    const auto s = smooth(v, window);
    start = s.size() >= static_cast<std::size_t>(window) ? s[window - 1] : s.front();
    end = s.back();
    return end - start;
}

bool logs_identical(const TrainLog& a, const TrainLog& b, std::string& where) {
    if (a.records.size() != b.records.size()) {
        where = "record counts differ";
        return false;
    }
    auto bits = [](float f) { return std::bit_cast<std::uint32_t>(f); };
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        const auto &x = a.records[i], &y = b.records[i];
        if (x.step != y.step || bits(x.loss_total) != bits(y.loss_total) || bits(x.loss_l1) != bits(y.loss_l1) ||
            bits(x.loss_d1) != bits(y.loss_d1) || bits(x.loss_lr) != bits(y.loss_lr)) {
            where = "first difference at step " + std::to_string(x.step);
            return false;
        }
    }
    return true;
}

// Finds "<key>\t<value>" or "<key>: <value>" in CLI output.
bool find_number(const std::string& text, const std::string& key, double& value) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto pos = line.find(key);
        if (pos == std::string::npos) continue;
        const char* rest = line.c_str() + pos + key.size();
        while (*rest == ' ' || *rest == '\t' || *rest == ':' || *rest == '=') ++rest;
        char* endp = nullptr;
        const double v = std::strtod(rest, &endp);
        if (endp != rest) {
            value = v;
            return true;
        }
    }
    return false;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lutfuse acceptance runner"};
    fs::path tests, cli, work = fs::temp_directory_path() / "lutfuse_acceptance";
    std::vector<int> only;
    ToyOptions toy;
    bool verbose = false;
    app.add_option("--tests", tests, "Unit test executable");
    app.add_option("--cli", cli, "lutfuse command-line executable");
    app.add_option("--work", work, "Scratch directory");
    app.add_option("--only", only, "Run only these criteria")->check(CLI::Range(1, 8));
    app.add_option("--teacher-steps", toy.teacher_steps)->check(CLI::Range(1, 2000));
    app.add_option("--student-steps", toy.student_steps)->check(CLI::Range(1, 2000));
    app.add_option("--teacher-lr", toy.teacher_lr);
    app.add_option("--student-lr", toy.student_lr);
    app.add_option("--seed", toy.seed);
    app.add_flag("--verbose", verbose, "Print training progress to stderr");
    CLI11_PARSE(app, argc, argv);

    // Determinism is asserted in single-threaded mode.
    setenv("LUTFUSE_THREADS", "1", 1);
    const std::set<int> selected(only.begin(), only.end());
    auto want = [&](int id) { return selected.empty() || selected.count(id) > 0; };

    try {
        if (want(1)) {
            gtest_suite(1, "invariant suite", tests,
                        "Lut.IdentityInvarianceAcrossSizes:Lut.IdentitySamplesReturnInput:Lut.LatticeExactnessIsBitwise:"
                        "CubeIo.RoundTrip:Ops.SoftmaxSumsToOneForExtremeInputs:Networks.ImageWeightsSumToOne:"
                        "Networks.ImageWeightFuseIsConvex:Networks.ImageWeightFuseOfIdenticalImages",
                        30.0);
        }
        if (want(2)) gtest_suite(2, "gradient suite", tests, "Grad.*", 120.0);
        if (want(3)) gtest_suite(3, "oracle suite", tests, "Oracle.*:Lut.TrilinearMatchesEightCornerBruteForce", 600.0);

        std::optional<ToyRun> run;
        if (want(4) || want(5) || want(6) || want(8)) run = toy_run(work / "run1", toy, verbose);

        if (want(4)) {
            double d1_start = 0, d1_end = 0;
            smoothed_delta(run->student_log.records, &LogRecord::loss_d1, d1_start, d1_end);
            const double gain = run->eval.mean_psnr - run->eval.mean_best_input_psnr;
            const bool within_steps = toy.teacher_steps <= 2000 && toy.student_steps <= 2000;
            const bool pass = gain >= 2.0 && d1_end < d1_start && run->seconds < 900.0 && within_steps;
            report(4, pass, "toy end-to-end",
                   fmt("student %.2f dB vs best input %.2f dB (gain %.2f dB, need >= 2)", run->eval.mean_psnr,
                       run->eval.mean_best_input_psnr, gain) +
                       fmt("; smoothed L_d1 %.5f -> %.5f; %.0f s (limit 900 s)", d1_start, d1_end, run->seconds) +
                       "; steps " + std::to_string(toy.teacher_steps) + "+" + std::to_string(toy.student_steps));
        }

        if (want(5)) {
            const auto student = nn::Student::from_checkpoint(ad::Checkpoint::load(run->student_ckpt));
            std::map<int, double> p;
            for (int n : {8, 32, 64, 128}) p[n] = evaluate(student, run->manifest, Split::test, n).mean_psnr;
            const bool pass = p[8] < p[32] && std::fabs(p[64] - p[128]) <= 1.0;
            report(5, pass, "editable grid trend",
                   fmt("PSNR grid 8 %.2f, 32 %.2f, 64 %.2f, 128 %.2f dB", p[8], p[32], p[64], p[128]));
        }

        if (want(6)) {
            if (cli.empty()) {
                report(6, false, "parameter budget", "CLI binary not given (--cli)");
            } else {
                const auto r = run_command(quote(cli) + " eval --ckpt " + quote(run->student_ckpt) + " --manifest " +
                                           quote(run->manifest.root / "manifest.tsv") + " --grid 64");
                double count = -1;
                const bool found = r.status == 0 && find_number(r.output, "student parameters", count);
                report(6, found && count <= 600000, "parameter budget",
                       found ? fmt("eval reports %.0f student parameters (limit 600000)", count)
                             : "eval did not report a parameter count (exit " + std::to_string(r.status) + ")");
                if (!found) std::fputs(r.output.c_str(), stdout);
            }
        }

        if (want(7)) {
            if (cli.empty()) {
                report(7, false, "throughput", "CLI binary not given (--cli)", true);
            } else {
                const auto r = run_command("env -u LUTFUSE_THREADS " + quote(cli) + " bench --grid 33 --width 3840 --height 2160");
                std::fputs(r.output.c_str(), stdout);
                double mean = -1;
                const bool found = r.status == 0 && find_number(r.output, "mean_ms", mean);
                report(7, found && mean <= 250.0, "throughput",
                       found ? fmt("33^3 LUT on 3840x2160: mean %.1f ms (gate 250 ms)", mean) : "bench failed", true);
            }
        }

        if (want(8)) {
            const auto rerun = toy_run(work / "run2", toy, verbose);
            std::string where_t, where_s;
            const bool t_same = logs_identical(run->teacher_log, rerun.teacher_log, where_t);
            const bool s_same = logs_identical(run->student_log, rerun.student_log, where_s);
            std::string detail = std::to_string(run->teacher_log.records.size() + run->student_log.records.size()) +
                                 " logged steps compared";
            if (!t_same) detail += "; teacher " + where_t;
            if (!s_same) detail += "; student " + where_s;
            report(8, t_same && s_same, "determinism", detail);
        }
    } catch (const Error& e) {
        std::printf("FAIL acceptance aborted: %s\n", e.what());
        return 2;
    }

    int hard_failures = 0;
    for (const auto& o : outcomes)
        if (!o.pass && !o.soft) ++hard_failures;
    std::printf("%zu criteria evaluated, %d hard failure(s)\n", outcomes.size(), hard_failures);
    return hard_failures == 0 ? 0 : 1;
}
