#pragma once

// Two-phase training: the teacher alone under pixel L1, then the student
// under L1 + α·L_d1 + β·L_lr against the frozen teacher.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lutfuse/checkpoint.hpp"
#include "lutfuse/dataset.hpp"
#include "lutfuse/losses.hpp"
#include "lutfuse/networks.hpp"

namespace lutfuse {

enum class Phase { teacher, student };
enum class InputPrep { crop, resize };

const char* phase_name(Phase p);

struct TrainConfig {
    Phase phase = Phase::student;
    float lr = 1e-4f;
    float lr_decay = 0.1f;
    // Epochs (0-based) at whose start the rate is multiplied by lr_decay.
    // Empty selects 50% and 75% of `epochs`.
    std::vector<int> decay_epochs;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.0f;
    int epochs = 30;
    // Stops early after this many optimizer steps; 0 = no limit.
    int max_steps = 0;
    // Records per optimizer step (gradients are averaged).
    int batch = 1;
    // Training inputs are reduced to at most crop×crop.
    int crop = 1000;
    InputPrep prep = InputPrep::crop;
    std::uint64_t seed = 1;
    LossConfig loss;
    int grid_n = nn::kTeacherGrid;
    // Global gradient-norm clip; 0 disables.
    float clip_norm = 5.0f;
    // Lattice nodes sampled per step for L_d1.
    int d1_samples = 4096;
    // L_lr is evaluated every this many steps and its last value is
    // logged in between.
    int long_range_every = 20;
    // MEF-SSIM loss against the input stack as the unpaired term,
    // combined with the paired loss by λ1/λ2.
    bool unpaired_mef_ssim = false;
    // Re-synthesizes every training stack from its ground truth with fresh
    // exposure parameters each step (seeded by seed, step and record).
    bool augment_exposures = false;
    // Periodic checkpoint; disabled when 0 or the path is empty.
    int checkpoint_every = 0;
    std::filesystem::path checkpoint_path;

    // Throws ConfigError on invalid values.
    void validate() const;
    // Rate in effect during `epoch`.
    float lr_at_epoch(int epoch) const;
    std::vector<int> effective_decay_epochs() const;
};

std::string config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const std::string& json);

struct LogRecord {
    std::int64_t step = 0;
    float loss_total = 0.0f;
    float loss_l1 = 0.0f;
    float loss_d1 = 0.0f;
    float loss_lr = 0.0f;
    double wall_ms = 0.0;
};

struct TrainLog {
    std::vector<LogRecord> records;

    // Tab-separated with a header line; loss values round-trip exactly.
    std::string to_tsv() const;
    // FNV-1a over the step numbers and loss bit patterns (wall time is
    // excluded).
    std::uint64_t digest() const;
};

// Mean over a trailing window of `window` records ending at each index.
std::vector<double> smooth(const std::vector<double>& values, int window);

using StepCallback = std::function<void(const LogRecord&)>;

struct TrainResult {
    ad::Checkpoint checkpoint;
    TrainLog log;
};

// Prepares one training stack: crop or resize to at most crop×crop.
ExposureStack prepare_training_stack(const ExposureStack& stack, const TrainConfig& cfg);

// Backpropagates weight·L_lr for the student's LUT at n without taping
// the full lattice through the coordinate network: the lattice is built
// untaped, the tokenizer is differentiated with respect to it, and the
// node gradient is pulled back through the network `chunk` nodes at a
// time. Parameter gradients are accumulated directly except for the
// latent's share, which `latent_route` carries: adding it to a loss that
// is then backpropagated completes the gradient through the encoder.
struct LongRangeStep {
    double value = 0.0;
    ad::Tensor latent_route;
};
LongRangeStep long_range_backward(const nn::Student& student, const ad::Tensor& latent, const ad::Tensor& truth_corr,
                                  int n, float weight, std::int64_t chunk = 8192);

// `resume` continues from a checkpoint written by the same phase.
TrainResult train_teacher(const DatasetManifest& manifest, const TrainConfig& cfg,
                          const std::optional<ad::Checkpoint>& resume = std::nullopt, const StepCallback& on_step = {});
TrainResult train_student(const DatasetManifest& manifest, const TrainConfig& cfg, const nn::Teacher& teacher,
                          const std::optional<ad::Checkpoint>& resume = std::nullopt, const StepCallback& on_step = {});

// Training state stored in a checkpoint's metadata.
struct CheckpointInfo {
    Phase phase = Phase::student;
    std::int64_t step = 0;
    std::uint64_t log_digest = 0;
    TrainConfig config;
    TrainLog log;
};
CheckpointInfo checkpoint_info(const ad::Checkpoint& ckpt);

struct EvalRow {
    std::string name;
    double psnr = 0.0;
    double ssim = 0.0;
    // Best PSNR of any single input exposure against the ground truth.
    double best_input_psnr = 0.0;
};

struct EvalResult {
    int grid_n = 0;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double mean_best_input_psnr = 0.0;
    std::vector<EvalRow> rows;
};

// student_forward at grid_n for every record of the split. ConfigError
// for an empty split or a record without ground truth.
EvalResult evaluate(const nn::Student& student, const DatasetManifest& manifest, Split split, int grid_n);
EvalResult evaluate_teacher(const nn::Teacher& teacher, const DatasetManifest& manifest, Split split);

}  // namespace lutfuse
