#include "lutfuse/trainer.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "lutfuse/error.hpp"
#include "lutfuse/metrics.hpp"
#include "lutfuse/ops.hpp"
#include "lutfuse/optim.hpp"

namespace lutfuse {

using ad::Tensor;
using nlohmann::json;

namespace {

constexpr std::uint64_t kOrderStream = 0x0DE5;
constexpr std::uint64_t kSampleStream = 0x5A3B;
constexpr std::uint64_t kAugmentStream = 0xA06E;

}  // namespace

const char* phase_name(Phase p) { return p == Phase::teacher ? "teacher" : "student"; }

std::vector<int> TrainConfig::effective_decay_epochs() const {
    if (!decay_epochs.empty()) return decay_epochs;
    return {epochs / 2, epochs * 3 / 4};
}

float TrainConfig::lr_at_epoch(int epoch) const {
    float rate = lr;
    for (int e : effective_decay_epochs())
        if (e > 0 && epoch >= e) rate *= lr_decay;
    return rate;
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
    if (!(lr > 0.0f) || !std::isfinite(lr)) fail("lr must be positive");
    if (!(lr_decay > 0.0f) || lr_decay > 1.0f) fail("lr_decay must be in (0, 1]");
    if (!(beta1 > 0.0f && beta1 < 1.0f) || !(beta2 > 0.0f && beta2 < 1.0f)) fail("betas must be in (0, 1)");
    if (!(eps > 0.0f)) fail("eps must be positive");
    if (!(weight_decay >= 0.0f)) fail("weight_decay must be non-negative");
    if (epochs < 1) fail("epochs must be at least 1");
    if (max_steps < 0) fail("max_steps must be non-negative");
    if (batch < 1) fail("batch must be at least 1");
    if (crop < nn::kInputSize) fail("crop must be at least 128");
    if (grid_n < 2) fail("grid_n must be at least 2");
    if (!(clip_norm >= 0.0f)) fail("clip_norm must be non-negative");
    if (d1_samples < 1) fail("d1_samples must be at least 1");
    if (long_range_every < 1) fail("long_range_every must be at least 1");
    if (checkpoint_every < 0) fail("checkpoint_every must be non-negative");
    for (int e : decay_epochs)
        if (e < 0) fail("decay epochs must be non-negative");
    loss.validate();
    if (phase == Phase::student && loss.alpha > 0.0f && grid_n != nn::kTeacherGrid) {
        fail("grid_n must be 64 while distillation is enabled (alpha > 0); the teacher grid is 64^3");
    }
}

std::string config_to_json(const TrainConfig& c) {
    json j;
    j["phase"] = phase_name(c.phase);
    j["lr"] = c.lr;
    j["lr_decay"] = c.lr_decay;
    j["decay_epochs"] = c.decay_epochs;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["eps"] = c.eps;
    j["weight_decay"] = c.weight_decay;
    j["epochs"] = c.epochs;
    j["max_steps"] = c.max_steps;
    j["batch"] = c.batch;
    j["crop"] = c.crop;
    j["prep"] = c.prep == InputPrep::crop ? "crop" : "resize";
    j["seed"] = c.seed;
    j["loss"] = {{"alpha", c.loss.alpha}, {"beta", c.loss.beta}, {"lambda1", c.loss.lambda1}, {"lambda2", c.loss.lambda2}};
    j["grid_n"] = c.grid_n;
    j["clip_norm"] = c.clip_norm;
    j["d1_samples"] = c.d1_samples;
    j["long_range_every"] = c.long_range_every;
    j["unpaired_mef_ssim"] = c.unpaired_mef_ssim;
    j["augment_exposures"] = c.augment_exposures;
    j["checkpoint_every"] = c.checkpoint_every;
    j["checkpoint_path"] = c.checkpoint_path.string();
    return j.dump();
}

TrainConfig config_from_json(const std::string& text) {
    try {
        const auto j = json::parse(text);
        TrainConfig c;
        c.phase = j.at("phase").get<std::string>() == "teacher" ? Phase::teacher : Phase::student;
        c.lr = j.at("lr").get<float>();
        c.lr_decay = j.at("lr_decay").get<float>();
        c.decay_epochs = j.at("decay_epochs").get<std::vector<int>>();
        c.beta1 = j.at("beta1").get<float>();
        c.beta2 = j.at("beta2").get<float>();
        c.eps = j.at("eps").get<float>();
        c.weight_decay = j.at("weight_decay").get<float>();
        c.epochs = j.at("epochs").get<int>();
        c.max_steps = j.at("max_steps").get<int>();
        c.batch = j.at("batch").get<int>();
        c.crop = j.at("crop").get<int>();
        c.prep = j.at("prep").get<std::string>() == "resize" ? InputPrep::resize : InputPrep::crop;
        c.seed = j.at("seed").get<std::uint64_t>();
        const auto& l = j.at("loss");
        c.loss = {l.at("alpha").get<float>(), l.at("beta").get<float>(), l.at("lambda1").get<float>(),
                  l.at("lambda2").get<float>()};
        c.grid_n = j.at("grid_n").get<int>();
        c.clip_norm = j.at("clip_norm").get<float>();
        c.d1_samples = j.at("d1_samples").get<int>();
        c.long_range_every = j.at("long_range_every").get<int>();
        c.unpaired_mef_ssim = j.at("unpaired_mef_ssim").get<bool>();
        c.augment_exposures = j.at("augment_exposures").get<bool>();
        c.checkpoint_every = j.at("checkpoint_every").get<int>();
        c.checkpoint_path = j.at("checkpoint_path").get<std::string>();
        return c;
    } catch (const json::exception& e) {
        throw ParseError(std::string("train config JSON: ") + e.what());
    }
}

std::string TrainLog::to_tsv() const {
    std::string out = "step\tloss_total\tloss_l1\tloss_d1\tloss_lr\twall_ms\n";
    char line[256];
    for (const auto& r : records) {
        std::snprintf(line, sizeof line, "%lld\t%.9g\t%.9g\t%.9g\t%.9g\t%.3f\n", static_cast<long long>(r.step),
                      r.loss_total, r.loss_l1, r.loss_d1, r.loss_lr, r.wall_ms);
        out += line;
    }
    return out;
}

std::uint64_t TrainLog::digest() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xFF;
            h *= 0x100000001b3ull;
        }
    };
    for (const auto& r : records) {
        mix(static_cast<std::uint64_t>(r.step));
        for (float v : {r.loss_total, r.loss_l1, r.loss_d1, r.loss_lr}) mix(std::bit_cast<std::uint32_t>(v));
    }
    return h;
}

std::vector<double> smooth(const std::vector<double>& values, int window) {
    if (window < 1) throw ConfigError("smoothing window must be at least 1");
    std::vector<double> out(values.size());
    double acc = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        acc += values[i];
        if (i >= static_cast<std::size_t>(window)) acc -= values[i - window];
        out[i] = acc / static_cast<double>(std::min<std::size_t>(i + 1, window));
    }
    return out;
}

ExposureStack prepare_training_stack(const ExposureStack& stack, const TrainConfig& cfg) {
    stack.validate();
    const int h = std::min(cfg.crop, stack.height()), w = std::min(cfg.crop, stack.width());
    if (h == stack.height() && w == stack.width()) return stack;
    auto prep = [&](const ImageRgb& img) {
        return cfg.prep == InputPrep::crop ? center_crop(img, h, w) : resize_bilinear(img, h, w);
    };
    ExposureStack out;
    for (const auto& img : stack.images) out.images.push_back(prep(img));
    if (stack.ground_truth) out.ground_truth = prep(*stack.ground_truth);
    return out;
}

namespace {

struct Item {
    std::uint64_t index = 0;
    ImageRgb truth;
    Tensor input;   // [1,3K,128,128]
    Tensor images;  // [K,3,H,W]
    Tensor gt;      // [3,H,W]
    std::vector<ImageRgb> exposures;
    Tensor truth_corr;  // student only
    Tensor v_hat;       // student only, [64³,3]
};

std::vector<Item> load_items(const DatasetManifest& manifest, const TrainConfig& cfg) {
    const auto records = manifest.split(Split::train);
    if (records.empty()) throw ConfigError("training split is empty");
    std::vector<Item> items;
    for (const auto* r : records) {
        auto stack = prepare_training_stack(load_stack(manifest, *r), cfg);
        if (!stack.ground_truth) throw ConfigError("training record '" + r->gt.string() + "' has no ground truth");
        Item it;
        it.index = items.size();
        it.truth = *stack.ground_truth;
        it.input = nn::stack_input(stack);
        it.images = nn::stack_images(stack);
        it.gt = nn::planar_image(*stack.ground_truth);
        it.exposures = stack.images;
        items.push_back(std::move(it));
    }
    return items;
}

// The record with a stack freshly synthesized from its ground truth.
Item resynthesize(const Item& base, const TrainConfig& cfg, std::int64_t step) {
    ad::Rng rng(ad::mix_seed(ad::mix_seed(cfg.seed ^ kAugmentStream, static_cast<std::uint64_t>(step)), base.index));
    const auto stack = make_stack(base.truth, rng, static_cast<int>(base.images.dim(0)));
    Item it = base;
    it.input = nn::stack_input(stack);
    it.images = nn::stack_images(stack);
    it.exposures = stack.images;
    return it;
}

std::vector<int> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    ad::Rng rng(ad::mix_seed(seed ^ kOrderStream, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    return order;
}

struct StepLosses {
    double total = 0, l1 = 0, d1 = 0, lr = 0;
};

// Runs forward and backward for one record, with the loss scaled by
// `scale`; returns the unscaled loss values.
using RecordFn = std::function<StepLosses(const Item&, std::int64_t step, float scale)>;

struct Metadata {
    std::int64_t step = 0;
    float last_lr = 0.0f;
};

void write_metadata(ad::Checkpoint& ckpt, const TrainConfig& cfg, const TrainLog& log, const Metadata& m) {
    json j;
    j["phase"] = phase_name(cfg.phase);
    j["step"] = m.step;
    j["last_lr"] = m.last_lr;
    j["log_digest"] = log.digest();
    j["config"] = json::parse(config_to_json(cfg));
    json rows = json::array();
    for (const auto& r : log.records) rows.push_back({r.step, r.loss_total, r.loss_l1, r.loss_d1, r.loss_lr, r.wall_ms});
    j["log"] = std::move(rows);
    ckpt.metadata() = j.dump();
}

CheckpointInfo resume_info(const ad::Checkpoint& ckpt, Phase phase) {
    auto info = checkpoint_info(ckpt);
    if (info.phase != phase) {
        throw ConfigError(std::string("cannot resume ") + phase_name(phase) + " training from a " +
                          phase_name(info.phase) + " checkpoint");
    }
    return info;
}

Metadata read_metadata(const ad::Checkpoint& ckpt, Phase phase, TrainLog& log) {
    const auto info = resume_info(ckpt, phase);
    log = info.log;
    Metadata m;
    m.step = info.step;
    m.last_lr = json::parse(ckpt.metadata()).at("last_lr").get<float>();
    return m;
}

TrainResult run_loop(const TrainConfig& cfg, const std::vector<Item>& items, ad::AdamW& opt,
                     const std::function<void(ad::Checkpoint&)>& save_params, const RecordFn& record_fn,
                     const std::optional<ad::Checkpoint>& resume, const StepCallback& on_step, float& last_lr) {
    TrainLog log;
    Metadata meta;
    if (resume) {
        meta = read_metadata(*resume, cfg.phase, log);
        opt.load_from(*resume);
        last_lr = meta.last_lr;
    }
    const auto n = items.size();
    const std::int64_t per_epoch = static_cast<std::int64_t>((n + cfg.batch - 1) / cfg.batch);
    std::int64_t total_steps = per_epoch * cfg.epochs;
    if (cfg.max_steps > 0) total_steps = std::min<std::int64_t>(total_steps, cfg.max_steps);

    auto snapshot = [&] {
        ad::Checkpoint ckpt;
        save_params(ckpt);
        opt.save_to(ckpt);
        meta.last_lr = last_lr;
        write_metadata(ckpt, cfg, log, meta);
        return ckpt;
    };

    int cached_epoch = -1;
    std::vector<int> order;
    for (std::int64_t step = meta.step; step < total_steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        const int epoch = static_cast<int>(step / per_epoch);
        if (epoch != cached_epoch) {
            order = epoch_order(n, cfg.seed, epoch);
            cached_epoch = epoch;
        }
        const std::size_t first = static_cast<std::size_t>(step % per_epoch) * cfg.batch;
        const std::size_t last = std::min(n, first + static_cast<std::size_t>(cfg.batch));
        const float scale = 1.0f / static_cast<float>(last - first);

        opt.zero_grad();
        StepLosses sum;
        for (std::size_t i = first; i < last; ++i) {
            const auto l = record_fn(items[order[i]], step, scale);
            sum.total += l.total * scale;
            sum.l1 += l.l1 * scale;
            sum.d1 += l.d1 * scale;
            sum.lr += l.lr * scale;
        }
        if (!std::isfinite(sum.total)) {
            std::string msg = "non-finite loss at step " + std::to_string(step);
            if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty()) {
                msg += "; last good checkpoint kept at '" + cfg.checkpoint_path.string() + "'";
            }
            throw TrainingError(msg);
        }
        if (cfg.clip_norm > 0.0f) ad::clip_grad_norm(opt.params(), cfg.clip_norm);
        opt.set_lr(cfg.lr_at_epoch(epoch));
        opt.step();

        LogRecord rec;
        rec.step = step;
        rec.loss_total = static_cast<float>(sum.total);
        rec.loss_l1 = static_cast<float>(sum.l1);
        rec.loss_d1 = static_cast<float>(sum.d1);
        rec.loss_lr = static_cast<float>(sum.lr);
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        log.records.push_back(rec);
        meta.step = step + 1;
        if (on_step) on_step(rec);
        if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() && meta.step % cfg.checkpoint_every == 0) {
            snapshot().save(cfg.checkpoint_path);
        }
    }
    return {snapshot(), std::move(log)};
}

ad::AdamWConfig adam_config(const TrainConfig& cfg) {
    return {cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay};
}

std::vector<std::int32_t> sample_nodes(ad::Rng& rng, int count, int n) {
    const auto total = static_cast<std::uint64_t>(n) * n * n;
    std::vector<std::int32_t> out(static_cast<std::size_t>(count));
    for (auto& v : out) v = static_cast<std::int32_t>(rng() % total);
    return out;
}

Tensor gather_rows(const Tensor& nodes, const std::vector<std::int32_t>& rows) {
    std::vector<float> v;
    v.reserve(rows.size() * 3);
    for (auto r : rows)
        for (int c = 0; c < 3; ++c) v.push_back(nodes.data()[static_cast<std::size_t>(r) * 3 + c]);
    return Tensor::from({static_cast<std::int64_t>(rows.size()), 3}, std::move(v));
}

// Paired objective combined with the optional unpaired MEF-SSIM term.
Tensor objective(const TrainConfig& cfg, const Tensor& paired, const Item& item, const Tensor& enhanced) {
    if (!cfg.unpaired_mef_ssim) return paired;
    return semi_supervised_total(paired, mef_ssim_loss(item.exposures, enhanced), cfg.loss);
}

}  // namespace

TrainResult train_teacher(const DatasetManifest& manifest, const TrainConfig& cfg_in,
                          const std::optional<ad::Checkpoint>& resume, const StepCallback& on_step) {
    auto cfg = cfg_in;
    cfg.phase = Phase::teacher;
    cfg.validate();
    const auto items = load_items(manifest, cfg);
    const int k = static_cast<int>(items.front().images.dim(0));
    for (const auto& it : items)
        if (it.images.dim(0) != k) throw ConfigError("training stacks differ in exposure count");

    nn::Teacher teacher({k, cfg.seed});
    if (resume) {
        resume_info(*resume, Phase::teacher);
        teacher.params.load(*resume);
    }
    std::vector<Tensor> basis;
    for (const auto& b : nn::basis_luts()) basis.push_back(nn::grid_planes(nn::lut_nodes(b), nn::kTeacherGrid));

    ad::AdamW opt(teacher.params.all(), adam_config(cfg));
    float last_lr = 0.0f;
    auto record_fn = [&](const Item& base, std::int64_t step, float scale) {
        const Item item = cfg.augment_exposures ? resynthesize(base, cfg, step) : base;
        const int n = nn::kTeacherGrid;
        const auto fused = teacher.iw.fuse(item.images, item.input);
        const auto support = ad::lut_support(fused, n);
        const auto coords = nn::node_coords(support.nodes, n);
        std::vector<Tensor> deltas;
        for (const auto& planes : basis) deltas.push_back(teacher.inn(teacher.encoder(planes), coords));
        const auto w = nn::predict_weights(teacher, item.input);
        const auto nodes = ad::add(nn::node_identity(support.nodes, n), ad::weighted_sum(deltas, w));
        const auto enhanced = ad::lut_lookup(nodes, support.index, n, fused);
        const auto l1 = l1_loss(enhanced, item.gt);
        const auto loss = objective(cfg, l1, item, enhanced);
        ad::backward(ad::scale(loss, scale));
        StepLosses out;
        out.total = loss.item();
        out.l1 = l1.item();
        return out;
    };
    auto save = [&](ad::Checkpoint& c) { teacher.save(c); };
    return run_loop(cfg, items, opt, save, record_fn, resume, on_step, last_lr);
}

LongRangeStep long_range_backward(const nn::Student& student, const Tensor& latent, const Tensor& truth_corr, int n,
                                  float weight, std::int64_t chunk) {
    if (chunk < 1) throw ConfigError("chunk must be at least 1");
    Tensor grid;
    {
        ad::NoGradGuard guard;
        grid = nn::lut_nodes(nn::generate_lut(student.inn, latent, n));
    }
    grid.set_requires_grad(true);
    const auto loss = long_range_loss(nn::tokenize_lut(student, grid), truth_corr);
    ad::backward(ad::scale(loss, weight));

    LongRangeStep out;
    out.value = loss.item();
    if (!grid.has_grad()) {
        out.latent_route = ad::scale(ad::sum(latent), 0.0f);
        return out;
    }
    auto latent_leaf = latent.detach().set_requires_grad(true);
    const std::int64_t total = static_cast<std::int64_t>(n) * n * n;
    const auto node_grad = grid.grad();
    for (std::int64_t begin = 0; begin < total; begin += chunk) {
        const std::int64_t end = std::min(total, begin + chunk);
        std::vector<std::int32_t> flat(static_cast<std::size_t>(end - begin));
        std::iota(flat.begin(), flat.end(), static_cast<std::int32_t>(begin));
        const auto delta = student.inn(latent_leaf, nn::node_coords(flat, n));
        const auto g = node_grad.subspan(static_cast<std::size_t>(begin) * 3, static_cast<std::size_t>(end - begin) * 3);
        ad::backward(ad::sum(ad::mul(delta, Tensor::from({end - begin, 3}, std::vector<float>(g.begin(), g.end())))));
    }
    const auto lg = latent_leaf.grad();
    out.latent_route = ad::sum(ad::mul(latent, Tensor::from(latent.shape(), std::vector<float>(lg.begin(), lg.end()))));
    return out;
}

TrainResult train_student(const DatasetManifest& manifest, const TrainConfig& cfg_in, const nn::Teacher& teacher,
                          const std::optional<ad::Checkpoint>& resume, const StepCallback& on_step) {
    auto cfg = cfg_in;
    cfg.phase = Phase::student;
    cfg.validate();
    auto items = load_items(manifest, cfg);
    const int k = static_cast<int>(items.front().images.dim(0));
    for (const auto& it : items)
        if (it.images.dim(0) != k) throw ConfigError("training stacks differ in exposure count");
    if (teacher.exposures() != k) throw ConfigError("teacher was trained for a different exposure count");

    nn::Student student({k, cfg.seed});
    if (resume) {
        resume_info(*resume, Phase::student);
        student.params.load(*resume);
    }

    const bool distill = cfg.loss.alpha > 0.0f;
    const bool long_range = cfg.loss.beta > 0.0f;
    Tensor teacher_id;
    std::vector<Tensor> teacher_deltas;
    {
        ad::NoGradGuard guard;
        if (distill) {
            teacher_id = nn::lut_nodes(identity_lut(nn::kTeacherGrid));
            for (const auto& g : nn::teacher_grids(teacher, nn::basis_luts())) {
                teacher_deltas.push_back(ad::sub(nn::lut_nodes(g), teacher_id));
            }
            for (auto& it : items) {
                it.v_hat = ad::add(teacher_id, ad::weighted_sum(teacher_deltas, nn::predict_weights(teacher, it.input)));
            }
        }
        if (long_range) {
            for (auto& it : items) it.truth_corr = nn::tokenize_truth(student, nn::to_image(it.gt));
        }
    }

    ad::AdamW opt(student.trainable(), adam_config(cfg));
    float last_lr = 0.0f;
    const float paired_weight = cfg.unpaired_mef_ssim ? cfg.loss.lambda1 : 1.0f;
    const int n = cfg.grid_n;

    auto record_fn = [&](const Item& base, std::int64_t step, float scale) {
        Item item = base;
        if (cfg.augment_exposures) {
            item = resynthesize(base, cfg, step);
            if (distill) {
                ad::NoGradGuard guard;
                item.v_hat = ad::add(teacher_id, ad::weighted_sum(teacher_deltas, nn::predict_weights(teacher, item.input)));
            }
        }
        const auto latent = nn::encode_latent(student, item.input);
        const auto fused = student.iw.fuse(item.images, item.input);
        const auto support = ad::lut_support(fused, n);
        const auto nodes = ad::add(nn::node_identity(support.nodes, n),
                                   student.inn(latent, nn::node_coords(support.nodes, n)));
        const auto enhanced = ad::lut_lookup(nodes, support.index, n, fused);
        const auto l1 = l1_loss(enhanced, item.gt);
        Tensor paired = l1;

        StepLosses out;
        out.l1 = l1.item();
        if (distill) {
            ad::Rng rng(ad::mix_seed(cfg.seed ^ kSampleStream, static_cast<std::uint64_t>(step)));
            const auto rows = sample_nodes(rng, cfg.d1_samples, n);
            const auto v = ad::add(nn::node_identity(rows, n), student.inn(latent, nn::node_coords(rows, n)));
            const auto d1 = grid_distill_loss(v, gather_rows(item.v_hat, rows));
            out.d1 = d1.item();
            paired = ad::add(paired, ad::scale(d1, cfg.loss.alpha));
        }

        Tensor latent_route;
        if (long_range && step % cfg.long_range_every == 0) {
            auto lr = long_range_backward(student, latent, item.truth_corr, n, cfg.loss.beta * paired_weight * scale);
            latent_route = std::move(lr.latent_route);
            last_lr = static_cast<float>(lr.value);
        }
        out.lr = last_lr;

        const auto obj = objective(cfg, paired, item, enhanced);
        auto loss = ad::scale(obj, scale);
        if (latent_route.defined()) loss = ad::add(loss, latent_route);
        ad::backward(loss);
        out.total = obj.item() + paired_weight * cfg.loss.beta * out.lr;
        return out;
    };
    auto save = [&](ad::Checkpoint& c) { student.save(c); };
    return run_loop(cfg, items, opt, save, record_fn, resume, on_step, last_lr);
}

CheckpointInfo checkpoint_info(const ad::Checkpoint& ckpt) {
    if (ckpt.metadata().empty()) throw ParseError("checkpoint carries no training metadata");
    try {
        const auto j = json::parse(ckpt.metadata());
        CheckpointInfo info;
        info.phase = j.at("phase").get<std::string>() == "teacher" ? Phase::teacher : Phase::student;
        info.step = j.at("step").get<std::int64_t>();
        info.log_digest = j.at("log_digest").get<std::uint64_t>();
        info.config = config_from_json(j.at("config").dump());
        for (const auto& row : j.at("log")) {
            LogRecord r;
            r.step = row.at(0).get<std::int64_t>();
            r.loss_total = row.at(1).get<float>();
            r.loss_l1 = row.at(2).get<float>();
            r.loss_d1 = row.at(3).get<float>();
            r.loss_lr = row.at(4).get<float>();
            r.wall_ms = row.at(5).get<double>();
            info.log.records.push_back(r);
        }
        return info;
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint metadata: ") + e.what());
    }
}

namespace {

template <typename Forward>
EvalResult evaluate_split(const DatasetManifest& manifest, Split split, int grid_n, Forward&& forward) {
    const auto records = manifest.split(split);
    if (records.empty()) throw ConfigError(std::string("the ") + split_name(split) + " split is empty");
    EvalResult res;
    res.grid_n = grid_n;
    for (const auto* r : records) {
        const auto stack = load_stack(manifest, *r);
        if (!stack.ground_truth) throw ConfigError("record '" + r->gt.string() + "' has no ground truth");
        const auto& gt = *stack.ground_truth;
        const auto out = forward(stack);
        EvalRow row;
        row.name = r->gt.generic_string();
        row.psnr = psnr(out, gt);
        row.ssim = ssim(out, gt);
        row.best_input_psnr = 0.0;
        for (const auto& img : stack.images) row.best_input_psnr = std::max(row.best_input_psnr, psnr(img, gt));
        res.mean_psnr += row.psnr;
        res.mean_ssim += row.ssim;
        res.mean_best_input_psnr += row.best_input_psnr;
        res.rows.push_back(std::move(row));
    }
    const double count = static_cast<double>(res.rows.size());
    res.mean_psnr /= count;
    res.mean_ssim /= count;
    res.mean_best_input_psnr /= count;
    return res;
}

}  // namespace

EvalResult evaluate(const nn::Student& student, const DatasetManifest& manifest, Split split, int grid_n) {
    if (grid_n < 2) throw ConfigError("grid resolution must be at least 2");
    return evaluate_split(manifest, split, grid_n,
                          [&](const ExposureStack& s) { return nn::student_forward(student, s, grid_n).enhanced; });
}

EvalResult evaluate_teacher(const nn::Teacher& teacher, const DatasetManifest& manifest, Split split) {
    const auto basis = nn::basis_luts();
    const auto grids = nn::teacher_grids(teacher, basis);
    const auto id = nn::lut_nodes(identity_lut(nn::kTeacherGrid));
    std::vector<Tensor> deltas;
    for (const auto& g : grids) deltas.push_back(ad::sub(nn::lut_nodes(g), id));
    return evaluate_split(manifest, split, nn::kTeacherGrid, [&](const ExposureStack& s) {
        ad::NoGradGuard guard;
        const auto w = nn::predict_weights(teacher, nn::stack_input(s));
        const auto lut = nn::nodes_to_lut(ad::add(id, ad::weighted_sum(deltas, w)), nn::kTeacherGrid);
        return apply(lut, nn::image_weight_fuse(teacher.iw, s));
    });
}

}  // namespace lutfuse
