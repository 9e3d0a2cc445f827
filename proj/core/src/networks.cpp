#include "lutfuse/networks.hpp"

#include <algorithm>
#include <cmath>

#include "lutfuse/error.hpp"
#include "lutfuse/parallel.hpp"

namespace lutfuse::nn {

namespace {

constexpr int kHidden = 16;
constexpr int kTokenGrid = 4;
constexpr std::int64_t kQueryChunk = 8192;

void require(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

Tensor stack_channels(const std::vector<std::vector<float>>& planes, int k, int h, int w) {
    std::vector<float> data;
    data.reserve(static_cast<std::size_t>(k) * 3 * h * w);
    for (const auto& p : planes) data.insert(data.end(), p.begin(), p.end());
    return Tensor::from({1, 3LL * k, h, w}, std::move(data));
}

Tensor tokens_to_matrix(const Tensor& features) {
    // features [1,C,4,4] -> tokens [16,C]
    const auto c = features.dim(1);
    auto pooled = ad::reshape(features, {c, kTokenGrid * kTokenGrid});
    return correlation(ad::transpose(pooled));
}

std::string conv_name(const std::string& prefix, int i) { return prefix + "/conv" + std::to_string(i); }

}  // namespace

Tensor ParamSet::add(const std::string& name, Shape shape) {
    for (const auto& p : params_) {
        if (p.name == name) throw ConfigError("duplicate parameter name '" + name + "'");
    }
    auto t = Tensor::zeros(std::move(shape), true);
    params_.push_back({name, t});
    return t;
}

const Tensor& ParamSet::get(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return p.tensor;
    throw ConfigError("no parameter named '" + name + "'");
}

std::vector<ad::NamedTensor> ParamSet::select(std::initializer_list<std::string_view> prefixes) const {
    std::vector<ad::NamedTensor> out;
    for (const auto& p : params_) {
        for (auto pre : prefixes) {
            if (std::string_view(p.name).starts_with(pre)) {
                out.push_back(p);
                break;
            }
        }
    }
    return out;
}

std::int64_t ParamSet::count() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
}

std::int64_t ParamSet::count(std::string_view prefix) const {
    std::int64_t n = 0;
    for (const auto& p : params_)
        if (std::string_view(p.name).starts_with(prefix)) n += p.tensor.numel();
    return n;
}

void ParamSet::save(ad::Checkpoint& ckpt) const {
    for (const auto& p : params_) ckpt.put(p.name, p.tensor);
}

void ParamSet::load(const ad::Checkpoint& ckpt) {
    for (auto& p : params_) ckpt.restore(p.name, p.tensor);
}

void ParamSet::clear_grads() {
    for (auto& p : params_) p.tensor.clear_grad();
}

Conv make_conv(ParamSet& ps, const std::string& name, int in, int out, int kernel, int stride, int padding, ad::Rng& rng,
               float gain) {
    Conv c;
    c.weight = ps.add(name + "/weight", {out, in, kernel, kernel});
    c.bias = ps.add(name + "/bias", {out});
    ad::kaiming_uniform(c.weight, static_cast<std::int64_t>(in) * kernel * kernel, rng, gain);
    c.stride = stride;
    c.padding = padding;
    return c;
}

Dense make_dense(ParamSet& ps, const std::string& name, int in, int out, ad::Rng& rng, float gain) {
    Dense d;
    d.weight = ps.add(name + "/weight", {out, in});
    d.bias = ps.add(name + "/bias", {out});
    ad::kaiming_uniform(d.weight, in, rng, gain);
    return d;
}

Tensor planar_image(const ImageRgb& img) {
    return Tensor::from({3, img.height(), img.width()}, img.to_planar());
}

ImageRgb to_image(const Tensor& planar) {
    require(planar.rank() == 3 && planar.dim(0) == 3, "to_image: expected [3,H,W], got " + ad::shape_to_string(planar.shape()));
    return ImageRgb::from_planar(static_cast<int>(planar.dim(1)), static_cast<int>(planar.dim(2)), planar.data());
}

Tensor stack_input(const ExposureStack& stack) {
    stack.validate();
    std::vector<std::vector<float>> planes;
    for (const auto& img : stack.images) {
        const bool same = img.height() == kInputSize && img.width() == kInputSize;
        planes.push_back(same ? img.to_planar() : resize_bilinear(img, kInputSize, kInputSize).to_planar());
    }
    return stack_channels(planes, stack.size(), kInputSize, kInputSize);
}

Tensor stack_images(const ExposureStack& stack) {
    stack.validate();
    std::vector<std::vector<float>> planes;
    for (const auto& img : stack.images) planes.push_back(img.to_planar());
    auto t = stack_channels(planes, stack.size(), stack.height(), stack.width());
    return ad::reshape(t, {stack.size(), 3, stack.height(), stack.width()});
}

Tensor grid_coords(int n) {
    if (n < 2) throw ConfigError("grid resolution must be at least 2, got " + std::to_string(n));
    std::vector<std::int32_t> flat(static_cast<std::size_t>(n) * n * n);
    for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = static_cast<std::int32_t>(i);
    return node_coords(flat, n);
}

Tensor node_coords(const std::vector<std::int32_t>& flat, int n) {
    std::vector<float> v;
    v.reserve(flat.size() * 3);
    for (auto idx : flat) {
        const int r = idx % n, g = (idx / n) % n, b = idx / (n * n);
        for (int a : {r, g, b}) v.push_back(2.0f * lattice_value(a, n) - 1.0f);
    }
    return Tensor::from({static_cast<std::int64_t>(flat.size()), 3}, std::move(v));
}

Tensor node_identity(const std::vector<std::int32_t>& flat, int n) {
    std::vector<float> v;
    v.reserve(flat.size() * 3);
    for (auto idx : flat) {
        const int r = idx % n, g = (idx / n) % n, b = idx / (n * n);
        for (int a : {r, g, b}) v.push_back(lattice_value(a, n));
    }
    return Tensor::from({static_cast<std::int64_t>(flat.size()), 3}, std::move(v));
}

StudentEncoder::StudentEncoder(ParamSet& ps, const std::string& prefix, int k, ad::Rng& rng) {
    const int widths[] = {12, 12, 24, 24, 32, 32, 48, 48};
    int in = 3 * k;
    for (int i = 0; i < 8; ++i) {
        const int stride = i % 2 == 0 ? 2 : 1;
        convs.push_back(make_conv(ps, conv_name(prefix, i), in, widths[i], 3, stride, 1, rng));
        in = widths[i];
    }
    proj0 = make_conv(ps, prefix + "/proj0", 48, 96, 1, 1, 0, rng);
    proj1 = make_conv(ps, prefix + "/proj1", 96, 96, 1, 1, 0, rng);
}

Tensor StudentEncoder::operator()(const Tensor& x) const {
    const auto expect = convs.front().weight.dim(1);
    require(x.rank() == 4 && x.dim(0) == 1 && x.dim(1) == expect && x.dim(2) == kInputSize && x.dim(3) == kInputSize,
            "encode_latent: expected [1," + std::to_string(expect) + ",128,128], got " + ad::shape_to_string(x.shape()));
    Tensor h = x;
    for (const auto& c : convs) h = ad::relu(c(h));
    h = proj1(ad::relu(proj0(h)));
    return ad::reshape(h, {kLatentChannels, kLatentSize, kLatentSize, kLatentSize});
}

TeacherEncoder::TeacherEncoder(ParamSet& ps, const std::string& prefix, ad::Rng& rng) {
    in_proj = make_conv(ps, prefix + "/proj0", 3 * kTeacherGrid, 16, 1, 1, 0, rng);
    struct Spec { int in, out, stride; };
    const Spec specs[] = {{16, 16, 2}, {16, 32, 2}, {32, 32, 2}, {32, 48, 1}, {48, 48, 1}};
    for (int i = 0; i < 5; ++i) convs.push_back(make_conv(ps, conv_name(prefix, i), specs[i].in, specs[i].out, 3, specs[i].stride, 1, rng));
    out_proj = make_conv(ps, prefix + "/proj1", 48, 96, 1, 1, 0, rng);
}

Tensor TeacherEncoder::operator()(const Tensor& x) const {
    require(x.rank() == 4 && x.dim(0) == 1 && x.dim(1) == 3 * kTeacherGrid && x.dim(2) == kTeacherGrid &&
                x.dim(3) == kTeacherGrid,
            "teacher encoder: expected [1,192,64,64], got " + ad::shape_to_string(x.shape()));
    Tensor h = ad::relu(in_proj(x));
    for (const auto& c : convs) h = ad::relu(c(h));
    h = out_proj(h);
    return ad::reshape(h, {kLatentChannels, kLatentSize, kLatentSize, kLatentSize});
}

ImplicitLut::ImplicitLut(ParamSet& ps, const std::string& prefix, int depth, ad::Rng& rng) {
    int in = kLatentChannels + 3;
    for (int i = 0; i < depth; ++i) {
        const bool last = i == depth - 1;
        const int out = last ? 3 : kHidden;
        layers.push_back(make_dense(ps, prefix + "/fc" + std::to_string(i), in, out, rng, last ? 1e-2f : 1.0f));
        in = out;
    }
}

Tensor ImplicitLut::operator()(const Tensor& latent, const Tensor& coords) const {
    require(latent.shape() == Shape{kLatentChannels, kLatentSize, kLatentSize, kLatentSize},
            "inn_query: latent must be [12,8,8,8], got " + ad::shape_to_string(latent.shape()));
    require(coords.rank() == 2 && coords.dim(1) == 3, "inn_query: coords must be [M,3]");
    Tensor h = ad::concat_columns(ad::sample_volume(latent, coords), coords);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = layers[i](h);
        if (i + 1 < layers.size()) h = ad::elu(h);
    }
    return h;
}

WeightPredictor::WeightPredictor(ParamSet& ps, const std::string& prefix, int k, ad::Rng& rng) {
    const int widths[] = {8, 16, 16, 32};
    int in = 3 * k;
    for (int i = 0; i < 4; ++i) {
        convs.push_back(make_conv(ps, conv_name(prefix, i), in, widths[i], 3, 2, 1, rng));
        in = widths[i];
    }
    fc0 = make_dense(ps, prefix + "/fc0", 32, 32, rng);
    fc1 = make_dense(ps, prefix + "/fc1", 32, kBasisCount, rng, 0.1f);
}

Tensor WeightPredictor::operator()(const Tensor& x) const {
    const auto expect = convs.front().weight.dim(1);
    require(x.rank() == 4 && x.dim(0) == 1 && x.dim(1) == expect && x.dim(2) == kInputSize && x.dim(3) == kInputSize,
            "predict_weights: expected [1," + std::to_string(expect) + ",128,128], got " + ad::shape_to_string(x.shape()));
    Tensor h = x;
    for (const auto& c : convs) h = ad::relu(c(h));
    h = fc1(ad::relu(fc0(ad::global_avg_pool(h))));
    // Project onto the sum-zero plane and shift so that Σ w = 1.
    std::vector<float> centre(kBasisCount * kBasisCount);
    for (int i = 0; i < kBasisCount; ++i)
        for (int j = 0; j < kBasisCount; ++j) centre[i * kBasisCount + j] = (i == j ? 1.0f : 0.0f) - 1.0f / kBasisCount;
    auto w = ad::add_scalar(ad::matmul(h, Tensor::from({kBasisCount, kBasisCount}, std::move(centre))),
                            1.0f / kBasisCount);
    return ad::reshape(w, {kBasisCount});
}

ImageWeighting::ImageWeighting(ParamSet& ps, const std::string& prefix, int k, ad::Rng& rng) {
    convs.push_back(make_conv(ps, conv_name(prefix, 0), 3 * k, 8, 3, 1, 1, rng));
    convs.push_back(make_conv(ps, conv_name(prefix, 1), 8, 8, 3, 1, 1, rng));
    convs.push_back(make_conv(ps, conv_name(prefix, 2), 8, 8, 3, 1, 1, rng));
    convs.push_back(make_conv(ps, conv_name(prefix, 3), 8, 8, 1, 1, 0, rng));
    convs.push_back(make_conv(ps, conv_name(prefix, 4), 8, k, 1, 1, 0, rng));
}

Tensor ImageWeighting::weights(const Tensor& x) const {
    const auto expect = convs.front().weight.dim(1);
    require(x.rank() == 4 && x.dim(0) == 1 && x.dim(1) == expect && x.dim(2) == kInputSize && x.dim(3) == kInputSize,
            "image weighting: expected [1," + std::to_string(expect) + ",128,128], got " + ad::shape_to_string(x.shape()));
    Tensor h = x;
    for (std::size_t i = 0; i < convs.size(); ++i) {
        h = convs[i](h);
        if (i + 1 < convs.size()) h = ad::relu(h);
    }
    const auto k = convs.back().weight.dim(0);
    return ad::softmax(ad::reshape(h, {k, kInputSize, kInputSize}), 0);
}

Tensor ImageWeighting::fuse(const Tensor& images, const Tensor& stack128) const {
    const auto k = convs.back().weight.dim(0);
    require(images.rank() == 4 && images.dim(0) == k && images.dim(1) == 3,
            "image_weight_fuse: expected [" + std::to_string(k) + ",3,H,W] images, got " + ad::shape_to_string(images.shape()));
    const auto h = images.dim(2), w = images.dim(3);
    auto wk = weights(stack128);
    if (h != kInputSize || w != kInputSize) {
        wk = ad::reshape(ad::resize_bilinear(ad::reshape(wk, {1, k, kInputSize, kInputSize}), static_cast<int>(h),
                                             static_cast<int>(w)),
                         {k, h, w});
    }
    return ad::blend_images(wk, images);
}

TruthTokenizer::TruthTokenizer(ParamSet& ps, const std::string& prefix, ad::Rng& rng) {
    stem = make_conv(ps, prefix, 3, 16, 16, 16, 0, rng);
}

Tensor TruthTokenizer::operator()(const ImageRgb& gt) const {
    const auto img = resize_bilinear(gt, 256, 256);
    auto x = Tensor::from({1, 3, 256, 256}, img.to_planar());
    return tokens_to_matrix(ad::adaptive_avg_pool2d(stem(x), kTokenGrid, kTokenGrid));
}

LutTokenizer::LutTokenizer(ParamSet& ps, const std::string& prefix, ad::Rng& rng) {
    proj = make_conv(ps, prefix + "/proj0", 3 * kTeacherGrid, 12, 1, 1, 0, rng);
    convs.push_back(make_conv(ps, conv_name(prefix, 0), 12, 16, 3, 2, 0, rng));
    convs.push_back(make_conv(ps, conv_name(prefix, 1), 16, 16, 3, 2, 0, rng));
    for (int i = 2; i < 5; ++i) convs.push_back(make_conv(ps, conv_name(prefix, i), 16, 16, 3, 1, 0, rng));
}

Tensor LutTokenizer::operator()(const Tensor& nodes) const {
    const std::int64_t n = kTeacherGrid;
    require(nodes.shape() == Shape{n * n * n, 3},
            "tokenize_lut: expected [262144,3] nodes, got " + ad::shape_to_string(nodes.shape()));
    Tensor h = proj(grid_planes(nodes, kTeacherGrid));
    for (std::size_t i = 0; i < convs.size(); ++i) {
        h = convs[i](h);
        if (i + 1 < convs.size()) h = ad::relu(h);
    }
    return tokens_to_matrix(ad::adaptive_avg_pool2d(h, kTokenGrid, kTokenGrid));
}

Tensor correlation(const Tensor& tokens) {
    require(tokens.rank() == 2, "correlation: tokens must be 2-D");
    auto t = ad::l2_normalize_rows(tokens);
    return ad::matmul(t, ad::transpose(t));
}

Tensor grid_planes(const Tensor& nodes, int n) {
    const std::int64_t nn = n;
    require(nodes.shape() == Shape{nn * nn * nn, 3}, "grid_planes: expected [n³,3] nodes");
    auto v = ad::permute(ad::reshape(nodes, {nn, nn, nn, 3}), {3, 0, 1, 2});
    return ad::reshape(v, {1, 3 * nn, nn, nn});
}

std::vector<Lut3d> basis_luts(int n) {
    std::vector<Lut3d> out;
    for (float gamma : {1.0f, 0.6f, 1.8f}) {
        Lut3d lut(n);
        auto v = lut.values();
        for (int b = 0; b < n; ++b)
            for (int g = 0; g < n; ++g)
                for (int r = 0; r < n; ++r) {
                    const int idx[3] = {r, g, b};
                    for (int c = 0; c < 3; ++c) {
                        const float x = lattice_value(idx[c], n);
                        v[lut.offset(r, g, b) + c] = gamma == 1.0f ? x : std::pow(x, gamma);
                    }
                }
        out.push_back(std::move(lut));
    }
    return out;
}

Teacher::Teacher(ModelOptions opt) : opt_(opt) {
    if (opt.exposures < 2) throw ConfigError("models need at least 2 exposures");
    ad::Rng rng(ad::mix_seed(opt.seed, 0x7e4c));
    encoder = TeacherEncoder(params, "teacher/encoder", rng);
    inn = ImplicitLut(params, "teacher/inn", 5, rng);
    wp = WeightPredictor(params, "teacher/wp", opt.exposures, rng);
    iw = ImageWeighting(params, "teacher/iw", opt.exposures, rng);
}

namespace {

int exposures_from(const ad::Checkpoint& ckpt, const std::string& first_conv) {
    const auto& e = ckpt.at(first_conv);
    if (e.shape.size() != 4 || e.shape[1] % 3 != 0) throw ParseError("checkpoint entry '" + first_conv + "' is malformed");
    return static_cast<int>(e.shape[1] / 3);
}

}  // namespace

Teacher Teacher::from_checkpoint(const ad::Checkpoint& ckpt) {
    Teacher t({exposures_from(ckpt, "teacher/iw/conv0/weight"), 1});
    t.params.load(ckpt);
    return t;
}

void Teacher::save(ad::Checkpoint& ckpt) const { params.save(ckpt); }

Student::Student(ModelOptions opt) : opt_(opt) {
    if (opt.exposures < 2) throw ConfigError("models need at least 2 exposures");
    ad::Rng rng(ad::mix_seed(opt.seed, 0x5750));
    encoder = StudentEncoder(params, "student/encoder", opt.exposures, rng);
    inn = ImplicitLut(params, "student/inn", 7, rng);
    iw = ImageWeighting(params, "student/iw", opt.exposures, rng);
    truth_tokenizer = TruthTokenizer(params, "student/tokenizer/stem", rng);
    lut_tokenizer = LutTokenizer(params, "student/tokenizer/lut", rng);
}

std::int64_t Student::parameter_count() const {
    return params.count("student/encoder/") + params.count("student/inn/") + params.count("student/iw/");
}

std::vector<ad::NamedTensor> Student::trainable() const {
    return params.select({"student/encoder/", "student/inn/", "student/iw/", "student/tokenizer/lut/"});
}

Student Student::from_checkpoint(const ad::Checkpoint& ckpt) {
    Student s({exposures_from(ckpt, "student/encoder/conv0/weight"), 1});
    s.params.load(ckpt);
    return s;
}

void Student::save(ad::Checkpoint& ckpt) const { params.save(ckpt); }

Tensor encode_latent(const Student& s, const Tensor& stack128) { return s.encoder(stack128); }

Tensor inn_query(const ImplicitLut& inn, const Tensor& latent, const Tensor& coords) { return inn(latent, coords); }

Lut3d generate_lut(const ImplicitLut& inn, const Tensor& latent, int n) {
    if (n < 2) throw ConfigError("grid resolution must be at least 2, got " + std::to_string(n));
    const std::int64_t total = static_cast<std::int64_t>(n) * n * n;
    const auto latent_const = latent.detach();
    Lut3d lut(n);
    auto out = lut.values();
    const int chunks = static_cast<int>((total + kQueryChunk - 1) / kQueryChunk);
    parallel_rows(chunks, default_thread_count(), [&](int c0, int c1) {
        ad::NoGradGuard guard;
        for (int c = c0; c < c1; ++c) {
            const std::int64_t begin = c * kQueryChunk, end = std::min(total, begin + kQueryChunk);
            std::vector<std::int32_t> flat;
            flat.reserve(static_cast<std::size_t>(end - begin));
            for (auto i = begin; i < end; ++i) flat.push_back(static_cast<std::int32_t>(i));
            const auto delta = inn(latent_const, node_coords(flat, n));
            const auto id = node_identity(flat, n);
            const auto v = ad::add(id, delta);
            std::copy(v.data().begin(), v.data().end(), out.begin() + begin * 3);
        }
    });
    return lut;
}

Tensor predict_weights(const Teacher& t, const Tensor& stack128) { return t.wp(stack128); }

FusionWeights to_fusion_weights(const Tensor& w) {
    return FusionWeights{std::vector<float>(w.data().begin(), w.data().end())};
}

ImageRgb image_weight_fuse(const ImageWeighting& iw, const ExposureStack& stack) {
    ad::NoGradGuard guard;
    return to_image(iw.fuse(stack_images(stack), stack_input(stack)));
}

std::vector<Tensor> teacher_latents(const Teacher& t, const std::vector<Lut3d>& basis) {
    if (basis.size() != static_cast<std::size_t>(kBasisCount)) {
        throw ConfigError("teacher needs exactly 3 basis LUTs, got " + std::to_string(basis.size()));
    }
    std::vector<Tensor> out;
    for (const auto& b : basis) {
        if (b.size() != kTeacherGrid) throw ConfigError("basis LUTs must have resolution 64");
        out.push_back(t.encoder(grid_planes(lut_nodes(b), kTeacherGrid)));
    }
    return out;
}

std::vector<Lut3d> teacher_grids(const Teacher& t, const std::vector<Lut3d>& basis) {
    ad::NoGradGuard guard;
    std::vector<Lut3d> out;
    for (const auto& l : teacher_latents(t, basis)) out.push_back(generate_lut(t.inn, l, kTeacherGrid));
    return out;
}

ForwardResult teacher_forward(const Teacher& t, const ExposureStack& stack, const std::vector<Lut3d>& basis) {
    ad::NoGradGuard guard;
    const auto grids = teacher_grids(t, basis);
    const auto w = predict_weights(t, stack_input(stack));
    const auto id = lut_nodes(identity_lut(kTeacherGrid));
    std::vector<Tensor> deltas;
    for (const auto& g : grids) deltas.push_back(ad::sub(lut_nodes(g), id));
    auto fused = nodes_to_lut(ad::add(id, ad::weighted_sum(deltas, w)), kTeacherGrid);
    const auto fused_image = image_weight_fuse(t.iw, stack);
    return {apply(fused, fused_image), std::move(fused)};
}

ForwardResult student_forward(const Student& s, const ExposureStack& stack, int n) {
    ad::NoGradGuard guard;
    const auto input = stack_input(stack);
    auto lut = generate_lut(s.inn, encode_latent(s, input), n);
    const auto fused_image = to_image(s.iw.fuse(stack_images(stack), input));
    return {apply(lut, fused_image), std::move(lut)};
}

Tensor tokenize_truth(const Student& s, const ImageRgb& gt) { return s.truth_tokenizer(gt); }

Tensor tokenize_lut(const Student& s, const Tensor& nodes) { return s.lut_tokenizer(nodes); }

Tensor tokenize_lut(const Student& s, const Lut3d& lut) {
    if (lut.size() != kTeacherGrid) throw ConfigError("tokenize_lut needs a 64-point grid");
    return s.lut_tokenizer(lut_nodes(lut));
}

Tensor lut_nodes(const Lut3d& lut) {
    const auto v = lut.values();
    return Tensor::from({static_cast<std::int64_t>(lut.entry_count()), 3}, std::vector<float>(v.begin(), v.end()));
}

Lut3d nodes_to_lut(const Tensor& nodes, int n) {
    const std::int64_t total = static_cast<std::int64_t>(n) * n * n;
    require(nodes.shape() == Shape{total, 3}, "nodes_to_lut: expected [n³,3] nodes");
    return Lut3d(n, std::vector<float>(nodes.data().begin(), nodes.data().end()));
}

}  // namespace lutfuse::nn
