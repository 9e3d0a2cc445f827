#pragma once

// Learned components of the teacher and the student.
//
// Latent volumes are [12, 8(b), 8(g), 8(r)]; grid coordinates are rows
// (x, y, z) = (r, g, b) scaled to [-1, 1]. Lattice nodes are addressed by
// flat index r + g·n + b·n², the same order as Lut3d storage.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lutfuse/checkpoint.hpp"
#include "lutfuse/dataset.hpp"
#include "lutfuse/init.hpp"
#include "lutfuse/lut.hpp"
#include "lutfuse/ops.hpp"
#include "lutfuse/optim.hpp"

namespace lutfuse::nn {

using ad::Shape;
using ad::Tensor;

inline constexpr int kLatentChannels = 12;
inline constexpr int kLatentSize = 8;
inline constexpr int kInputSize = 128;
inline constexpr int kTeacherGrid = 64;
inline constexpr int kBasisCount = 3;

// Ordered, uniquely named parameters of one model.
class ParamSet {
public:
    // New zero tensor with requires_grad set. Names must be unique.
    Tensor add(const std::string& name, Shape shape);
    const Tensor& get(const std::string& name) const;
    const std::vector<ad::NamedTensor>& all() const { return params_; }
    // Parameters whose name starts with any of `prefixes`.
    std::vector<ad::NamedTensor> select(std::initializer_list<std::string_view> prefixes) const;
    std::int64_t count() const;
    std::int64_t count(std::string_view prefix) const;

    void save(ad::Checkpoint& ckpt) const;
    void load(const ad::Checkpoint& ckpt);
    void clear_grads();

private:
    std::vector<ad::NamedTensor> params_;
};

struct Conv {
    Tensor weight, bias;
    int stride = 1;
    int padding = 0;
    Tensor operator()(const Tensor& x) const { return ad::conv2d(x, weight, bias, stride, padding); }
};

struct Dense {
    Tensor weight, bias;
    Tensor operator()(const Tensor& x) const { return ad::linear(x, weight, bias); }
};

Conv make_conv(ParamSet& ps, const std::string& name, int in, int out, int kernel, int stride, int padding, ad::Rng& rng,
               float gain = 1.0f);
Dense make_dense(ParamSet& ps, const std::string& name, int in, int out, ad::Rng& rng, float gain = 1.0f);

// Exposure stack, resized to kInputSize and stacked along channels:
// [1, 3K, 128, 128] in ascending exposure order.
Tensor stack_input(const ExposureStack& stack);
// Full-resolution exposures as [K, 3, H, W].
Tensor stack_images(const ExposureStack& stack);
Tensor planar_image(const ImageRgb& img);  // [3,H,W]
ImageRgb to_image(const Tensor& planar);   // from [3,H,W]

// All n³ lattice coordinates, flat order.
Tensor grid_coords(int n);
// Coordinates and identity values of the given flat lattice indices.
Tensor node_coords(const std::vector<std::int32_t>& flat, int n);
Tensor node_identity(const std::vector<std::int32_t>& flat, int n);

// Student latent encoder: eight 3×3 convolutions (four of them stride 2)
// and two pointwise projections to 96 channels at 8×8.
struct StudentEncoder {
    std::vector<Conv> convs;
    Conv proj0, proj1;
    StudentEncoder() = default;
    StudentEncoder(ParamSet& ps, const std::string& prefix, int k, ad::Rng& rng);
    Tensor operator()(const Tensor& stack128) const;
};

// Teacher latent encoder over one basis grid laid out as [1,192,64,64]:
// a pointwise input projection, five 3×3 convolutions and a pointwise
// output projection.
struct TeacherEncoder {
    Conv in_proj;
    std::vector<Conv> convs;
    Conv out_proj;
    TeacherEncoder() = default;
    TeacherEncoder(ParamSet& ps, const std::string& prefix, ad::Rng& rng);
    Tensor operator()(const Tensor& grid_planes) const;
};

// Coordinate MLP: [sample(latent, c), c] -> RGB delta. Hidden width 16,
// ELU; the output layer starts near zero.
struct ImplicitLut {
    std::vector<Dense> layers;
    ImplicitLut() = default;
    ImplicitLut(ParamSet& ps, const std::string& prefix, int depth, ad::Rng& rng);
    Tensor operator()(const Tensor& latent, const Tensor& coords) const;
};

// Global fusion weights from the stack: strided convs, pooling, 2-layer
// head. Weights are re-centred to sum to one.
struct WeightPredictor {
    std::vector<Conv> convs;
    Dense fc0, fc1;
    WeightPredictor() = default;
    WeightPredictor(ParamSet& ps, const std::string& prefix, int k, ad::Rng& rng);
    Tensor operator()(const Tensor& stack128) const;  // [3]
};

// Per-pixel exposure weights: three 3×3 convs and two pointwise layers,
// softmax over K.
struct ImageWeighting {
    std::vector<Conv> convs;
    ImageWeighting() = default;
    ImageWeighting(ParamSet& ps, const std::string& prefix, int k, ad::Rng& rng);
    // [K, 128, 128], summing to one over K at every pixel.
    Tensor weights(const Tensor& stack128) const;
    // I_f = Σ_k up(W_k) ∘ I_k, images [K,3,H,W] -> [3,H,W].
    Tensor fuse(const Tensor& images, const Tensor& stack128) const;
};

// Frozen 16×16/16 patch stem for the ground truth.
struct TruthTokenizer {
    Conv stem;
    TruthTokenizer() = default;
    TruthTokenizer(ParamSet& ps, const std::string& prefix, ad::Rng& rng);
    Tensor operator()(const ImageRgb& gt) const;  // [16,16]
};

// LUT tokenizer over a 64³ grid given as [64³,3] nodes.
struct LutTokenizer {
    Conv proj;
    std::vector<Conv> convs;
    LutTokenizer() = default;
    LutTokenizer(ParamSet& ps, const std::string& prefix, ad::Rng& rng);
    Tensor operator()(const Tensor& nodes) const;  // [16,16]
};

// Normalised token self-similarity: tokens [16,D] -> T·Tᵀ.
Tensor correlation(const Tensor& tokens);

// [n³,3] nodes in flat order -> [1, 3n, n, n] planes (channel c·n + b,
// spatial (g, r)).
Tensor grid_planes(const Tensor& nodes, int n);

// Identity, gamma 0.6 (brighten) and gamma 1.8 (darken) at n = 64.
std::vector<Lut3d> basis_luts(int n = kTeacherGrid);

struct ModelOptions {
    int exposures = 3;
    std::uint64_t seed = 1;
};

class Teacher {
public:
    explicit Teacher(ModelOptions opt = {});

    ParamSet params;
    TeacherEncoder encoder;
    ImplicitLut inn;
    WeightPredictor wp;
    ImageWeighting iw;
    int exposures() const { return opt_.exposures; }

    static Teacher from_checkpoint(const ad::Checkpoint& ckpt);
    void save(ad::Checkpoint& ckpt) const;

private:
    ModelOptions opt_;
};

class Student {
public:
    explicit Student(ModelOptions opt = {});

    ParamSet params;
    StudentEncoder encoder;
    ImplicitLut inn;
    ImageWeighting iw;
    TruthTokenizer truth_tokenizer;
    LutTokenizer lut_tokenizer;
    int exposures() const { return opt_.exposures; }

    // Encoder + INN + IW; tokenizers are training-only and not counted.
    std::int64_t parameter_count() const;
    // Parameters updated during training (everything but the truth stem).
    std::vector<ad::NamedTensor> trainable() const;

    static Student from_checkpoint(const ad::Checkpoint& ckpt);
    void save(ad::Checkpoint& ckpt) const;

private:
    ModelOptions opt_;
};

// latent [12,8,8,8] for a [1,3K,128,128] stack.
Tensor encode_latent(const Student& s, const Tensor& stack128);
// Network output at arbitrary coordinates, [M,3] (delta over identity).
Tensor inn_query(const ImplicitLut& inn, const Tensor& latent, const Tensor& coords);
// Identity + delta over the full n³ lattice; evaluated without a tape,
// in chunks.
Lut3d generate_lut(const ImplicitLut& inn, const Tensor& latent, int n);

ad::Tensor predict_weights(const Teacher& t, const Tensor& stack128);
FusionWeights to_fusion_weights(const Tensor& w);

// Fused image from a (full-resolution) stack.
ImageRgb image_weight_fuse(const ImageWeighting& iw, const ExposureStack& stack);

// Teacher latents of the basis grids, one [12,8,8,8] per grid.
std::vector<Tensor> teacher_latents(const Teacher& t, const std::vector<Lut3d>& basis);
// Enhanced basis grids V̂_i = identity + INN_T(L_i, c) at n = 64.
std::vector<Lut3d> teacher_grids(const Teacher& t, const std::vector<Lut3d>& basis);

struct ForwardResult {
    ImageRgb enhanced;
    Lut3d lut;
};

ForwardResult teacher_forward(const Teacher& t, const ExposureStack& stack, const std::vector<Lut3d>& basis);
ForwardResult student_forward(const Student& s, const ExposureStack& stack, int n = kTeacherGrid);

Tensor tokenize_truth(const Student& s, const ImageRgb& gt);
Tensor tokenize_lut(const Student& s, const Tensor& nodes);
Tensor tokenize_lut(const Student& s, const Lut3d& lut);

Tensor lut_nodes(const Lut3d& lut);  // [n³,3]
Lut3d nodes_to_lut(const Tensor& nodes, int n);

}  // namespace lutfuse::nn
