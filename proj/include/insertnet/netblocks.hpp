#pragma once

#include "insertnet/autograd.hpp"
#include "insertnet/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace insertnet::nets {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// descriptive contract a block is built against
struct NetworkSpec {
    std::vector<int> input_shape;
    std::vector<int> output_shape;
    int base_filters = 32;
    int depth = 4;
    std::string norm = "instance";
    std::string activation = "lrelu";
};

enum class ParamKind { Weight, Gamma, Zero };

// Named parameter arrays with deterministic DCGAN-style initialization:
// weights ~ N(0, 0.02), norm gains ~ N(1, 0.02), biases zero. Each array is
// seeded from (seed, name), so layer registration order does not matter.
class ParameterStore {
public:
    ag::Var add(const std::string& name, std::vector<int> shape, ParamKind kind);
    ag::Var get(const std::string& name) const;
    bool has(const std::string& name) const;

    void init_dcgan(std::uint64_t seed);
    void zero_grads();
    bool all_finite() const;

    const std::vector<std::pair<std::string, ag::Var>>& arrays() const { return arrays_; }

private:
    std::vector<std::pair<std::string, ag::Var>> arrays_;
    std::vector<ParamKind> kinds_;
};

// --- building blocks ---------------------------------------------------------

struct Conv {
    ag::Var w, b;
    int stride = 1, pad = 0;
    ag::Var fwd(const ag::Var& x) const { return ag::conv2d(x, w, b, stride, pad); }
};

struct Deconv {
    ag::Var w, b;
    int stride = 2, pad = 0;
    ag::Var fwd(const ag::Var& x) const { return ag::conv2d_transpose(x, w, b, stride, pad); }
};

struct Linear {
    ag::Var w, b;
    ag::Var fwd(const ag::Var& x) const { return ag::linear(x, w, b); }
};

struct InstNorm {
    ag::Var gamma, beta;
    ag::Var fwd(const ag::Var& x) const { return ag::instance_norm(x, gamma, beta); }
};

Conv make_conv(ParameterStore& ps, const std::string& name, int ci, int co, int k, int stride,
               int pad);
Deconv make_deconv(ParameterStore& ps, const std::string& name, int ci, int co, int k, int stride,
                   int pad);
Linear make_linear(ParameterStore& ps, const std::string& name, int in, int out);
InstNorm make_norm(ParameterStore& ps, const std::string& name, int c);

// --- composite networks --------------------------------------------------------

// strided conv ladder + fully connected bottleneck; the optional latent is
// linearly projected and broadcast as extra input planes
struct ConvEncoderSpec {
    int in_ch = 9;
    int in_h = 32, in_w = 64;
    int z_dim = 0;      // 0: no latent input
    int z_planes = 4;
    std::vector<int> channels = {32, 64, 64, 64}; // one per stride-2 stage
    int out_dim = 128;
};

class ConvEncoder {
public:
    ConvEncoder(ParameterStore& ps, const std::string& prefix, ConvEncoderSpec spec);
    // z may be null when spec.z_dim == 0
    ag::Var fwd(const ag::Var& x, const ag::Var& z) const;
    const ConvEncoderSpec& spec() const { return spec_; }

private:
    ConvEncoderSpec spec_;
    Linear zproj_;
    std::vector<Conv> convs_;
    std::vector<InstNorm> norms_; // one per conv after the first
    Linear fc_;
};

// fully connected seed + transposed-conv ladder
struct DeconvDecoderSpec {
    int in_dim = 128;
    int start_ch = 64, start_h = 2, start_w = 4;
    std::vector<int> channels = {32, 16, 16, 9}; // one per stride-2 stage, last = out
    int kernel = 4;                              // 4 (p=1) or 2 (p=0)
    bool final_sigmoid = true;
};

class DeconvDecoder {
public:
    DeconvDecoder(ParameterStore& ps, const std::string& prefix, DeconvDecoderSpec spec);
    ag::Var fwd(const ag::Var& code) const;
    const DeconvDecoderSpec& spec() const { return spec_; }

private:
    DeconvDecoderSpec spec_;
    Linear fc_;
    std::vector<Deconv> deconvs_;
    std::vector<InstNorm> norms_;
};

// PatchGAN ladder: k stride-2 convs then a 1x1 logit head; input dims must be
// divisible by 2^stages
struct PatchDiscSpec {
    int in_ch = 10;
    std::vector<int> channels = {16, 32, 32, 64};
};

class PatchDiscriminator {
public:
    PatchDiscriminator(ParameterStore& ps, const std::string& prefix, PatchDiscSpec spec);
    ag::Var fwd(const ag::Var& x) const; // (1, H/2^k, W/2^k) logits
    const PatchDiscSpec& spec() const { return spec_; }

private:
    PatchDiscSpec spec_;
    std::vector<Conv> convs_;
    std::vector<InstNorm> norms_;
    Conv head_;
};

// the 6 -> 64 -> 1 transform critic
class AffineDiscriminator {
public:
    AffineDiscriminator(ParameterStore& ps, const std::string& prefix, int hidden = 64);
    ag::Var fwd(const ag::Var& a6) const; // (1) logit

private:
    Linear fc1_, fc2_;
};

// small fully connected stack with leaky-relu between layers
class Mlp {
public:
    Mlp(ParameterStore& ps, const std::string& prefix, std::vector<int> dims);
    ag::Var fwd(const ag::Var& x) const; // linear output on the last layer

private:
    std::vector<Linear> layers_;
};

} // namespace insertnet::nets
