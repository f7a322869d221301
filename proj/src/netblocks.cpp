#include "insertnet/netblocks.hpp"

#include "insertnet/rng.hpp"

#include <cmath>

namespace insertnet::nets {

// --- parameter store ---------------------------------------------------------

ag::Var ParameterStore::add(const std::string& name, std::vector<int> shape, ParamKind kind) {
    if (has(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    ag::Var v = ag::param(Tensor::zeros(std::move(shape)));
    arrays_.emplace_back(name, v);
    kinds_.push_back(kind);
    return v;
}

ag::Var ParameterStore::get(const std::string& name) const {
    for (const auto& [n, v] : arrays_)
        if (n == name) return v;
    throw std::invalid_argument("no parameter named " + name);
}

bool ParameterStore::has(const std::string& name) const {
    for (const auto& [n, v] : arrays_)
        if (n == name) return true;
    return false;
}

void ParameterStore::init_dcgan(std::uint64_t seed) {
    for (std::size_t i = 0; i < arrays_.size(); ++i) {
        auto& [name, var] = arrays_[i];
        Rng rng(hash_mix(seed, fnv1a(name.c_str())));
        Tensor& t = var->value;
        switch (kinds_[i]) {
        case ParamKind::Weight:
            for (std::int64_t j = 0; j < t.numel(); ++j) t[static_cast<std::size_t>(j)] = 0.02 * rng.normal();
            break;
        case ParamKind::Gamma:
            for (std::int64_t j = 0; j < t.numel(); ++j)
                t[static_cast<std::size_t>(j)] = 1.0 + 0.02 * rng.normal();
            break;
        case ParamKind::Zero:
            for (std::int64_t j = 0; j < t.numel(); ++j) t[static_cast<std::size_t>(j)] = 0.0;
            break;
        }
    }
}

void ParameterStore::zero_grads() {
    for (auto& [n, v] : arrays_)
        if (v->grad_ready())
            std::fill(v->grad.data(), v->grad.data() + v->grad.numel(), 0.0);
}

bool ParameterStore::all_finite() const {
    for (const auto& [n, v] : arrays_)
        if (!v->value.all_finite()) return false;
    return true;
}

// --- block constructors --------------------------------------------------------

Conv make_conv(ParameterStore& ps, const std::string& name, int ci, int co, int k, int stride,
               int pad) {
    Conv c;
    c.w = ps.add(name + ".w", {co, ci, k, k}, ParamKind::Weight);
    c.b = ps.add(name + ".b", {co}, ParamKind::Zero);
    c.stride = stride;
    c.pad = pad;
    return c;
}

Deconv make_deconv(ParameterStore& ps, const std::string& name, int ci, int co, int k, int stride,
                   int pad) {
    Deconv d;
    d.w = ps.add(name + ".w", {ci, co, k, k}, ParamKind::Weight);
    d.b = ps.add(name + ".b", {co}, ParamKind::Zero);
    d.stride = stride;
    d.pad = pad;
    return d;
}

Linear make_linear(ParameterStore& ps, const std::string& name, int in, int out) {
    Linear l;
    l.w = ps.add(name + ".w", {out, in}, ParamKind::Weight);
    l.b = ps.add(name + ".b", {out}, ParamKind::Zero);
    return l;
}

InstNorm make_norm(ParameterStore& ps, const std::string& name, int c) {
    InstNorm n;
    n.gamma = ps.add(name + ".g", {c}, ParamKind::Gamma);
    n.beta = ps.add(name + ".b", {c}, ParamKind::Zero);
    return n;
}

// --- conv encoder ----------------------------------------------------------------

ConvEncoder::ConvEncoder(ParameterStore& ps, const std::string& prefix, ConvEncoderSpec spec)
    : spec_(std::move(spec)) {
    int h = spec_.in_h, w = spec_.in_w;
    int ci = spec_.in_ch + (spec_.z_dim > 0 ? spec_.z_planes : 0);
    if (spec_.z_dim > 0)
        zproj_ = make_linear(ps, prefix + ".zproj", spec_.z_dim, spec_.z_planes);
    for (std::size_t i = 0; i < spec_.channels.size(); ++i) {
        const int co = spec_.channels[i];
        convs_.push_back(make_conv(ps, prefix + ".conv" + std::to_string(i), ci, co, 4, 2, 1));
        if (i > 0) norms_.push_back(make_norm(ps, prefix + ".norm" + std::to_string(i), co));
        ci = co;
        if (h % 2 || w % 2) throw ShapeError("conv encoder input not divisible by 2^stages");
        h /= 2;
        w /= 2;
    }
    // The latent is also concatenated ahead of the bottleneck: instance norm
    // subtracts per-channel means, which strips broadcast-constant planes, so
    // the input-side injection alone cannot reach the code.
    fc_ = make_linear(ps, prefix + ".fc", ci * h * w + spec_.z_dim, spec_.out_dim);
}

ag::Var ConvEncoder::fwd(const ag::Var& x, const ag::Var& z) const {
    if (x->value.rank() != 3 || x->value.dim(0) != spec_.in_ch || x->value.dim(1) != spec_.in_h ||
        x->value.dim(2) != spec_.in_w)
        throw ShapeError("conv encoder: unexpected input shape");
    ag::Var h = x;
    if (spec_.z_dim > 0) {
        if (!z || z->value.numel() != spec_.z_dim) throw ShapeError("conv encoder: bad latent");
        h = ag::concat({x, ag::tile_plane(zproj_.fwd(z), spec_.in_h, spec_.in_w)});
    }
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        h = convs_[i].fwd(h);
        if (i > 0) h = norms_[i - 1].fwd(h);
        h = ag::leaky_relu(h, 0.2);
    }
    h = ag::reshape(h, {static_cast<int>(h->value.numel())});
    if (spec_.z_dim > 0) h = ag::concat({h, z});
    return fc_.fwd(h);
}

// --- deconv decoder ----------------------------------------------------------------

DeconvDecoder::DeconvDecoder(ParameterStore& ps, const std::string& prefix, DeconvDecoderSpec spec)
    : spec_(std::move(spec)) {
    fc_ = make_linear(ps, prefix + ".fc", spec_.in_dim,
                      spec_.start_ch * spec_.start_h * spec_.start_w);
    const int pad = spec_.kernel == 4 ? 1 : 0;
    int ci = spec_.start_ch;
    for (std::size_t i = 0; i < spec_.channels.size(); ++i) {
        const int co = spec_.channels[i];
        deconvs_.push_back(
            make_deconv(ps, prefix + ".up" + std::to_string(i), ci, co, spec_.kernel, 2, pad));
        if (i + 1 < spec_.channels.size())
            norms_.push_back(make_norm(ps, prefix + ".norm" + std::to_string(i), co));
        ci = co;
    }
}

ag::Var DeconvDecoder::fwd(const ag::Var& code) const {
    if (code->value.numel() != spec_.in_dim) throw ShapeError("decoder: unexpected code size");
    ag::Var h = ag::reshape(fc_.fwd(code), {spec_.start_ch, spec_.start_h, spec_.start_w});
    h = ag::relu(h);
    for (std::size_t i = 0; i < deconvs_.size(); ++i) {
        h = deconvs_[i].fwd(h);
        if (i + 1 < deconvs_.size()) {
            h = norms_[i].fwd(h);
            h = ag::relu(h);
        }
    }
    return spec_.final_sigmoid ? ag::sigmoid(h) : h;
}

// --- patch discriminator --------------------------------------------------------------

PatchDiscriminator::PatchDiscriminator(ParameterStore& ps, const std::string& prefix,
                                       PatchDiscSpec spec)
    : spec_(std::move(spec)) {
    int ci = spec_.in_ch;
    for (std::size_t i = 0; i < spec_.channels.size(); ++i) {
        const int co = spec_.channels[i];
        convs_.push_back(make_conv(ps, prefix + ".conv" + std::to_string(i), ci, co, 4, 2, 1));
        if (i > 0) norms_.push_back(make_norm(ps, prefix + ".norm" + std::to_string(i), co));
        ci = co;
    }
    head_ = make_conv(ps, prefix + ".head", ci, 1, 1, 1, 0);
}

ag::Var PatchDiscriminator::fwd(const ag::Var& x) const {
    if (x->value.rank() != 3 || x->value.dim(0) != spec_.in_ch)
        throw ShapeError("patch discriminator: unexpected channel count");
    const int div = 1 << static_cast<int>(spec_.channels.size());
    if (x->value.dim(1) % div || x->value.dim(2) % div)
        throw ShapeError("patch discriminator: input dims not divisible by 2^stages");
    ag::Var h = x;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        h = convs_[i].fwd(h);
        if (i > 0) h = norms_[i - 1].fwd(h);
        h = ag::leaky_relu(h, 0.2);
    }
    return head_.fwd(h);
}

// --- affine discriminator ---------------------------------------------------------------

AffineDiscriminator::AffineDiscriminator(ParameterStore& ps, const std::string& prefix, int hidden) {
    fc1_ = make_linear(ps, prefix + ".fc1", 6, hidden);
    fc2_ = make_linear(ps, prefix + ".fc2", hidden, 1);
}

ag::Var AffineDiscriminator::fwd(const ag::Var& a6) const {
    if (a6->value.numel() != 6) throw ShapeError("affine discriminator: 6-vector expected");
    return fc2_.fwd(ag::leaky_relu(fc1_.fwd(a6), 0.2));
}

// --- mlp -------------------------------------------------------------------------------

Mlp::Mlp(ParameterStore& ps, const std::string& prefix, std::vector<int> dims) {
    if (dims.size() < 2) throw std::invalid_argument("mlp needs at least two dims");
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
        layers_.push_back(make_linear(ps, prefix + ".fc" + std::to_string(i), dims[i], dims[i + 1]));
}

ag::Var Mlp::fwd(const ag::Var& x) const {
    ag::Var h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i].fwd(h);
        if (i + 1 < layers_.size()) h = ag::leaky_relu(h, 0.2);
    }
    return h;
}

} // namespace insertnet::nets
