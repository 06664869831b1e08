#include "covit/vit.hpp"

#include "covit/error.hpp"
#include "covit/ops.hpp"

#include <charconv>
#include <cmath>
#include <functional>

namespace covit {

std::string_view to_string(Variant v) { return v == Variant::vit2d ? "vit2d" : "vit3d"; }

Variant parse_variant(std::string_view name) {
    if (name == "vit2d") return Variant::vit2d;
    if (name == "vit3d") return Variant::vit3d;
    throw ConfigError("unknown model variant '" + std::string(name) + "'");
}

ModelConfig ModelConfig::defaults(Variant variant) {
    ModelConfig c;
    c.variant = variant;
    c.patch_size = variant == Variant::vit2d ? 7 : 8;
    return c;
}

void ModelConfig::validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("model config: " + what); };
    if (patch_size == 0 || image_size == 0) fail("image_size and patch_size must be positive");
    if (image_size % patch_size != 0)
        fail("image_size " + std::to_string(image_size) + " is not divisible by patch_size " + std::to_string(patch_size));
    if (variant == Variant::vit3d && (volume_depth == 0 || volume_depth % patch_size != 0))
        fail("volume_depth " + std::to_string(volume_depth) + " is not divisible by patch_size " + std::to_string(patch_size));
    if (variant == Variant::vit2d && channels == 0) fail("channels must be positive");
    if (embed_dim == 0 || num_heads == 0 || embed_dim % num_heads != 0) fail("embed_dim must be divisible by num_heads");
    if (depth == 0 || mlp_dim == 0) fail("depth and mlp_dim must be positive");
    if (num_classes != 2) fail("num_classes must be 2");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
}

std::size_t ModelConfig::num_patches() const {
    const std::size_t side = image_size / patch_size;
    return variant == Variant::vit2d ? side * side : side * side * (volume_depth / patch_size);
}

std::size_t ModelConfig::patch_dim() const {
    return variant == Variant::vit2d ? channels * patch_size * patch_size : patch_size * patch_size * patch_size;
}

std::vector<std::pair<std::string, std::string>> ModelConfig::to_pairs() const {
    char dbuf[32];
    std::snprintf(dbuf, sizeof dbuf, "%.17g", dropout);
    return {{"model.variant", std::string(to_string(variant))},
            {"model.image_size", std::to_string(image_size)},
            {"model.volume_depth", std::to_string(volume_depth)},
            {"model.channels", std::to_string(channels)},
            {"model.patch_size", std::to_string(patch_size)},
            {"model.embed_dim", std::to_string(embed_dim)},
            {"model.depth", std::to_string(depth)},
            {"model.num_heads", std::to_string(num_heads)},
            {"model.mlp_dim", std::to_string(mlp_dim)},
            {"model.num_classes", std::to_string(num_classes)},
            {"model.dropout", dbuf}};
}

namespace {

std::size_t parse_size(const std::string& key, const std::string& value) {
    std::size_t v = 0;
    const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
        throw ConfigError("invalid integer for " + key + ": '" + value + "'");
    return v;
}

}  // namespace

ModelConfig ModelConfig::from_pairs(const std::map<std::string, std::string>& kv) {
    auto get = [&](const char* key) -> const std::string* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    ModelConfig c = defaults(get("model.variant") ? parse_variant(*get("model.variant")) : Variant::vit2d);
    const std::pair<const char*, std::size_t*> sizes[] = {
        {"model.image_size", &c.image_size}, {"model.volume_depth", &c.volume_depth}, {"model.channels", &c.channels},
        {"model.patch_size", &c.patch_size}, {"model.embed_dim", &c.embed_dim},       {"model.depth", &c.depth},
        {"model.num_heads", &c.num_heads},   {"model.mlp_dim", &c.mlp_dim},           {"model.num_classes", &c.num_classes}};
    for (auto [key, slot] : sizes)
        if (const auto* v = get(key)) *slot = parse_size(key, *v);
    if (const auto* v = get("model.dropout")) {
        char* end = nullptr;
        c.dropout = std::strtod(v->c_str(), &end);
        if (end != v->c_str() + v->size()) throw ConfigError("invalid number for model.dropout: '" + *v + "'");
    }
    c.validate();
    return c;
}

std::size_t parameter_count(const ModelConfig& c) {
    const std::size_t e = c.embed_dim, m = c.mlp_dim, p = c.patch_dim(), n = c.num_patches();
    const std::size_t per_block = 2 * e            // ln1
                                  + e * 3 * e + 3 * e  // qkv
                                  + e * e + e      // proj
                                  + 2 * e          // ln2
                                  + e * m + m      // fc1
                                  + m * e + e;     // fc2
    return p * e + e        // patch projection
           + e              // class token
           + (n + 1) * e    // positional table
           + c.depth * per_block + 2 * e  // final ln
           + e * c.num_classes + c.num_classes;
}

void ModelParams::add(std::string name, Tensor value) {
    if (index_.count(name)) throw Error("duplicate parameter name " + name);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(value));
}

Tensor& ModelParams::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter " + name);
    return entries_[it->second].second;
}

const Tensor& ModelParams::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter " + name);
    return entries_[it->second].second;
}

std::vector<Tensor*> ModelParams::tensors() {
    std::vector<Tensor*> out;
    out.reserve(entries_.size());
    for (auto& [name, t] : entries_) out.push_back(&t);
    return out;
}

std::size_t ModelParams::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += t.numel();
    return n;
}

namespace {

enum class Init { trunc_normal, xavier, zeros, ones };

ModelParams build(const ModelConfig& c, const std::function<Tensor(Shape, Init)>& make) {
    c.validate();
    const std::size_t e = c.embed_dim, m = c.mlp_dim;
    ModelParams p;
    p.add("patch_embed.weight", make({c.patch_dim(), e}, Init::xavier));
    p.add("patch_embed.bias", make({e}, Init::zeros));
    p.add("cls_token", make({1, e}, Init::zeros));
    p.add("pos_embed", make({c.num_patches() + 1, e}, Init::trunc_normal));
    for (std::size_t b = 0; b < c.depth; ++b) {
        const std::string pre = "blocks." + std::to_string(b) + ".";
        p.add(pre + "ln1.gamma", make({e}, Init::ones));
        p.add(pre + "ln1.beta", make({e}, Init::zeros));
        p.add(pre + "attn.qkv.weight", make({e, 3 * e}, Init::xavier));
        p.add(pre + "attn.qkv.bias", make({3 * e}, Init::zeros));
        p.add(pre + "attn.proj.weight", make({e, e}, Init::xavier));
        p.add(pre + "attn.proj.bias", make({e}, Init::zeros));
        p.add(pre + "ln2.gamma", make({e}, Init::ones));
        p.add(pre + "ln2.beta", make({e}, Init::zeros));
        p.add(pre + "mlp.fc1.weight", make({e, m}, Init::xavier));
        p.add(pre + "mlp.fc1.bias", make({m}, Init::zeros));
        p.add(pre + "mlp.fc2.weight", make({m, e}, Init::xavier));
        p.add(pre + "mlp.fc2.bias", make({e}, Init::zeros));
    }
    p.add("norm.gamma", make({e}, Init::ones));
    p.add("norm.beta", make({e}, Init::zeros));
    p.add("head.weight", make({e, c.num_classes}, Init::trunc_normal));
    p.add("head.bias", make({c.num_classes}, Init::zeros));
    return p;
}

}  // namespace

ModelParams ModelParams::initialize(const ModelConfig& config, std::mt19937_64& rng) {
    constexpr double kStd = 0.02;
    std::normal_distribution<double> normal(0.0, kStd);
    return build(config, [&](Shape shape, Init init) {
        Tensor t(std::move(shape), init == Init::ones ? 1.0 : 0.0);
        if (init == Init::xavier) {
            const double limit = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
            std::uniform_real_distribution<double> u(-limit, limit);
            for (double& v : t.data()) v = u(rng);
        } else if (init == Init::trunc_normal)
            for (double& v : t.data()) {
                do v = normal(rng);
                while (std::abs(v) > 2.0 * kStd);
            }
        return t;
    });
}

ModelParams ModelParams::zeros(const ModelConfig& config) {
    return build(config, [](Shape shape, Init init) { return Tensor(std::move(shape), init == Init::ones ? 1.0 : 0.0); });
}

Tensor patchify2d(const Tensor& image, std::size_t p) {
    if (image.rank() != 3) throw ShapeError("patchify2d expects [C x H x W], got " + shape_string(image.shape()));
    const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    if (p == 0 || h % p != 0 || w % p != 0)
        throw ShapeError("patchify2d: " + shape_string(image.shape()) + " not divisible by patch " + std::to_string(p));
    const std::size_t ny = h / p, nx = w / p, len = c * p * p;
    Tensor out({ny * nx, len});
    for (std::size_t py = 0; py < ny; ++py)
        for (std::size_t px = 0; px < nx; ++px) {
            double* tok = out.data().data() + (py * nx + px) * len;
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t dy = 0; dy < p; ++dy)
                    for (std::size_t dx = 0; dx < p; ++dx)
                        *tok++ = image[(ch * h + py * p + dy) * w + px * p + dx];
        }
    return out;
}

Tensor unpatchify2d(const Tensor& tokens, std::size_t c, std::size_t h, std::size_t w, std::size_t p) {
    if (p == 0 || h % p != 0 || w % p != 0) throw ShapeError("unpatchify2d: dims not divisible by patch");
    const std::size_t ny = h / p, nx = w / p, len = c * p * p;
    if (tokens.rows() != ny * nx || tokens.cols() != len) throw ShapeError("unpatchify2d: token shape mismatch");
    Tensor out({c, h, w});
    for (std::size_t py = 0; py < ny; ++py)
        for (std::size_t px = 0; px < nx; ++px) {
            const double* tok = tokens.data().data() + (py * nx + px) * len;
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t dy = 0; dy < p; ++dy)
                    for (std::size_t dx = 0; dx < p; ++dx) out[(ch * h + py * p + dy) * w + px * p + dx] = *tok++;
        }
    return out;
}

Tensor patchify3d(const Tensor& volume, std::size_t p) {
    if (volume.rank() != 3) throw ShapeError("patchify3d expects [D x H x W], got " + shape_string(volume.shape()));
    const std::size_t d = volume.dim(0), h = volume.dim(1), w = volume.dim(2);
    if (p == 0 || d % p != 0 || h % p != 0 || w % p != 0)
        throw ShapeError("patchify3d: " + shape_string(volume.shape()) + " not divisible by patch " + std::to_string(p));
    const std::size_t nz = d / p, ny = h / p, nx = w / p, len = p * p * p;
    Tensor out({nz * ny * nx, len});
    for (std::size_t pz = 0; pz < nz; ++pz)
        for (std::size_t py = 0; py < ny; ++py)
            for (std::size_t px = 0; px < nx; ++px) {
                double* tok = out.data().data() + ((pz * ny + py) * nx + px) * len;
                for (std::size_t dz = 0; dz < p; ++dz)
                    for (std::size_t dy = 0; dy < p; ++dy)
                        for (std::size_t dx = 0; dx < p; ++dx)
                            *tok++ = volume[((pz * p + dz) * h + py * p + dy) * w + px * p + dx];
            }
    return out;
}

Tensor unpatchify3d(const Tensor& tokens, std::size_t d, std::size_t h, std::size_t w, std::size_t p) {
    if (p == 0 || d % p != 0 || h % p != 0 || w % p != 0) throw ShapeError("unpatchify3d: dims not divisible by patch");
    const std::size_t nz = d / p, ny = h / p, nx = w / p, len = p * p * p;
    if (tokens.rows() != nz * ny * nx || tokens.cols() != len) throw ShapeError("unpatchify3d: token shape mismatch");
    Tensor out({d, h, w});
    for (std::size_t pz = 0; pz < nz; ++pz)
        for (std::size_t py = 0; py < ny; ++py)
            for (std::size_t px = 0; px < nx; ++px) {
                const double* tok = tokens.data().data() + ((pz * ny + py) * nx + px) * len;
                for (std::size_t dz = 0; dz < p; ++dz)
                    for (std::size_t dy = 0; dy < p; ++dy)
                        for (std::size_t dx = 0; dx < p; ++dx)
                            out[((pz * p + dz) * h + py * p + dy) * w + px * p + dx] = *tok++;
            }
    return out;
}

Tensor input_tokens_2d(const FloatImage& image, const ModelConfig& config) {
    if (config.variant != Variant::vit2d) throw ConfigError("input_tokens_2d needs a vit2d config");
    const std::size_t s = config.image_size;
    const FloatImage src = (image.width == s && image.height == s) ? image : imaging::resize_bilinear(image, s, s);
    Tensor chw({config.channels, s, s});
    for (std::size_t ch = 0; ch < config.channels; ++ch)
        std::copy(src.values.begin(), src.values.end(), chw.data().begin() + static_cast<std::ptrdiff_t>(ch * s * s));
    return patchify2d(chw, config.patch_size);
}

Tensor input_tokens_3d(std::span<const double> voxels, std::size_t depth, std::size_t height, std::size_t width,
                       const ModelConfig& config) {
    if (config.variant != Variant::vit3d) throw ConfigError("input_tokens_3d needs a vit3d config");
    if (depth != config.volume_depth)
        throw ShapeError("volume depth " + std::to_string(depth) + " does not match model depth " +
                         std::to_string(config.volume_depth));
    if (voxels.size() != depth * height * width) throw ShapeError("input_tokens_3d: voxel count does not match dims");
    const std::size_t s = config.image_size;
    Tensor vol({depth, s, s});
    for (std::size_t z = 0; z < depth; ++z) {
        const auto slice = voxels.subspan(z * height * width, height * width);
        if (height == s && width == s) {
            std::copy(slice.begin(), slice.end(), vol.data().begin() + static_cast<std::ptrdiff_t>(z * s * s));
        } else {
            const auto r = imaging::resize_bilinear(slice, width, height, s, s);
            std::copy(r.begin(), r.end(), vol.data().begin() + static_cast<std::ptrdiff_t>(z * s * s));
        }
    }
    return patchify3d(vol, config.patch_size);
}

namespace {

using Binder = std::function<Var(const std::string&)>;

Var forward_impl(Graph& g, const Binder& bind, const ModelConfig& c, const Tensor& tokens, const ForwardOptions& opt) {
    if (tokens.rows() != c.num_patches() || tokens.cols() != c.patch_dim())
        throw ShapeError("forward: tokens " + shape_string(tokens.shape()) + " do not match config (" +
                         std::to_string(c.num_patches()) + " x " + std::to_string(c.patch_dim()) + ")");
    const bool drop = opt.training && c.dropout > 0.0;
    if (drop && opt.rng == nullptr) throw Error("forward: training with dropout needs an RNG");
    auto maybe_dropout = [&](const Var& v) { return drop ? ops::dropout(v, c.dropout, *opt.rng) : v; };

    const std::size_t e = c.embed_dim, dh = c.head_dim();
    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Var x = g.constant(tokens);
    x = ops::add_row(ops::matmul(x, bind("patch_embed.weight")), bind("patch_embed.bias"));
    x = ops::concat_rows({bind("cls_token"), x});
    x = ops::add(x, bind("pos_embed"));
    x = maybe_dropout(x);

    for (std::size_t b = 0; b < c.depth; ++b) {
        const std::string pre = "blocks." + std::to_string(b) + ".";
        Var h = ops::layer_norm(x, bind(pre + "ln1.gamma"), bind(pre + "ln1.beta"));
        Var qkv = ops::add_row(ops::matmul(h, bind(pre + "attn.qkv.weight")), bind(pre + "attn.qkv.bias"));
        std::vector<Var> heads;
        heads.reserve(c.num_heads);
        for (std::size_t hd = 0; hd < c.num_heads; ++hd) {
            Var q = ops::slice_cols(qkv, hd * dh, dh);
            Var k = ops::slice_cols(qkv, e + hd * dh, dh);
            Var v = ops::slice_cols(qkv, 2 * e + hd * dh, dh);
            Var a = ops::softmax(ops::scale(ops::matmul_nt(q, k), attn_scale));
            if (opt.attention != nullptr) opt.attention->push_back(a.value());
            heads.push_back(ops::matmul(a, v));
        }
        Var attn = c.num_heads == 1 ? heads.front() : ops::concat_cols(heads);
        attn = ops::add_row(ops::matmul(attn, bind(pre + "attn.proj.weight")), bind(pre + "attn.proj.bias"));
        x = ops::add(x, maybe_dropout(attn));

        Var m = ops::layer_norm(x, bind(pre + "ln2.gamma"), bind(pre + "ln2.beta"));
        m = ops::gelu(ops::add_row(ops::matmul(m, bind(pre + "mlp.fc1.weight")), bind(pre + "mlp.fc1.bias")));
        m = maybe_dropout(m);
        m = ops::add_row(ops::matmul(m, bind(pre + "mlp.fc2.weight")), bind(pre + "mlp.fc2.bias"));
        x = ops::add(x, maybe_dropout(m));
    }
    x = ops::layer_norm(x, bind("norm.gamma"), bind("norm.beta"));
    Var cls = ops::row(x, 0);
    return ops::add_row(ops::matmul(cls, bind("head.weight")), bind("head.bias"));
}

}  // namespace

Var forward_tokens(Graph& graph, ModelParams& params, const ModelConfig& config, const Tensor& tokens,
                   const ForwardOptions& options) {
    if (options.track_grad)
        return forward_impl(graph, [&](const std::string& n) { return graph.param(params.get(n)); }, config, tokens,
                            options);
    return forward_impl(graph, [&](const std::string& n) { return graph.constant(params.get(n)); }, config, tokens,
                        options);
}

Tensor infer_logits(const ModelParams& params, const ModelConfig& config, const Tensor& tokens,
                    std::vector<Tensor>* attention) {
    Graph g;
    ForwardOptions opt;
    opt.attention = attention;
    opt.track_grad = false;
    Var out = forward_impl(g, [&](const std::string& n) { return g.constant(params.get(n)); }, config, tokens, opt);
    return out.value();
}

double predict_tokens(const ModelParams& params, const ModelConfig& config, const Tensor& tokens) {
    const Tensor logits = infer_logits(params, config, tokens);
    return ops::softmax_values(logits.data())[kCovidClass];
}

double predict_slice(const ModelParams& params, const ModelConfig& config, const FloatImage& slice) {
    return predict_tokens(params, config, input_tokens_2d(slice, config));
}

}  // namespace covit
