#include "covit/error.hpp"
#include "covit/ops.hpp"
#include "covit/vit.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace covit;
using covit::test::random_tensor;

namespace {

ModelConfig tiny() {
    ModelConfig c;
    c.image_size = 14;
    c.patch_size = 7;
    c.embed_dim = 16;
    c.depth = 2;
    c.num_heads = 2;
    c.mlp_dim = 32;
    c.dropout = 0.0;
    return c;
}

ModelConfig small_square() {
    ModelConfig c = tiny();
    c.image_size = 28;
    return c;
}

}  // namespace

TEST_CASE("2D patchify") {
    const ModelConfig def = ModelConfig::defaults(Variant::vit2d);
    CHECK(def.patch_size == 7);
    CHECK(def.num_patches() == 1024);
    CHECK(def.patch_dim() == 147);

    Tensor constant({3, 224, 224}, 0.25);
    const Tensor tok = patchify2d(constant, 7);
    CHECK(tok.rows() == 1024);
    CHECK(tok.cols() == 147);
    CHECK(std::all_of(tok.storage().begin(), tok.storage().end(), [](double v) { return v == 0.25; }));

    Tensor dot({3, 224, 224}, 0.0);
    dot[0] = 1.0;
    const Tensor t2 = patchify2d(dot, 7);
    for (std::size_t r = 0; r < t2.rows(); ++r) {
        const bool any = std::any_of(t2.data().begin() + static_cast<std::ptrdiff_t>(r * 147),
                                     t2.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * 147), [](double v) { return v != 0.0; });
        CHECK(any == (r == 0));
    }

    std::mt19937_64 rng(1);
    for (auto [c, h, w, p] : {std::array<std::size_t, 4>{3, 224, 224, 7}, {1, 14, 21, 7}, {2, 16, 8, 4}}) {
        const Tensor x = random_tensor({c, h, w}, rng);
        CHECK(unpatchify2d(patchify2d(x, p), c, h, w, p) == x);
    }
    CHECK_THROWS_AS(patchify2d(Tensor({3, 10, 10}), 7), ShapeError);
}

TEST_CASE("3D patchify") {
    const ModelConfig def = ModelConfig::defaults(Variant::vit3d);
    CHECK(def.patch_size == 8);
    CHECK(def.num_patches() == 3136);
    CHECK(def.patch_dim() == 512);

    Tensor constant({32, 224, 224}, -1.5);
    const Tensor tok = patchify3d(constant, 8);
    CHECK(tok.rows() == 3136);
    CHECK(tok.cols() == 512);
    CHECK(std::all_of(tok.storage().begin(), tok.storage().end(), [](double v) { return v == -1.5; }));

    Tensor dot({32, 224, 224}, 0.0);
    dot[0] = 1.0;
    const Tensor t2 = patchify3d(dot, 8);
    CHECK(std::accumulate(t2.storage().begin(), t2.storage().begin() + 512, 0.0) == 1.0);
    CHECK(std::accumulate(t2.storage().begin(), t2.storage().end(), 0.0) == 1.0);

    std::mt19937_64 rng(2);
    const Tensor x = random_tensor({32, 224, 224}, rng);
    CHECK(unpatchify3d(patchify3d(x, 8), 32, 224, 224, 8) == x);
    const Tensor y = random_tensor({8, 16, 24}, rng);
    CHECK(unpatchify3d(patchify3d(y, 4), 8, 16, 24, 4) == y);
}

TEST_CASE("input tokens") {
    const ModelConfig c2 = ModelConfig::defaults(Variant::vit2d);
    FloatImage img(224, 224, 0.5);
    img.at(3, 4) = 1.0;
    const Tensor t = input_tokens_2d(img, c2);
    CHECK(t.rows() == 1024);
    // Each channel copy of the bright pixel lands in token 0.
    CHECK(t.at(0, 4 * 7 + 3) == 1.0);
    CHECK(t.at(0, 49 + 4 * 7 + 3) == 1.0);
    CHECK(t.at(0, 98 + 4 * 7 + 3) == 1.0);

    ModelConfig c3 = ModelConfig::defaults(Variant::vit3d);
    std::vector<double> vol(32 * 224 * 224, 0.0);
    CHECK(input_tokens_3d(vol, 32, 224, 224, c3).rows() == 3136);
    CHECK_THROWS_AS(input_tokens_3d(vol, 31, 224, 224, c3), ShapeError);

    ModelConfig resized = tiny();
    const Tensor r = input_tokens_2d(FloatImage(224, 224, 0.75), resized);
    CHECK(r.rows() == 4);
    CHECK(std::all_of(r.storage().begin(), r.storage().end(), [](double v) { return std::abs(v - 0.75) < 1e-15; }));
}

TEST_CASE("parameter count against a hand count") {
    // patch 147*16+16, cls 16, pos 5*16; per block 2*16 + (16*48+48) + (16*16+16) + 2*16 + (16*32+32) + (32*16+16);
    // final norm 2*16; head 16*2+2.
    const std::size_t tiny_count = (2352 + 16) + 16 + 80 + 2 * (32 + 816 + 272 + 32 + 544 + 528) + 32 + 34;
    CHECK(tiny_count == 6978);
    CHECK(parameter_count(tiny()) == 6978);
    CHECK(ModelParams::zeros(tiny()).scalar_count() == 6978);

    // 2D defaults: patch 147*128+128, cls 128, pos 1025*128; per block
    // 256 + 49536 + 16512 + 256 + 33024 + 32896; norm 256; head 258.
    const std::size_t def2 = 18944 + 128 + 131200 + 6 * 132480 + 256 + 258;
    CHECK(parameter_count(ModelConfig::defaults(Variant::vit2d)) == def2);
    CHECK(def2 == 945666);
    // 3D defaults: patch 512*128+128, pos 3137*128.
    const std::size_t def3 = 65664 + 128 + 401536 + 6 * 132480 + 256 + 258;
    CHECK(parameter_count(ModelConfig::defaults(Variant::vit3d)) == def3);
    CHECK(ModelParams::zeros(ModelConfig::defaults(Variant::vit3d)).scalar_count() == def3);
}

TEST_CASE("config validation") {
    ModelConfig c = tiny();
    c.num_heads = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny();
    c.image_size = 15;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny();
    c.num_classes = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    const ModelConfig d = ModelConfig::defaults(Variant::vit3d);
    std::map<std::string, std::string> kv;
    for (const auto& [k, v] : d.to_pairs()) kv[k] = v;
    CHECK(ModelConfig::from_pairs(kv) == d);
}

TEST_CASE("forward pass") {
    const ModelConfig cfg = small_square();
    std::mt19937_64 rng(3);
    ModelParams params = ModelParams::initialize(cfg, rng);
    for (auto& [name, t] : params.entries())
        for (auto& v : t.storage()) v += std::uniform_real_distribution<double>(-0.2, 0.2)(rng);
    const Tensor tokens = random_tensor({cfg.num_patches(), cfg.patch_dim()}, rng, 0.0, 1.0);

    SUBCASE("logits shape and determinism") {
        const Tensor a = infer_logits(params, cfg, tokens);
        CHECK(a.shape() == Shape{1, 2});
        CHECK(infer_logits(params, cfg, tokens) == a);
        const double p = predict_tokens(params, cfg, tokens);
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
        const auto sm = ops::softmax_values(a.data());
        CHECK(std::abs(sm[0] + sm[1] - 1.0) < 1e-9);
    }
    SUBCASE("attention rows sum to one") {
        std::vector<Tensor> maps;
        infer_logits(params, cfg, tokens, &maps);
        REQUIRE(maps.size() == cfg.depth * cfg.num_heads);
        for (const Tensor& m : maps) {
            CHECK(m.rows() == cfg.num_patches() + 1);
            for (std::size_t r = 0; r < m.rows(); ++r) {
                double s = 0.0;
                for (std::size_t c = 0; c < m.cols(); ++c) s += m.at(r, c);
                CHECK(std::abs(s - 1.0) < 1e-9);
            }
        }
    }
    SUBCASE("permuting tokens with their position embeddings leaves logits unchanged") {
        const Tensor base = infer_logits(params, cfg, tokens);
        std::vector<std::size_t> perm(cfg.num_patches());
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        ModelParams permuted = params;
        Tensor& pos = permuted.get("pos_embed");
        const Tensor& pos0 = params.get("pos_embed");
        Tensor ptok = tokens;
        for (std::size_t i = 0; i < perm.size(); ++i) {
            for (std::size_t c = 0; c < tokens.cols(); ++c) ptok.at(i, c) = tokens.at(perm[i], c);
            for (std::size_t c = 0; c < pos.cols(); ++c) pos.at(i + 1, c) = pos0.at(perm[i] + 1, c);
        }
        const Tensor moved = infer_logits(permuted, cfg, ptok);
        CHECK(std::abs(moved[0] - base[0]) < 1e-9);
        CHECK(std::abs(moved[1] - base[1]) < 1e-9);
    }
    SUBCASE("zero network predicts one half") {
        const ModelParams zero = ModelParams::zeros(cfg);
        const Tensor z = infer_logits(zero, cfg, tokens);
        CHECK(z[0] == 0.0);
        CHECK(z[1] == 0.0);
        CHECK(predict_tokens(zero, cfg, tokens) == 0.5);
        CHECK(predict_slice(zero, cfg, FloatImage(224, 224, 0.3)) == 0.5);
    }
    SUBCASE("token shape mismatch") { CHECK_THROWS_AS(infer_logits(params, cfg, Tensor({3, 147})), ShapeError); }
    SUBCASE("training mode needs an rng for dropout") {
        ModelConfig drop = cfg;
        drop.dropout = 0.5;
        Graph g;
        ForwardOptions opt;
        opt.training = true;
        CHECK_THROWS(forward_tokens(g, params, drop, tokens, opt));
    }
}

TEST_CASE("3D forward on a small volume") {
    ModelConfig c;
    c.variant = Variant::vit3d;
    c.image_size = 16;
    c.volume_depth = 8;
    c.patch_size = 8;
    c.embed_dim = 8;
    c.depth = 1;
    c.num_heads = 2;
    c.mlp_dim = 16;
    std::mt19937_64 rng(4);
    const ModelParams p = ModelParams::initialize(c, rng);
    std::vector<double> vol(8 * 32 * 32, 0.1);
    const Tensor tok = input_tokens_3d(vol, 8, 32, 32, c);
    CHECK(tok.rows() == 4);
    CHECK(tok.cols() == 512);
    CHECK(infer_logits(p, c, tok).shape() == Shape{1, 2});
}
