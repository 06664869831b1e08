// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.
#include "covit/cli.hpp"
#include "covit/dataset_io.hpp"
#include "covit/error.hpp"
#include "covit/eval.hpp"
#include "covit/ops.hpp"
#include "covit/phantom.hpp"
#include "covit/preproc.hpp"
#include "covit/trainer.hpp"
#include "covit/volume_builder.hpp"
#include "covit/vit.hpp"
#include "support.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>

using namespace covit;
using covit::test::gradient_check;
using covit::test::random_tensor;

#ifndef COVIT_SOURCE_DIR
#error "COVIT_SOURCE_DIR must point at the project root"
#endif

namespace {

const fs::path kSource = COVIT_SOURCE_DIR;

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            if (pass) detail.clear();
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

int run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "covit");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
    if (code != 0) std::cerr << err.str();
    return code;
}

ConfusionMatrix2x2 matrix(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
    ConfusionMatrix2x2 m;
    m.counts = {{{a, b}, {c, d}}};
    return m;
}

std::string fmt(double v, int digits = 3) {
    std::ostringstream s;
    s.precision(digits);
    s << v;
    return s.str();
}

Outcome reference_metrics() {
    Outcome o;
    const MetricsReport vit = metrics(matrix(117, 31, 50, 144));
    o.require(round_to(*vit.row_accuracy[0] * 100, 1) == 79.1, "ViT COVID accuracy");
    o.require(round_to(*vit.row_accuracy[1] * 100, 1) == 74.2, "ViT nonCOVID accuracy");
    o.require(round_to(*vit.macro_accuracy * 100, 1) == 76.6, "ViT macro accuracy");
    o.require(round_to(*vit.f1[0], 2) == 0.74, "ViT COVID F1");
    o.require(round_to(*vit.f1[1], 2) == 0.78, "ViT nonCOVID F1");
    o.require(round_to(*vit.macro_f1, 2) == 0.76, "ViT macro F1");
    const MetricsReport dn = metrics(matrix(119, 29, 64, 130));
    o.require(round_to(*dn.row_accuracy[0] * 100, 1) == 80.4, "DenseNet COVID accuracy");
    o.require(round_to(*dn.row_accuracy[1] * 100, 1) == 67.0, "DenseNet nonCOVID accuracy");
    o.require(round_to(*dn.macro_accuracy * 100, 1) == 73.7, "DenseNet macro accuracy");
    o.require(std::abs(*dn.f1[0] - 0.71) <= 0.015, "DenseNet COVID F1");
    o.require(std::abs(*dn.f1[1] - 0.73) <= 0.015, "DenseNet nonCOVID F1");
    o.require(std::abs(*dn.macro_f1 - 0.72) <= 0.015, "DenseNet macro F1");
    if (o.pass)
        o.detail = "79.1/74.2/76.6 0.74/0.78/0.76; DenseNet F1 " + fmt(*dn.f1[0]) + "/" + fmt(*dn.f1[1]) + "/" +
                   fmt(*dn.macro_f1);
    return o;
}

// Independent generator: every index i is assigned to volume i mod s when at
// least 32 slices exist, otherwise a single volume repeats slices.
std::vector<std::vector<std::size_t>> brute_force_volumes(std::size_t d) {
    if (d < kVolumeDepth) {
        std::vector<std::size_t> v;
        for (std::size_t j = 0; j < kVolumeDepth; ++j) v.push_back(j * d / kVolumeDepth);
        return {v};
    }
    const std::size_t s = d / kVolumeDepth;
    std::vector<std::vector<std::size_t>> out(s);
    for (std::size_t i = 0; i < s * kVolumeDepth; ++i) out[i % s].push_back(i);
    return out;
}

Outcome subvolume_oracle() {
    Outcome o;
    for (std::size_t d = 1; d <= 200; ++d) {
        std::vector<FloatImage> slices;
        for (std::size_t i = 0; i < d; ++i) slices.emplace_back(2, 2, static_cast<double>(i));
        const auto volumes = build_subvolumes("s", slices);
        const auto expect = brute_force_volumes(d);
        bool same = volumes.size() == expect.size() && subvolume_indices(d) == expect;
        for (std::size_t k = 0; same && k < volumes.size(); ++k) {
            same = volumes[k].slice_indices == expect[k];
            for (std::size_t j = 0; same && j < kVolumeDepth; ++j)
                same = volumes[k].voxels[j * 4] == static_cast<double>(expect[k][j]);
        }
        o.require(same, "mismatch at D=" + std::to_string(d));
    }
    std::vector<std::size_t> even, odd;
    for (std::size_t i = 0; i < 64; i += 2) {
        even.push_back(i);
        odd.push_back(i + 1);
    }
    o.require(subvolume_indices(64) == std::vector<std::vector<std::size_t>>{even, odd}, "D=64 split");
    if (o.pass) o.detail = "D=1..200 match, D=64 splits into even/odd slices";
    return o;
}

Var weighted(Graph& g, const Var& x) {
    Tensor w(x.shape());
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = std::sin(0.7 * static_cast<double>(i) + 0.3);
    return ops::sum(ops::mul(x, g.constant(w)));
}

Outcome gradients() {
    Outcome o;
    std::mt19937_64 rng(11);
    auto r = [&](Shape s) { return random_tensor(std::move(s), rng); };
    using V = std::vector<Var>;
    const std::array<int, 3> labels{1, 0, 1};
    const std::vector<std::pair<std::string, std::pair<covit::test::LossBuilder, std::vector<Tensor>>>> cases{
        {"matmul", {[](Graph& g, V& v) { return weighted(g, ops::matmul(v[0], v[1])); }, {r({3, 4}), r({4, 5})}}},
        {"matmul_nt", {[](Graph& g, V& v) { return weighted(g, ops::matmul_nt(v[0], v[1])); }, {r({3, 4}), r({5, 4})}}},
        {"transpose", {[](Graph& g, V& v) { return weighted(g, ops::transpose(v[0])); }, {r({3, 4})}}},
        {"add", {[](Graph& g, V& v) { return weighted(g, ops::add(v[0], v[1])); }, {r({2, 3}), r({2, 3})}}},
        {"mul", {[](Graph& g, V& v) { return weighted(g, ops::mul(v[0], v[1])); }, {r({2, 3}), r({2, 3})}}},
        {"scale", {[](Graph& g, V& v) { return weighted(g, ops::scale(v[0], -2.5)); }, {r({2, 3})}}},
        {"add_row", {[](Graph& g, V& v) { return weighted(g, ops::add_row(v[0], v[1])); }, {r({4, 3}), r({3})}}},
        {"sum", {[](Graph&, V& v) { return ops::sum(ops::mul(v[0], v[0])); }, {r({5})}}},
        {"mean", {[](Graph&, V& v) { return ops::mean(ops::mul(v[0], v[0])); }, {r({3, 3})}}},
        {"slice_cols", {[](Graph& g, V& v) { return weighted(g, ops::slice_cols(v[0], 1, 2)); }, {r({3, 5})}}},
        {"concat_cols",
         {[](Graph& g, V& v) { return weighted(g, ops::concat_cols({v[0], v[1]})); }, {r({3, 2}), r({3, 4})}}},
        {"concat_rows",
         {[](Graph& g, V& v) { return weighted(g, ops::concat_rows({v[1], v[0]})); }, {r({1, 3}), r({4, 3})}}},
        {"row", {[](Graph& g, V& v) { return weighted(g, ops::row(v[0], 2)); }, {r({4, 3})}}},
        {"softmax", {[](Graph& g, V& v) { return weighted(g, ops::softmax(v[0])); }, {r({3, 6})}}},
        {"layer_norm",
         {[](Graph& g, V& v) { return weighted(g, ops::layer_norm(v[0], v[1], v[2])); }, {r({4, 6}), r({6}), r({6})}}},
        {"gelu", {[](Graph& g, V& v) { return weighted(g, ops::gelu(v[0])); }, {random_tensor({3, 7}, rng, -4, 4)}}},
        {"dropout",
         {[](Graph& g, V& v) {
              std::mt19937_64 local(5);
              return weighted(g, ops::dropout(v[0], 0.3, local));
          },
          {r({4, 5})}}},
        {"cross_entropy", {[&](Graph&, V& v) { return ops::cross_entropy(v[0], labels); }, {r({3, 2})}}},
    };
    double worst_op = 0.0;
    for (const auto& [name, c] : cases) {
        const double e = gradient_check(c.first, c.second);
        o.require(e < 1e-4, name + " rel err " + fmt(e));
        worst_op = std::max(worst_op, e);
    }

    ModelConfig cfg;
    cfg.image_size = 14;
    cfg.patch_size = 7;
    cfg.embed_dim = 16;
    cfg.depth = 2;
    cfg.num_heads = 2;
    cfg.mlp_dim = 32;
    cfg.dropout = 0.0;
    ModelParams params = ModelParams::initialize(cfg, rng);
    for (auto& [name, t] : params.entries())
        for (auto& v : t.storage()) v += std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
    const Tensor tokens = patchify2d(random_tensor({3, 14, 14}, rng, 0.0, 1.0), 7);
    const std::array<int, 1> label{1};
    for (auto& [name, t] : params.entries()) t.clear_grad();
    {
        Graph g;
        g.backward(ops::cross_entropy(forward_tokens(g, params, cfg, tokens), label));
    }
    auto loss_at = [&]() {
        Graph g;
        ForwardOptions opt;
        opt.track_grad = false;
        return ops::cross_entropy(forward_tokens(g, params, cfg, tokens, opt), label).value()[0];
    };
    const double h = 1e-5;
    double worst_vit = 0.0;
    for (auto& [name, t] : params.entries()) {
        const std::vector<double> analytic = t.grad();
        double diff = 0.0, na = 0.0, nn = 0.0;
        for (std::size_t j = 0; j < t.numel(); ++j) {
            const double saved = t[j];
            t[j] = saved + h;
            const double up = loss_at();
            t[j] = saved - h;
            const double down = loss_at();
            t[j] = saved;
            const double numeric = (up - down) / (2 * h);
            diff += (analytic[j] - numeric) * (analytic[j] - numeric);
            na += analytic[j] * analytic[j];
            nn += numeric * numeric;
        }
        const double denom = std::sqrt(na) + std::sqrt(nn);
        const double rel = denom > 1e-12 ? std::sqrt(diff) / denom : 0.0;
        o.require(rel < 1e-4, "ViT " + name + " rel err " + fmt(rel));
        worst_vit = std::max(worst_vit, rel);
    }
    if (o.pass)
        o.detail = std::to_string(cases.size()) + " ops worst " + fmt(worst_op) + ", tiny ViT worst " + fmt(worst_vit);
    return o;
}

struct Labeled {
    std::vector<ScoreRow> rows;
    std::map<std::string, Label> labels;
};

Outcome overfit() {
    Outcome o;
    covit::test::TempDir dir("accept_overfit");
    const fs::path d = dir.path();
    const std::string cfg = (kSource / "configs" / "overfit.cfg").string();
    const auto start = std::chrono::steady_clock::now();
    bool ok = run_cli({"--config", cfg, "--out", (d / "raw").string(), "gen-phantom"}) == 0 &&
              run_cli({"--config", cfg, "--out", (d / "proc").string(), "preprocess", "--data", (d / "raw").string()}) ==
                  0 &&
              run_cli({"--config", cfg, "--out", (d / "run").string(), "train", "--data", (d / "proc").string()}) == 0 &&
              run_cli({"--config", cfg, "--out", (d / "pred").string(), "predict", "--data", (d / "proc").string(),
                       "--checkpoint", (d / "run" / "checkpoint").string()}) == 0;
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.require(ok, "pipeline command failed");
    if (!ok) return o;

    const Checkpoint ck = load_checkpoint(d / "run" / "checkpoint");
    const auto labels = read_labels(d / "raw" / "train" / "labels.csv");
    const auto rows = read_score_rows(d / "pred" / "scores.csv");
    std::size_t correct = 0;
    for (const ScoreRow& r : rows) correct += slice_is_covid(r.covid_score) == (labels.at(r.subject_id) == Label::covid);
    const double slice_acc = rows.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(rows.size());
    const MetricsReport rep = evaluate_threshold(group_scores(rows), labels, 0.25);

    o.require(labels.size() == 40, "expected 40 subjects");
    o.require(ck.step <= 200, "used " + std::to_string(ck.step) + " steps");
    o.require(slice_acc >= 0.95, "slice accuracy " + fmt(slice_acc));
    o.require(rep.macro_f1 && *rep.macro_f1 >= 0.9 && *rep.f1[0] >= 0.9 && *rep.f1[1] >= 0.9,
              "subject F1 below 0.9");
    o.require(seconds < 600.0, "took " + fmt(seconds) + " s");
    if (o.pass)
        o.detail = std::to_string(ck.step) + " steps, slice accuracy " + fmt(slice_acc) + " on " +
                   std::to_string(rows.size()) + " slices, subject macro F1 " + fmt(*rep.macro_f1) + ", " +
                   fmt(seconds) + " s";
    return o;
}

Outcome invariants() {
    Outcome o;
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-5.0, 5.0);

    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> row(1 + trial % 9), shifted;
        for (double& v : row) v = u(rng);
        const double c = u(rng) * 20.0;
        for (double v : row) shifted.push_back(v + c);
        const auto p = ops::softmax_values(row), q = ops::softmax_values(shifted);
        double sum = 0.0, dev = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            sum += p[i];
            dev = std::max(dev, std::abs(p[i] - q[i]));
        }
        o.require(std::abs(sum - 1.0) < 1e-12 && dev < 1e-12, "softmax");
    }

    {
        Graph g;
        const Tensor x = random_tensor({5, 16}, rng, -3.0, 3.0);
        const Var y = ops::layer_norm(g.constant(x), g.constant(Tensor({16}, 1.0)), g.constant(Tensor({16}, 0.0)));
        for (std::size_t r = 0; r < 5; ++r) {
            double m = 0.0, v = 0.0;
            for (std::size_t c = 0; c < 16; ++c) m += y.value().at(r, c) / 16.0;
            for (std::size_t c = 0; c < 16; ++c) v += (y.value().at(r, c) - m) * (y.value().at(r, c) - m) / 16.0;
            o.require(std::abs(m) < 1e-12 && std::abs(v - 1.0) < 1e-4, "layer-norm moments");
        }
    }

    {
        const Tensor img = random_tensor({3, 28, 21}, rng);
        o.require(unpatchify2d(patchify2d(img, 7), 3, 28, 21, 7) == img, "2D patchify bijection");
        const Tensor vol = random_tensor({16, 8, 24}, rng);
        o.require(unpatchify3d(patchify3d(vol, 8), 16, 8, 24, 8) == vol, "3D patchify bijection");
    }

    {
        ModelConfig cfg;
        cfg.image_size = 28;
        cfg.embed_dim = 16;
        cfg.depth = 2;
        cfg.num_heads = 4;
        cfg.mlp_dim = 16;
        const ModelParams params = ModelParams::initialize(cfg, rng);
        std::vector<Tensor> maps;
        infer_logits(params, cfg, random_tensor({cfg.num_patches(), cfg.patch_dim()}, rng), &maps);
        o.require(maps.size() == 8, "attention map count");
        for (const Tensor& a : maps)
            for (std::size_t r = 0; r < a.rows(); ++r) {
                double sum = 0.0;
                for (std::size_t c = 0; c < a.cols(); ++c) sum += a.at(r, c);
                o.require(std::abs(sum - 1.0) < 1e-12, "attention row sum");
            }
    }

    {
        std::vector<double> s{0.9, 0.1, 0.2, 0.3};
        o.require(aggregate_subject("b", s, 0.25).decision == Label::noncovid, "1 of 4 at t=0.25 must be NONCOVID");
        for (std::size_t n = 1; n <= 10; ++n)
            for (double t : {0.0, 0.05, 0.25, 0.5}) {
                bool seen_covid = false;
                for (std::size_t k = 0; k <= n; ++k) {
                    std::vector<double> v(n, 0.1);
                    std::fill(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), 0.9);
                    const bool covid = aggregate_subject("m", v, t).decision == Label::covid;
                    o.require(!(seen_covid && !covid), "aggregation monotonicity");
                    seen_covid = seen_covid || covid;
                }
            }
    }

    {
        PhantomSpec spec;
        spec.seed = 3;
        spec.image_size = 256;
        spec.n_slices = 5;
        spec.lungless_leading = 2;
        spec.lesion_count = 2;
        const PhantomSubject subject = render_subject(spec);
        std::vector<LungMask> masks;
        for (const CtSlice& s : subject.slices) {
            const Mask body = body_mask(s);
            masks.push_back(lung_mask(s, body));
            o.require(imaging::is_subset(masks.back().mask, body), "lung mask inside body mask");
        }
        std::vector<std::size_t> prev;
        bool first = true;
        for (double f : {0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5}) {
            const auto kept = filter_slices(masks, f).kept;
            if (!first) o.require(std::includes(prev.begin(), prev.end(), kept.begin(), kept.end()), "filter monotonicity");
            prev = kept;
            first = false;
        }
        const auto result = preprocess_subject(subject.slices, PreprocConfig{});
        o.require(result.slices.size() == 3, "phantom keeps its 3 lung slices");
        for (const auto& p : result.slices) {
            o.require(p.crop.width == 440 && p.crop.height == 360, "crop is 440x360");
            o.require(p.model.width == 224 && p.model.height == 224, "model input is 224x224");
        }
    }

    {
        covit::test::TempDir dir("accept_rt");
        std::vector<float> f(2 * 3 * 5);
        for (float& v : f) v = static_cast<float>(u(rng));
        const VolumeContainer vol{2, 3, 5, f};
        write_volume(dir.path() / "v", vol);
        const VolumeContainer back = read_volume(dir.path() / "v");
        o.require(back == vol, "volume round trip");
        write_volume(dir.path() / "w", back);
        o.require(read_file(dir.path() / "v.img") == read_file(dir.path() / "w.img"), "volume bytes");

        ModelConfig cfg;
        cfg.image_size = 14;
        cfg.embed_dim = 8;
        cfg.depth = 1;
        cfg.num_heads = 2;
        cfg.mlp_dim = 8;
        std::vector<Sample> samples(4);
        for (std::size_t i = 0; i < 4; ++i) {
            samples[i].tokens = random_tensor({cfg.num_patches(), cfg.patch_dim()}, rng);
            samples[i].label = static_cast<int>(i % 2);
        }
        TrainConfig tc;
        tc.batch_size = 3;
        tc.max_steps = 3;
        const Checkpoint ck = train(samples, cfg, tc);
        save_checkpoint(dir.path() / "c", ck);
        const Checkpoint ck_back = load_checkpoint(dir.path() / "c");
        o.require(ck_back == ck, "checkpoint round trip");
        save_checkpoint(dir.path() / "d", ck_back);
        o.require(read_file(dir.path() / "c.img") == read_file(dir.path() / "d.img") &&
                      read_file(dir.path() / "c.hdr") == read_file(dir.path() / "d.hdr"),
                  "checkpoint bytes");
    }
    if (o.pass)
        o.detail = "softmax, layer norm, patchify, attention, aggregation, preprocessing, filter and round trips";
    return o;
}

Outcome determinism() {
    Outcome o;
    covit::test::TempDir dir("accept_det");
    const std::string cfg = (kSource / "configs" / "smoke.cfg").string();
    const std::vector<std::string> files{"run/checkpoint.hdr", "run/checkpoint.img", "run/loss.csv",
                                         "pred/scores.csv",    "eval/report.txt",    "eval/report.json"};
    std::vector<std::string> first;
    for (int pass = 0; pass < 2; ++pass) {
        const fs::path d = dir.path() / std::to_string(pass);
        auto step = [&](std::vector<std::string> args) {
            args.insert(args.begin(), {"--config", cfg, "--threads", "1", "--seed", "5"});
            return run_cli(args) == 0;
        };
        const bool ok =
            step({"--out", (d / "raw").string(), "gen-phantom"}) &&
            step({"--out", (d / "proc").string(), "preprocess", "--data", (d / "raw").string()}) &&
            step({"--out", (d / "run").string(), "train", "--data", (d / "proc").string()}) &&
            step({"--out", (d / "pred").string(), "predict", "--data", (d / "proc").string(), "--checkpoint",
                  (d / "run" / "checkpoint").string()}) &&
            step({"--out", (d / "eval").string(), "evaluate", "--scores", (d / "pred" / "scores.csv").string(),
                  "--labels", (d / "raw" / "train" / "labels.csv").string()});
        o.require(ok, "pipeline command failed");
        if (!ok) return o;
        for (std::size_t i = 0; i < files.size(); ++i) {
            const std::string bytes = read_file(d / files[i]);
            if (pass == 0) first.push_back(bytes);
            else o.require(bytes == first[i], files[i] + " differs");
        }
    }
    if (o.pass) o.detail = "checkpoint, loss history, scores and reports byte-identical across two runs";
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"reference metric reproduction", reference_metrics},
        {"sub-volume builder oracle", subvolume_oracle},
        {"gradient correctness", gradients},
        {"overfit on the phantom set", overfit},
        {"invariant suites", invariants},
        {"determinism", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        const auto start = std::chrono::steady_clock::now();
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first << " ("
                  << o.detail << ") [" << fmt(s) << " s]" << std::endl;
        failed += o.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
