#include "covit/cli.hpp"
#include "covit/dataset_io.hpp"
#include "covit/error.hpp"
#include "covit/run_config.hpp"
#include "support.hpp"

#include <doctest.h>

#include <sstream>

using namespace covit;

#ifndef COVIT_SOURCE_DIR
#error "COVIT_SOURCE_DIR must point at the project root"
#endif

namespace {

struct Result {
    int code = 0;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "covit");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Result r;
    r.code = cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

const fs::path kSource = COVIT_SOURCE_DIR;

}  // namespace

TEST_CASE("run configuration") {
    RunConfig cfg;
    CHECK(cfg.get("eval.threshold") == "0.25");
    CHECK(cfg.model() == ModelConfig::defaults(Variant::vit2d));
    CHECK_THROWS_AS(cfg.set("model.heads", "2"), ConfigError);
    CHECK_THROWS_AS(cfg.set_pair("no-equals-sign"), ConfigError);
    CHECK_THROWS_AS(cfg.load_text("train.lr = 0.1\nbogus.key = 1\n"), ConfigError);

    cfg.load_text("# comment\n\nmodel.variant = vit3d\ntrain.lr = 0.01\n");
    CHECK(cfg.model().variant == Variant::vit3d);
    CHECK(cfg.model().patch_size == 8);
    CHECK(cfg.train().lr == 0.01);
    cfg.set_pair("train.lr=0.5");
    CHECK(cfg.train().lr == 0.5);
    CHECK(cfg.get_list("eval.thresholds") == std::vector<double>{0.25, 0.20, 0.06, 0.05});
    CHECK(cfg.resolved_text().find("train.lr=0.5\n") != std::string::npos);

    const RunConfig overfit = [] {
        RunConfig c;
        c.load_file(kSource / "configs" / "overfit.cfg");
        return c;
    }();
    CHECK(parameter_count(overfit.model()) > 0);
    CHECK(overfit.train().max_steps == 200);
}

TEST_CASE("command-line parsing") {
    const Result none = run({});
    CHECK(none.code == 2);
    CHECK(none.out.find("gen-phantom") != std::string::npos);
    CHECK(run({"--help"}).code == 0);
    CHECK(run({"frobnicate"}).code != 0);
    CHECK(run({"evaluate", "--no-such-flag"}).code == 2);
    CHECK(run({"--threads", "0", "evaluate"}).code == 2);
    CHECK(run({"--config", "/nonexistent/file.cfg", "evaluate"}).code == 2);

    const Result missing = run({"evaluate"});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("--scores") != std::string::npos);
    const Result bad_key = run({"--set", "nope=1", "evaluate"});
    CHECK(bad_key.code == 1);
    CHECK(bad_key.err.find("nope") != std::string::npos);
}

TEST_CASE("evaluate and sweep on the fixture scores") {
    const fs::path fx = kSource / "tests" / "fixtures";
    covit::test::TempDir dir("cli_eval");
    const std::string scores = (fx / "subject_scores.csv").string();
    const std::string labels = (fx / "subject_labels.csv").string();
    const std::string before = read_file(scores);

    const Result r = run({"--out", dir.path().string(), "evaluate", "--scores", scores, "--labels", labels});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("79.1") != std::string::npos);
    CHECK(r.out.find("0.74") != std::string::npos);
    CHECK(read_file(dir.path() / "report.txt") == r.out);
    CHECK(read_file(dir.path() / "report.json").find("\"matrix\"") != std::string::npos);
    CHECK(read_file(scores) == before);

    const Result again = run({"--out", dir.path().string(), "evaluate", "--scores", scores, "--labels", labels});
    CHECK(again.out == r.out);

    const Result s = run({"--out", dir.path().string(), "sweep", "--scores", scores, "--labels", labels,
                          "--thresholds", "0.25,0.5"});
    REQUIRE(s.code == 0);
    CHECK(s.out.find("t = 0.25") != std::string::npos);
    CHECK(fs::exists(dir.path() / "sweep.json"));
    CHECK(run({"sweep", "--scores", scores, "--labels", labels, "--thresholds", "0.2,x"}).code == 1);
    CHECK(run({"evaluate", "--scores", scores, "--labels", labels, "--threshold", "1.5"}).code == 1);

    // A flag beats the config file, which beats the built-in default.
    write_file(dir.path() / "t.cfg", "eval.threshold = 0.9\n");
    const std::string cfg = (dir.path() / "t.cfg").string();
    const Result from_file = run({"--config", cfg, "evaluate", "--scores", scores, "--labels", labels});
    CHECK(from_file.out != r.out);
    const Result from_flag =
        run({"--config", cfg, "evaluate", "--scores", scores, "--labels", labels, "--threshold", "0.25"});
    CHECK(from_flag.out == r.out);
}

TEST_CASE("small pipeline round trip") {
    covit::test::TempDir dir("cli_pipeline");
    const fs::path d = dir.path();
    const std::string cfg = (kSource / "configs" / "smoke.cfg").string();
    auto step = [&](std::vector<std::string> args) {
        args.insert(args.begin(), {"--config", cfg, "--threads", "2"});
        const Result r = run(args);
        INFO(r.err);
        REQUIRE(r.code == 0);
        return r;
    };
    step({"--out", (d / "raw").string(), "gen-phantom"});
    step({"--out", (d / "proc").string(), "preprocess", "--data", (d / "raw").string()});
    CHECK(fs::exists(d / "proc" / "train" / "subjects.csv"));
    CHECK(fs::exists(d / "proc" / "train" / "resolved_config.txt"));
    step({"--out", (d / "run").string(), "train", "--data", (d / "proc").string()});
    CHECK(fs::exists(d / "run" / "checkpoint_step3.hdr"));
    CHECK(read_file(d / "run" / "loss.csv").find("\n6,") != std::string::npos);
    step({"--out", (d / "pred").string(), "predict", "--data", (d / "proc").string(), "--checkpoint",
          (d / "run" / "checkpoint").string()});
    const Result ev = step({"evaluate", "--scores", (d / "pred" / "scores.csv").string(), "--labels",
                            (d / "raw" / "train" / "labels.csv").string()});
    CHECK(ev.out.find("COVID") != std::string::npos);

    // Resuming the final checkpoint with a larger step budget continues training.
    step({"--out", (d / "run2").string(), "--set", "train.max_steps=8", "train", "--data", (d / "proc").string(),
          "--resume", (d / "run" / "checkpoint").string()});
    CHECK(read_file(d / "run2" / "loss.csv").find("\n8,") != std::string::npos);

    const Result wrong = run({"--out", (d / "x").string(), "train", "--data", (d / "missing").string()});
    CHECK(wrong.code == 1);
}
