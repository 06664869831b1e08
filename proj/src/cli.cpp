#include "covit/cli.hpp"

#include "covit/dataset_io.hpp"
#include "covit/error.hpp"
#include "covit/eval.hpp"
#include "covit/phantom.hpp"
#include "covit/pipeline.hpp"
#include "covit/run_config.hpp"
#include "covit/trainer.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace covit::cli {

namespace {

struct GlobalOptions {
    std::string config_file;
    std::optional<unsigned> threads;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
};

struct Paths {
    std::string data;
    std::string out;
    std::string split = "train";
    std::string checkpoint;
    std::string resume;
    std::string scores;
    std::string labels;
    std::optional<double> threshold;
    std::string thresholds;
};

RunConfig resolve(const GlobalOptions& g) {
    RunConfig cfg;
    if (!g.config_file.empty()) cfg.load_file(g.config_file);
    for (const auto& kv : g.overrides) cfg.set_pair(kv);
    if (g.threads) cfg.set("run.threads", std::to_string(*g.threads));
    if (g.seed) {
        cfg.set("train.seed", std::to_string(*g.seed));
        cfg.set("phantom.seed", std::to_string(*g.seed));
    }
    return cfg;
}

fs::path require_dir(const std::string& flag, const std::string& value) {
    if (value.empty()) throw ConfigError(flag + " is required");
    if (!fs::is_directory(value)) throw DataError(flag + " " + value + " is not a directory");
    return value;
}

fs::path require_out(const std::string& value) {
    if (value.empty()) throw ConfigError("--out is required");
    fs::create_directories(value);
    return value;
}

void echo_config(const fs::path& dir, const RunConfig& cfg) { write_file(dir / "resolved_config.txt", cfg.resolved_text()); }

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size()) throw ConfigError("bad threshold list entry '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError("empty threshold list");
    return out;
}

int run_gen_phantom(const RunConfig& cfg, const Paths& p, std::ostream& out) {
    const fs::path root = require_out(p.out);
    const PhantomSpec base = cfg.phantom();
    const std::uint64_t seed = cfg.get_uint("phantom.seed");
    const std::size_t lesions = cfg.get_uint("phantom.lesion_count");
    const auto train = generate_dataset(root, cfg.get_uint("phantom.n_covid"), cfg.get_uint("phantom.n_noncovid"), seed,
                                        Split::train, base, lesions);
    out << "train: " << train.subjects.size() << " subjects\n";
    const std::size_t vc = cfg.get_uint("phantom.val_covid");
    const std::size_t vn = cfg.get_uint("phantom.val_noncovid");
    if (vc + vn > 0) {
        const auto val = generate_dataset(root, vc, vn, seed + 1, Split::validation, base, lesions);
        out << "validation: " << val.subjects.size() << " subjects\n";
    }
    echo_config(root, cfg);
    return 0;
}

int run_preprocess(const RunConfig& cfg, const Paths& p, std::ostream& out) {
    const fs::path data = require_dir("--data", p.data);
    const fs::path root = require_out(p.out);
    const Split split = parse_split(p.split);
    const auto s = preprocess_split(data, split, root, cfg.preproc(), cfg.threads());
    out << s.subjects << " subjects, " << s.slices_kept << "/" << s.slices_in << " slices kept, " << s.flagged
        << " flagged\n";
    echo_config(root / std::string(to_string(split)), cfg);
    return 0;
}

int run_build_volumes(const RunConfig& cfg, const Paths& p, std::ostream& out) {
    const fs::path data = require_dir("--data", p.data);
    const fs::path root = require_out(p.out);
    const Split split = parse_split(p.split);
    const auto s = build_volumes_split(data, split, root);
    out << s.subjects << " subjects, " << s.volumes << " volumes, " << s.repeated << " with repeated slices\n";
    echo_config(root / std::string(to_string(split)), cfg);
    return 0;
}

int run_train(const RunConfig& cfg, const Paths& p, std::ostream& out) {
    const fs::path data = require_dir("--data", p.data);
    const fs::path run = require_out(p.out);
    const ModelConfig model = cfg.model();
    const TrainConfig train_cfg = cfg.train();
    const auto samples = load_samples(data, parse_split(p.split), model, true);
    out << samples.size() << " training samples\n";

    std::optional<Checkpoint> resume;
    if (!p.resume.empty()) resume = load_checkpoint(p.resume);

    TrainHooks hooks;
    hooks.progress = &out;
    hooks.on_checkpoint = [&](const Checkpoint& c) {
        save_checkpoint(run / ("checkpoint_step" + std::to_string(c.step)), c);
    };
    const Checkpoint result = train(samples, model, train_cfg, resume, hooks);
    save_checkpoint(run / "checkpoint", result);
    write_loss_history(run / "loss.csv", result.loss_history);
    echo_config(run, cfg);
    out << "steps: " << result.step << "\n";
    return 0;
}

int run_predict(const RunConfig& cfg, const Paths& p, std::ostream& out) {
    if (p.checkpoint.empty()) throw ConfigError("--checkpoint is required");
    const fs::path data = require_dir("--data", p.data);
    const fs::path dir = require_out(p.out);
    const Checkpoint ckpt = load_checkpoint(p.checkpoint);
    const auto samples = load_samples(data, parse_split(p.split), ckpt.model, false);
    const auto eval = evaluate_slices(ckpt.params, ckpt.model, samples, cfg.threads());
    std::vector<ScoreRow> rows;
    rows.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
        rows.push_back(ScoreRow{samples[i].subject_id, samples[i].slice_index, eval.scores[i]});
    write_scores(dir / "scores.csv", rows);
    echo_config(dir, cfg);
    out << rows.size() << " scores written\n";
    return 0;
}

struct ScoredSet {
    std::vector<SubjectScores> subjects;
    std::map<std::string, Label> labels;
};

ScoredSet load_scored(const Paths& p) {
    if (p.scores.empty()) throw ConfigError("--scores is required");
    if (p.labels.empty()) throw ConfigError("--labels is required");
    const auto rows = read_score_rows(p.scores);
    return ScoredSet{group_scores(rows), read_labels(p.labels)};
}

int run_evaluate(const RunConfig& cfg, const Paths& p, std::ostream& out) {
    const double t = p.threshold ? *p.threshold : cfg.get_double("eval.threshold");
    const auto set = load_scored(p);
    const MetricsReport report = evaluate_threshold(set.subjects, set.labels, t);
    const std::string table = format_table(report);
    out << table;
    if (!p.out.empty()) {
        const fs::path dir = require_out(p.out);
        write_file(dir / "report.txt", table);
        write_file(dir / "report.json", report_json(report));
        echo_config(dir, cfg);
    }
    return 0;
}

int run_sweep(const RunConfig& cfg, const Paths& p, std::ostream& out) {
    const std::vector<double> ts = p.thresholds.empty() ? cfg.get_list("eval.thresholds") : parse_list(p.thresholds);
    const auto set = load_scored(p);
    const auto reports = threshold_sweep(set.subjects, set.labels, ts);
    std::string text;
    for (const auto& r : reports) {
        std::ostringstream head;
        head << "t = " << *r.threshold << "\n";
        text += head.str() + format_table(r) + "\n";
    }
    out << text;
    if (!p.out.empty()) {
        const fs::path dir = require_out(p.out);
        write_file(dir / "sweep.txt", text);
        write_file(dir / "sweep.json", reports_json(reports));
        echo_config(dir, cfg);
    }
    return 0;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"COVID-19 CT classification pipeline with vision transformers", "covit"};
    app.fallthrough();
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    GlobalOptions g;
    Paths p;
    if (const char* env = std::getenv("COVIT_DATA_ROOT")) p.data = env;

    app.add_option("--config", g.config_file, "key=value settings file")->check(CLI::ExistingFile);
    app.add_option("--threads", g.threads, "worker threads (1 = deterministic)")->check(CLI::PositiveNumber);
    app.add_option("--seed", g.seed, "seed for phantom generation and training");
    app.add_option("--set", g.overrides, "override one setting, key=value")->allow_extra_args(false);
    app.add_option("--out", p.out, "output directory");

    auto data_opt = [&](CLI::App* sub, const std::string& what) {
        sub->add_option("--data", p.data, what + " (default $COVIT_DATA_ROOT)");
        sub->add_option("--split", p.split, "train, validation or test")->capture_default_str();
    };

    auto* gen = app.add_subcommand("gen-phantom", "write a synthetic CT dataset");
    auto* pre = app.add_subcommand("preprocess", "mask, filter, crop and resize raw slices");
    data_opt(pre, "raw dataset root");
    auto* vol = app.add_subcommand("build-volumes", "split processed subjects into 32-slice volumes");
    data_opt(vol, "processed dataset root");
    auto* trn = app.add_subcommand("train", "train a model");
    data_opt(trn, "processed (2D) or volume (3D) root");
    trn->add_option("--resume", p.resume, "checkpoint stem to continue from");
    auto* prd = app.add_subcommand("predict", "score every slice or volume");
    data_opt(prd, "processed (2D) or volume (3D) root");
    prd->add_option("--checkpoint", p.checkpoint, "checkpoint stem");
    auto* evl = app.add_subcommand("evaluate", "subject-level metrics at one threshold");
    evl->add_option("--scores", p.scores, "scores CSV");
    evl->add_option("--labels", p.labels, "labels CSV");
    evl->add_option("--threshold", p.threshold, "COVID slice fraction threshold");
    auto* swp = app.add_subcommand("sweep", "subject-level metrics over several thresholds");
    swp->add_option("--scores", p.scores, "scores CSV");
    swp->add_option("--labels", p.labels, "labels CSV");
    swp->add_option("--thresholds", p.thresholds, "comma-separated thresholds");
    app.require_subcommand(1);

    if (argc <= 1) {
        out << app.help();
        return 2;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "covit: " << e.what() << "\n";
        return 2;
    }

    try {
        const RunConfig cfg = resolve(g);
        if (gen->parsed()) return run_gen_phantom(cfg, p, out);
        if (pre->parsed()) return run_preprocess(cfg, p, out);
        if (vol->parsed()) return run_build_volumes(cfg, p, out);
        if (trn->parsed()) return run_train(cfg, p, out);
        if (prd->parsed()) return run_predict(cfg, p, out);
        if (evl->parsed()) return run_evaluate(cfg, p, out);
        if (swp->parsed()) return run_sweep(cfg, p, out);
    } catch (const std::exception& e) {
        err << "covit: " << e.what() << "\n";
        return 1;
    }
    err << "covit: no subcommand\n";
    return 2;
}

}  // namespace covit::cli
