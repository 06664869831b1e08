#include "covit/trainer.hpp"

#include "covit/dataset_io.hpp"
#include "covit/error.hpp"
#include "covit/eval.hpp"
#include "covit/ops.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

namespace covit {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) throw ConfigError("invalid integer for " + key + ": '" + v + "'");
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const double out = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(out))
        throw ConfigError("invalid number for " + key + ": '" + v + "'");
    return out;
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("train.epochs must be at least 1");
    if (batch_size == 0) throw ConfigError("train.batch_size must be at least 1");
    if (!(lr >= 0.0)) throw ConfigError("train.lr must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum must be in [0, 1)");
}

std::vector<std::pair<std::string, std::string>> TrainConfig::to_pairs() const {
    return {{"train.epochs", std::to_string(epochs)},
            {"train.batch_size", std::to_string(batch_size)},
            {"train.lr", num(lr)},
            {"train.seed", std::to_string(seed)},
            {"train.checkpoint_interval", std::to_string(checkpoint_interval)},
            {"train.max_steps", std::to_string(max_steps)},
            {"train.optimizer", optimizer == OptimizerKind::adam ? "adam" : "sgd"},
            {"train.momentum", num(momentum)}};
}

TrainConfig TrainConfig::from_pairs(const std::map<std::string, std::string>& kv) {
    TrainConfig c;
    for (const auto& [k, v] : kv) {
        if (k == "train.epochs") c.epochs = parse_u64(k, v);
        else if (k == "train.batch_size") c.batch_size = parse_u64(k, v);
        else if (k == "train.lr") c.lr = parse_double(k, v);
        else if (k == "train.seed") c.seed = parse_u64(k, v);
        else if (k == "train.checkpoint_interval") c.checkpoint_interval = parse_u64(k, v);
        else if (k == "train.max_steps") c.max_steps = parse_u64(k, v);
        else if (k == "train.momentum") c.momentum = parse_double(k, v);
        else if (k == "train.optimizer") {
            if (v == "adam") c.optimizer = OptimizerKind::adam;
            else if (v == "sgd") c.optimizer = OptimizerKind::sgd;
            else throw ConfigError("train.optimizer must be adam or sgd");
        }
    }
    c.validate();
    return c;
}

// Checkpoint layout: `<stem>.hdr` holds `key=value` lines (format tag, model
// and train config, scalar state, RNG state) followed by one
// `tensor=<name> <d1,d2,..> <offset>` line per stored array; `<stem>.img`
// holds every array as little-endian float64, concatenated in header order.
void save_checkpoint(const std::filesystem::path& stem, const Checkpoint& c) {
    std::string hdr = "format=covit-checkpoint-v1\n";
    for (const auto& [k, v] : c.model.to_pairs()) hdr += k + "=" + v + "\n";
    for (const auto& [k, v] : c.train.to_pairs()) hdr += k + "=" + v + "\n";
    hdr += "state.step=" + std::to_string(c.step) + "\n";
    hdr += "state.epoch=" + std::to_string(c.epoch) + "\n";
    hdr += "state.cursor=" + std::to_string(c.cursor) + "\n";
    hdr += "state.rng=" + c.rng_state + "\n";

    std::string payload;
    std::size_t offset = 0;
    auto put = [&](const std::string& name, const Shape& shape, std::span<const double> values) {
        std::string dims;
        for (std::size_t i = 0; i < shape.size(); ++i) dims += (i ? "," : "") + std::to_string(shape[i]);
        hdr += "tensor=" + name + " " + dims + " " + std::to_string(offset) + "\n";
        for (double v : values) append_le(payload, v);
        offset += values.size();
    };
    for (const auto& [name, t] : c.params.entries()) put("param." + name, t.shape(), t.data());
    for (std::size_t i = 0; i < c.optimizer_buffers.size(); ++i)
        put("opt." + std::to_string(i), {c.optimizer_buffers[i].size()}, c.optimizer_buffers[i]);
    std::vector<double> order(c.order.begin(), c.order.end());
    put("state.order", {order.size()}, order);
    put("state.loss_history", {c.loss_history.size()}, c.loss_history);

    std::filesystem::path h = stem, i = stem;
    h += ".hdr";
    i += ".img";
    write_file(h, hdr);
    write_file(i, payload);
}

Checkpoint load_checkpoint(const std::filesystem::path& stem) {
    std::filesystem::path h = stem, im = stem;
    h += ".hdr";
    im += ".img";
    const std::string hdr = read_file(h);
    const std::string payload = read_file(im);
    if (payload.size() % 8 != 0) throw FormatError(im.string() + ": payload is not a whole number of float64 values");
    const std::size_t n_values = payload.size() / 8;

    std::map<std::string, std::string> kv;
    struct Entry {
        std::string name;
        Shape shape;
        std::size_t offset;
    };
    std::vector<Entry> entries;
    std::istringstream in(hdr);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError(h.string() + ": malformed line '" + line + "'");
        const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        if (key == "tensor") {
            std::istringstream ts(value);
            Entry e;
            std::string dims;
            if (!(ts >> e.name >> dims >> e.offset)) throw FormatError(h.string() + ": malformed tensor line");
            std::size_t total = 1;
            std::istringstream ds(dims);
            std::string tok;
            while (std::getline(ds, tok, ',')) {
                e.shape.push_back(parse_u64("tensor dims", tok));
                total *= e.shape.back();
            }
            if (e.shape.empty() || e.offset + total > n_values)
                throw FormatError(h.string() + ": tensor " + e.name + " exceeds payload");
            entries.push_back(std::move(e));
        } else if (!kv.emplace(key, value).second) {
            throw FormatError(h.string() + ": repeated key " + key);
        }
    }
    if (kv["format"] != "covit-checkpoint-v1") throw FormatError(h.string() + ": not a covit checkpoint");

    auto values = [&](const Entry& e) {
        std::vector<double> out(shape_numel(e.shape));
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = read_le_f64(payload.data() + 8 * (e.offset + k));
        return out;
    };

    Checkpoint c;
    std::map<std::string, std::string> model_kv, train_kv;
    for (const auto& [k, v] : kv) {
        if (k.rfind("model.", 0) == 0) model_kv.emplace(k, v);
        if (k.rfind("train.", 0) == 0) train_kv.emplace(k, v);
    }
    c.model = ModelConfig::from_pairs(model_kv);
    c.train = TrainConfig::from_pairs(train_kv);
    c.step = parse_u64("state.step", kv["state.step"]);
    c.epoch = parse_u64("state.epoch", kv["state.epoch"]);
    c.cursor = parse_u64("state.cursor", kv["state.cursor"]);
    c.rng_state = kv["state.rng"];

    std::size_t expected_end = 0;
    for (const Entry& e : entries) {
        if (e.offset != expected_end) throw FormatError(h.string() + ": tensors are not contiguous");
        expected_end += shape_numel(e.shape);
        if (e.name.rfind("param.", 0) == 0) {
            c.params.add(e.name.substr(6), Tensor(e.shape, values(e)));
        } else if (e.name.rfind("opt.", 0) == 0) {
            c.optimizer_buffers.push_back(values(e));
        } else if (e.name == "state.order") {
            for (double v : values(e)) c.order.push_back(static_cast<std::size_t>(v));
        } else if (e.name == "state.loss_history") {
            c.loss_history = values(e);
        } else {
            throw FormatError(h.string() + ": unknown tensor " + e.name);
        }
    }
    if (expected_end != n_values) throw FormatError(im.string() + ": payload has trailing data");

    // Parameters must match the declared architecture exactly.
    const ModelParams reference = ModelParams::zeros(c.model);
    if (reference.entries().size() != c.params.entries().size())
        throw FormatError(h.string() + ": parameter list does not match model config");
    for (std::size_t k = 0; k < reference.entries().size(); ++k) {
        const auto& [rn, rt] = reference.entries()[k];
        const auto& [cn, ct] = c.params.entries()[k];
        if (rn != cn || rt.shape() != ct.shape())
            throw FormatError(h.string() + ": parameter " + cn + " does not match model config");
    }
    return c;
}

Checkpoint train(std::span<const Sample> samples, const ModelConfig& model, const TrainConfig& config,
                 const std::optional<Checkpoint>& resume, const TrainHooks& hooks) {
    model.validate();
    config.validate();
    if (samples.empty()) throw DataError("train: empty training set");
    for (const Sample& s : samples)
        if (s.label != 0 && s.label != 1) throw DataError("train: sample without a binary label");

    Checkpoint state;
    std::mt19937_64 rng(config.seed);
    Optimizer optimizer(config.optimizer, config.lr, config.momentum);
    if (resume) {
        if (!(resume->model == model)) throw ConfigError("resume: checkpoint model config differs");
        state = *resume;
        state.train = config;
        std::istringstream rs(state.rng_state);
        rs >> rng;
        if (!rs) throw FormatError("resume: corrupt RNG state");
        optimizer.import_state(state.step, state.optimizer_buffers);
        if (!state.order.empty() && state.order.size() != samples.size())
            throw DataError("resume: training set size differs from the checkpoint");
    } else {
        state.model = model;
        state.train = config;
        state.params = ModelParams::initialize(model, rng);
    }

    const std::size_t n = samples.size();
    std::vector<Tensor*> params = state.params.tensors();
    for (Tensor* p : params) p->clear_grad();

    auto snapshot = [&]() {
        state.step = optimizer.steps();
        state.optimizer_buffers = optimizer.export_state();
        std::ostringstream rs;
        rs << rng;
        state.rng_state = rs.str();
    };

    for (;;) {
        if (config.max_steps > 0 && state.loss_history.size() >= config.max_steps) break;
        if (state.order.empty() || state.cursor >= n) {
            if (!state.order.empty()) ++state.epoch;
            if (state.epoch >= config.epochs) break;
            state.order.resize(n);
            std::iota(state.order.begin(), state.order.end(), std::size_t{0});
            for (std::size_t i = n - 1; i > 0; --i) {
                std::uniform_int_distribution<std::size_t> pick(0, i);
                std::swap(state.order[i], state.order[pick(rng)]);
            }
            state.cursor = 0;
        }
        const std::size_t end = std::min(n, state.cursor + config.batch_size);
        Graph graph;
        ForwardOptions opt;
        opt.training = true;
        opt.rng = &rng;
        std::vector<Var> logits;
        std::vector<int> labels;
        for (std::size_t k = state.cursor; k < end; ++k) {
            const Sample& s = samples[state.order[k]];
            logits.push_back(forward_tokens(graph, state.params, model, s.tokens, opt));
            labels.push_back(s.label);
        }
        state.cursor = end;
        Var loss = ops::cross_entropy(logits.size() == 1 ? logits.front() : ops::concat_rows(logits), labels);
        const double loss_value = loss.value()[0];
        if (!std::isfinite(loss_value))
            throw NumericError("train: non-finite loss at step " + std::to_string(state.loss_history.size()));
        for (Tensor* p : params) p->zero_grad();
        graph.backward(loss);
        optimizer.step(params);
        state.loss_history.push_back(loss_value);

        const std::size_t step = state.loss_history.size();
        if (hooks.progress != nullptr) {
            *hooks.progress << "step " << step << " epoch " << state.epoch << " loss " << num(loss_value) << '\n';
        }
        if (config.checkpoint_interval > 0 && step % config.checkpoint_interval == 0 && hooks.on_checkpoint) {
            snapshot();
            hooks.on_checkpoint(state);
        }
    }
    for (Tensor* p : params) p->clear_grad();
    snapshot();
    return state;
}

SliceEvaluation evaluate_slices(const ModelParams& params, const ModelConfig& model, std::span<const Sample> samples,
                                unsigned threads) {
    SliceEvaluation out;
    out.scores.assign(samples.size(), 0.0);
    const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(samples.size(), 1));
    std::vector<std::exception_ptr> errors(workers);
    auto work = [&](std::size_t begin) {
        try {
            for (std::size_t i = begin; i < samples.size(); i += workers)
                out.scores[i] = predict_tokens(params, model, samples[i].tokens);
        } catch (...) {
            errors[begin] = std::current_exception();
        }
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work, t);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if ((slice_is_covid(out.scores[i]) ? 1 : 0) == samples[i].label) ++correct;
    out.accuracy = samples.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(samples.size());
    return out;
}

void write_loss_history(const std::filesystem::path& path, std::span<const double> losses) {
    std::string text = "step,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i) text += std::to_string(i + 1) + "," + num(losses[i]) + "\n";
    write_file(path, text);
}

}  // namespace covit
