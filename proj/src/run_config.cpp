#include "covit/run_config.hpp"

#include "covit/dataset_io.hpp"
#include "covit/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace covit {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<ConfigKey>& RunConfig::keys() {
    static const std::vector<ConfigKey> k = {
        {"run.threads", "1", "worker threads; 1 is the bitwise-deterministic mode"},
        {"preproc.min_lung_fraction", "0.02", "drop slices whose lung fraction is below this"},
        {"preproc.roi_margin_px", "10", "margin added around the subject's lung box"},
        {"preproc.closing_radius", "3", "disk radius of the lung-mask closing"},
        {"model.variant", "vit2d", "vit2d or vit3d"},
        {"model.image_size", "224", "input side fed to the transformer"},
        {"model.volume_depth", "32", "slices per volume (vit3d)"},
        {"model.channels", "3", "replicated grayscale channels (vit2d)"},
        {"model.patch_size", "auto", "7 for vit2d, 8 for vit3d when auto"},
        {"model.embed_dim", "128", "token width"},
        {"model.depth", "6", "transformer blocks"},
        {"model.num_heads", "8", "attention heads"},
        {"model.mlp_dim", "256", "hidden width of the block MLP"},
        {"model.num_classes", "2", "output classes"},
        {"model.dropout", "0.1", "dropout rate during training"},
        {"train.epochs", "80", "passes over the training set"},
        {"train.batch_size", "8", "samples per optimizer step"},
        {"train.lr", "0.001", "learning rate"},
        {"train.seed", "0", "initialization, shuffling and dropout seed"},
        {"train.checkpoint_interval", "0", "steps between intermediate checkpoints (0 = final only)"},
        {"train.max_steps", "0", "stop after this many steps (0 = all epochs)"},
        {"train.optimizer", "adam", "adam or sgd"},
        {"train.momentum", "0.9", "SGD momentum"},
        {"eval.threshold", "0.25", "subject vote threshold for evaluate"},
        {"eval.thresholds", "0.25,0.20,0.06,0.05", "thresholds for sweep"},
        {"phantom.seed", "7", "dataset seed"},
        {"phantom.n_covid", "20", "COVID subjects in the train split"},
        {"phantom.n_noncovid", "20", "nonCOVID subjects in the train split"},
        {"phantom.val_covid", "0", "COVID subjects in the validation split"},
        {"phantom.val_noncovid", "0", "nonCOVID subjects in the validation split"},
        {"phantom.image_size", "512", "slice side in pixels"},
        {"phantom.n_slices", "10", "slices per subject"},
        {"phantom.lungless_leading", "3", "leading slices without lung"},
        {"phantom.lesion_count", "3", "lesions per lung slice for COVID subjects"},
        {"phantom.lesion_radius_min", "0.04", "smallest lesion radius as a fraction of image_size"},
        {"phantom.lesion_radius_max", "0.06", "largest lesion radius as a fraction of image_size"},
        {"phantom.lesion_intensity_min", "100", "smallest lesion peak above the lung background"},
        {"phantom.lesion_intensity_max", "140", "largest lesion peak above the lung background"},
        {"phantom.distractor_count", "2", "soft-tissue blobs per slice for nonCOVID subjects"},
        {"phantom.noise_sigma", "3", "Gaussian noise standard deviation"},
        {"phantom.border_artifact", "0", "draw a bright frame at the image edge"},
    };
    return k;
}

RunConfig::RunConfig() {
    for (const auto& k : keys()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second = value;
}

void RunConfig::set_pair(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::load_text(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        try {
            set_pair(line);
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void RunConfig::load_file(const std::filesystem::path& path) { load_text(read_file(path), path.string()); }

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

double RunConfig::get_double(const std::string& key) const {
    const std::string& v = get(key);
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(d))
        throw ConfigError("config key " + key + " needs a number, got '" + v + "'");
    return d;
}

std::uint64_t RunConfig::get_uint(const std::string& key) const {
    const std::string& v = get(key);
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
        throw ConfigError("config key " + key + " needs a non-negative integer, got '" + v + "'");
    return out;
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw ConfigError("config key " + key + " needs 0/1, got '" + v + "'");
}

std::vector<double> RunConfig::get_list(const std::string& key) const {
    std::vector<double> out;
    std::istringstream in(get(key));
    std::string tok;
    while (std::getline(in, tok, ',')) {
        tok = trim(tok);
        char* end = nullptr;
        const double d = std::strtod(tok.c_str(), &end);
        if (tok.empty() || end != tok.c_str() + tok.size()) throw ConfigError("config key " + key + " has a bad entry '" + tok + "'");
        out.push_back(d);
    }
    if (out.empty()) throw ConfigError("config key " + key + " is empty");
    return out;
}

std::string RunConfig::resolved_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
}

ModelConfig RunConfig::model() const {
    std::map<std::string, std::string> kv;
    for (const auto& [k, v] : values_)
        if (k.rfind("model.", 0) == 0 && !(k == "model.patch_size" && v == "auto")) kv.emplace(k, v);
    return ModelConfig::from_pairs(kv);
}

TrainConfig RunConfig::train() const {
    std::map<std::string, std::string> kv;
    for (const auto& [k, v] : values_)
        if (k.rfind("train.", 0) == 0) kv.emplace(k, v);
    return TrainConfig::from_pairs(kv);
}

PreprocConfig RunConfig::preproc() const {
    PreprocConfig c;
    c.min_lung_fraction = get_double("preproc.min_lung_fraction");
    c.roi_margin_px = get_uint("preproc.roi_margin_px");
    c.closing_radius = static_cast<int>(get_uint("preproc.closing_radius"));
    if (c.min_lung_fraction < 0.0 || c.min_lung_fraction > 1.0)
        throw ConfigError("preproc.min_lung_fraction must be in [0, 1]");
    return c;
}

PhantomSpec RunConfig::phantom() const {
    PhantomSpec s;
    s.image_size = get_uint("phantom.image_size");
    s.n_slices = get_uint("phantom.n_slices");
    s.lungless_leading = get_uint("phantom.lungless_leading");
    s.distractor_count = get_uint("phantom.distractor_count");
    s.lesion_radius_min = get_double("phantom.lesion_radius_min");
    s.lesion_radius_max = get_double("phantom.lesion_radius_max");
    s.lesion_intensity_min = get_double("phantom.lesion_intensity_min");
    s.lesion_intensity_max = get_double("phantom.lesion_intensity_max");
    s.noise_sigma = get_double("phantom.noise_sigma");
    s.border_artifact = get_bool("phantom.border_artifact");
    return s;
}

unsigned RunConfig::threads() const {
    const auto t = get_uint("run.threads");
    if (t == 0) throw ConfigError("run.threads must be at least 1");
    return static_cast<unsigned>(t);
}

}  // namespace covit
