#include "covit/eval.hpp"

#include "covit/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace covit {

bool slice_is_covid(double score) { return score > 0.5; }

SubjectPrediction aggregate_subject(const std::string& subject_id, std::span<const double> slice_scores,
                                    double threshold) {
    if (slice_scores.empty()) throw DataError("subject " + subject_id + " has no scored slices");
    if (!(threshold >= 0.0 && threshold < 1.0)) throw DataError("vote threshold must be in [0, 1)");
    SubjectPrediction p;
    p.subject_id = subject_id;
    p.n_slices = slice_scores.size();
    p.n_covid_slices = static_cast<std::size_t>(std::count_if(slice_scores.begin(), slice_scores.end(), slice_is_covid));
    p.covid_fraction = static_cast<double>(p.n_covid_slices) / static_cast<double>(p.n_slices);
    p.threshold = threshold;
    p.decision = p.covid_fraction > threshold ? Label::covid : Label::noncovid;
    return p;
}

std::size_t ConfusionMatrix2x2::total() const { return row_total(0) + row_total(1); }

std::size_t class_slot(Label label) {
    switch (label) {
        case Label::covid:
            return 0;
        case Label::noncovid:
            return 1;
        case Label::unknown:
            break;
    }
    throw DataError("cannot score a subject with an unknown label");
}

ConfusionMatrix2x2 confusion(std::span<const Label> predicted, std::span<const Label> truth) {
    if (predicted.size() != truth.size()) throw DataError("confusion: prediction and label counts differ");
    ConfusionMatrix2x2 m;
    for (std::size_t i = 0; i < predicted.size(); ++i) ++m.counts[class_slot(predicted[i])][class_slot(truth[i])];
    return m;
}

ConfusionMatrix2x2 confusion(std::span<const SubjectPrediction> predictions, const std::map<std::string, Label>& labels) {
    std::vector<Label> pred, truth;
    for (const auto& p : predictions) {
        auto it = labels.find(p.subject_id);
        if (it == labels.end()) throw DataError("no label for subject " + p.subject_id);
        pred.push_back(p.decision);
        truth.push_back(it->second);
    }
    return confusion(pred, truth);
}

MetricsReport metrics(const ConfusionMatrix2x2& m) {
    MetricsReport r;
    r.matrix = m;
    for (std::size_t c = 0; c < 2; ++c) {
        const double hit = static_cast<double>(m.counts[c][c]);
        if (m.row_total(c) > 0) r.row_accuracy[c] = hit / static_cast<double>(m.row_total(c));
        if (m.col_total(c) > 0) r.recall[c] = hit / static_cast<double>(m.col_total(c));
        if (r.row_accuracy[c] && r.recall[c]) {
            const double s = *r.row_accuracy[c] + *r.recall[c];
            r.f1[c] = s > 0.0 ? 2.0 * *r.row_accuracy[c] * *r.recall[c] / s : 0.0;
        }
    }
    if (r.row_accuracy[0] && r.row_accuracy[1]) r.macro_accuracy = (*r.row_accuracy[0] + *r.row_accuracy[1]) / 2.0;
    if (r.f1[0] && r.f1[1]) r.macro_f1 = (*r.f1[0] + *r.f1[1]) / 2.0;
    return r;
}

std::vector<SubjectPrediction> aggregate_all(std::span<const SubjectScores> subjects, double threshold) {
    std::vector<SubjectPrediction> out;
    out.reserve(subjects.size());
    for (const auto& s : subjects) out.push_back(aggregate_subject(s.subject_id, s.scores, threshold));
    return out;
}

MetricsReport evaluate_threshold(std::span<const SubjectScores> subjects, const std::map<std::string, Label>& labels,
                                 double threshold) {
    const auto preds = aggregate_all(subjects, threshold);
    MetricsReport r = metrics(confusion(preds, labels));
    r.threshold = threshold;
    return r;
}

std::vector<MetricsReport> threshold_sweep(std::span<const SubjectScores> subjects,
                                           const std::map<std::string, Label>& labels,
                                           std::span<const double> thresholds) {
    std::vector<MetricsReport> out;
    out.reserve(thresholds.size());
    for (double t : thresholds) out.push_back(evaluate_threshold(subjects, labels, t));
    return out;
}

double round_to(double value, int decimals) {
    const double f = std::pow(10.0, decimals);
    return std::round(value * f) / f;
}

namespace {

std::string fmt(const std::optional<double>& v, double scale, int decimals) {
    if (!v) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, round_to(*v * scale, decimals));
    return buf;
}

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json to_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["threshold"] = opt_json(r.threshold);
    j["matrix"] = {{r.matrix.counts[0][0], r.matrix.counts[0][1]}, {r.matrix.counts[1][0], r.matrix.counts[1][1]}};
    j["matrix_orientation"] = "rows=predicted[covid,noncovid], cols=true[covid,noncovid]";
    j["n_subjects"] = r.matrix.total();
    j["row_accuracy"] = {opt_json(r.row_accuracy[0]), opt_json(r.row_accuracy[1])};
    j["recall"] = {opt_json(r.recall[0]), opt_json(r.recall[1])};
    j["f1"] = {opt_json(r.f1[0]), opt_json(r.f1[1])};
    j["macro_accuracy"] = opt_json(r.macro_accuracy);
    j["macro_f1"] = opt_json(r.macro_f1);
    return j;
}

}  // namespace

std::string format_table(const MetricsReport& r) {
    std::ostringstream out;
    char line[160];
    if (r.threshold) {
        std::snprintf(line, sizeof line, "threshold %.4g\n", *r.threshold);
        out << line;
    }
    std::snprintf(line, sizeof line, "%-20s %8s %10s %8s %6s\n", "", "COVID", "NonCOVID", "Acc(%)", "F1");
    out << line;
    const char* names[2] = {"COVID (predict)", "NonCOVID (predict)"};
    for (std::size_t c = 0; c < 2; ++c) {
        std::snprintf(line, sizeof line, "%-20s %8zu %10zu %8s %6s\n", names[c], r.matrix.counts[c][0],
                      r.matrix.counts[c][1], fmt(r.row_accuracy[c], 100.0, 1).c_str(), fmt(r.f1[c], 1.0, 2).c_str());
        out << line;
    }
    std::snprintf(line, sizeof line, "%-20s %8s %10s %8s %6s\n", "Average", "", "", fmt(r.macro_accuracy, 100.0, 1).c_str(),
                  fmt(r.macro_f1, 1.0, 2).c_str());
    out << line;
    return out.str();
}

std::string report_json(const MetricsReport& report) { return to_json(report).dump(2) + "\n"; }

std::string reports_json(std::span<const MetricsReport> reports) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : reports) arr.push_back(to_json(r));
    nlohmann::ordered_json j;
    j["reports"] = arr;
    return j.dump(2) + "\n";
}

void write_scores(const std::filesystem::path& path, std::span<const ScoreRow> rows) {
    std::string text = "subject_id,slice_index,covid_score\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, ",%zu,%.17g\n", r.slice_index, r.covid_score);
        text += r.subject_id + buf;
    }
    write_file(path, text);
}

std::vector<ScoreRow> read_score_rows(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    std::vector<ScoreRow> rows;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (lineno == 1 && line.rfind("subject_id,", 0) == 0) continue;
        const auto c1 = line.find(',');
        const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
        auto fail = [&]() { return FormatError(path.string() + ":" + std::to_string(lineno) + ": expected subject_id,slice_index,covid_score"); };
        if (c2 == std::string::npos || c1 == 0) throw fail();
        ScoreRow r;
        r.subject_id = line.substr(0, c1);
        try {
            std::size_t used = 0;
            const std::string idx = line.substr(c1 + 1, c2 - c1 - 1);
            r.slice_index = std::stoul(idx, &used);
            if (used != idx.size()) throw fail();
            const std::string score = line.substr(c2 + 1);
            r.covid_score = std::stod(score, &used);
            if (used != score.size()) throw fail();
        } catch (const std::logic_error&) {
            throw fail();
        }
        if (!(r.covid_score >= 0.0 && r.covid_score <= 1.0))
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": score outside [0, 1]");
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<SubjectScores> group_scores(std::span<const ScoreRow> rows) {
    std::map<std::string, std::vector<std::pair<std::size_t, double>>> by_subject;
    for (const auto& r : rows) by_subject[r.subject_id].emplace_back(r.slice_index, r.covid_score);
    std::vector<SubjectScores> out;
    for (auto& [id, v] : by_subject) {
        std::sort(v.begin(), v.end());
        for (std::size_t i = 1; i < v.size(); ++i)
            if (v[i].first == v[i - 1].first)
                throw DataError("duplicate slice index " + std::to_string(v[i].first) + " for subject " + id);
        SubjectScores s{id, {}};
        for (const auto& [idx, score] : v) s.scores.push_back(score);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace covit
