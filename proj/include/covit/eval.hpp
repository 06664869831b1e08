#pragma once

// Slice-to-subject voting and the two-class metric table.
//
// Confusion matrices use Table-style orientation: rows are the predicted
// class, columns the true class, index 0 = COVID and index 1 = nonCOVID.
// "Row accuracy" is the per-predicted-class precision.

#include "covit/dataset_io.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace covit {

// Slice decision: strictly above one half is COVID, exactly 0.5 is not.
bool slice_is_covid(double score);

struct SubjectPrediction {
    std::string subject_id;
    std::size_t n_slices = 0;
    std::size_t n_covid_slices = 0;
    double covid_fraction = 0.0;
    double threshold = 0.0;
    Label decision = Label::noncovid;
};

// COVID iff the fraction of COVID slices is strictly greater than
// `threshold`. Throws DataError for zero slices or t outside [0, 1).
SubjectPrediction aggregate_subject(const std::string& subject_id, std::span<const double> slice_scores,
                                    double threshold);

struct ConfusionMatrix2x2 {
    std::array<std::array<std::size_t, 2>, 2> counts{};  // [predicted][true]

    std::size_t total() const;
    std::size_t row_total(std::size_t predicted) const { return counts[predicted][0] + counts[predicted][1]; }
    std::size_t col_total(std::size_t truth) const { return counts[0][truth] + counts[1][truth]; }

    friend bool operator==(const ConfusionMatrix2x2&, const ConfusionMatrix2x2&) = default;
};

// 0 for COVID, 1 for nonCOVID. Throws for Label::unknown.
std::size_t class_slot(Label label);

ConfusionMatrix2x2 confusion(std::span<const Label> predicted, std::span<const Label> truth);
// Throws DataError when a subject has no label or an unknown one.
ConfusionMatrix2x2 confusion(std::span<const SubjectPrediction> predictions, const std::map<std::string, Label>& labels);

struct MetricsReport {
    ConfusionMatrix2x2 matrix;
    std::optional<double> threshold;
    std::array<std::optional<double>, 2> row_accuracy;
    std::array<std::optional<double>, 2> recall;
    std::array<std::optional<double>, 2> f1;
    std::optional<double> macro_accuracy;
    std::optional<double> macro_f1;
};

// Undefined ratios (empty row or class) are reported as absent.
MetricsReport metrics(const ConfusionMatrix2x2& matrix);

struct SubjectScores {
    std::string subject_id;
    std::vector<double> scores;  // ordered by slice index
};

std::vector<SubjectPrediction> aggregate_all(std::span<const SubjectScores> subjects, double threshold);

MetricsReport evaluate_threshold(std::span<const SubjectScores> subjects, const std::map<std::string, Label>& labels,
                                 double threshold);

inline constexpr std::array<double, 4> kDefaultSweep{0.05, 0.06, 0.20, 0.25};

std::vector<MetricsReport> threshold_sweep(std::span<const SubjectScores> subjects,
                                           const std::map<std::string, Label>& labels,
                                           std::span<const double> thresholds);

// Round half away from zero to `decimals` places.
double round_to(double value, int decimals);

// Plain-text table: counts, Acc(%) to one decimal, F1 to two decimals.
std::string format_table(const MetricsReport& report);
std::string report_json(const MetricsReport& report);
std::string reports_json(std::span<const MetricsReport> reports);

// `subject_id,slice_index,covid_score`, optional header row.
struct ScoreRow {
    std::string subject_id;
    std::size_t slice_index = 0;
    double covid_score = 0.0;
};

void write_scores(const std::filesystem::path& path, std::span<const ScoreRow> rows);
std::vector<ScoreRow> read_score_rows(const std::filesystem::path& path);
// Groups rows by subject (sorted by id), slices sorted by index.
std::vector<SubjectScores> group_scores(std::span<const ScoreRow> rows);

}  // namespace covit
