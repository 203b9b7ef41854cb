#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vitderm/errors.hpp"

namespace vitderm {

inline constexpr int kNumClasses = 7;

// Diagnosis labels in the fixed alphabetical order that defines class ids.
const std::array<std::string, kNumClasses>& class_labels();
int class_id(const std::string& dx);  // throws DataError for unknown labels

// 7x7 counts; rows are true classes, columns are predicted classes.
struct ConfusionMatrix {
    std::array<std::array<int64_t, kNumClasses>, kNumClasses> counts{};

    int64_t total() const;
    int64_t trace() const;
    int64_t row_sum(int c) const;
    int64_t col_sum(int c) const;
};

ConfusionMatrix confusion_matrix(const std::vector<int>& preds,
                                 const std::vector<int>& labels);

double accuracy(const ConfusionMatrix& cm);

// TP/(TP+FN) for one class; nullopt when the class has no actual cases.
std::optional<double> recall(const ConfusionMatrix& cm, int cls);

// Fraction formatted as a percent with 2 decimals, round half up: "58.54%".
std::string format_percent(double fraction);

struct ReportRow {
    std::string model;
    double accuracy = 0.0;
    std::optional<double> recall;  // melanoma recall
    bool reference = false;
};

// Published comparison constants (accuracy, melanoma recall) for DTC, KNN,
// ViT_B32, ViT_B16 and CNN.
std::vector<ReportRow> reference_rows();

// Confusion grid with per-class recall, overall accuracy, and a comparison
// table of measured rows merged with the reference constants.
std::string report(const ConfusionMatrix& cm, const std::vector<ReportRow>& extra_rows);

// CSV: one row per class (label, support, recall), footer row with accuracy.
std::string report_csv(const ConfusionMatrix& cm);

// 7-line integer grid.
std::string grid_file(const ConfusionMatrix& cm);

} // namespace vitderm
