#pragma once

#include "vitderm/dataset.hpp"

namespace vitderm {

struct StatTable {
    std::string title;
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    std::vector<std::vector<int64_t>> counts;  // rows x cols
};

// Exploratory summary of cleansed records: gender shares, age mean and
// 5-year histogram, diagnosis and localization distributions overall and
// broken down by sex / age bin.
struct StatsReport {
    int64_t total = 0;
    double male_share = 0.0;
    double female_share = 0.0;
    double age_mean = 0.0;
    std::vector<StatTable> tables;

    std::string to_text() const;       // aligned plain-text tables
    std::string to_keyvalues() const;  // machine-readable key=value lines
};

StatsReport stats_report(const std::vector<LesionRecord>& records);

} // namespace vitderm
