#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vitderm/metrics.hpp"

namespace vitderm {

enum class Sex { Male, Female, Unknown };

Sex sex_from_string(const std::string& s);
std::string to_string(Sex s);

// One metadata row of the lesion dataset.
struct LesionRecord {
    std::string lesion_id;
    std::string image_id;
    std::string dx;        // one of the seven class labels
    std::string dx_type;
    std::optional<double> age;
    Sex sex = Sex::Unknown;
    std::string localization;  // "unknown" marks a missing site

    bool localization_known() const { return localization != "unknown" && !localization.empty(); }
};

// CSV with columns lesion_id, image_id, dx, dx_type, age, sex, localization
// in any order. Blank / "unknown" fields become missing markers; unknown dx
// labels and unparseable ages are row-level errors.
std::vector<LesionRecord> load_metadata(const std::string& path);

struct CleanseStats {
    int64_t input = 0;
    int64_t kept = 0;
    int64_t unknown_sex = 0;
    int64_t missing_age = 0;
    int64_t unknown_localization = 0;
};

// Drops records with unknown sex, missing age, or unknown localization.
std::vector<LesionRecord> cleanse(const std::vector<LesionRecord>& records,
                                  CleanseStats* stats = nullptr);

struct SplitRatios {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

struct SplitDataset {
    std::vector<LesionRecord> train;
    std::vector<LesionRecord> val;
    std::vector<LesionRecord> test;
    uint64_t seed = 0;

    // dx -> class id, fixed alphabetical
    static std::map<std::string, int> class_index();
};

// Groups records by lesion_id, shuffles the groups with the seeded
// generator, then assigns whole groups greedily to test, then val, then
// train until each reaches its target count. Groups never straddle splits.
SplitDataset split(const std::vector<LesionRecord>& records,
                   SplitRatios ratios, uint64_t seed);

} // namespace vitderm
