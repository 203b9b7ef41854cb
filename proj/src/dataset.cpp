#include "vitderm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace vitderm {

Sex sex_from_string(const std::string& s) {
    if (s == "male") return Sex::Male;
    if (s == "female") return Sex::Female;
    return Sex::Unknown;
}

std::string to_string(Sex s) {
    switch (s) {
        case Sex::Male: return "male";
        case Sex::Female: return "female";
        case Sex::Unknown: return "unknown";
    }
    return "unknown";
}

namespace {

// Splits one CSV line; handles double-quoted fields with "" escapes.
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

} // namespace

std::vector<LesionRecord> load_metadata(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open metadata file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("metadata file is empty: " + path);

    const std::vector<std::string> required = {"lesion_id", "image_id", "dx",
                                               "dx_type", "age", "sex", "localization"};
    std::vector<std::string> header = split_csv_line(line);
    std::map<std::string, size_t> col;
    for (size_t i = 0; i < header.size(); ++i) col[trim(header[i])] = i;
    for (const auto& name : required)
        if (!col.count(name))
            throw DataError("metadata file " + path + " is missing column '" + name + "'");

    std::vector<LesionRecord> records;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() < header.size())
            throw DataError("metadata line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(f.size()));
        LesionRecord rec;
        rec.lesion_id = trim(f[col["lesion_id"]]);
        rec.image_id = trim(f[col["image_id"]]);
        rec.dx = trim(f[col["dx"]]);
        rec.dx_type = trim(f[col["dx_type"]]);
        const std::string age_str = trim(f[col["age"]]);
        const std::string sex_str = trim(f[col["sex"]]);
        rec.localization = trim(f[col["localization"]]);
        if (rec.localization.empty()) rec.localization = "unknown";

        bool label_ok = false;
        for (const auto& l : class_labels())
            if (l == rec.dx) label_ok = true;
        if (!label_ok)
            throw DataError("metadata line " + std::to_string(line_no) +
                            ": unknown dx label '" + rec.dx + "'");

        if (!age_str.empty() && age_str != "unknown") {
            try {
                size_t pos = 0;
                const double age = std::stod(age_str, &pos);
                if (pos != age_str.size() || age < 0.0 || !std::isfinite(age))
                    throw std::invalid_argument(age_str);
                rec.age = age;
            } catch (const std::exception&) {
                throw DataError("metadata line " + std::to_string(line_no) +
                                ": unparseable age '" + age_str + "'");
            }
        }
        rec.sex = sex_from_string(sex_str);
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<LesionRecord> cleanse(const std::vector<LesionRecord>& records,
                                  CleanseStats* stats) {
    CleanseStats local;
    local.input = static_cast<int64_t>(records.size());
    std::vector<LesionRecord> kept;
    kept.reserve(records.size());
    for (const auto& rec : records) {
        bool drop = false;
        if (rec.sex == Sex::Unknown) {
            ++local.unknown_sex;
            drop = true;
        }
        if (!rec.age.has_value()) {
            ++local.missing_age;
            drop = true;
        }
        if (!rec.localization_known()) {
            ++local.unknown_localization;
            drop = true;
        }
        if (!drop) kept.push_back(rec);
    }
    local.kept = static_cast<int64_t>(kept.size());
    if (stats) *stats = local;
    return kept;
}

std::map<std::string, int> SplitDataset::class_index() {
    std::map<std::string, int> index;
    for (int i = 0; i < kNumClasses; ++i) index[class_labels()[i]] = i;
    return index;
}

SplitDataset split(const std::vector<LesionRecord>& records,
                   SplitRatios ratios, uint64_t seed) {
    const double rsum = ratios.train + ratios.val + ratios.test;
    if (std::abs(rsum - 1.0) > 1e-9)
        throw ConfigError("split ratios must sum to 1, got " + std::to_string(rsum));

    // whole lesion groups keep identical images in one split
    std::map<std::string, std::vector<const LesionRecord*>> by_lesion;
    for (const auto& rec : records) by_lesion[rec.lesion_id].push_back(&rec);
    if (by_lesion.size() < 3)
        throw DataError("split needs at least 3 lesion groups, got " +
                        std::to_string(by_lesion.size()));

    std::vector<const std::vector<const LesionRecord*>*> groups;
    groups.reserve(by_lesion.size());
    for (const auto& [id, group] : by_lesion) groups.push_back(&group);
    std::mt19937_64 rng(seed);
    std::shuffle(groups.begin(), groups.end(), rng);

    const double total = static_cast<double>(records.size());
    const double test_target = ratios.test * total;
    const double val_target = ratios.val * total;

    SplitDataset out;
    out.seed = seed;
    for (const auto* group : groups) {
        std::vector<LesionRecord>* dest;
        if (static_cast<double>(out.test.size()) < test_target)
            dest = &out.test;
        else if (static_cast<double>(out.val.size()) < val_target)
            dest = &out.val;
        else
            dest = &out.train;
        for (const LesionRecord* rec : *group) dest->push_back(*rec);
    }
    return out;
}

} // namespace vitderm
