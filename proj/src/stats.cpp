#include "vitderm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

namespace vitderm {

namespace {

std::string age_bin_label(int bin) {
    return std::to_string(bin * 5) + "-" + std::to_string(bin * 5 + 4);
}

int age_bin(double age) { return static_cast<int>(age / 5.0); }

StatTable cross_table(const std::string& title,
                      const std::vector<std::string>& row_labels,
                      const std::vector<std::string>& col_labels,
                      const std::vector<std::pair<int, int>>& items) {
    StatTable t;
    t.title = title;
    t.row_labels = row_labels;
    t.col_labels = col_labels;
    t.counts.assign(row_labels.size(), std::vector<int64_t>(col_labels.size(), 0));
    for (const auto& [r, c] : items) ++t.counts[r][c];
    return t;
}

} // namespace

StatsReport stats_report(const std::vector<LesionRecord>& records) {
    StatsReport rep;
    rep.total = static_cast<int64_t>(records.size());

    int64_t male = 0, female = 0;
    double age_sum = 0.0;
    int64_t age_count = 0;
    int max_bin = 0;
    for (const auto& r : records) {
        if (r.sex == Sex::Male) ++male;
        if (r.sex == Sex::Female) ++female;
        if (r.age) {
            age_sum += *r.age;
            ++age_count;
            max_bin = std::max(max_bin, age_bin(*r.age));
        }
    }
    if (rep.total > 0) {
        rep.male_share = static_cast<double>(male) / rep.total;
        rep.female_share = static_cast<double>(female) / rep.total;
    }
    rep.age_mean = age_count > 0 ? age_sum / age_count : 0.0;

    const std::vector<std::string> sex_labels = {"male", "female"};
    std::vector<std::string> bin_labels;
    for (int b = 0; b <= max_bin; ++b) bin_labels.push_back(age_bin_label(b));
    std::vector<std::string> dx_labels(class_labels().begin(), class_labels().end());

    // localization sites ordered by frequency, then name
    std::map<std::string, int64_t> loc_counts;
    for (const auto& r : records)
        if (r.localization_known()) ++loc_counts[r.localization];
    std::vector<std::string> loc_labels;
    for (const auto& [site, n] : loc_counts) loc_labels.push_back(site);
    std::sort(loc_labels.begin(), loc_labels.end(),
              [&](const std::string& a, const std::string& b) {
                  if (loc_counts[a] != loc_counts[b]) return loc_counts[a] > loc_counts[b];
                  return a < b;
              });
    std::map<std::string, int> loc_index;
    for (size_t i = 0; i < loc_labels.size(); ++i) loc_index[loc_labels[i]] = static_cast<int>(i);

    std::vector<std::pair<int, int>> sex_items, age_items, dx_items, dx_sex, dx_age,
        loc_items, loc_sex, loc_age;
    for (const auto& r : records) {
        const int s = r.sex == Sex::Male ? 0 : (r.sex == Sex::Female ? 1 : -1);
        const int d = class_id(r.dx);
        const int b = r.age ? age_bin(*r.age) : -1;
        const int l = r.localization_known() ? loc_index[r.localization] : -1;
        if (s >= 0) sex_items.push_back({s, 0});
        if (b >= 0) age_items.push_back({b, 0});
        dx_items.push_back({d, 0});
        if (s >= 0) dx_sex.push_back({d, s});
        if (b >= 0) dx_age.push_back({b, d});
        if (l >= 0) loc_items.push_back({l, 0});
        if (l >= 0 && s >= 0) loc_sex.push_back({l, s});
        if (l >= 0 && b >= 0) loc_age.push_back({b, l});
    }

    rep.tables.push_back(cross_table("Gender distribution", sex_labels, {"count"}, sex_items));
    rep.tables.push_back(cross_table("Age distribution (5-year bins)", bin_labels,
                                     {"count"}, age_items));
    rep.tables.push_back(cross_table("Lesion type distribution", dx_labels, {"count"},
                                     dx_items));
    rep.tables.push_back(cross_table("Lesion types by gender", dx_labels, sex_labels,
                                     dx_sex));
    rep.tables.push_back(cross_table("Lesion types by age bin", bin_labels, dx_labels,
                                     dx_age));
    rep.tables.push_back(cross_table("Localization distribution", loc_labels, {"count"},
                                     loc_items));
    rep.tables.push_back(cross_table("Localization by gender", loc_labels, sex_labels,
                                     loc_sex));
    rep.tables.push_back(cross_table("Localization by age bin", bin_labels, loc_labels,
                                     loc_age));
    return rep;
}

namespace {

std::string pad_left(const std::string& s, size_t width) {
    return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

} // namespace

std::string StatsReport::to_text() const {
    std::ostringstream os;
    os << "Records: " << total << "\n";
    os << std::fixed << std::setprecision(2);
    os << "Male share: " << male_share * 100.0 << "%   Female share: "
       << female_share * 100.0 << "%\n";
    os << "Mean age: " << age_mean << "\n";
    for (const auto& t : tables) {
        os << "\n" << t.title << "\n";
        size_t label_w = 6;
        for (const auto& l : t.row_labels) label_w = std::max(label_w, l.size() + 2);
        size_t cell_w = 7;
        for (const auto& l : t.col_labels) cell_w = std::max(cell_w, l.size() + 2);
        os << pad_right("", label_w);
        for (const auto& l : t.col_labels) os << pad_left(l, cell_w);
        os << "\n";
        for (size_t r = 0; r < t.row_labels.size(); ++r) {
            os << pad_right(t.row_labels[r], label_w);
            for (size_t c = 0; c < t.col_labels.size(); ++c)
                os << pad_left(std::to_string(t.counts[r][c]), cell_w);
            os << "\n";
        }
    }
    return os.str();
}

std::string StatsReport::to_keyvalues() const {
    std::ostringstream os;
    os << "total=" << total << "\n";
    os << std::fixed << std::setprecision(6);
    os << "male_share=" << male_share << "\n";
    os << "female_share=" << female_share << "\n";
    os << "age_mean=" << age_mean << "\n";
    for (const auto& t : tables) {
        std::string key = t.title;
        for (char& c : key) {
            c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            if (c == ' ' || c == '(' || c == ')' || c == '-') c = '_';
        }
        for (size_t r = 0; r < t.row_labels.size(); ++r)
            for (size_t c = 0; c < t.col_labels.size(); ++c) {
                os << key << '.' << t.row_labels[r];
                if (t.col_labels.size() > 1) os << '.' << t.col_labels[c];
                os << '=' << t.counts[r][c] << "\n";
            }
    }
    return os.str();
}

} // namespace vitderm
